"""Write bundles to disk and score them with the command line tool.

Run: python3 demos/06_bundle_io_cli.py
"""

import subprocess
import sys
import tempfile
from pathlib import Path

from cfeval import io as cio
from cfeval import synth

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    world = synth.gen_world(synth.SyntheticSpec(seed=5))
    for m in synth.METHODS:
        cio.save_bundle(synth.build_bundle(world, m, n_eval=200, seed=5), root / m)
    print("bundle files:", sorted(p.name for p in (root / "tiny").iterdir()))

    back = cio.load_bundle(root / "tiny")
    print("reloaded", back.method_name, "with", back.n, "samples")

    cmd = [sys.executable, "-m", "cfeval", "evaluate", "--out", str(root / "scores")]
    for m in synth.METHODS:
        cmd += ["--bundle", str(root / m)]
    done = subprocess.run(cmd, capture_output=True, text=True)
    print("exit code", done.returncode)
    print(done.stdout)
