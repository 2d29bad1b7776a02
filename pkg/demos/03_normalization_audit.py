"""Check that method rankings do not depend on the pixel range.

The same bundles are rescaled to [-0.5, 0.5], [0, 1] and [0, 255]. Rankings
should agree on every metric, and EN should scale with the range width.

Run: python3 demos/03_normalization_audit.py
"""

from cfeval import normalization_audit, synth
from cfeval.stats import evaluate_bundle

world = synth.gen_world(synth.SyntheticSpec(seed=3))
bundles = [synth.build_bundle(world, m, n_eval=300, seed=3) for m in synth.METHODS]


def scored(lo, hi):
    return [evaluate_bundle(synth.rescale_bundle(b, (lo, hi))) for b in bundles]


print(normalization_audit(scored(-0.5, 0.5), scored(0.0, 1.0)).render())
print()
print(normalization_audit(scored(0.0, 1.0), scored(0.0, 255.0)).render())
