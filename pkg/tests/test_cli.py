import json

import numpy as np
import pytest

from cfeval import io as cio
from cfeval.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--seed", "7", "--n", "200", "--out", str(out)]) == 0
    return out


def test_synth_creates_loadable_bundles(synth_dir):
    for m in ("tiny", "mid", "prototype"):
        b = cio.load_bundle(synth_dir / m)
        assert b.n == 200 and b.method_name == m
    prov = json.loads((synth_dir / "provenance.json").read_text())
    assert prov["spec"]["seed"] == 7


def test_synth_is_byte_reproducible(tmp_path, synth_dir):
    assert main(["synth", "--seed", "7", "--n", "200", "--out", str(tmp_path)]) == 0
    for p in sorted(synth_dir.rglob("*")):
        if p.is_file():
            assert (tmp_path / p.relative_to(synth_dir)).read_bytes() == p.read_bytes()


def test_synth_invalid_markers(tmp_path, capsys):
    assert main(["synth", "--markers", "64", "--dim", "64", "--out", str(tmp_path)]) == 1
    assert "marker_dims" in capsys.readouterr().err


def test_evaluate_three_methods(synth_dir, tmp_path, capsys):
    args = ["evaluate", "--out", str(tmp_path)]
    for m in ("tiny", "mid", "prototype"):
        args += ["--bundle", str(synth_dir / m)]
    assert main(args) == 0
    out = capsys.readouterr().out
    rows = {ln.split("|")[1].strip(): ln for ln in out.splitlines() if ln.startswith("| ") and "Method" not in ln}
    cols = [c.strip() for c in out.splitlines()[0].split("|")[1:-1]]
    cell = lambda m, metric: rows[m].split("|")[1 + cols.index(metric)].strip()
    assert cell("tiny", "EN").startswith("**")
    assert cell("prototype", "Oracle").startswith("**")
    assert cell("prototype", "FID").startswith("**")
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "00-tiny.json", "01-mid.json", "02-prototype.json", "ranking.md", "report.md"]


def test_evaluate_json_to_stdout(synth_dir, capsys):
    assert main(["evaluate", "--bundle", str(synth_dir / "tiny"), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["reports"][0]["method_name"] == "tiny"


def test_evaluate_missing_role(tmp_path, capsys):
    from _util import random_bundle

    cio.save_bundle(random_bundle(0, with_all=False), tmp_path / "b")
    assert main(["evaluate", "--bundle", str(tmp_path / "b"), "--metrics", "im1"]) == 1
    assert "reconstructions" in capsys.readouterr().err


def test_evaluate_epsilon_guard(tmp_path):
    from _util import random_bundle

    cio.save_bundle(random_bundle(0), tmp_path / "a", config={"epsilon": 1e-10})
    cio.save_bundle(random_bundle(1), tmp_path / "b", config={"epsilon": 1e-6})
    assert main(["evaluate", "--bundle", str(tmp_path / "a"), "--bundle", str(tmp_path / "b")]) == 1
    assert main(["evaluate", "--bundle", str(tmp_path / "a"), "--bundle", str(tmp_path / "b"),
                 "--epsilon", "1e-8"]) == 0


def test_exit_codes(tmp_path, capsys):
    assert main(["evaluate", "--bundle", str(tmp_path / "nope")]) == 2
    assert main(["evaluate", "--bundle", str(tmp_path), "--unknown-flag"]) == 3
    assert main(["report", "--in"]) == 3
    assert main([]) == 3
    err = capsys.readouterr().err
    assert "usage:" in err


def _reports(tmp_path, synth_dir, rng, tag):
    out = tmp_path / tag
    assert main(["synth", "--seed", "7", "--n", "200", f"--range={rng}", "--out", str(out / "b")]) == 0
    args = ["evaluate", "--out", str(out / "r")]
    for m in ("tiny", "mid", "prototype"):
        args += ["--bundle", str(out / "b" / m)]
    assert main(args) == 0
    return sorted(str(p) for p in (out / "r").glob("*.json"))


def test_audit_cli(tmp_path, synth_dir, capsys):
    a = _reports(tmp_path, synth_dir, "-0.5,0.5", "a")
    b = _reports(tmp_path, synth_dir, "0,1", "b")
    capsys.readouterr()
    assert main(["audit", "--reports-a", *a, "--reports-b", *b]) == 0
    assert "audit passed" in capsys.readouterr().out
    assert main(["audit", "--reports-a", *a, "--reports-b", *a]) == 0
    # swap method names on side b
    swapped = []
    names = {"tiny": "mid", "mid": "prototype", "prototype": "tiny"}
    for p in b:
        doc = json.loads(open(p).read())
        for r in doc["reports"]:
            r["method_name"] = names[r["method_name"]]
        q = tmp_path / ("swapped-" + p.split("/")[-1])
        q.write_text(json.dumps(doc))
        swapped.append(str(q))
    capsys.readouterr()
    assert main(["audit", "--reports-a", *a, "--reports-b", *swapped]) == 1
    captured = capsys.readouterr()
    assert "| 100·IM2 |" in captured.out and "**NO**" in captured.out
    assert "100·IM2" in captured.err


def test_audit_method_mismatch(tmp_path, synth_dir):
    a = _reports(tmp_path, synth_dir, "0,1", "a")
    assert main(["audit", "--reports-a", *a, "--reports-b", *a[:2]]) == 1


def test_report_with_extremes(tmp_path, synth_dir, capsys):
    a = _reports(tmp_path, synth_dir, "0,1", "a")
    capsys.readouterr()
    assert main(["report", "--in", a[0], "--per-sample-extremes", "3"]) == 0
    out = capsys.readouterr().out
    assert "| tiny |" in out
    assert len([ln for ln in out.splitlines() if "| tiny | EN | " in ln]) == 6
    assert main(["report", "--in", str(tmp_path / "missing.json")]) == 2


def test_fakemnist_cli(tmp_path, capsys):
    rng = np.random.default_rng(0)
    imgs = rng.random((100, 28, 28))
    cio.write_array(imgs, tmp_path / "imgs.npy")
    args = ["fakemnist", "--images", str(tmp_path / "imgs.npy"), "--height", "28", "--width", "28",
            "--classes", "10", "--seed", "5", "--out"]
    assert main(args + [str(tmp_path / "o1")]) == 0
    assert main(args + [str(tmp_path / "o2")]) == 0
    labels = cio.read_array(tmp_path / "o1" / "labels.csv").ravel()
    painted = cio.read_array(tmp_path / "o1" / "images.npy")
    assert np.array_equal(np.argmax(painted[:, 0, :10], axis=1), labels)
    assert (tmp_path / "o1" / "labels.csv").read_bytes() == (tmp_path / "o2" / "labels.csv").read_bytes()
    bad = ["fakemnist", "--images", str(tmp_path / "imgs.npy"), "--height", "28", "--width", "28",
           "--classes", "30", "--out", str(tmp_path / "o3")]
    assert main(bad) == 1
    missing = ["fakemnist", "--images", str(tmp_path / "none.npy"), "--height", "2", "--width", "2",
               "--out", str(tmp_path / "o4")]
    assert main(missing) == 2
