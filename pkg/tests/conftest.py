import pytest
from hypothesis import settings

from cfeval import synth

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _ACCEPTANCE.get(crit, "PASS")
        _ACCEPTANCE[crit] = "PASS" if prev == "PASS" and report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE, key=lambda c: int(c[1:])):
        terminalreporter.write_line(f"{crit}: {_ACCEPTANCE[crit]}")


@pytest.fixture(scope="session")
def small_world():
    return synth.gen_world(synth.SyntheticSpec(n_per_class=60, dim=24, classes=4, marker_dims=6, seed=3))


@pytest.fixture(scope="session")
def default_world():
    return synth.gen_world(synth.SyntheticSpec(seed=7))


@pytest.fixture(scope="session")
def default_bundles(default_world):
    return {m: synth.build_bundle(default_world, m, 300, 7) for m in synth.METHODS}
