import math

import numpy as np
import pytest
import scipy.spatial.distance as ssd
from _util import onehot, random_bundle
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cfeval import metrics as M
from cfeval.data import EvaluationBundle, LabelOracleOutputs, compute_validity_mask, filter_by_mask
from cfeval.errors import (
    DimensionMismatch,
    MetricUnavailable,
    MissingOracle,
    MissingTargets,
    NotADistribution,
    SupportMismatch,
    TooFewSamples,
    UnknownLabel,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)


def test_distance_fixtures():
    assert M.l1_distance([0, 0], [3, 4]) == 7.0
    assert M.l2_distance([0, 0], [3, 4]) == 5.0
    assert M.en_distance([0, 0], [3, 4]) == 12.0
    x = np.array([0.3, -1.2, 5.0])
    assert M.l1_distance(x, x) == M.l2_distance(x, x) == M.en_distance(x, x) == 0.0
    with pytest.raises(DimensionMismatch):
        M.l1_distance([0, 0], [1, 2, 3])


def test_distances_match_naive_loop_784():
    rng = np.random.default_rng(784)
    x, c = rng.random(784), rng.random(784)
    l1 = 0.0
    l2 = 0.0
    for a, b in zip(x.tolist(), c.tolist()):
        l1 += abs(a - b)
        l2 += (a - b) ** 2
    assert abs(M.l1_distance(x, c) - l1) <= 1e-12 * l1
    assert abs(M.l2_distance(x, c) - math.sqrt(l2)) <= 1e-12 * math.sqrt(l2)
    assert M.l1_distance(x, c) == pytest.approx(ssd.cityblock(x, c), rel=1e-12)
    assert M.l2_distance(x, c) == pytest.approx(ssd.euclidean(x, c), rel=1e-12)


def test_en_affine_scaling():
    rng = np.random.default_rng(11)
    x, c = rng.random(50), rng.random(50)
    a, b = 2.5, -0.5
    assert M.en_distance(a * x + b, a * c + b) == pytest.approx(a * M.en_distance(x, c), rel=1e-12)


def test_im1_fixtures():
    c = np.zeros(2)
    assert M.im1(c, c, [0.4, 0.0]) == 0.0
    assert M.im1(c, [0.2, 0.0], [0.4, 0.0]) == pytest.approx(0.2499999998, abs=1e-9)
    assert M.im1(c, [0.2, 0.0], c) == pytest.approx(4e8, rel=1e-9)


def test_im2_fixtures():
    c = np.array([1.0, 1.0])
    assert M.im2(c, [0.3, 0.3], [0.3, 0.3]) == 0.0
    assert M.im2(c, [0.1, 0.0], [0.0, 0.1]) == pytest.approx(0.02 / 2.0000000001, abs=1e-9)


def test_im2_linear_darkening():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    f, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    c = rng.random(10)
    vals = [M.im2(a * c, q @ q.T @ (a * c), f @ f.T @ (a * c)) for a in (1.0, 0.8, 0.6, 0.4, 0.2)]
    assert all(u > v for u, v in zip(vals, vals[1:]))


def test_js_fixtures():
    assert M.js_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert M.js_divergence([1, 0], [0, 1]) == pytest.approx(math.log(2), abs=1e-12)
    assert M.js_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.033822, abs=1e-6)
    cfg2 = M.MetricConfig(js_log_base="base2")
    assert M.js_divergence([1, 0], [0, 1], cfg2) == pytest.approx(1.0, abs=1e-12)
    # scipy returns the square root of the divergence
    p, q = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
    assert M.js_divergence(p, q) == pytest.approx(ssd.jensenshannon(p, q) ** 2, abs=1e-12)


def test_js_errors():
    with pytest.raises(SupportMismatch):
        M.js_divergence([0.5, 0.5], [0.2, 0.3, 0.5])
    with pytest.raises(NotADistribution):
        M.js_divergence([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(NotADistribution):
        M.js_divergence([1.5, -0.5], [0.5, 0.5])


dists = st.integers(2, 8).flatmap(
    lambda k: st.tuples(arrays(np.float64, k, elements=st.floats(0, 1)), arrays(np.float64, k, elements=st.floats(0, 1)))
).filter(lambda t: t[0].sum() > 1e-3 and t[1].sum() > 1e-3).map(
    # scipy's midpoint underflows to 0 for subnormal masses and returns inf
    lambda t: tuple(np.where(v < 1e-300, 0.0, v) / np.where(v < 1e-300, 0.0, v).sum() for v in t))


@given(dists)
def test_js_symmetric_and_bounded(pq):
    p, q = pq
    a, b = M.js_divergence(p, q), M.js_divergence(q, p)
    assert abs(a - b) <= 1e-12
    assert 0.0 <= a <= math.log(2) + 1e-12
    assert a == pytest.approx(ssd.jensenshannon(p, q) ** 2, abs=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 12)), elements=finite),
       arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 12)), elements=finite))
def test_norm_inequalities(x, c):
    c = np.resize(c, x.shape)
    b = EvaluationBundle(x, c, onehot(np.zeros(len(x), int), 2), onehot(np.ones(len(x), int), 2))
    l1 = M.distance_scores(b, "l1").values
    l2 = M.distance_scores(b, "l2").values
    en = M.distance_scores(b, "en").values
    assert np.array_equal(en, l1 + l2)
    d = x.shape[1]
    assert np.all(l2 <= l1 * (1 + 1e-12) + 1e-300)
    assert np.all(l1 <= math.sqrt(d) * l2 * (1 + 1e-12) + 1e-300)


def test_fid_fixtures():
    assert M.fid([0.0, 2.0], [1.0, 3.0]) == pytest.approx(1.0, abs=1e-9)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((500, 8))
    assert 0.0 <= M.fid(a, a) <= 1e-8
    with pytest.raises(TooFewSamples):
        M.fid([[1.0, 2.0]], a[:, :2])
    with pytest.raises(DimensionMismatch):
        M.fid(a, a[:, :3])


def _scipy_fid(a, b):
    import scipy.linalg as sl

    m1, m2 = a.mean(0), b.mean(0)
    s1, s2 = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
    return float(((m1 - m2) ** 2).sum() + np.trace(s1 + s2 - 2 * sl.sqrtm(s1 @ s2).real))


@pytest.mark.parametrize("seed", range(5))
def test_fid_matches_scipy_and_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed
    a = rng.standard_normal((200, d)) @ rng.standard_normal((d, d))
    b = rng.standard_normal((150, d)) @ rng.standard_normal((d, d)) + 0.5
    f = M.fid(a, b)
    assert f == pytest.approx(_scipy_fid(a, b), rel=1e-7)
    assert abs(f - M.fid(b, a)) <= 1e-8 * max(1.0, f)


def _lvs_bundle(before, after):
    n = len(before)
    x = np.zeros((n, 2))
    return EvaluationBundle(x, x, onehot([0] * n, 2), onehot([1] * n, 2),
                            label_oracles=(LabelOracleOutputs("smile", before, after),))


def test_lvs_fixtures():
    same = onehot([0, 1, 1, 0], 2, 0.8)
    assert np.all(M.lvs(_lvs_bundle(same, same), "smile").values == 0.0)
    before = np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
    after = np.array([[0.0, 1.0], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
    s = M.lvs(_lvs_bundle(before, after), "smile")
    assert s.mean() == pytest.approx(math.log(2) / 4, abs=1e-12)
    assert s.higher_is_better is None and s.metric_name == "lvs:smile"
    with pytest.raises(UnknownLabel):
        M.lvs(_lvs_bundle(before, after), "age")


def test_tcv_and_oracle_fixtures():
    x = np.zeros((3, 2))
    b = EvaluationBundle(x, x, onehot([0, 1, 2], 3), onehot([1, 2, 1], 3), targets=[1, 0, 1],
                         oracle_probs_counterfactuals=onehot([1, 0, 1], 3))
    assert M.tcv(b, M.MetricConfig(validity_mode="class-change")) == 1.0
    assert M.tcv(b) == pytest.approx(2 / 3)
    assert M.oracle_score(b, M.MetricConfig(oracle_mode="agreement")) == pytest.approx(2 / 3)
    assert M.oracle_score(b) == pytest.approx(2 / 3)
    same = EvaluationBundle(x, x, onehot([0, 1, 2], 3), onehot([1, 2, 1], 3),
                            oracle_probs_counterfactuals=onehot([1, 2, 1], 3))
    assert M.oracle_score(same, M.MetricConfig(oracle_mode="agreement")) == 1.0
    with pytest.raises(MissingTargets):
        M.oracle_score(same)
    with pytest.raises(MissingOracle):
        M.oracle_score(EvaluationBundle(x, x, onehot([0, 1, 2], 3), onehot([1, 2, 1], 3)))


def test_missing_reconstructions():
    with pytest.raises(MetricUnavailable):
        M.im1_scores(random_bundle(0, with_all=False))


def test_config_validation():
    with pytest.raises(ValueError):
        M.MetricConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        M.MetricConfig(js_log_base="ten")
    cfg = M.MetricConfig(epsilon=1e-6, oracle_mode="agreement")
    assert M.MetricConfig.from_dict(cfg.to_dict()) == cfg


def test_im_scores_nonnegative_and_exact_zero():
    b = random_bundle(4)
    assert np.all(M.im1_scores(b).values >= 0) and np.all(M.im2_scores(b).values >= 0)
    c = np.random.default_rng(0).random((3, 4))
    assert M.im1(c[0], c[0], c[1], M.MetricConfig(epsilon=1e-300)) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_filter_then_score_equals_select(seed):
    b = random_bundle(seed)
    m = compute_validity_mask(b)
    f = filter_by_mask(b, m)
    for fn in (lambda z: M.distance_scores(z, "en"), M.im1_scores, M.im2_scores, lambda z: M.lvs(z, "smile")):
        full, part = fn(b), fn(f)
        assert np.array_equal(part.values, full.values[m.flags])
        assert np.array_equal(part.sample_index, full.sample_index[m.flags])


def test_reductions_are_permutation_invariant():
    rng = np.random.default_rng(9)
    x = rng.standard_normal(1000) * 10.0 ** rng.integers(-8, 8, 1000)
    c = np.zeros_like(x)
    perm = rng.permutation(1000)
    assert M.l1_distance(x, c) == M.l1_distance(x[perm], c)
    assert M.l2_distance(x, c) == M.l2_distance(x[perm], c)
