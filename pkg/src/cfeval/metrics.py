"""Metric kernels for counterfactual explanations.

Every per-sample reduction goes through :func:`math.fsum`, which returns the
correctly rounded sum of its inputs. Results therefore do not depend on
summation order, chunking or thread count.

Direction conventions (``HIGHER_IS_BETTER``): distances, IM1, IM2 and FID are
lower-is-better; TCV and the oracle score are higher-is-better; LVS has no
fixed direction and is reported raw.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import linalg
from .data import (
    CLASS_CHANGE,
    TARGET_MATCH,
    argmax_lowest,
    compute_validity_mask,
)
from .errors import (
    DimensionMismatch,
    MetricUnavailable,
    MissingOracle,
    MissingTargets,
    NotADistribution,
    SupportMismatch,
    TooFewSamples,
    UnknownLabel,
)

__all__ = [
    "MetricConfig",
    "PerSampleScores",
    "HIGHER_IS_BETTER",
    "l1_distance",
    "l2_distance",
    "en_distance",
    "distance_scores",
    "tcv",
    "im1",
    "im2",
    "im1_scores",
    "im2_scores",
    "fid",
    "js_divergence",
    "lvs",
    "oracle_flags",
    "oracle_score",
]

HIGHER_IS_BETTER = {
    "tcv": True,
    "oracle": True,
    "l1": False,
    "l2": False,
    "en": False,
    "im1": False,
    "im2": False,
    "fid": False,
}

AGREEMENT = "agreement"
TARGET_BOTH = "target-both"


@dataclass(frozen=True)
class MetricConfig:
    """Tunables the metric definitions leave open.

    ``validity_mode=None`` resolves per bundle: target-match when targets are
    present, class-change otherwise.
    """

    epsilon: float = 1e-10
    js_log_base: str = "natural"
    covariance: str = "unbiased"
    validity_mode: str | None = None
    oracle_mode: str = TARGET_BOTH

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.js_log_base not in ("natural", "base2"):
            raise ValueError(f"js_log_base must be 'natural' or 'base2', got {self.js_log_base!r}")
        if self.covariance != "unbiased":
            raise ValueError("only unbiased covariance is supported")
        if self.validity_mode not in (None, "auto", CLASS_CHANGE, TARGET_MATCH):
            raise ValueError(f"unknown validity mode {self.validity_mode!r}")
        if self.oracle_mode not in (AGREEMENT, TARGET_BOTH):
            raise ValueError(f"unknown oracle mode {self.oracle_mode!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("epsilon", "js_log_base", "covariance",
                                         "validity_mode", "oracle_mode") if k in d})


@dataclass(frozen=True, eq=False)
class PerSampleScores:
    metric_name: str
    values: np.ndarray
    higher_is_better: bool | None
    sample_index: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.metric_name}: non-finite per-sample scores")
        object.__setattr__(self, "values", v)
        if self.sample_index is None:
            object.__setattr__(self, "sample_index", np.arange(v.size))

    def mean(self):
        return math.fsum(self.values) / self.values.size


def _rowsum(a):
    a = np.asarray(a, dtype=np.float64)
    return np.fromiter((math.fsum(r) for r in a), dtype=np.float64, count=a.shape[0])


def _pair(x, c):
    x = np.asarray(x, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    if x.shape != c.shape:
        raise DimensionMismatch(f"dimension mismatch: {x.size} vs {c.size}")
    return x, c


def l1_distance(x, c):
    x, c = _pair(x, c)
    return math.fsum(np.abs(x - c))


def _scaled_l2(d):
    # Scale by the largest component so squares neither underflow nor overflow.
    d = np.atleast_2d(d)
    s = np.max(np.abs(d), axis=1) if d.shape[1] else np.zeros(d.shape[0])
    safe = np.where(s > 0, s, 1.0)
    return s * np.sqrt(_rowsum((d / safe[:, None]) ** 2))


def l2_distance(x, c):
    x, c = _pair(x, c)
    return float(_scaled_l2(x - c)[0])


def en_distance(x, c):
    """Elastic-net distance: L1 plus L2 norm of the change."""
    return l1_distance(x, c) + l2_distance(x, c)


def _flat_pairs(b):
    x = b.inputs.reshape(b.n, -1)
    c = b.counterfactuals.reshape(b.n, -1)
    if x.shape != c.shape:
        raise DimensionMismatch(f"inputs {b.inputs.shape} vs counterfactuals {b.counterfactuals.shape}")
    return x, c


def distance_scores(b, kind="en"):
    """Per-sample L1, L2 or EN distances between inputs and counterfactuals."""
    x, c = _flat_pairs(b)
    d = x - c
    l1 = _rowsum(np.abs(d))
    if kind == "l1":
        values = l1
    else:
        l2 = _scaled_l2(d)
        values = l2 if kind == "l2" else l1 + l2
    return PerSampleScores(kind, values, False, b.sample_index)


def tcv(b, cfg=None):
    """Fraction of counterfactuals counted as valid. Call on the unfiltered bundle."""
    cfg = cfg or MetricConfig()
    mask = compute_validity_mask(b, cfg.validity_mode)
    return mask.valid_count / b.n


def im1(c, ae_q_c, ae_p_c, cfg=None):
    """Target-class reconstruction error over input-class reconstruction error."""
    cfg = cfg or MetricConfig()
    c, q = _pair(c, ae_q_c)
    _, p = _pair(c, ae_p_c)
    num = math.fsum((c - q) ** 2)
    den = math.fsum((c - p) ** 2)
    return num / (den + cfg.epsilon)


def im2(c, ae_q_c, ae_full_c, cfg=None):
    """Disagreement of target-class and full-data reconstructions, per unit L1 mass."""
    cfg = cfg or MetricConfig()
    c, q = _pair(c, ae_q_c)
    _, full = _pair(c, ae_full_c)
    return math.fsum((q - full) ** 2) / (math.fsum(np.abs(c)) + cfg.epsilon)


def _reconstructions(b):
    if b.reconstructions is None:
        raise MetricUnavailable("IM1/IM2 need the ae_target, ae_input_class and ae_full roles")
    r = b.reconstructions
    return (b.counterfactuals.reshape(b.n, -1), r.ae_target.reshape(b.n, -1),
            r.ae_input_class.reshape(b.n, -1), r.ae_full.reshape(b.n, -1))


def im1_scores(b, cfg=None):
    cfg = cfg or MetricConfig()
    c, q, p, _ = _reconstructions(b)
    values = _rowsum((c - q) ** 2) / (_rowsum((c - p) ** 2) + cfg.epsilon)
    return PerSampleScores("im1", values, False, b.sample_index)


def im2_scores(b, cfg=None):
    cfg = cfg or MetricConfig()
    c, q, _, full = _reconstructions(b)
    values = _rowsum((q - full) ** 2) / (_rowsum(np.abs(c)) + cfg.epsilon)
    return PerSampleScores("im2", values, False, b.sample_index)


def _as_rows(e):
    e = np.asarray(e, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    return e.reshape(e.shape[0], -1)


def fid(emb_ref, emb_cf, cfg=None):
    """Frechet distance between Gaussian fits of two embedding sets.

    The trace of the cross term is taken as ``tr sqrt(S1^1/2 S2 S1^1/2)``,
    which equals ``tr sqrt(S1 S2)`` but only involves symmetric PSD matrices.
    """
    a = _as_rows(getattr(emb_ref, "values", emb_ref))
    b = _as_rows(getattr(emb_cf, "values", emb_cf))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise TooFewSamples("FID needs at least 2 samples on each side")
    mu1, s1 = linalg.mean_and_cov(a)
    mu2, s2 = linalg.mean_and_cov(b)
    root1 = linalg.sqrtm_psd(s1)
    cross = root1 @ s2 @ root1
    cross = (cross + cross.T) / 2.0
    tr_cross = math.fsum(np.diag(linalg.sqrtm_psd(cross)))
    diff = mu1 - mu2
    terms = [math.fsum(diff * diff), math.fsum(np.diag(s1)), math.fsum(np.diag(s2)), -2.0 * tr_cross]
    value = math.fsum(terms)
    scale = max(1.0, terms[1] + terms[2] + terms[0])
    if -1e-8 * scale <= value < 0.0:
        value = 0.0
    return value


def _check_dist(p, name):
    if np.any(p < 0):
        raise NotADistribution(f"{name} has negative entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise NotADistribution(f"{name} does not sum to 1")


def _js_rows(p, q, base):
    m = 0.5 * (p + q)
    safe_m = np.where(m > 0, m, 1.0)
    # masked entries get ratio 1 so log() never sees 0 or overflow
    kp = np.where(p > 0, p * np.log(np.where(p > 0, p, safe_m) / safe_m), 0.0)
    kq = np.where(q > 0, q * np.log(np.where(q > 0, q, safe_m) / safe_m), 0.0)
    js = 0.5 * _rowsum(kp) + 0.5 * _rowsum(kq)
    js = np.maximum(js, 0.0)
    if base == "base2":
        js = js / math.log(2.0)
    return js


def js_divergence(p, q, cfg=None):
    """Jensen-Shannon divergence between two discrete distributions."""
    cfg = cfg or MetricConfig()
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise SupportMismatch(f"support sizes differ: {p.shape} vs {q.shape}")
    _check_dist(p, "p")
    _check_dist(q, "q")
    return float(_js_rows(p[None], q[None], cfg.js_log_base)[0])


def lvs(b, label, cfg=None):
    """Per-sample JS divergence of one label oracle between inputs and
    counterfactuals; the mean is the label variation score for ``label``."""
    cfg = cfg or MetricConfig()
    lo = b.label_oracle(label)
    if lo is None:
        raise UnknownLabel(f"no label oracle named {label!r}")
    p = np.asarray(lo.probs_inputs, dtype=np.float64)
    q = np.asarray(lo.probs_counterfactuals, dtype=np.float64)
    if p.shape != q.shape:
        raise SupportMismatch(f"label {label!r}: {p.shape} vs {q.shape}")
    _check_dist(p, f"{label} inputs")
    _check_dist(q, f"{label} counterfactuals")
    return PerSampleScores(f"lvs:{label}", _js_rows(p, q, cfg.js_log_base), None, b.sample_index)


def oracle_flags(b, cfg=None):
    cfg = cfg or MetricConfig()
    if b.oracle_probs_counterfactuals is None:
        raise MissingOracle("oracle score needs oracle_probs_counterfactuals")
    f_pred = argmax_lowest(b.f_probs_counterfactuals)
    o_pred = argmax_lowest(b.oracle_probs_counterfactuals)
    if cfg.oracle_mode == AGREEMENT:
        return f_pred == o_pred
    if b.targets is None:
        raise MissingTargets("target-both oracle score needs per-sample targets")
    return (f_pred == b.targets) & (o_pred == b.targets)


def oracle_score(b, cfg=None):
    """Share of counterfactuals the explained classifier and the oracle both
    accept. Intended for the valid-filtered bundle."""
    flags = oracle_flags(b, cfg)
    return int(np.count_nonzero(flags)) / flags.size
