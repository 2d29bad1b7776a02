"""Summaries with normal-approximation confidence intervals, per-method
reports, ranking and the normalization audit."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics as M
from .data import available_metrics, compute_validity_mask, filter_by_mask
from .errors import (
    EmptyInput,
    EmptyReportSet,
    MethodSetMismatch,
    MetricMismatch,
    MetricUnavailable,
    OutOfRange,
)

__all__ = [
    "Z95",
    "SummaryStat",
    "MetricReport",
    "MetricRanking",
    "RankingTable",
    "AuditResult",
    "summarize_mean",
    "summarize_proportion",
    "evaluate_bundle",
    "rank_methods",
    "normalization_audit",
    "direction_of",
]

Z95 = 1.96
CI_METHOD = "normal approximation, z = 1.96"

MEAN = "mean"
PROPORTION = "proportion"
POINT = "point"


@dataclass(frozen=True)
class SummaryStat:
    """Mean with an optional 95% CI half-width.

    ``kind`` drives rendering: proportions print as percentages and point
    estimates (FID) print without a CI.
    """

    mean: float
    ci95_halfwidth: float | None
    n: int
    kind: str = MEAN

    def __post_init__(self):
        if self.ci95_halfwidth is not None and not self.ci95_halfwidth >= 0:
            raise ValueError(f"negative CI half-width {self.ci95_halfwidth}")
        if self.kind not in (MEAN, PROPORTION, POINT):
            raise ValueError(f"unknown summary kind {self.kind!r}")


def summarize_mean(values):
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        raise EmptyInput("cannot summarize an empty vector")
    mean = math.fsum(v) / n
    if n < 2:
        return SummaryStat(mean, None, n)
    d = v - mean
    s = math.sqrt(math.fsum(d * d) / (n - 1))
    return SummaryStat(mean, Z95 * s / math.sqrt(n), n)


def summarize_proportion(successes, n):
    if int(n) != n or int(successes) != successes:
        raise OutOfRange("successes and n must be whole numbers")
    successes, n = int(successes), int(n)
    if n < 1 or not 0 <= successes <= n:
        raise OutOfRange(f"need 0 <= successes <= n and n >= 1, got {successes}/{n}")
    p = successes / n
    return SummaryStat(p, Z95 * math.sqrt(p * (1.0 - p) / n), n, PROPORTION)


def direction_of(metric):
    """True for higher-is-better, False for lower-is-better, None if unranked."""
    return M.HIGHER_IS_BETTER.get(metric)


@dataclass(frozen=True, eq=False)
class MetricReport:
    method_name: str
    normalization_range: tuple
    entries: dict
    per_sample: dict | None = None
    config: M.MetricConfig = field(default_factory=M.MetricConfig)
    meta: dict = field(default_factory=dict)

    @property
    def metrics(self):
        return tuple(self.entries)


_ROLE_HINT = {
    "im1": "reconstructions (ae_target, ae_input_class, ae_full)",
    "im2": "reconstructions (ae_target, ae_input_class, ae_full)",
    "fid": "embeddings_reference and embeddings_counterfactuals",
    "oracle": "oracle_probs_counterfactuals",
}


def evaluate_bundle(bundle, metrics=None, cfg=None, valid_only=True, keep_per_sample=True):
    """Score one bundle.

    TCV is computed on every sample. All other metrics are computed on the
    valid counterfactuals when ``valid_only`` is set (the default).
    """
    cfg = cfg or M.MetricConfig()
    available = available_metrics(bundle)
    if metrics is None:
        wanted = list(available)
    else:
        wanted = list(dict.fromkeys(metrics))
        for m in wanted:
            if m not in available:
                role = _ROLE_HINT.get(m, "label oracle outputs" if m.startswith("lvs:") else "unknown metric")
                raise MetricUnavailable(f"metric {m!r} unavailable: bundle lacks {role}")

    mask = compute_validity_mask(bundle, cfg.validity_mode)
    scored = filter_by_mask(bundle, mask) if valid_only else bundle

    entries = {}
    per_sample = {}
    dist_cache = {}
    for m in wanted:
        if m == "tcv":
            entries[m] = summarize_proportion(mask.valid_count, bundle.n)
        elif m in ("l1", "l2", "en"):
            scores = dist_cache.setdefault(m, M.distance_scores(scored, m))
            entries[m] = summarize_mean(scores.values)
            per_sample[m] = scores
        elif m in ("im1", "im2"):
            scores = (M.im1_scores if m == "im1" else M.im2_scores)(scored, cfg)
            entries[m] = summarize_mean(scores.values)
            per_sample[m] = scores
        elif m == "fid":
            value = M.fid(scored.embeddings_reference, scored.embeddings_counterfactuals, cfg)
            entries[m] = SummaryStat(value, None, scored.n, POINT)
        elif m == "oracle":
            flags = M.oracle_flags(scored, cfg)
            entries[m] = summarize_proportion(int(np.count_nonzero(flags)), flags.size)
        elif m.startswith("lvs:"):
            scores = M.lvs(scored, m[4:], cfg)
            entries[m] = summarize_mean(scores.values)
            per_sample[m] = scores
        else:
            raise MetricUnavailable(f"unknown metric {m!r}")

    meta = {
        "n_total": bundle.n,
        "n_valid": mask.valid_count,
        "n_scored": scored.n,
        "validity_mode": mask.mode,
        "valid_only": bool(valid_only),
        "ci_method": CI_METHOD,
    }
    return MetricReport(
        method_name=bundle.method_name,
        normalization_range=tuple(float(v) for v in bundle.normalization_range),
        entries=entries,
        per_sample=per_sample if keep_per_sample else None,
        config=cfg,
        meta=meta,
    )


@dataclass(frozen=True)
class MetricRanking:
    metric: str
    higher_is_better: bool
    order: tuple
    means: tuple
    tied: bool

    @property
    def best_method(self):
        return self.order[0]

    @property
    def direction(self):
        return "higher" if self.higher_is_better else "lower"


@dataclass(frozen=True)
class RankingTable:
    rankings: dict

    def best(self, metric):
        return self.rankings[metric].best_method

    @property
    def best_method(self):
        return {m: r.best_method for m, r in self.rankings.items()}


def rank_methods(reports):
    """Rank methods per metric in the registry direction.

    Metrics without a fixed direction (LVS) are left out. Equal means are
    ordered by method name and the ranking is flagged as tied.
    """
    reports = list(reports)
    if not reports:
        raise EmptyReportSet("no reports to rank")
    names = set(reports[0].entries)
    for r in reports[1:]:
        if set(r.entries) != names:
            diff = sorted(names.symmetric_difference(r.entries))
            raise MetricMismatch(f"reports disagree on metrics: {', '.join(diff)}")
    rankings = {}
    for metric in reports[0].entries:
        hib = direction_of(metric)
        if hib is None:
            continue
        rows = [(r.entries[metric].mean, r.method_name) for r in reports]
        rows.sort(key=lambda t: ((-t[0] if hib else t[0]), t[1]))
        means = tuple(t[0] for t in rows)
        tied = any(means[i] == means[i + 1] for i in range(len(means) - 1))
        rankings[metric] = MetricRanking(metric, hib, tuple(t[1] for t in rows), means, tied)
    return RankingTable(rankings)


EN_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class AuditResult:
    agreement: dict
    best_a: dict
    best_b: dict
    en_ratios: dict
    en_expected: dict
    en_ok: bool | None
    reports_a: tuple
    reports_b: tuple

    @property
    def passed(self):
        return all(self.agreement.values()) and self.en_ok is not False

    @property
    def disagreeing(self):
        return [m for m, ok in self.agreement.items() if not ok]

    def render(self):
        from .io import render_audit

        return render_audit(self)


def _width(rng):
    return float(rng[1]) - float(rng[0])


def normalization_audit(reports_a, reports_b):
    """Compare two report sets of the same methods under two pixel ranges.

    Checks that every ranked metric keeps its best method, and that each
    method's EN mean scales with the range width (shift-invariant,
    scale-linear) to 1e-9 relative.
    """
    reports_a, reports_b = list(reports_a), list(reports_b)
    if not reports_a or not reports_b:
        raise EmptyReportSet("audit needs reports on both sides")
    by_a = {r.method_name: r for r in reports_a}
    by_b = {r.method_name: r for r in reports_b}
    if len(by_a) != len(reports_a) or len(by_b) != len(reports_b):
        raise MethodSetMismatch("duplicate method names within a report set")
    if set(by_a) != set(by_b):
        raise MethodSetMismatch(f"method sets differ: {sorted(by_a)} vs {sorted(by_b)}")
    rank_a, rank_b = rank_methods(reports_a), rank_methods(reports_b)
    if set(rank_a.rankings) != set(rank_b.rankings):
        raise MetricMismatch("report sets rank different metrics")
    best_a, best_b = rank_a.best_method, rank_b.best_method
    agreement = {m: best_a[m] == best_b[m] for m in rank_a.rankings}

    en_ratios, en_expected, en_ok = {}, {}, None
    if "en" in reports_a[0].entries and "en" in reports_b[0].entries:
        en_ok = True
        for name in sorted(by_a):
            ra, rb = by_a[name], by_b[name]
            expected = _width(rb.normalization_range) / _width(ra.normalization_range)
            ea, eb = ra.entries["en"].mean, rb.entries["en"].mean
            ratio = eb / ea if ea != 0 else (1.0 if eb == 0 else math.inf)
            en_ratios[name] = ratio
            en_expected[name] = expected
            if abs(eb - expected * ea) > EN_RTOL * max(abs(eb), abs(expected * ea)):
                en_ok = False
    return AuditResult(agreement, best_a, best_b, en_ratios, en_expected, en_ok,
                       tuple(reports_a), tuple(reports_b))
