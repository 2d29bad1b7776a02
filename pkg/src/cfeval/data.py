"""Evaluation bundle data model, validation and validity masking.

A bundle holds every array needed to score one counterfactual method on one
dataset. Arrays are stored as read-only numpy arrays; per-sample collections
share their first axis.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import EmptySelection, LengthMismatch, MissingTargets

__all__ = [
    "TensorSet",
    "LabelOracleOutputs",
    "ReconstructionTriplet",
    "EvaluationBundle",
    "Finding",
    "ValidityMask",
    "validate_bundle",
    "available_metrics",
    "argmax_lowest",
    "compute_validity_mask",
    "resolve_validity_mode",
    "filter_by_mask",
    "CLASS_CHANGE",
    "TARGET_MATCH",
]

CLASS_CHANGE = "class-change"
TARGET_MATCH = "target-match"

PROB_ATOL = 1e-6


def _frozen(a, dtype=np.float64):
    if a is None:
        return None
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TensorSet:
    """A named array whose first axis indexes samples."""

    name: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n(self):
        return self.values.shape[0]

    def flat(self):
        """Per-sample flattened view, shape ``(n, prod(shape[1:]))``."""
        return self.values.reshape(self.values.shape[0], -1)


@dataclass(frozen=True, eq=False)
class LabelOracleOutputs:
    label_name: str
    probs_inputs: np.ndarray
    probs_counterfactuals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs_inputs", _frozen(self.probs_inputs))
        object.__setattr__(self, "probs_counterfactuals", _frozen(self.probs_counterfactuals))


@dataclass(frozen=True, eq=False)
class ReconstructionTriplet:
    """Auto-encoder reconstructions of each counterfactual: by the
    target-class AE, the input-class AE and the AE trained on all data."""

    ae_target: np.ndarray
    ae_input_class: np.ndarray
    ae_full: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _frozen(getattr(self, f.name)))


@dataclass(frozen=True, eq=False)
class EvaluationBundle:
    inputs: np.ndarray
    counterfactuals: np.ndarray
    f_probs_inputs: np.ndarray
    f_probs_counterfactuals: np.ndarray
    targets: np.ndarray | None = None
    oracle_probs_counterfactuals: np.ndarray | None = None
    reconstructions: ReconstructionTriplet | None = None
    embeddings_reference: np.ndarray | None = None
    embeddings_counterfactuals: np.ndarray | None = None
    label_oracles: tuple = ()
    method_name: str = "method"
    normalization_range: tuple = (0.0, 1.0)
    # Original sample positions; survives filtering so per-sample scores can
    # be traced back to the unfiltered bundle.
    sample_index: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("inputs", "counterfactuals", "f_probs_inputs", "f_probs_counterfactuals",
                     "oracle_probs_counterfactuals", "embeddings_reference",
                     "embeddings_counterfactuals"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.targets is not None:
            object.__setattr__(self, "targets", _frozen(self.targets, np.int64))
        object.__setattr__(self, "label_oracles", tuple(self.label_oracles))
        object.__setattr__(self, "normalization_range",
                           (float(self.normalization_range[0]), float(self.normalization_range[1])))
        if self.sample_index is None:
            object.__setattr__(self, "sample_index", _frozen(np.arange(len(self.inputs)), np.int64))
        else:
            object.__setattr__(self, "sample_index", _frozen(self.sample_index, np.int64))

    @property
    def n(self):
        return self.inputs.shape[0]

    def label_oracle(self, name):
        for lo in self.label_oracles:
            if lo.label_name == name:
                return lo
        return None


@dataclass(frozen=True)
class Finding:
    field: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass(frozen=True, eq=False)
class ValidityMask:
    flags: np.ndarray
    mode: str

    @property
    def valid_count(self):
        return int(np.count_nonzero(self.flags))

    def __len__(self):
        return len(self.flags)


def _check_probs(name, probs, n, findings):
    if probs.ndim != 2:
        findings.append(Finding(name, f"expected a 2-D probability array, got shape {probs.shape}"))
        return
    if probs.shape[0] != n:
        findings.append(Finding(name, f"sample count mismatch: {probs.shape[0]} vs {n}"))
    if probs.shape[1] < 2:
        findings.append(Finding(name, "need at least 2 classes"))
    if not np.all(np.isfinite(probs)):
        findings.append(Finding(name, "non-finite probabilities"))
        return
    if np.any(probs < 0):
        findings.append(Finding(name, "negative probability"))
    sums = probs.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_ATOL)
    if bad.size:
        findings.append(Finding(name, f"distribution does not sum to 1 (row {int(bad[0])}: {sums[bad[0]]:.6g})"))


def _check_finite(name, arr, findings):
    if not np.all(np.isfinite(arr)):
        findings.append(Finding(name, "non-finite values"))


def validate_bundle(b):
    """Check every bundle invariant; return a list of :class:`Finding`.

    An empty list means the bundle is consistent. Validation never raises.
    """
    findings = []
    n = b.inputs.shape[0] if b.inputs.ndim else 0
    if b.inputs.ndim == 0 or n < 1:
        findings.append(Finding("inputs", "need at least one sample"))
    if b.counterfactuals.shape[:1] != b.inputs.shape[:1]:
        findings.append(Finding("counterfactuals",
                                f"sample count mismatch: {b.counterfactuals.shape[0]} vs {n}"))
    elif b.counterfactuals.shape != b.inputs.shape:
        findings.append(Finding("counterfactuals",
                                f"shape {b.counterfactuals.shape} differs from inputs {b.inputs.shape}"))
    _check_finite("inputs", b.inputs, findings)
    _check_finite("counterfactuals", b.counterfactuals, findings)

    _check_probs("f_probs_inputs", b.f_probs_inputs, n, findings)
    _check_probs("f_probs_counterfactuals", b.f_probs_counterfactuals, n, findings)
    k = b.f_probs_inputs.shape[-1]
    if b.f_probs_counterfactuals.ndim == 2 and b.f_probs_counterfactuals.shape[1] != k:
        findings.append(Finding("f_probs_counterfactuals", "class count differs from f_probs_inputs"))
    if b.oracle_probs_counterfactuals is not None:
        _check_probs("oracle_probs_counterfactuals", b.oracle_probs_counterfactuals, n, findings)
        if b.oracle_probs_counterfactuals.ndim == 2 and b.oracle_probs_counterfactuals.shape[1] != k:
            findings.append(Finding("oracle_probs_counterfactuals", "class count differs from f_probs_inputs"))

    if b.targets is not None:
        if b.targets.shape != (n,):
            findings.append(Finding("targets", f"sample count mismatch: {b.targets.shape} vs ({n},)"))
        elif n and (b.targets.min() < 0 or b.targets.max() >= k):
            findings.append(Finding("targets", f"target class outside [0, {k})"))

    if b.reconstructions is not None:
        for f in fields(b.reconstructions):
            arr = getattr(b.reconstructions, f.name)
            if arr.shape != b.counterfactuals.shape:
                findings.append(Finding(f"reconstructions.{f.name}",
                                        f"shape {arr.shape} differs from counterfactuals {b.counterfactuals.shape}"))
            _check_finite(f"reconstructions.{f.name}", arr, findings)

    er, ec = b.embeddings_reference, b.embeddings_counterfactuals
    if ec is not None:
        if ec.ndim != 2 or ec.shape[0] != n:
            findings.append(Finding("embeddings_counterfactuals", f"sample count mismatch: {ec.shape} vs N={n}"))
        _check_finite("embeddings_counterfactuals", ec, findings)
    if er is not None:
        if er.ndim != 2 or er.shape[0] < 1:
            findings.append(Finding("embeddings_reference", f"expected (M, d) array, got {er.shape}"))
        _check_finite("embeddings_reference", er, findings)
    if er is not None and ec is not None and er.ndim == 2 and ec.ndim == 2 and er.shape[1] != ec.shape[1]:
        findings.append(Finding("embeddings_counterfactuals",
                                f"embedding dimension mismatch: {ec.shape[1]} vs {er.shape[1]}"))

    seen = set()
    for lo in b.label_oracles:
        name = f"label_oracles[{lo.label_name}]"
        if lo.label_name in seen:
            findings.append(Finding(name, "duplicate label name"))
        seen.add(lo.label_name)
        _check_probs(name + ".probs_inputs", lo.probs_inputs, n, findings)
        _check_probs(name + ".probs_counterfactuals", lo.probs_counterfactuals, n, findings)
        if lo.probs_inputs.shape != lo.probs_counterfactuals.shape:
            findings.append(Finding(name, "input and counterfactual predictions differ in shape"))

    lo_, hi_ = b.normalization_range
    if not lo_ < hi_:
        findings.append(Finding("normalization_range", f"low {lo_} must be below high {hi_}"))
    if b.sample_index is not None and b.sample_index.shape != (n,):
        findings.append(Finding("sample_index", "sample count mismatch"))
    return findings


def available_metrics(b):
    """Metric names computable from the roles present in ``b``."""
    names = ["tcv", "l1", "l2", "en"]
    if b.reconstructions is not None:
        names += ["im1", "im2"]
    if b.embeddings_reference is not None and b.embeddings_counterfactuals is not None:
        names.append("fid")
    if b.oracle_probs_counterfactuals is not None:
        names.append("oracle")
    names += [f"lvs:{lo.label_name}" for lo in b.label_oracles]
    return names


def argmax_lowest(probs):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=1)


def resolve_validity_mode(b, mode=None):
    """``None``/``"auto"`` means target-match when targets exist, else class-change."""
    if mode in (None, "auto"):
        return TARGET_MATCH if b.targets is not None else CLASS_CHANGE
    if mode not in (CLASS_CHANGE, TARGET_MATCH):
        raise ValueError(f"unknown validity mode {mode!r}")
    return mode


def compute_validity_mask(b, mode=None):
    mode = resolve_validity_mode(b, mode)
    pred_cf = argmax_lowest(b.f_probs_counterfactuals)
    if mode == CLASS_CHANGE:
        flags = pred_cf != argmax_lowest(b.f_probs_inputs)
    else:
        if b.targets is None:
            raise MissingTargets("target-match validity needs per-sample targets")
        flags = pred_cf == b.targets
    flags = np.asarray(flags, dtype=bool)
    flags.flags.writeable = False
    return ValidityMask(flags=flags, mode=mode)


def _take(arr, idx):
    return None if arr is None else arr[idx]


def filter_by_mask(b, m):
    """Bundle restricted to the flagged samples, order preserved.

    The reference embeddings describe the test set, not individual
    counterfactuals, so they pass through untouched.
    """
    flags = np.asarray(m.flags, dtype=bool)
    if flags.shape != (b.n,):
        raise LengthMismatch(f"mask has {flags.size} entries, bundle has {b.n} samples")
    if not flags.any():
        raise EmptySelection("no valid counterfactuals; only TCV is defined")
    if flags.all():
        return b
    idx = np.flatnonzero(flags)
    rec = b.reconstructions
    if rec is not None:
        rec = ReconstructionTriplet(rec.ae_target[idx], rec.ae_input_class[idx], rec.ae_full[idx])
    return replace(
        b,
        inputs=b.inputs[idx],
        counterfactuals=b.counterfactuals[idx],
        f_probs_inputs=b.f_probs_inputs[idx],
        f_probs_counterfactuals=b.f_probs_counterfactuals[idx],
        targets=_take(b.targets, idx),
        oracle_probs_counterfactuals=_take(b.oracle_probs_counterfactuals, idx),
        reconstructions=rec,
        embeddings_counterfactuals=_take(b.embeddings_counterfactuals, idx),
        label_oracles=tuple(
            LabelOracleOutputs(lo.label_name, lo.probs_inputs[idx], lo.probs_counterfactuals[idx])
            for lo in b.label_oracles
        ),
        sample_index=b.sample_index[idx],
    )
