"""Tensor files, bundle directories and report rendering.

Tensor files are either NPY v1.0 (little-endian ``<f4``, ``<f8`` or ``<i8``,
C order, any rank) or CSV with a header row and one sample per row. NPY
headers are read and written with :mod:`numpy.lib.format`; the allowed subset
is enforced here.

A bundle directory holds ``manifest.json`` plus one file per role::

    {
      "version": "1",
      "method_name": "prototype",
      "normalization_range": [0.0, 1.0],
      "files": {"inputs": "inputs.npy", "counterfactuals": "counterfactuals.npy", ...},
      "label_oracles": [{"name": "attr0", "probs_inputs": "...", "probs_counterfactuals": "..."}],
      "config": {"epsilon": 1e-10}
    }

``files`` must name ``inputs``, ``counterfactuals``, ``f_probs_inputs`` and
``f_probs_counterfactuals``. Unknown keys produce warnings, not errors.
"""

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.lib.format as npyfmt

from . import metrics as M
from .data import EvaluationBundle, LabelOracleOutputs, ReconstructionTriplet, TensorSet, validate_bundle
from .errors import (
    EmptyReportSet,
    IoFailure,
    MalformedHeader,
    MissingManifest,
    RaggedRows,
    UnsupportedDtype,
    ValidationFailed,
)
from .stats import MEAN, POINT, PROPORTION, MetricReport, SummaryStat, direction_of

__all__ = [
    "read_array",
    "read_tensor",
    "write_array",
    "write_tensor",
    "save_bundle",
    "load_bundle",
    "read_manifest",
    "RenderedReport",
    "render_report",
    "render_extremes",
    "render_audit",
    "format_cell",
    "report_to_dict",
    "report_from_dict",
    "reports_to_json",
    "parse_reports_json",
]

NPY_MAGIC = b"\x93NUMPY"
ALLOWED_DTYPES = ("<f4", "<f8", "<i8")
MANIFEST = "manifest.json"
MANIFEST_VERSION = "1"
REQUIRED_ROLES = ("inputs", "counterfactuals", "f_probs_inputs", "f_probs_counterfactuals")
OPTIONAL_ROLES = ("targets", "oracle_probs_counterfactuals", "ae_target", "ae_input_class",
                  "ae_full", "embeddings_reference", "embeddings_counterfactuals")
_TOP_KEYS = {"version", "method_name", "normalization_range", "files", "label_oracles", "config"}


# tensors

def _read_npy(path):
    try:
        with open(path, "rb") as fh:
            try:
                version = npyfmt.read_magic(fh)
            except ValueError as e:
                raise MalformedHeader(f"{path}: {e}") from None
            if version != (1, 0):
                raise MalformedHeader(f"{path}: NPY version {version} not supported, need 1.0")
            try:
                shape, fortran, dtype = npyfmt.read_array_header_1_0(fh)
            except ValueError as e:
                raise MalformedHeader(f"{path}: {e}") from None
            if dtype.str not in ALLOWED_DTYPES:
                raise UnsupportedDtype(f"{path}: dtype {dtype.str} not in {ALLOWED_DTYPES}")
            if fortran:
                raise MalformedHeader(f"{path}: Fortran-ordered arrays are not supported")
            count = math.prod(shape)
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize or fh.read(1):
                raise MalformedHeader(f"{path}: payload size does not match header shape {shape}")
    except OSError as e:
        if isinstance(e, (MalformedHeader, UnsupportedDtype)):
            raise
        raise IoFailure(f"cannot read {path}: {e}") from None
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read {path}: {e}") from None
    rows = [r for r in rows if r]
    if not rows:
        raise MalformedHeader(f"{path}: missing header row")
    header, body = rows[0], rows[1:]
    if not body:
        raise RaggedRows(f"{path}: no data rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise RaggedRows(f"{path}: line {i} has {len(r)} cells, header has {len(header)}")
    try:
        ints = [[int(v) for v in r] for r in body]
        return np.array(ints, dtype=np.int64)
    except ValueError:
        pass
    try:
        return np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as e:
        raise UnsupportedDtype(f"{path}: non-numeric cell ({e})") from None


def read_array(path):
    """Raw array from an NPY or CSV file, dtype preserved."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(NPY_MAGIC))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from None
    return _read_npy(path) if head == NPY_MAGIC else _read_csv(path)


def read_tensor(path, name=None):
    arr = read_array(path)
    if arr.ndim == 0 or arr.shape[0] < 1:
        raise RaggedRows(f"{path}: tensor needs at least one sample")
    return TensorSet(name or Path(path).stem, arr)


def _check_writable(arr, path):
    if arr.ndim == 0 or arr.shape[0] < 1:
        raise RaggedRows(f"{path}: refusing to write a tensor with no samples")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise IoFailure(f"{path}: refusing to write NaN or Inf values")


def write_array(arr, path, fmt=None):
    """Write an array as NPY (``fmt="npy"``) or CSV (``fmt="csv"``); the
    default follows the file suffix."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "npy")
    arr = np.asarray(arr)
    if arr.dtype.kind in "iub":
        arr = arr.astype("<i8")
    elif arr.dtype.str == "<f4":
        pass
    else:
        arr = arr.astype("<f8")
    arr = np.ascontiguousarray(arr)
    _check_writable(arr, path)
    try:
        if fmt == "npy":
            with open(path, "wb") as fh:
                npyfmt.write_array(fh, arr, version=(1, 0), allow_pickle=False)
        elif fmt == "csv":
            flat = arr.reshape(arr.shape[0], -1)
            cell = str if arr.dtype.kind == "i" else (lambda v: format(float(v), ".17g"))
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"c{j}" for j in range(flat.shape[1])])
                for row in flat:
                    w.writerow([cell(v) for v in row])
        else:
            raise ValueError(f"unknown tensor format {fmt!r}")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from None


def write_tensor(t, path, fmt=None):
    write_array(getattr(t, "values", t), path, fmt)


# bundles

@dataclass(frozen=True)
class Manifest:
    method_name: str
    normalization_range: tuple
    files: dict
    label_oracles: tuple
    config: dict
    warnings: tuple


def read_manifest(directory):
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise MissingManifest(f"no {MANIFEST} in {directory}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise MalformedHeader(f"{path}: invalid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise MalformedHeader(f"{path}: manifest must be a JSON object")
    notes = []
    for key in sorted(set(doc) - _TOP_KEYS):
        notes.append(f"unknown manifest key {key!r} ignored")
    if str(doc.get("version", "")) != MANIFEST_VERSION:
        raise MalformedHeader(f"{path}: manifest version must be {MANIFEST_VERSION!r}")
    files = doc.get("files")
    if not isinstance(files, dict):
        raise MissingManifest(f"{path}: 'files' map missing")
    for role in REQUIRED_ROLES:
        if role not in files:
            raise MissingManifest(f"{path}: required role {role!r} missing")
    for role in sorted(set(files) - set(REQUIRED_ROLES) - set(OPTIONAL_ROLES)):
        notes.append(f"unknown file role {role!r} ignored")
    rng = doc.get("normalization_range", [0.0, 1.0])
    if not (isinstance(rng, list) and len(rng) == 2):
        raise MalformedHeader(f"{path}: normalization_range must be [low, high]")
    los = []
    for entry in doc.get("label_oracles", []):
        if not isinstance(entry, dict) or not {"name", "probs_inputs", "probs_counterfactuals"} <= set(entry):
            raise MalformedHeader(f"{path}: label_oracles entries need name, probs_inputs, probs_counterfactuals")
        los.append(entry)
    config = doc.get("config", {})
    if not isinstance(config, dict):
        raise MalformedHeader(f"{path}: config must be an object")
    for key in sorted(set(config) - {"epsilon", "js_log_base", "validity_mode", "oracle_mode", "covariance"}):
        notes.append(f"unknown config key {key!r} ignored")
    for n in notes:
        warnings.warn(f"{path}: {n}", stacklevel=2)
    return Manifest(str(doc.get("method_name", Path(directory).name)), (float(rng[0]), float(rng[1])),
                    dict(files), tuple(los), dict(config), tuple(notes))


def load_bundle(directory, return_manifest=False):
    """Load and validate a bundle directory. Error findings abort the load
    with :class:`ValidationFailed`."""
    directory = Path(directory)
    man = read_manifest(directory)

    def load(rel):
        p = directory / rel
        if not p.is_file():
            raise IoFailure(f"{directory}: listed file {rel!r} does not exist")
        return read_array(p)

    arr = {role: load(rel) for role, rel in man.files.items() if role in REQUIRED_ROLES + OPTIONAL_ROLES}
    rec = None
    rec_roles = ("ae_target", "ae_input_class", "ae_full")
    present = [r in arr for r in rec_roles]
    if any(present) and not all(present):
        raise ValidationFailed([f"reconstructions: roles {', '.join(r for r in rec_roles if r not in arr)} missing"])
    if all(present):
        rec = ReconstructionTriplet(*(arr[r] for r in rec_roles))
    targets = arr.get("targets")
    if targets is not None:
        if targets.dtype.kind != "i":
            if not np.all(targets == np.round(targets)):
                raise ValidationFailed(["targets: non-integer class labels"])
        targets = targets.reshape(-1).astype(np.int64)
    los = tuple(LabelOracleOutputs(e["name"], load(e["probs_inputs"]), load(e["probs_counterfactuals"]))
                for e in man.label_oracles)
    bundle = EvaluationBundle(
        inputs=arr["inputs"],
        counterfactuals=arr["counterfactuals"],
        f_probs_inputs=arr["f_probs_inputs"],
        f_probs_counterfactuals=arr["f_probs_counterfactuals"],
        targets=targets,
        oracle_probs_counterfactuals=arr.get("oracle_probs_counterfactuals"),
        reconstructions=rec,
        embeddings_reference=arr.get("embeddings_reference"),
        embeddings_counterfactuals=arr.get("embeddings_counterfactuals"),
        label_oracles=los,
        method_name=man.method_name,
        normalization_range=man.normalization_range,
    )
    errors = [f for f in validate_bundle(bundle) if f.severity == "error"]
    if errors:
        raise ValidationFailed(errors)
    return (bundle, man) if return_manifest else bundle


def save_bundle(bundle, directory, config=None):
    """Write ``bundle`` as NPY role files plus ``manifest.json``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"cannot create {directory}: {e}") from None
    files = {}

    def put(role, a):
        if a is not None:
            write_array(a, directory / f"{role}.npy")
            files[role] = f"{role}.npy"

    for role in ("inputs", "counterfactuals", "f_probs_inputs", "f_probs_counterfactuals", "targets",
                 "oracle_probs_counterfactuals", "embeddings_reference", "embeddings_counterfactuals"):
        put(role, getattr(bundle, role))
    if bundle.reconstructions is not None:
        for role in ("ae_target", "ae_input_class", "ae_full"):
            put(role, getattr(bundle.reconstructions, role))
    los = []
    for i, lo in enumerate(bundle.label_oracles):
        a, b = f"label_{i:02d}_inputs.npy", f"label_{i:02d}_counterfactuals.npy"
        write_array(lo.probs_inputs, directory / a)
        write_array(lo.probs_counterfactuals, directory / b)
        los.append({"name": lo.label_name, "probs_inputs": a, "probs_counterfactuals": b})
    doc = {
        "version": MANIFEST_VERSION,
        "method_name": bundle.method_name,
        "normalization_range": list(bundle.normalization_range),
        "files": files,
        "label_oracles": los,
    }
    if config is not None:
        doc["config"] = config.to_dict() if hasattr(config, "to_dict") else dict(config)
    _write_text(directory / MANIFEST, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_text(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from None


# reports

def _stat_to_dict(s):
    return {"mean": s.mean, "ci95_halfwidth": s.ci95_halfwidth, "n": s.n, "kind": s.kind}


def report_to_dict(r, per_sample=True):
    d = {
        "method_name": r.method_name,
        "normalization_range": list(r.normalization_range),
        "config": r.config.to_dict(),
        "meta": dict(r.meta),
        "entries": {m: _stat_to_dict(s) for m, s in r.entries.items()},
        "metric_order": list(r.entries),
    }
    if per_sample and r.per_sample:
        d["per_sample"] = {
            m: {"values": [float(v) for v in s.values],
                "sample_index": [int(i) for i in s.sample_index],
                "higher_is_better": s.higher_is_better}
            for m, s in r.per_sample.items()
        }
    return d


def report_from_dict(d):
    try:
        order = d.get("metric_order") or list(d["entries"])
        entries = {m: SummaryStat(float(d["entries"][m]["mean"]),
                                  None if d["entries"][m]["ci95_halfwidth"] is None
                                  else float(d["entries"][m]["ci95_halfwidth"]),
                                  int(d["entries"][m]["n"]), d["entries"][m].get("kind", MEAN))
                   for m in order}
        per_sample = None
        if d.get("per_sample"):
            per_sample = {m: M.PerSampleScores(m, np.asarray(v["values"], dtype=np.float64),
                                               v.get("higher_is_better"),
                                               np.asarray(v["sample_index"], dtype=np.int64))
                          for m, v in d["per_sample"].items()}
        return MetricReport(
            method_name=str(d["method_name"]),
            normalization_range=tuple(float(v) for v in d["normalization_range"]),
            entries=entries,
            per_sample=per_sample,
            config=M.MetricConfig.from_dict(d.get("config", {})),
            meta=dict(d.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedHeader(f"malformed report: {e}") from None


def reports_to_json(reports, per_sample=True):
    doc = {"reports": [report_to_dict(r, per_sample) for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_reports_json(text):
    """Reports from a JSON document holding one report or ``{"reports": [...]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedHeader(f"invalid report JSON: {e}") from None
    if isinstance(doc, dict) and "reports" in doc:
        return [report_from_dict(d) for d in doc["reports"]]
    if isinstance(doc, dict):
        return [report_from_dict(doc)]
    raise MalformedHeader("report JSON must be an object")


_DISPLAY = {"tcv": "TCV", "oracle": "Oracle", "l1": "L1", "l2": "L2", "en": "EN",
            "im1": "IM1", "im2": "100·IM2", "fid": "FID"}


def display_name(metric):
    if metric.startswith("lvs:"):
        return f"LVS {metric[4:]}"
    return _DISPLAY.get(metric, metric)


def format_cell(stat, metric=None):
    """Table cell text: ``16.07 (0.18)``, ``93.13% (0.50)`` or ``98.35``."""
    scale = 100.0 if metric == "im2" else 1.0
    if stat.kind == PROPORTION:
        text = f"{100.0 * stat.mean:.2f}%"
        ci = None if stat.ci95_halfwidth is None else 100.0 * stat.ci95_halfwidth
    else:
        text = f"{scale * stat.mean:.2f}"
        ci = None if stat.ci95_halfwidth is None or stat.kind == POINT else scale * stat.ci95_halfwidth
    return text if ci is None else f"{text} ({ci:.2f})"


def _metric_columns(reports):
    cols = []
    for r in reports:
        for m in r.entries:
            if m not in cols:
                cols.append(m)
    return cols


def _best(reports, metric):
    hib = direction_of(metric)
    have = [r for r in reports if metric in r.entries]
    if hib is None or len(have) < 2:
        return None
    key = lambda r: ((-r.entries[metric].mean if hib else r.entries[metric].mean), r.method_name)
    return min(have, key=key)


def _markdown(reports):
    cols = _metric_columns(reports)
    lines = ["| Method | " + " | ".join(display_name(m) for m in cols) + " |",
             "|---|" + "---:|" * len(cols)]
    best = {m: _best(reports, m) for m in cols}
    for r in reports:
        cells = []
        for m in cols:
            if m not in r.entries:
                cells.append("n/a")
                continue
            text = format_cell(r.entries[m], m)
            cells.append(f"**{text}**" if best[m] is r else text)
        lines.append(f"| {r.method_name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _csv(reports):
    out = ["method,metric,mean,ci95_halfwidth,n,kind"]
    for r in reports:
        for m, s in r.entries.items():
            ci = "" if s.ci95_halfwidth is None else format(s.ci95_halfwidth, ".17g")
            out.append(f"{r.method_name},{m},{format(s.mean, '.17g')},{ci},{s.n},{s.kind}")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class RenderedReport:
    format: str
    content: bytes

    @property
    def text(self):
        return self.content.decode("utf-8")


def render_report(reports, fmt="md"):
    reports = list(reports)
    if not reports:
        raise EmptyReportSet("nothing to render")
    fmt = {"markdown": "md"}.get(fmt, fmt)
    if fmt == "md":
        text = _markdown(reports)
    elif fmt == "json":
        text = reports_to_json(reports)
    elif fmt == "csv":
        text = _csv(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return RenderedReport(fmt, text.encode("utf-8"))


def render_extremes(reports, k):
    """The ``k`` best and ``k`` worst samples per metric and method.

    Metrics without a direction (LVS) list the highest and lowest scores.
    """
    lines = ["| Method | Metric | Rank | Sample | Score |", "|---|---|---|---:|---:|"]
    for r in reports:
        for m, s in (r.per_sample or {}).items():
            hib = s.higher_is_better
            order = np.argsort(s.values, kind="stable")
            lo, hi = order[:k], order[::-1][:k]
            if hib is None:
                groups = (("highest", hi), ("lowest", lo))
            else:
                groups = (("best", hi if hib else lo), ("worst", lo if hib else hi))
            for label, sel in groups:
                for rank, i in enumerate(sel, start=1):
                    lines.append(f"| {r.method_name} | {display_name(m)} | {label} {rank} | "
                                 f"{int(s.sample_index[i])} | {format(float(s.values[i]), '.6g')} |")
    return "\n".join(lines) + "\n"


def render_audit(audit):
    """Side-by-side tables for a normalization audit."""
    a = {r.method_name: r for r in audit.reports_a}
    b = {r.method_name: r for r in audit.reports_b}
    ra = audit.reports_a[0].normalization_range
    rb = audit.reports_b[0].normalization_range
    metrics = list(audit.agreement)
    head = ["Method"]
    for m in metrics:
        head += [f"{display_name(m)} [{ra[0]:g},{ra[1]:g}]", f"{display_name(m)} [{rb[0]:g},{rb[1]:g}]"]
    lines = ["| " + " | ".join(head) + " |", "|---|" + "---:|" * (len(head) - 1)]
    for name in sorted(a):
        cells = [name]
        for m in metrics:
            cells += [format_cell(a[name].entries[m], m), format_cell(b[name].entries[m], m)]
        lines.append("| " + " | ".join(cells) + " |")
    lines += ["", "| Metric | Best A | Best B | Agree |", "|---|---|---|---|"]
    for m in metrics:
        flag = "yes" if audit.agreement[m] else "**NO**"
        lines.append(f"| {display_name(m)} | {audit.best_a[m]} | {audit.best_b[m]} | {flag} |")
    if audit.en_ok is not None:
        lines += ["", "| Method | EN ratio B/A | Expected | OK |", "|---|---:|---:|---|"]
        for name in sorted(audit.en_ratios):
            ratio, exp = audit.en_ratios[name], audit.en_expected[name]
            ok = abs(ratio - exp) <= 1e-9 * max(abs(exp), 1e-300)
            lines.append(f"| {name} | {ratio:.12g} | {exp:.12g} | {'yes' if ok else '**NO**'} |")
    lines += ["", f"audit {'passed' if audit.passed else 'FAILED'}"]
    return "\n".join(lines) + "\n"


def write_report(rendered, path):
    try:
        Path(path).write_bytes(rendered.content)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from None


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"cannot create {path}: {e}") from None
