"""``cfeval`` command line.

Exit codes: 0 success, 1 domain or validation error, 2 file error,
3 usage error. ``CFEVAL_THREADS`` caps the worker count (0 or unset = auto).
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import io as cio
from . import synth
from .errors import ConfigMismatch, DomainError, FileFormatError
from .metrics import MetricConfig
from .stats import evaluate_bundle, normalization_audit

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    def __init__(self, message, printed=False):
        super().__init__(message)
        self.printed = printed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message, printed=True)


def _threads():
    raw = os.environ.get("CFEVAL_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"CFEVAL_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("CFEVAL_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _range(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    if not hi > lo:
        raise argparse.ArgumentTypeError("range needs LO < HI")
    return lo, hi


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _emit(text, out=None):
    if out:
        cio.write_report(cio.RenderedReport("text", text.encode("utf-8")), out)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _load_and_score(path, metrics, args):
    bundle, man = cio.load_bundle(path, return_manifest=True)
    eps = args.epsilon if args.epsilon is not None else float(man.config.get("epsilon", 1e-10))
    cfg = MetricConfig(
        epsilon=eps,
        js_log_base="base2" if args.js_base == "2" else "natural",
        validity_mode=None if args.validity == "auto" else args.validity,
    )
    return evaluate_bundle(bundle, metrics, cfg, valid_only=args.valid_only)


def cmd_evaluate(args):
    metrics = None
    if args.metrics:
        metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = [pool.submit(_load_and_score, b, metrics, args) for b in args.bundle]
        reports = [f.result() for f in futures]
    eps = {r.config.epsilon for r in reports}
    if len(eps) > 1:
        raise ConfigMismatch(f"bundles use different epsilons {sorted(eps)}; results are not comparable")
    fmt = args.format
    if args.out:
        out = Path(args.out)
        cio.ensure_dir(out)
        for i, r in enumerate(reports):
            cio.write_report(cio.render_report([r], "json"), out / f"{i:02d}-{r.method_name}.json")
        cio.write_report(cio.render_report(reports, fmt), out / f"report.{fmt}")
        if len(reports) >= 2:
            cio.write_report(cio.render_report(reports, "md"), out / "ranking.md")
        _emit(cio.render_report(reports, "md").text)
    else:
        _emit(cio.render_report(reports, fmt).text)
    return EXIT_OK


def _read_reports(paths):
    reports = []
    for p in paths:
        try:
            text = Path(p).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise FileFormatError(f"cannot read {p}: {e}") from None
        reports += cio.parse_reports_json(text)
    return reports


def cmd_audit(args):
    audit = normalization_audit(_read_reports(args.reports_a), _read_reports(args.reports_b))
    _emit(cio.render_audit(audit), args.out)
    if not audit.passed:
        bad = ", ".join(cio.display_name(m) for m in audit.disagreeing)
        if bad:
            print(f"best method differs across normalizations for: {bad}", file=sys.stderr)
        if audit.en_ok is False:
            print("EN does not scale with the range width", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_synth(args):
    spec = synth.SyntheticSpec(
        n_per_class=args.n_per_class, dim=args.dim, classes=args.classes,
        marker_dims=args.markers, class_separation=args.separation,
        noise_sd=args.noise_sd, seed=args.seed,
    ).validate()
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in synth.METHODS]
    if unknown or not methods:
        raise UsageError(f"--methods must list some of {', '.join(synth.METHODS)}")
    total = spec.n_per_class * spec.classes
    if not 1 <= args.n <= total:
        raise ConfigMismatch(f"--n must be in [1, {total}] for this world")
    world = synth.gen_world(spec)
    out = Path(args.out)
    cio.ensure_dir(out)
    for m in methods:
        b = synth.build_bundle(world, m, args.n, spec.seed)
        if args.range is not None:
            b = synth.rescale_bundle(b, args.range)
        cio.save_bundle(b, out / m)
    prov = {"spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__},
            "n_eval": args.n, "methods": methods,
            "range": list(args.range) if args.range else None,
            "rng": "numpy Philox-4x64, SeedSequence(seed, spawn_key=(crc32(stream_name),))"}
    cio._write_text(out / "provenance.json", json.dumps(prov, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_fakemnist(args):
    imgs = cio.read_array(args.images)
    n = imgs.shape[0]
    if imgs.size != n * args.height * args.width:
        raise ConfigMismatch(f"{args.images}: {imgs.size // max(n, 1)} values per sample, "
                             f"expected {args.height}x{args.width}")
    imgs = imgs.reshape(n, args.height, args.width).astype("float64")
    painted, labels = synth.make_fakemnist(imgs, args.classes, args.seed, args.range)
    out = Path(args.out)
    cio.ensure_dir(out)
    cio.write_tensor(painted, out / "images.npy")
    cio._write_text(out / "labels.csv", "label\n" + "".join(f"{int(v)}\n" for v in labels))
    return EXIT_OK


def cmd_report(args):
    reports = _read_reports(args.inputs)
    text = cio.render_report(reports, args.format).text
    if args.per_sample_extremes:
        text += "\n" + cio.render_extremes(reports, args.per_sample_extremes)
    _emit(text, args.out)
    return EXIT_OK


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="cfeval", description="Evaluate visual counterfactual explanations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("evaluate", help="score one or more bundle directories")
    e.add_argument("--bundle", action="append", required=True, metavar="DIR")
    e.add_argument("--metrics", metavar="LIST", help="comma separated; default: all available")
    e.add_argument("--validity", choices=["class-change", "target-match", "auto"], default="auto")
    e.add_argument("--valid-only", action=argparse.BooleanOptionalAction, default=True)
    e.add_argument("--epsilon", type=float)
    e.add_argument("--js-base", choices=["nat", "2"], default="nat")
    e.add_argument("--out", metavar="DIR")
    e.add_argument("--format", choices=["md", "json", "csv"], default="md")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("audit", help="compare report sets under two normalizations")
    a.add_argument("--reports-a", nargs="+", required=True, metavar="FILE")
    a.add_argument("--reports-b", nargs="+", required=True, metavar="FILE")
    a.add_argument("--out", metavar="PATH")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("synth", help="generate synthetic bundles")
    d = synth.SyntheticSpec()
    s.add_argument("--seed", type=_u64, default=d.seed)
    s.add_argument("--n", type=_positive, default=500, help="evaluation samples per bundle")
    s.add_argument("--n-per-class", type=_positive, default=d.n_per_class)
    s.add_argument("--dim", type=_positive, default=d.dim)
    s.add_argument("--classes", type=_positive, default=d.classes)
    s.add_argument("--markers", type=_positive, default=d.marker_dims)
    s.add_argument("--separation", type=float, default=d.class_separation)
    s.add_argument("--noise-sd", type=float, default=d.noise_sd)
    s.add_argument("--methods", default=",".join(synth.METHODS))
    s.add_argument("--range", type=_range, help="re-express pixel tensors in LO,HI")
    s.add_argument("--out", required=True, metavar="DIR")
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fakemnist", help="paint label pixels into an image tensor")
    f.add_argument("--images", required=True, metavar="FILE")
    f.add_argument("--height", type=_positive, required=True)
    f.add_argument("--width", type=_positive, required=True)
    f.add_argument("--classes", type=_positive, default=10)
    f.add_argument("--seed", type=_u64, default=0)
    f.add_argument("--range", type=_range, default=(0.0, 1.0))
    f.add_argument("--out", required=True, metavar="DIR")
    f.set_defaults(func=cmd_fakemnist)

    r = sub.add_parser("report", help="render JSON reports as tables")
    r.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FILE")
    r.add_argument("--format", choices=["md", "csv"], default="md")
    r.add_argument("--out", metavar="PATH")
    r.add_argument("--per-sample-extremes", type=_positive, metavar="K")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        if not e.printed:
            print(f"cfeval: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileFormatError, OSError) as e:
        print(f"cfeval: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ValueError) as e:
        print(f"cfeval: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DOMAIN
