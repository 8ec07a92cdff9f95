"""Command-line front end.

Subcommands::

    cardpattern sample       write a seeded synthetic purchase CSV
    cardpattern ingest       purchase CSV -> stream bundle
    cardpattern experiment   assemble L/F datasets, score, sweep, report
    cardpattern modelselect  AR order RMSE table and ACF
    cardpattern scan         SD or EVP outlier scan of one dataset

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

from . import plotting
from .ar import acf, difference, fit_ar, rmse
from .core import (CardPatternError, InvalidValue, ModelConfig, NonPositiveAmount, SeriesTooShort,
                   TransactionSequence, log_transform)
from .data import (EmptyAfterFiltering, ExperimentSet, FraudGenConfig, InsufficientLegitimateData,
                   MalformedBundle, MissingColumn, RejectionOverflow, UnreadableFile, build_experiment,
                   default_fraud_config, dumps_bundle, dumps_stream, ingest_csv, read_bundle,
                   sample_csv_path, synth_purchase_stream, write_atomic, write_purchase_csv)
from .detect import AMOUNT_MODELS, METHOD_NAMES, FitCache, outlier_scan, score_dataset, sweep

log = logging.getLogger("cardpattern")

INPUT_ERRORS = (MissingColumn, UnreadableFile, EmptyAfterFiltering, MalformedBundle,
                InsufficientLegitimateData, RejectionOverflow, InvalidValue, NonPositiveAmount)
SCORED_VERSION = "# cardpattern-scored v1"
SWEEP_VERSION = "# cardpattern-sweep v1"
SCAN_VERSION = "# cardpattern-scan v1"
RMSE_VERSION = "# cardpattern-rmse v1"
ACF_VERSION = "# cardpattern-acf v1"
DEFAULT_CANDIDATES = "1:1,2:1,3:0,4:0,5:0"


class UsageError(Exception):
    pass


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fmt(v, places=6) -> str:
    return "NA" if v is None or not math.isfinite(v) else f"{v:.{places}f}"


# -- argument parsing ----------------------------------------------------------

def _floats(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _candidates(text):
    out = []
    for item in text.split(","):
        try:
            p, d = item.split(":")
            out.append((int(p), int(d)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"candidates look like 1:1,5:0 (got {item!r})")
    return out


def _input_args(ap):
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--csv", help="purchase CSV (default: the bundled sample)")
    g.add_argument("--bundle", help="dataset bundle written by `ingest` or `experiment`")
    ap.add_argument("--amount-column", default="Transaction Amount")
    ap.add_argument("--region-column", default="Vendor State/Province")
    ap.add_argument("--offset", type=int, default=0, help="skip this many transactions of the stream")
    ap.add_argument("--length", type=int, default=None, help="keep at most this many after the offset")


def _model_args(ap, multi=True):
    nargs = dict(action="append") if multi else {}
    ap.add_argument("--amount-model", choices=AMOUNT_MODELS, **nargs)
    if multi:
        ap.add_argument("--region-model", choices=("assoc", "adj"), action="append",
                        help="adj adds the adjacency-matrix variants; assoc is always scored")
    ap.add_argument("--p", type=int, default=5)
    ap.add_argument("--d", type=int, default=0)
    ap.add_argument("--sd", type=float, choices=(1.0, 2.0), default=2.0)
    ap.add_argument("--theta-ev", type=float, default=0.6)
    ap.add_argument("--thetas", type=_floats, default=(10.0, 20.0, 30.0, 40.0, 50.0))
    ap.add_argument("--row-len", type=int, default=10)
    ap.add_argument("--window", type=int, default=None)
    ap.add_argument("--refit", choices=("step", "once"), default="step")
    ap.add_argument("--lag-padding", choices=("zero", "drop"), default="drop")
    ap.add_argument("--evp-side", choices=("folded", "upper"), default="folded")
    ap.add_argument("--center", action="store_true")
    ap.add_argument("--gp-restarts", type=int, default=10)


def _fraud_args(ap):
    ap.add_argument("--fraud-mean", type=float, default=None,
                    help="fraud amount mean (default 3x the legitimate training mean)")
    ap.add_argument("--fraud-std", type=float, default=None,
                    help="fraud amount std (default the legitimate training std)")
    ap.add_argument("--fraud-dist", choices=("truncnorm", "lognormal"), default="truncnorm")
    ap.add_argument("--count", type=int, default=20, help="datasets of each kind")
    ap.add_argument("--train-len", type=int, default=100)
    ap.add_argument("--block-len", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cardpattern", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {version()}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="write a seeded synthetic purchase CSV")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--n", type=int, default=300)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("ingest", help="read a purchase CSV into a stream bundle")
    sp.add_argument("csv")
    sp.add_argument("--amount-column", default="Transaction Amount")
    sp.add_argument("--region-column", default="Vendor State/Province")
    sp.add_argument("--offset", type=int, default=0)
    sp.add_argument("--length", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("experiment", help="assemble, score and sweep the L/F datasets")
    _input_args(sp)
    _model_args(sp)
    _fraud_args(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--from-manifest", help="rerun with the configuration recorded in a manifest")
    sp.add_argument("--no-figures", action="store_true")

    sp = sub.add_parser("modelselect", help="RMSE over AR (p, d) candidates and the ACF")
    _input_args(sp)
    sp.add_argument("--candidates", type=_candidates, default=_candidates(DEFAULT_CANDIDATES))
    sp.add_argument("--max-lag", type=int, default=20)
    sp.add_argument("--d", type=int, default=0, help="differencing order for the ACF")
    sp.add_argument("--train-len", type=int, default=100)
    sp.add_argument("--window", type=int, default=None)
    sp.add_argument("--lag-padding", choices=("zero", "drop"), default="drop")
    sp.add_argument("--out", help="output directory (tables are always printed)")

    sp = sub.add_parser("scan", help="SD or EVP outlier scan of one dataset")
    _input_args(sp)
    _model_args(sp, multi=False)
    _fraud_args(sp)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--dataset", default="L1", help="dataset label such as L3 or F12")
    sp.add_argument("--mode", choices=("SD", "EVP"), default="SD")
    sp.add_argument("--out", required=True)
    return ap


def model_config(args) -> ModelConfig:
    return ModelConfig(p=args.p, d=args.d, sd_multiplier=args.sd, theta_ev=args.theta_ev,
                       window=args.window, row_len=args.row_len, seed=args.seed,
                       lag_padding=args.lag_padding, evp_side=args.evp_side, center=args.center,
                       refit=args.refit, gp_restarts=args.gp_restarts, thetas=args.thetas)


# -- inputs --------------------------------------------------------------------

def load_input(args):
    """Stream or experiment set named by --csv/--bundle, plus its description."""
    if getattr(args, "bundle", None):
        path = Path(args.bundle)
        data = read_bundle(path)
        desc = {"source": "bundle", "path": str(path.resolve())}
    else:
        path = Path(args.csv) if getattr(args, "csv", None) else sample_csv_path()
        data, report = ingest_csv(path, args.amount_column, args.region_column)
        log.info("ingested %s: %s", path.name, report.summary())
        desc = {"source": "csv" if getattr(args, "csv", None) else "sample",
                "path": str(path.resolve()) if getattr(args, "csv", None) else "purchases.csv",
                "amount_column": args.amount_column, "region_column": args.region_column}
    try:
        desc["sha256"] = sha256_bytes(path.read_bytes())
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from None
    if isinstance(data, TransactionSequence):
        data = select_range(data, args.offset, args.length)
        desc.update(offset=args.offset, length=args.length)
    return data, desc


def select_range(seq: TransactionSequence, offset=0, length=None) -> TransactionSequence:
    if offset < 0 or (length is not None and length < 1):
        raise UsageError("--offset must be >= 0 and --length >= 1")
    txs = seq.transactions[offset:None if length is None else offset + length]
    if not txs:
        raise EmptyAfterFiltering(f"no transactions left after offset {offset}")
    return TransactionSequence.from_columns([t.amount for t in txs], [t.region for t in txs])


def fraud_config(args, legit) -> FraudGenConfig:
    base = default_fraud_config(legit, args.train_len, args.block_len, args.seed, args.fraud_dist)
    mean = base.amount_mean if args.fraud_mean is None else args.fraud_mean
    std = base.amount_std if args.fraud_std is None else args.fraud_std
    try:
        return FraudGenConfig(mean, std, args.block_len, args.seed, args.fraud_dist)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def experiment_set(args, data):
    """Assemble the experiment from a stream, or pass an assembled one through."""
    if isinstance(data, ExperimentSet):
        return data, None
    if args.seed is None:
        raise UsageError("--seed is required when fraud blocks are generated")
    cfg = fraud_config(args, data)
    return build_experiment(data, cfg, args.train_len, args.count), cfg


# -- output formatting ---------------------------------------------------------

def scored_csv(points) -> str:
    lines = [SCORED_VERSION, "dataset_id,kind,pos,x,y,evp,truth"]
    for s in points:
        x = s.point.x if s.scored else None
        y = s.point.y if s.scored else None
        lines.append(f"{s.dataset_id},{s.kind.value},{s.pos},{fmt(x)},{fmt(y)},{fmt(s.evp)},{s.truth.value}")
    return "\n".join(lines) + "\n"


def _cell(count, total):
    return f"{count}({count / total:.2f})" if total else f"{count}(NA)"


def sweep_table(reports) -> str:
    """Aligned text table: one block of three rows per method, one column per threshold."""
    thetas = [r.theta for r in reports[0][1].rows]
    head = ["method", "region", "amount", "measure"] + [f"theta={t:g}" for t in thetas]
    body = []
    for (rm, am), rep in reports:
        name = METHOD_NAMES[(rm, am)]
        for label, attr in (("accuracy", "accuracy"), ("FP", "false_positive"), ("FN", "false_negative")):
            body.append([name, rm, am, label] + [_cell(getattr(r, attr), r.total) for r in rep.rows])
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    lines = [SWEEP_VERSION]
    for row in [head] + body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    for (rm, am), rep in reports:
        b = rep.best
        lines.append(f"best {METHOD_NAMES[(rm, am)]}: theta={b.theta:g} accuracy={_cell(b.accuracy, b.total)} "
                     f"FP={b.false_positive} FN={b.false_negative} scored={b.total} unscored={rep.unscored}")
    return "\n".join(lines) + "\n"


def sweep_csv(reports) -> str:
    lines = [SWEEP_VERSION, "method,region_model,amount_model,theta,accuracy,accuracy_rate,false_positive,"
                            "fp_rate,false_negative,fn_rate,total,unscored,best"]
    for (rm, am), rep in reports:
        best = rep.best.theta
        for r in rep.rows:
            lines.append(",".join([METHOD_NAMES[(rm, am)], rm, am, f"{r.theta:g}", str(r.accuracy),
                                   fmt(r.accuracy_rate), str(r.false_positive), fmt(r.fp_rate),
                                   str(r.false_negative), fmt(r.fn_rate), str(r.total), str(rep.unscored),
                                   "1" if r.theta == best else "0"]))
    return "\n".join(lines) + "\n"


def scan_csv(scan) -> str:
    lines = [SCAN_VERSION, "index,split,y,mean,variance,upper,evp,flagged"]
    for s in scan:
        lines.append(f"{s.index},{'test' if s.test else 'train'},{fmt(s.y)},{fmt(s.mean)},{fmt(s.variance)},"
                     f"{fmt(s.upper)},{fmt(s.evp)},{int(s.flagged)}")
    return "\n".join(lines) + "\n"


def write_outputs(out_dir: Path, files: dict) -> dict:
    """Write every file atomically; returns name -> sha256."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name in sorted(files):
            content = files[name]
            path = out_dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            write_atomic(path, content)
            data = content.encode("utf-8") if isinstance(content, str) else content
            digests[name] = sha256_bytes(data)
    except OSError as exc:
        raise UnreadableFile(f"cannot write to {out_dir}: {exc.strerror or exc}") from None
    return digests


# -- commands ------------------------------------------------------------------

def cmd_sample(args) -> int:
    from dataclasses import replace
    from .data import StreamSpec
    amounts, regions = synth_purchase_stream(args.seed, replace(StreamSpec(), n=args.n))
    try:
        write_purchase_csv(args.out, amounts, regions)
    except OSError as exc:
        raise UnreadableFile(f"cannot write {args.out}: {exc.strerror or exc}") from None
    print(f"wrote {len(amounts)} transactions to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    seq, report = ingest_csv(args.csv, args.amount_column, args.region_column)
    seq = select_range(seq, args.offset, args.length)
    try:
        write_atomic(args.out, dumps_stream(seq))
    except OSError as exc:
        raise UnreadableFile(f"cannot write {args.out}: {exc.strerror or exc}") from None
    print(report.summary() + f" kept={len(seq)}")
    return 0


EXPERIMENT_KEYS = ("csv", "bundle", "amount_column", "region_column", "offset", "length", "amount_model",
                   "region_model", "p", "d", "sd", "theta_ev", "thetas", "row_len", "window", "refit",
                   "lag_padding", "evp_side", "center", "gp_restarts", "fraud_mean", "fraud_std",
                   "fraud_dist", "count", "train_len", "block_len", "seed", "no_figures")


def apply_manifest(args) -> str:
    """Replace the run arguments with those recorded in a manifest.

    Returns the recorded input digest so the caller can verify the input."""
    try:
        man = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
        recorded = man["arguments"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"unusable manifest {args.from_manifest}: {exc}") from None
    for key in EXPERIMENT_KEYS:
        if key in recorded:
            val = recorded[key]
            setattr(args, key, tuple(val) if key == "thetas" else val)
    return man.get("input", {}).get("sha256")


def cmd_experiment(args) -> int:
    expected = apply_manifest(args) if args.from_manifest else None
    args.amount_model = sorted(set(args.amount_model or AMOUNT_MODELS), key=AMOUNT_MODELS.index)
    args.region_model = ["assoc"] + (["adj"] if "adj" in (args.region_model or []) else [])
    if args.seed is None:
        raise UsageError("--seed is required")
    data, desc = load_input(args)
    if expected is not None and desc["sha256"] != expected:
        raise UsageError("input differs from the one recorded in the manifest")
    exp, fcfg = experiment_set(args, data)
    cfg = model_config(args)

    cache = FitCache()
    scored = {(rm, am): [] for rm in args.region_model for am in args.amount_model}
    for ds in exp:
        res = score_dataset(ds, args.amount_model, args.region_model, cfg, cache)
        for key, pts in res.items():
            scored[key].extend(pts)
        log.info("scored %s%d", ds.kind.value, ds.dataset_id)

    reports = [(key, sweep(pts, cfg.thetas)) for key, pts in scored.items()]
    files = {"bundle.csv": dumps_bundle(exp), "sweep.txt": sweep_table(reports), "sweep.csv": sweep_csv(reports)}
    for (rm, am), pts in scored.items():
        files[f"scored_{rm}_{am}.csv"] = scored_csv(pts)
    if not args.no_figures:
        files["figures/confidence_planes.png"] = plotting.confidence_planes(
            [(f"{METHOD_NAMES[k]} ({k[0]}, {k[1]})", pts) for k, pts in scored.items()], cfg.theta_xy)
        for (rm, am), pts in scored.items():
            files[f"figures/fraud_positions_{rm}_{am}.png"] = plotting.fraud_positions(
                pts, f"{METHOD_NAMES[(rm, am)]}: fraud-block points by position")
        files["figures/sweep.png"] = plotting.sweep_curves([(METHOD_NAMES[k], rep) for k, rep in reports])

    out = Path(args.out)
    digests = write_outputs(out, files)
    manifest = {
        "artifact": {"name": "cardpattern", "version": version()},
        "command": "experiment",
        "seed": args.seed,
        "arguments": {k: getattr(args, k) for k in EXPERIMENT_KEYS},
        "model_config": cfg.to_dict(),
        "fraud_config": None if fcfg is None else {
            "amount_mean": fcfg.amount_mean, "amount_std": fcfg.amount_std,
            "block_len": fcfg.block_len, "seed": fcfg.seed, "dist": fcfg.dist},
        "input": desc,
        "outputs": digests,
    }
    manifest["arguments"]["thetas"] = list(args.thetas)
    for key in ("csv", "bundle"):
        if manifest["arguments"][key]:
            manifest["arguments"][key] = str(Path(manifest["arguments"][key]).resolve())
    write_outputs(out, {"manifest.json": json.dumps(manifest, sort_keys=True, indent=2) + "\n"})
    sys.stdout.write(files["sweep.txt"])

    unscored = sum(rep.unscored for _, rep in reports)
    if unscored:
        log.warning("%d transactions could not be scored; see NA rows in the scored files", unscored)
    if any(rep.rows[0].total == 0 for _, rep in reports):
        log.error("a method scored no transactions at all")
        return 1
    return 0


def cmd_modelselect(args) -> int:
    data, _ = load_input(args)
    if isinstance(data, ExperimentSet):
        series = log_transform(data.datasets_L[0].train)
    else:
        series = log_transform(data)[:args.train_len]
    rows = []
    for p, d in args.candidates:
        try:
            rows.append((p, d, rmse(fit_ar(series, p, args.window, d, args.lag_padding)), ""))
        except CardPatternError as exc:
            rows.append((p, d, float("nan"), f"{type(exc).__name__}: {exc}"))
    ok = [r for r in rows if not r[3]]
    if not ok:
        for p, d, _, err in rows:
            log.error("(p=%d, d=%d) failed: %s", p, d, err)
        return 1
    best = min(ok, key=lambda r: (r[2], r[1], r[0]))
    table = [RMSE_VERSION, "p,d,rmse,best,error"]
    for p, d, e, err in rows:
        table.append(f"{p},{d},{fmt(e)},{int((p, d) == best[:2])},{err}")
    r, bound = acf(difference(series, args.d), args.max_lag)
    acf_lines = [ACF_VERSION, f"# bound={fmt(bound)} n={len(series) - args.d} d={args.d}", "lag,acf,outside"]
    for k, v in enumerate(r, start=1):
        acf_lines.append(f"{k},{fmt(float(v))},{int(abs(v) > bound)}")
    text = "\n".join(table) + "\n"
    sys.stdout.write(text)
    print(f"selected p={best[0]} d={best[1]}")
    if args.out:
        out = Path(args.out)
        write_outputs(out, {"rmse.csv": text, "acf.csv": "\n".join(acf_lines) + "\n",
                            "figures/acf.png": plotting.acf_bars(r, bound, f"ACF (d={args.d})")})
    return 0


def _find_dataset(exp, label):
    kind, num = label[:1].upper(), label[1:]
    if kind not in ("L", "F") or not num.isdigit():
        raise UsageError(f"dataset labels look like L1 or F12 (got {label!r})")
    pool = exp.datasets_L if kind == "L" else exp.datasets_F
    for ds in pool:
        if ds.dataset_id == int(num):
            return ds
    raise UsageError(f"no dataset {label} in the experiment")


def cmd_scan(args) -> int:
    data, _ = load_input(args)
    exp, _ = experiment_set(args, data)
    ds = _find_dataset(exp, args.dataset)
    am = args.amount_model or "gp"
    cfg = model_config(args)
    scan = outlier_scan(ds, am, args.mode, cfg)
    stem = f"scan_{args.dataset.upper()}_{am}_{args.mode}"
    files = {f"{stem}.csv": scan_csv(scan),
             f"figures/{stem}.png": plotting.outlier_scan_plot(scan, args.mode, f"{args.dataset.upper()} {am} {args.mode}")}
    write_outputs(Path(args.out), files)
    flagged = [s.index for s in scan if s.flagged]
    print(f"{args.dataset.upper()} {am} {args.mode}: {len(flagged)} flagged {flagged}")
    return 0


COMMANDS = {"sample": cmd_sample, "ingest": cmd_ingest, "experiment": cmd_experiment,
            "modelselect": cmd_modelselect, "scan": cmd_scan}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (INPUT_ERRORS + (SeriesTooShort,)) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except CardPatternError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
