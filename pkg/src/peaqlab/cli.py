"""Command-line entry point: extract, batch-extract, train, bootstrap, report.

Every artifact carries a run manifest (command, inputs with content hashes,
configuration echo, tool version). JSON artifacts hold it under
``"manifest"``; CSV artifacts hold it on a leading ``# manifest:`` comment
line. Outputs are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__, audio, earmodel
from .dataset import CONTENT_SELECTORS, Dataset, FeatureRecord, filter_content, load_dataset, with_feature, write_features
from .errors import InputError, SchemaVersionMismatch
from .evalharness import BootstrapConfig, BootstrapReport, bootstrap_run
from .fileio import atomic_write_text
from .mov import MOV_NAMES
from .pipeline import extract_files
from .regression.mars import PIECEWISE_CUBIC, PIECEWISE_LINEAR
from .regression import MarsConfig, apply_reference_ann, load_ann, mars_fit, mars_predict

log = logging.getLogger("peaqlab")

CONFIG_DIR_ENV = "PEAQLAB_CONFIG_DIR"
REPORT_SCHEMA_VERSION = 1
DI_FEATURE = "PEAQ_DI"
CONTENT_LABELS = {"music": "Music Only", "speech": "Speech Only", "mixed": "Mixed Only", "all": "All Samples"}
TABLE_METRICS = (("R_p", "R_pm"), ("AES", "AES_m"))


# --------------------------------------------------------------------------
# helpers


def resolve_config_path(name: str | None) -> Path | None:
    """Find ``name`` as given, else inside the directory named by ``$PEAQLAB_CONFIG_DIR``."""
    if name is None:
        return None
    path = Path(name)
    if path.exists():
        return path
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and not path.is_absolute() and (Path(base) / path).exists():
        return Path(base) / path
    raise InputError(f"config file not found: {name}")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def make_manifest(command: str, inputs, config: dict, wall_clock: float | None = None) -> dict:
    return {
        "tool": "peaqlab",
        "version": __version__,
        "command": command,
        "inputs": [{"path": str(p), "sha256": file_digest(p)} for p in inputs],
        "config": config,
        "wall_clock_s": wall_clock,
    }


def manifest_comment(manifest: dict) -> str:
    return "manifest: " + json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def dump_json(data: dict) -> str:
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def _ear_config(args) -> tuple[earmodel.EarModelConfig, dict]:
    path = resolve_config_path(args.ear_config)
    cfg = earmodel.load_config(path)
    echo = {"ear_config": cfg.version, "ear_config_checksum": earmodel.config_checksum(cfg.to_dict())}
    echo["level_dbspl"] = args.level_dbspl
    echo["max_lag_ms"] = args.max_lag_ms
    return cfg, echo


def _mars_config(args) -> MarsConfig:
    return MarsConfig(
        max_terms=args.max_terms,
        max_degree=args.max_degree,
        penalty=args.penalty,
        mode=PIECEWISE_CUBIC if args.cubic else PIECEWISE_LINEAR,
    )


def _parse_feature_sets(values) -> list[tuple[str, ...]]:
    sets = []
    for v in values or []:
        names = tuple(n.strip() for n in v.split(",") if n.strip())
        if not names:
            raise InputError(f"empty feature set in --features {v!r}")
        sets.append(names)
    return sets


def _load_with_di(scores, features, ann_path) -> tuple[Dataset, list[Path]]:
    ds = load_dataset(scores, features)
    inputs = [Path(scores), Path(features)]
    if ann_path:
        path = resolve_config_path(ann_path)
        ann = load_ann(path)
        values = [apply_reference_ann(r.features, ann)[0] for r in ds.records]
        ds = with_feature(ds, DI_FEATURE, values)
        inputs.append(path)
    return ds, inputs


# --------------------------------------------------------------------------
# commands


def cmd_extract(args) -> int:
    start = time.perf_counter()
    cfg, echo = _ear_config(args)
    mv = extract_files(args.reference, args.test, cfg, args.level_dbspl, args.max_lag_ms)
    manifest = make_manifest("extract", [args.reference, args.test], echo, _clock(args, start))
    row = FeatureRecord(args.item_id, args.condition_id, mv.as_dict())
    if args.format == "json":
        text = dump_json({"manifest": manifest, "item_id": row.item_id, "condition_id": row.condition_id,
                          "movs": row.features})
    else:
        buf = io.StringIO()
        write_features([row], MOV_NAMES, buf, comment=manifest_comment(manifest))
        text = buf.getvalue()
    _write_or_print(text, args.output)
    return 0


def _extract_job(job):
    ref, test, cfg, level, lag = job
    return extract_files(ref, test, cfg, level, lag).as_dict()


def cmd_batch_extract(args) -> int:
    start = time.perf_counter()
    cfg, echo = _ear_config(args)
    pairs_path = Path(args.pairs)
    base = pairs_path.parent
    with open(pairs_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    needed = {"item_id", "condition_id", "reference", "test"}
    if not rows or not needed <= set(rows[0]):
        raise InputError(f"{pairs_path}: pair list needs columns {sorted(needed)}")
    jobs, inputs = [], [pairs_path]
    for r in rows:
        ref, test = base / r["reference"], base / r["test"]
        for p in (ref, test):
            if not p.exists():
                raise InputError(f"{pairs_path}: item {r['item_id']}/{r['condition_id']}: missing file {p}")
        jobs.append((ref, test, cfg, args.level_dbspl, args.max_lag_ms))
        inputs += [ref, test]
    if args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_extract_job, jobs))
    else:
        results = [_extract_job(j) for j in jobs]
    records = [FeatureRecord(r["item_id"], r["condition_id"], m) for r, m in zip(rows, results)]
    manifest = make_manifest("batch-extract", inputs, echo, _clock(args, start))
    buf = io.StringIO()
    write_features(records, MOV_NAMES, buf, comment=manifest_comment(manifest))
    _write_or_print(buf.getvalue(), args.output)
    return 0


def cmd_train(args) -> int:
    start = time.perf_counter()
    ds, inputs = _load_with_di(args.scores, args.features_csv, args.ann_weights)
    sub = filter_content(ds, args.content)
    sets = _parse_feature_sets(args.features)
    if len(sets) > 1:
        raise InputError("train takes a single feature set")
    names = sets[0] if sets else sub.feature_names
    mars_cfg = _mars_config(args)
    model = mars_fit(sub.matrix(names), sub.scores, mars_cfg, names)
    config = {"content": args.content, "features": list(names), "mars": asdict(mars_cfg)}
    manifest = make_manifest("train", inputs, config, _clock(args, start))
    _write_or_print(dump_json({"manifest": manifest, "model": model.to_dict()}), args.output)
    if args.predictions:
        pred = mars_predict(model, sub.matrix(names))
        buf = io.StringIO()
        buf.write(f"# {manifest_comment(manifest)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["item_id", "condition_id", "content_type", "subjective", "ci95", "objective"])
        for r, p in zip(sub.records, pred):
            w.writerow([r.item_id, r.condition_id, r.content_type.value, repr(r.mushra_mean), repr(r.ci95),
                        repr(float(p))])
        atomic_write_text(args.predictions, buf.getvalue())
    return 0


def cmd_bootstrap(args) -> int:
    start = time.perf_counter()
    ds, inputs = _load_with_di(args.scores, args.features_csv, args.ann_weights)
    sets = _parse_feature_sets(args.features) or [ds.feature_names]
    contents = args.content or ["all"]
    mars_cfg = _mars_config(args)
    reports = []
    for content in contents:
        for names in sets:
            cfg = BootstrapConfig(
                iterations=args.iterations,
                train_fraction=args.train_fraction,
                seed=args.seed,
                features=names,
                content=content,
                resample_train=args.resample_train,
                split_by_item=args.split_by_item,
                ci_method=args.ci_method,
                keep_raw=args.keep_raw,
                keep_predictions=args.figure_data,
            )
            log.info("bootstrap %s on %s (%d iterations)", ",".join(names), content, cfg.iterations)
            reports.append(bootstrap_run(ds, cfg, mars_cfg, workers=args.threads))

    config = {
        "iterations": args.iterations,
        "seed": args.seed,
        "train_fraction": args.train_fraction,
        "content": contents,
        "features": [list(s) for s in sets],
        "resample_train": args.resample_train,
        "split_by_item": args.split_by_item,
        "ci_method": args.ci_method,
        "mars": asdict(mars_cfg),
        "ann_weights": bool(args.ann_weights),
    }
    manifest = make_manifest("bootstrap", inputs, config, _clock(args, start))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    body = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "manifest": manifest,
        "reports": [_report_dict(r, args.figure_data) for r in reports],
    }
    atomic_write_text(out / "bootstrap_report.json", dump_json(body))
    atomic_write_text(out / "table.csv", table_csv(reports, manifest))
    if args.figure_data:
        for r in reports:
            name = f"scatter_{r.content}_{'+'.join(r.feature_set)}.csv"
            atomic_write_text(out / name, scatter_csv(r, manifest))
    sys.stdout.write(render_table(reports))
    return 0


def cmd_report(args) -> int:
    body = json.loads(Path(args.report).read_text(encoding="utf-8"))
    reports = reports_from_json(body)
    text = table_csv(reports, body.get("manifest")) if args.format == "csv" else render_table(reports, args.format)
    _write_or_print(text, args.output)
    return 0


# --------------------------------------------------------------------------
# report layout


def _report_dict(r: BootstrapReport, with_predictions: bool) -> dict:
    d = r.to_dict()
    if not with_predictions:
        d.pop("predictions", None)
    return d


def reports_from_json(body: dict) -> list[BootstrapReport]:
    version = body.get("schema_version")
    if not isinstance(version, int):
        raise InputError("report has no integer schema_version")
    if version > REPORT_SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"report schema {version} is newer than supported version {REPORT_SCHEMA_VERSION}"
        )
    return [BootstrapReport.from_dict(d) for d in body.get("reports", [])]


def table_layout(reports) -> tuple[list[tuple[str, ...]], list[str], dict]:
    """Rows (feature sets, first-seen order), content columns, and ``cells[(set, content)]``."""
    rows, contents, cells = [], [], {}
    for r in reports:
        key = tuple(r.feature_set)
        if key not in rows:
            rows.append(key)
        if r.content not in contents:
            contents.append(r.content)
        cells[(key, r.content)] = r
    return rows, [c for c in CONTENT_LABELS if c in contents], cells


def bold_cells(reports) -> set[tuple[tuple[str, ...], str, str]]:
    """Best single-feature value per column: max R_pm, min AES_m; ties go to the earlier row."""
    rows, contents, cells = table_layout(reports)
    marked = set()
    for content in contents:
        for metric, _ in TABLE_METRICS:
            best, best_row = None, None
            for row in rows:
                rep = cells.get((row, content))
                if rep is None or len(row) != 1:
                    continue
                v = rep.means[metric]
                if best is None or (v > best if metric == "R_p" else v < best):
                    best, best_row = v, row
            if best_row is not None:
                marked.add((best_row, content, metric))
    return marked


def render_table(reports, style: str = "text") -> str:
    """Human-readable table with columns R_pm and AES_m per content category."""
    rows, contents, cells = table_layout(reports)
    bold = bold_cells(reports)
    header = ["Feature set"]
    for c in contents:
        header += [f"{CONTENT_LABELS[c]} {label}" for _, label in TABLE_METRICS]
    body = []
    for row in rows:
        line = [" + ".join(row)]
        for c in contents:
            rep = cells.get((row, c))
            for metric, _ in TABLE_METRICS:
                if rep is None:
                    line.append("")
                    continue
                txt = f"{rep.means[metric]:.3f} (±{rep.ci95[metric]:.3f})"
                if (row, c, metric) in bold:
                    txt = f"**{txt}**"
                line.append(txt)
        body.append(line)
    if style == "markdown":
        out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        out += ["| " + " | ".join(line) + " |" for line in body]
        return "\n".join(out) + "\n"
    widths = [max(len(x[i]) for x in [header] + body) for i in range(len(header))]
    fmt = lambda cols: "  ".join(s.ljust(w) for s, w in zip(cols, widths)).rstrip()
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(line) for line in body]) + "\n"


def table_csv(reports, manifest: dict | None) -> str:
    rows, contents, cells = table_layout(reports)
    buf = io.StringIO()
    if manifest is not None:
        buf.write(f"# {manifest_comment(manifest)}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["feature_set"]
    for c in contents:
        for _, label in TABLE_METRICS:
            header += [f"{c}_{label}", f"{c}_{label}_ci95"]
    w.writerow(header)
    for row in rows:
        line = ["+".join(row)]
        for c in contents:
            rep = cells.get((row, c))
            for metric, _ in TABLE_METRICS:
                line += ["", ""] if rep is None else [repr(rep.means[metric]), repr(rep.ci95[metric])]
        w.writerow(line)
    return buf.getvalue()


def scatter_csv(report: BootstrapReport, manifest: dict) -> str:
    """Per data point: subjective score and the mean objective score over the iterations it was tested in."""
    buf = io.StringIO()
    buf.write(f"# {manifest_comment(manifest)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item_id", "condition_id", "content_type", "subjective", "ci95", "mean_objective", "test_count"])
    for p in report.predictions or []:
        mean = "" if p["mean_prediction"] is None else repr(p["mean_prediction"])
        w.writerow([p["item_id"], p["condition_id"], p["content_type"], repr(p["subjective"]), repr(p["ci95"]),
                    mean, p["test_count"]])
    return buf.getvalue()


# --------------------------------------------------------------------------
# wiring


def _clock(args, start: float) -> float | None:
    return round(time.perf_counter() - start, 3) if args.record_wall_clock else None


def _write_or_print(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write_text(output, text)


def _add_ear_flags(p) -> None:
    p.add_argument("--level-dbspl", type=float, default=audio.DEFAULT_LEVEL_DBSPL,
                   help="playback level of a full-scale sine (default %(default)s)")
    p.add_argument("--max-lag-ms", type=float, default=audio.DEFAULT_MAX_LAG_MS,
                   help="largest reference/test delay searched (default %(default)s)")
    p.add_argument("--ear-config", help=f"ear model table (JSON); relative names also searched in ${CONFIG_DIR_ENV}")


def _add_data_flags(p) -> None:
    p.add_argument("scores", help="scores.csv")
    p.add_argument("features_csv", help="features.csv")
    p.add_argument("--features", action="append",
                   help="comma-separated feature set; repeat for several sets (default: all columns)")
    p.add_argument("--ann-weights", help=f"ANN weight file; adds a {DI_FEATURE} feature column")
    p.add_argument("--max-terms", type=int, default=21)
    p.add_argument("--max-degree", type=int, default=2)
    p.add_argument("--penalty", type=float, default=3.0)
    p.add_argument("--cubic", action="store_true", help="use smooth cubic hinges for the final model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peaqlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"peaqlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--record-wall-clock", action="store_true",
                        help="store elapsed time in the manifest (outputs are then not byte-reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="MOVs for one reference/test pair")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--item-id", default="item")
    p.add_argument("--condition-id", default="condition")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output")
    _add_ear_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("batch-extract", help="MOVs for every pair listed in a CSV")
    p.add_argument("pairs", help="CSV with item_id, condition_id, reference, test (paths relative to the CSV)")
    p.add_argument("-o", "--output")
    p.add_argument("--threads", type=int, default=1)
    _add_ear_flags(p)
    p.set_defaults(func=cmd_batch_extract)

    p = sub.add_parser("train", help="fit one MARS mapping on all selected rows")
    _add_data_flags(p)
    p.add_argument("--content", choices=CONTENT_SELECTORS, default="all")
    p.add_argument("-o", "--output")
    p.add_argument("--predictions", help="also write in-sample predictions (scatter data) to this CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bootstrap", help="repeated train/test evaluation")
    _add_data_flags(p)
    p.add_argument("--content", choices=CONTENT_SELECTORS, action="append",
                   help="content selector; repeat for several (default: all)")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--resample-train", action="store_true")
    p.add_argument("--split-by-item", action="store_true")
    p.add_argument("--ci-method", choices=("normal", "percentile"), default="normal")
    p.add_argument("--keep-raw", action="store_true", help="store per-iteration metrics in the report")
    p.add_argument("--figure-data", action="store_true", help="write per-row mean test predictions")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output-dir", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("report", help="render a bootstrap report as a table")
    p.add_argument("report")
    p.add_argument("--format", choices=("text", "markdown", "csv"), default="text")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        return _fail(2, InputError("--threads must be at least 1"))
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(2, exc)
    except Exception as exc:  # noqa: BLE001
        log.debug("%s", traceback.format_exc())
        return _fail(1, exc)


if __name__ == "__main__":
    sys.exit(main())
