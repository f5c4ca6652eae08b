"""Command-line entry point: ``dohfed {synth,prepare,run,sweep-pca,report}``.

Errors print one line ``error: <Class>: <message>`` to stderr and exit with
the class's code (config 3, schema 4, data 5, model 6, internal 1; usage 2).
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
import tempfile
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    FlowSchema,
    PartitionSpec,
    SyntheticSpec,
    disjoint_attack_spec,
    generate_synthetic,
    load_flow_csvs,
    load_split,
    partition_by_entity,
    split_files,
    split_validation,
)
from .errors import ConfigError, DataError, DohFedError
from .features import Preprocessor, fit_preprocessor, sweep_components
from .federation import MODEL_KINDS, SCENARIOS, ScenarioConfig, run_scenario
from .metrics import METRIC_FIELDS

log = logging.getLogger("dohfed")


# -- file helpers ------------------------------------------------------------
def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, config: dict, inputs, outputs, seed, started: float) -> None:
    manifest = {
        "tool": "dohfed",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
        "duration_s": round(time.time() - started, 3),
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# -- synth -------------------------------------------------------------------
def cmd_synth(args) -> int:
    started = time.time()
    out = Path(args.out)
    if args.spec:
        spec = SyntheticSpec.from_dict(_read_json(args.spec))
    else:
        spec = disjoint_attack_spec(args.entities, args.dimension, args.benign, args.attack, args.separation)
    ents = generate_synthetic(spec, args.seed)
    names = [f"f{i}" for i in range(spec.dimension)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("SourceIP", "DestinationIP", *names, "Label"))
    for e in sorted(ents):
        fs = ents[e]
        for i in range(len(fs)):
            w.writerow((f"192.168.{e}.{i % 250 + 2}", f"10.0.{e}.1", *map(repr, fs.X[i].tolist()),
                        "Malicious" if fs.y[i] else "Benign"))
    partition = {
        "match_columns": ["DestinationIP"],
        "entities": [{"id": e, "name": f"resolver{e}", "ips": [f"10.0.{e}.1"]} for e in sorted(ents)],
    }
    schema = {"feature_columns": names, "metadata_columns": ["SourceIP", "DestinationIP"]}
    atomic_write(out / "flows.csv", buf.getvalue())
    atomic_write(out / "partition.json", json.dumps(partition, indent=2) + "\n")
    atomic_write(out / "schema.json", json.dumps(schema, indent=2) + "\n")
    atomic_write(out / "synthetic_spec.json", json.dumps(spec.to_dict(), indent=2) + "\n")
    write_manifest(out, "synth", {"seed": args.seed}, [], ["flows.csv", "partition.json", "schema.json"],
                   args.seed, started)
    print(f"wrote {sum(len(f) for f in ents.values())} flows for {len(ents)} entities to {out / 'flows.csv'}")
    return 0


# -- prepare -----------------------------------------------------------------
def format_count_table(rows) -> str:
    head = f"{'Entity':>6}  {'DNS Provider':<14}{'Total Size':>12}{'Malicious':>12}{'Benign':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['entity_id']:>6}  {r['name']:<14}{r['total']:>12,}{r['malicious']:>12,}{r['benign']:>10,}")
    return "\n".join(lines)


def cmd_prepare(args) -> int:
    started = time.time()
    out = Path(args.out)
    schema = FlowSchema.from_dict(_read_json(args.schema)) if args.schema else FlowSchema()
    if not Path(args.partition).exists():
        raise ConfigError(f"{args.partition}: no such file")
    spec = PartitionSpec.load(args.partition)
    records = load_flow_csvs(args.csv, schema)
    part = partition_by_entity(records, spec)
    counts = part.counts()
    split = split_validation(part, args.global_fraction, args.local_fraction, args.seed)
    train = np.concatenate([s.train.X for s in split.shards])
    pre = fit_preprocessor(train)

    files = split_files(split)
    files["preprocessing.json"] = pre.dumps() + "\n"
    files["partition_counts.json"] = json.dumps(
        {"entities": counts, "discarded": len(part.discarded)}, indent=2) + "\n"
    for name, text in files.items():
        atomic_write(out / name, text)
    cfg = {"global_fraction": args.global_fraction, "local_fraction": args.local_fraction,
           "partition": spec.to_dict(), "schema": asdict(schema)}
    write_manifest(out, "prepare", cfg, [*args.csv, args.partition], files, args.seed, started)
    print(format_count_table(counts))
    print(f"discarded (no matching resolver): {len(part.discarded):,}")
    return 0


# -- run ---------------------------------------------------------------------
def _config_from(args, extra_keys=("data",)) -> tuple[ScenarioConfig, dict]:
    raw = _read_json(args.config) if args.config else {}
    extras = {k: raw.pop(k) for k in list(raw) if k in extra_keys}
    for f in fields(ScenarioConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            raw[f.name] = v
    for k in extra_keys:
        v = getattr(args, k, None)
        if v is not None:
            extras[k] = v
    return ScenarioConfig.from_dict(raw), extras


def _load_prepared(extras, config_path) -> tuple:
    data = extras.get("data")
    if not data:
        raise ConfigError("no prepared data directory (set 'data' in the config or pass --data)")
    data = Path(data)
    if not data.is_absolute() and config_path:
        candidate = Path(config_path).parent / data
        data = candidate if candidate.exists() else data
    split = load_split(data)
    pre_path = data / "preprocessing.json"
    pre = Preprocessor.loads(pre_path.read_text()) if pre_path.exists() else None
    return data, split, pre


def cmd_run(args) -> int:
    started = time.time()
    cfg, extras = _config_from(args)
    data, split, pre = _load_prepared(extras, args.config)
    out = Path(args.out)
    result = run_scenario(cfg, split, pre, threads=args.threads)
    metrics_text = "".join(json.dumps(m) + "\n" for m in result.metrics)
    files = {"metrics.jsonl": metrics_text, "ledger.csv": result.ledger.to_csv()}
    for e, text in result.models.items():
        files[f"models/entity_{e}.json"] = text + "\n"
    for name, text in files.items():
        atomic_write(out / name, text)
    inputs = sorted(p for p in data.iterdir() if p.suffix in (".csv", ".json") and p.name != "manifest.json")
    write_manifest(out, "run", {**cfg.to_dict(), "data": str(data)}, inputs, files, cfg.seed, started)
    final = result.final("global")
    acc = np.mean([m["accuracy"] for m in final.values()])
    print(f"{cfg.scenario} {cfg.model_kind}: {cfg.rounds} rounds, mean final global accuracy {acc:.4f}, "
          f"{result.ledger.total_bytes:,} bytes exchanged")
    return 0


# -- sweep-pca ---------------------------------------------------------------
def parse_k_range(text: str) -> list[int]:
    ks: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            ks.extend(range(int(a), int(b) + 1))
        else:
            ks.append(int(part))
    return ks


def cmd_sweep(args) -> int:
    started = time.time()
    try:
        ks = parse_k_range(args.k)
    except ValueError:
        ks = []
    if not ks:
        print(f"error: usage: empty or malformed component range {args.k!r}", file=sys.stderr)
        return 2
    cfg, extras = _config_from(args)
    data, split, pre = _load_prepared(extras, args.config)
    kinds = tuple(k.strip() for k in args.models.split(",") if k.strip())
    bad = set(kinds) - set(MODEL_KINDS)
    if bad:
        raise ConfigError(f"unknown model kinds {sorted(bad)}")
    res = sweep_components(ks, cfg, split, pre, kinds, scope=args.scope, threads=args.threads)
    out = Path(args.out)

    def table(rows, cols):
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    files = {
        "sweep.csv": table(res.rows, ["k", "model", "entity", "accuracy"]),
        "sweep_stats.csv": table(res.stats, ["k", "mean", "spread", "norm_mean", "norm_spread", "score"]),
        "selection.json": json.dumps({"selected_k": res.selected_k,
                                      "rule": "max norm_mean - norm_spread; ties: mean desc, spread asc, k asc"},
                                     indent=2) + "\n",
    }
    for name, text in files.items():
        atomic_write(out / name, text)
    write_manifest(out, "sweep-pca", {**cfg.to_dict(), "k": ks, "models": kinds}, [], files, cfg.seed, started)
    print(f"{'k':>4}{'mean':>10}{'spread':>10}{'score':>9}")
    for s in res.stats:
        print(f"{s['k']:>4}{s['mean']:>10.4f}{s['spread']:>10.4f}{s['score']:>9.3f}")
    print(f"selected k = {res.selected_k}")
    return 0


# -- report ------------------------------------------------------------------
def read_metrics(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {n}: invalid JSON ({exc.msg})") from None
            missing = [k for k in ("round", "entity", "scope", *METRIC_FIELDS) if k not in row]
            if missing:
                raise DataError(f"{path}: line {n}: missing fields {missing}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no metrics records")
    return rows


def build_report(paths, scope: str = "global", metrics=("accuracy", "f1")) -> tuple[str, str]:
    """Final-round table per model: one row per entity, one column per scenario."""
    finals: dict[tuple, dict] = {}
    order: list[tuple] = []
    for p in paths:
        rows = [r for r in read_metrics(p) if r["scope"] == scope]
        if not rows:
            raise DataError(f"{p}: no records for scope {scope!r}")
        last = max(r["round"] for r in rows)
        for r in rows:
            if r["round"] == last:
                key = (r.get("model", "?"), r.get("scenario", Path(p).parent.name))
                if key not in finals:
                    finals[key] = {}
                    order.append(key)
                finals[key][r["entity"]] = r
    text_lines, csv_rows = [], []
    for model in dict.fromkeys(m for m, _ in order):
        scen = [s for m, s in order if m == model]
        ents = sorted({e for s in scen for e in finals[(model, s)]})
        for metric in metrics:
            text_lines.append(f"{model.upper()} {metric} ({scope} validation, final round)")
            text_lines.append(f"{'entity':>8}" + "".join(f"{s:>12}" for s in scen))
            for e in ents:
                vals = [finals[(model, s)].get(e, {}).get(metric) for s in scen]
                text_lines.append(f"{e:>8}" + "".join(f"{v:>12.3f}" if v is not None else f"{'-':>12}" for v in vals))
                for s, v in zip(scen, vals):
                    csv_rows.append({"model": model, "metric": metric, "entity": e, "scenario": s, "value": v})
            text_lines.append("")
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["model", "metric", "entity", "scenario", "value"], lineterminator="\n")
    w.writeheader()
    w.writerows(csv_rows)
    return "\n".join(text_lines), buf.getvalue()


def accuracy_curves(paths, scope: str = "global") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model", "scenario", "entity", "round", "accuracy", "f1"))
    for p in paths:
        for r in read_metrics(p):
            if r["scope"] == scope:
                w.writerow((r.get("model", "?"), r.get("scenario", "?"), r["entity"], r["round"], r["accuracy"], r["f1"]))
    return buf.getvalue()


def cmd_report(args) -> int:
    text, table_csv = build_report(args.metrics, args.scope, tuple(args.metric.split(",")))
    print(text)
    if args.out:
        atomic_write(Path(args.out), table_csv)
    if args.curves:
        atomic_write(Path(args.curves), accuracy_curves(args.metrics, args.scope))
    return 0


# -- argument parsing ----------------------------------------------------------
def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON run configuration")
    p.add_argument("--data", help="prepared data directory (overrides the config's 'data')")
    for f in fields(ScenarioConfig):
        flag = "--" + f.name.replace("_", "-")
        t = str(f.type)
        kind = int if t.startswith("int") else float if t.startswith("float") else str
        kw = {"type": kind, "default": None, "dest": f.name}
        if f.name == "scenario":
            kw["choices"] = SCENARIOS
        elif f.name == "model_kind":
            kw["choices"] = MODEL_KINDS
            p.add_argument("--model", **kw)
            continue
        p.add_argument(flag, **kw)
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dohfed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-entity flow CSV")
    p.add_argument("--spec", help="JSON cluster specification (default: disjoint-attack preset)")
    p.add_argument("--entities", type=int, default=4)
    p.add_argument("--dimension", type=int, default=4)
    p.add_argument("--benign", type=int, default=700, help="benign flows per entity")
    p.add_argument("--attack", type=int, default=700, help="attack flows per entity")
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="partition, split and fit preprocessing")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--partition", required=True, help="JSON partition spec")
    p.add_argument("--schema", help="JSON column mapping")
    p.add_argument("--global-fraction", type=float, default=0.10)
    p.add_argument("--local-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="run one federation scenario")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-pca", help="sweep the number of principal components")
    _add_config_flags(p)
    p.add_argument("--k", required=True, help="component counts, e.g. '1-22' or '5,10,22'")
    p.add_argument("--models", default="svm,lr,dt,rf")
    p.add_argument("--scope", choices=("global", "local"), default="global")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="compare final-round metrics across runs")
    p.add_argument("metrics", nargs="+", help="metrics.jsonl files")
    p.add_argument("--scope", choices=("global", "local"), default="global")
    p.add_argument("--metric", default="accuracy,f1")
    p.add_argument("--out", help="write the comparison as CSV")
    p.add_argument("--curves", help="write per-round accuracy curves as CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DohFedError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DataError.exit_code
    except Exception as exc:  # internal fault: still one parseable line
        log.debug("internal error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
