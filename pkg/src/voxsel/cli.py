"""Command-line entry point: ``voxsel inspect | run | compare``.

Exit codes: 0 success, 1 internal error, 2 I/O or argument error,
3 configuration or consistency error.  ``VOXSEL_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .data import DatasetError, IntegrityError, load_dataset
from .experiment import (
    build_report,
    compare_models,
    config_id,
    feature_union,
    stage1,
    stage2,
)
from .metrics import read_records, write_records
from .plotting import save_mcc_strip, save_pies

log = logging.getLogger("voxsel")

EXIT_OK, EXIT_INTERNAL, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


class ConsistencyError(ValueError):
    pass


def _setup_logging() -> None:
    level = os.environ.get("VOXSEL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def cmd_inspect(args) -> int:
    d = load_dataset(args.dataset, args.id_column, args.label_column, args.groups)
    s = d.summary()
    print(f"samples:           {s['n_samples']}")
    print(f"features:          {s['n_features']}")
    print(f"subjects:          {s['n_subjects']}")
    print(f"healthy subjects:  {s['healthy_subjects']}")
    print(f"PD subjects:       {s['pd_subjects']}")
    print(f"samples by class:  healthy={s['healthy_samples']} PD={s['pd_samples']}")
    print(f"ragged subjects:   {'yes' if s['ragged'] else 'no'}")
    print("groups:            " + ", ".join(f"{k}={v}" for k, v in s["groups"].items()))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, digest = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.dataset is not None:
        overrides["dataset"] = args.dataset
    cfg = cfg.replace(**overrides).validate()
    if not cfg.dataset:
        raise ConfigError("no dataset given (config key `dataset` or --dataset)")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    manifest = {
        "config_digest": digest,
        "tool_version": __version__,
        "master_seed": cfg.seed,
        "overrides": overrides,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "finished": None,
        "outputs": [],
    }
    _dump(out / "manifest.json", manifest)

    def emit(name: str) -> Path:
        manifest["outputs"].append(name)
        return out / name

    try:
        d = load_dataset(cfg.dataset, cfg.id_column, cfg.label_column, cfg.groups_file or None)
        tcfg = cfg.train_config()
        s1 = stage1(d, cfg.method, cfg.method_params, cfg.top, tcfg, cfg.reps, cfg.seed,
                    train_fraction=cfg.train_fraction, jobs=args.jobs)
        write_records(emit("stage1_records.csv"), s1.records)
        _dump(emit("stage1_selected.json"),
              [{"rep_id": r.rep_id, "selected": r.selected, "error": r.error,
                "split": r.plan.to_dict()} for r in s1.reps])
        if not s1.selected_sets:
            raise ConsistencyError("every stage-1 repetition failed")

        union = feature_union(s1.selected_sets, cfg.union_lower, cfg.union_upper)
        _dump(emit("union.json"), union.to_dict())

        reps2 = cfg.stage2_reps or cfg.reps
        cid = config_id(cfg.method, cfg.top, tcfg)
        records = stage2(d, union, tcfg, reps2, cfg.seed, train_fraction=cfg.train_fraction,
                         jobs=args.jobs, cid=cid)
        write_records(emit("records.csv"), records)

        failed2 = sorted(set(range(reps2)) - {r.rep_id for r in records})
        report = build_report(d, s1, union, records, cfg.to_dict(), failed2)
        _dump(emit("report.json"), report.to_dict())
        emit("report.txt").write_text(report.render() + "\n", encoding="utf-8")

        save_pies(
            [("All selected features", report.distribution_all),
             ("First 30 features", report.distribution_top30)],
            emit("groups_selected.svg"),
        )
        save_pies([("Final feature set", report.distribution_union)], emit("groups_union.svg"))
        save_mcc_strip({cid: [r.mcc for r in records]}, emit("mcc.svg"))
    except BaseException as exc:
        (out / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        manifest["failed"] = f"{type(exc).__name__}: {exc}"
        _dump(out / "manifest.json", manifest)
        raise
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _dump(out / "manifest.json", manifest)
    print(report.render())
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.records) < 2:
        raise argparse.ArgumentTypeError("compare needs at least two record files")
    scores: dict[str, list[float]] = {}
    for path in args.records:
        recs = sorted(read_records(path), key=lambda r: r.rep_id)
        name = recs[0].config_id if recs else Path(path).stem
        while name in scores:
            name = f"{name}'"
        scores[name] = [r.mcc for r in recs]
    lengths = {len(v) for v in scores.values()}
    if len(lengths) != 1:
        raise ConsistencyError(f"repetition counts differ: { {k: len(v) for k, v in scores.items()} }")
    summary = compare_models(scores, alpha=args.alpha)
    print(summary.render())
    if args.out:
        _dump(Path(args.out), summary.to_dict())
    if args.figure:
        save_mcc_strip(scores, args.figure)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxsel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("inspect", help="summarize a dataset file")
    q.add_argument("dataset")
    q.add_argument("--id-column", default="id")
    q.add_argument("--label-column", default="class")
    q.add_argument("--groups", default=None, help="column_name,group_tag override file")
    q.set_defaults(func=cmd_inspect)

    r = sub.add_parser("run", help="run the two-stage experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--dataset", default=None, help="override the config dataset path")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="Friedman / Wilcoxon comparison of record files")
    c.add_argument("records", nargs="+")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--out", default=None, help="write the summary as JSON")
    c.add_argument("--figure", default=None, help="write an MCC box plot (SVG)")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"voxsel: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, IntegrityError, ConsistencyError) as exc:
        print(f"voxsel: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetError) as exc:
        print(f"voxsel: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        if args.command == "compare":
            print(f"voxsel: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        log.exception("internal error")
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
