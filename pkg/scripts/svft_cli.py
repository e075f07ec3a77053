import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import logging
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from adapters import svft
from adapters.accounting import param_count
from adapters.patterns import pattern_from_spec
from config.experiment import load_experiment
from config.logging_config import configure_logging
from config.settings import get_settings
from database.adapter_file import load_adapter, save_adapter
from database.results_store import DatabaseManager
from numerics.decompositions import svd
from numerics.errors import AdapterFormatError, MatrixFormatError, SVFTError
from numerics.matrix import read_matrix, write_matrix
from scripts.verify_suites import FAULTS, SUITES, results_table, run_suites
from training.experiments import SweepResult, budget_sweep, weight_quality_study
from training.tasks import checkpoint_at_distance

logger = logging.getLogger("svft_cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _out_dir(args, configured: str | None = None) -> Path:
    out = Path(args.out or configured or get_settings().out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeds(args, configured: list[int]) -> list[int]:
    return [args.seed] if args.seed is not None else configured


def _store(reports, database: str | None, experiment: str) -> None:
    database = database or get_settings().results_db
    if database:
        DatabaseManager(database).add_reports(reports, experiment=experiment)
        logger.info("Stored %d runs in %s", len(reports), database)


def cmd_verify(args) -> int:
    results = run_suites(args.suite, fault=args.inject_fault)
    print(results_table(results))
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_sweep(args) -> int:
    config = load_experiment(args.config)
    result = SweepResult()
    for seed in _seeds(args, config.task.seeds):
        task = config.task.build(seed)
        plan = config.plan(seed, truncate_base=True if args.truncate_base else None)
        result.extend(budget_sweep(task, config.sweep.methods, config.sweep.budgets, plan, threads=args.threads))

    out = _out_dir(args, config.output.dir)
    result.to_frame().to_csv(out / "sweep.csv", index=False)
    frontier = result.frontier_frame()
    frontier.to_csv(out / "pareto.csv", index=False)
    with open(out / "reports.jsonl", "w") as f:
        for report in result.reports:
            f.write(report.to_json() + "\n")
    _store(result.reports, config.output.database, config.output.name)

    print(frontier.to_string(index=False))
    print(f"\n{len(result.reports)} runs, {len(result.skipped)} skipped; results in {out}")
    return EXIT_OK


def cmd_weight_quality(args) -> int:
    config = load_experiment(args.config)
    rows, deltas = [], []
    for seed in _seeds(args, config.task.seeds):
        task = config.task.build(seed)
        checkpoints = [checkpoint_at_distance(task, d) for d in config.weight_quality.distances]
        study = weight_quality_study(task, checkpoints, config.weight_quality.methods, config.plan(seed))
        rows.append(study.rows.assign(seed=seed))
        deltas.append(study.delta.assign(seed=seed))

    out = _out_dir(args, config.output.dir)
    table = pd.concat(deltas, ignore_index=True)
    pd.concat(rows, ignore_index=True).to_csv(out / "weight_quality.csv", index=False)
    table.to_csv(out / "delta_perf.csv", index=False)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_save(args) -> int:
    w0 = read_matrix(args.base)
    factors = svd(w0)
    adapter = svft.init_adapter(w0, pattern_from_spec(args.pattern, factors), factors)
    if args.values:
        values = read_matrix(args.values).ravel()
        if values.size != adapter.num_trainable:
            raise MatrixFormatError(f"{args.values} holds {values.size} values, the pattern needs {adapter.num_trainable}")
        adapter.values[:] = values
    elif args.random_values:
        adapter.values[:] = np.random.default_rng(args.seed or 0).standard_normal(adapter.num_trainable)
    if args.rank is not None or args.truncate_base:
        adapter = svft.truncate(adapter, args.rank or factors.min_dim, args.truncate_base)
    save_adapter(args.path, adapter, w0)
    print(f"Saved {adapter.pattern.describe()} to {args.path}")
    return EXIT_OK


def cmd_load(args) -> int:
    adapter = load_adapter(args.path, read_matrix(args.base))
    print(adapter.pattern.describe())
    print(f"effective rank {adapter.effective_rank}, truncate_base {adapter.truncate_base}")
    frame = pd.DataFrame({"i": adapter.pattern.rows, "j": adapter.pattern.cols, "value": adapter.values})
    print(frame.to_string(index=False))
    return EXIT_OK


def cmd_fuse(args) -> int:
    w0 = read_matrix(args.base)
    adapter = load_adapter(args.adapter, w0)
    write_matrix(args.out_path, svft.fuse(adapter))
    print(f"Wrote fused {adapter.d1}x{adapter.d2} matrix to {args.out_path}")
    return EXIT_OK


def cmd_count(args) -> int:
    print(param_count(args.method, args.layers, args.d_model, args.r_or_k))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    p = argparse.ArgumentParser(prog="svft_cli", description="SVFT adapters, baselines and experiments")
    p.add_argument("--seed", type=int, default=None, help="Override experiment seeds / seed random values")
    p.add_argument("--out", type=str, default=None, help="Output directory")
    p.add_argument("--threads", type=int, default=settings.threads)
    p.add_argument("--truncate-base", action="store_true", help="Drop the frozen spectrum beyond the truncation rank")
    p.add_argument("--log-level", type=str, default=settings.log_level)
    p.add_argument("--log-json", action="store_true", default=settings.log_json)
    sub = p.add_subparsers(dest="cmd", required=True)

    pv = sub.add_parser("verify", help="Run the property suites")
    pv.add_argument("--suite", action="append", choices=sorted(SUITES))
    pv.add_argument("--inject-fault", choices=FAULTS, default=None)
    pv.set_defaults(func=cmd_verify)

    ps = sub.add_parser("sweep", help="Budget sweep from an experiment file")
    ps.add_argument("config")
    ps.set_defaults(func=cmd_sweep)

    pw = sub.add_parser("weight-quality", help="Train from checkpoints of different quality")
    pw.add_argument("config")
    pw.set_defaults(func=cmd_weight_quality)

    pa = sub.add_parser("save", help="Write an SVFT adapter file")
    pa.add_argument("--base", required=True)
    pa.add_argument("--pattern", required=True, help='plain, banded:D, random:TOTAL:SEED or topk:K')
    values = pa.add_mutually_exclusive_group()
    values.add_argument("--values", type=str, default=None, help="Matrix file with one value per pattern entry")
    values.add_argument("--random-values", action="store_true")
    pa.add_argument("--rank", type=int, default=None, help="Effective rank")
    pa.add_argument("path")
    pa.set_defaults(func=cmd_save)

    pl = sub.add_parser("load", help="Print an adapter file")
    pl.add_argument("--base", required=True)
    pl.add_argument("path")
    pl.set_defaults(func=cmd_load)

    pf = sub.add_parser("fuse", help="Write W0 + delta W as a dense matrix")
    pf.add_argument("base")
    pf.add_argument("adapter")
    pf.add_argument("out_path")
    pf.set_defaults(func=cmd_fuse)

    pc = sub.add_parser("count", help="Closed-form trainable parameter count")
    pc.add_argument("method")
    pc.add_argument("layers", type=int)
    pc.add_argument("d_model", type=int)
    pc.add_argument("r_or_k", type=int, nargs="?", default=0)
    pc.set_defaults(func=cmd_count)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        configure_logging(args.log_level, args.log_json)
        return args.func(args)
    except (AdapterFormatError, MatrixFormatError, OSError, struct.error) as e:
        logger.error("%s", e)
        return EXIT_IO
    except (SVFTError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
