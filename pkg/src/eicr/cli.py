"""Command-line entry point: ``eicr {generate,train,evaluate,ablate,schedule-dump}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config
from .curriculum import LambdaSchedule, lambda_at
from .data import ConfigError, DataFormatError, compute_stats, load_dataset, save_dataset, save_stats
from .environments import sampling_rates
from .experiments import ablation_grid, evaluate_params, make_splits, run_variants, train_seed, write_ablation
from .metrics import MetricsError, save_predictions, score_dataset, write_reports
from .model import load_checkpoint, save_checkpoint
from .trainer import TrainingError

log = logging.getLogger("eicr")


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeds(args, cfg: ExperimentConfig) -> list[int]:
    return [args.seed] if args.seed is not None else list(cfg.run_seeds)


def _load_split(out: Path, name: str, cfg: ExperimentConfig):
    path = out / f"{name}.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing dataset {path}; run 'eicr generate' first")
    return load_dataset(path, cfg.generator.num_predicates, cfg.generator.num_object_classes)


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, generator=replace(cfg.generator, seed=args.seed))
    out = _out_dir(args, cfg)
    C, N = cfg.generator.num_predicates, cfg.generator.num_object_classes
    splits = dict(zip(("train", "val", "test"), make_splits(cfg)))
    for name, part in splits.items():
        save_dataset(part, out / f"{name}.csv", C, N)
    stats = compute_stats(splits["train"], C)
    save_stats(stats, out / "stats.csv")
    if all(n > 0 for n in stats.counts.values()):
        sampling_rates(stats).dump(out / "plan.csv")

    print(f"train/val/test instances: {len(splits['train'])}/{len(splits['val'])}/{len(splits['test'])}")
    print(f"median class count (train): {stats.median_count:g}")
    print(f"{'predicate':>9} {'count':>7} {'contexts':>8}")
    for c, n in stats.counts.items():
        print(f"{c:>9} {n:>7} {len(stats.context_pair_counts.get(c, {})):>8}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    train_set = _load_split(out, "train", cfg)
    for seed in _seeds(args, cfg):
        def checkpoint(t, params, seed=seed):
            save_checkpoint(params, out / f"checkpoint_seed{seed}_t{t}.csv")

        params, history = train_seed(cfg, train_set, seed,
                                     on_checkpoint=checkpoint if args.keep_checkpoints else None)
        save_checkpoint(params, out / f"checkpoint_seed{seed}.csv")
        history.to_csv(out / f"history_seed{seed}.csv")
        last = history.rows[-1]
        print(f"seed {seed}: {last.t} iterations, final hybrid risk {last.hybrid:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    test_set = _load_split(out, "test", cfg)
    params = load_checkpoint(args.checkpoint)
    expected = (cfg.model.num_predicates, cfg.model.feature_dim, cfg.model.hidden_dim)
    got = (params.num_predicates, params.feature_dim, params.hidden_dim)
    if got != expected:
        raise ValueError(f"checkpoint shape (C, d, h)={got} does not match config {expected}")
    reports = evaluate_params(params, test_set, cfg.eval_ks, cfg.single_prediction)
    prefix = f"{Path(args.checkpoint).stem}_"
    write_reports(reports, out, prefix=prefix)
    if args.save_predictions:
        save_predictions(score_dataset(params, test_set, cfg.single_prediction), out / f"{prefix}predictions.csv")
    for rep in reports:
        print(f"K={rep.K:<4} R {100 * rep.r_at_k:5.1f}  mR {100 * rep.mr_at_k:5.1f}  "
              f"F {100 * rep.f_at_k:5.1f}  mT {100 * rep.mt_at_k:5.1f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    train_set = _load_split(out, "train", cfg)
    test_set = _load_split(out, "test", cfg)
    variants = ablation_grid(cfg)
    seeds = _seeds(args, cfg)
    log.info("running %d variants x %d seeds", len(variants), len(seeds))
    results = run_variants(cfg, variants, seeds, train_set, test_set, jobs=args.jobs)
    long_path, summary_path = write_ablation(results, cfg.eval_ks, out)
    print(f"{len(results)} runs; wrote {long_path} and {summary_path}")
    return 0


def cmd_schedule_dump(args) -> int:
    if args.t_max < 0:
        raise ValueError(f"--t-max must be non-negative, got {args.t_max}")
    schedule = LambdaSchedule(args.T, args.lambda_max)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "lambda"])
        for t in range(0, args.t_max + 1, args.step):
            w.writerow([t, repr(lambda_at(schedule, t))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eicr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--out", help="output directory (default: output_dir from the config)")
        sp.add_argument("--seed", type=int, help="override the configured seed(s)")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)

    sp = sub.add_parser("generate", help="generate and split a synthetic dataset")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train one model per run seed")
    common(sp)
    sp.add_argument("--keep-checkpoints", action="store_true", help="also write periodic checkpoints")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score the test split with a checkpoint")
    common(sp, checkpoint=True)
    sp.add_argument("--save-predictions", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("ablate", help="run the configured ablation grid")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("schedule-dump", help="write the lambda schedule as CSV")
    sp.add_argument("--T", type=int, default=3000)
    sp.add_argument("--lambda-max", type=float, default=0.9)
    sp.add_argument("--t-max", type=int, default=12000)
    sp.add_argument("--step", type=int, default=1)
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.set_defaults(func=cmd_schedule_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"eicr: config error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"eicr: training aborted: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, MetricsError, ValueError, OSError) as exc:
        print(f"eicr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
