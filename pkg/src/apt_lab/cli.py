"""Command-line entry point: ``apt-lab <command> [--config PATH] [--seed N] [--out DIR] [--no-timing]``.

Exit codes: 0 success, 1 usage or configuration error, 2 failed check.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import agent as ag
from . import experiments as ex
from .metrics import write_csv, write_metrics_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECK = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for failed checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, help="overrides the config seed and $APT_LAB_SEED")
    p.add_argument("--out", help="output directory (default: config out_dir)")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns so outputs are reproducible")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="apt-lab", description="Particle-entropy exploration lab")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("pretrain", parents=[common], help="reward-free pre-training")
    ft = sub.add_parser("finetune", parents=[common], help="fine-tune on the sparse task")
    ft.add_argument("--from", dest="artifacts", help="pre-trained artifacts directory (scratch if omitted)")
    sub.add_parser("decay", parents=[common], help="intrinsic reward decay experiment")
    cmp_ = sub.add_parser("compare", parents=[common], help="run methods across seeds")
    cmp_.add_argument("--method", action="append", default=[], help="method config file (repeatable)")
    cmp_.add_argument("--seeds", help="comma-separated seeds (overrides config)")
    bench = sub.add_parser("bench-knn", parents=[common], help="time brute force against the k-d tree")
    bench.add_argument("--sizes", default="100,1000", help="comma-separated point counts")
    bench.add_argument("--dims", default="2,5", help="comma-separated dimensions")
    bench.add_argument("--k", type=int, default=5)
    sub.add_parser("validate-config", parents=[common], help="parse and validate a config file")
    return parser


def _load(path, **overrides) -> ex.RunConfig:
    if path is None:
        return ex.RunConfig(**overrides).validate()
    return ex.load_run_config(path, **overrides)


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_with_seed(args) -> ex.RunConfig:
    overrides = {} if args.seed is None else {"seed": args.seed}
    return _load(args.config, **overrides)


def cmd_pretrain(args) -> int:
    cfg = _config_with_seed(args)
    env = cfg.make_env()
    art = ag.pretrain(env, cfg.train_config(), cfg.resolved_seed())
    ex.write_pretrain_outputs(_out_dir(args, cfg), cfg, art, env, timing=not args.no_timing)
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _config_with_seed(args)
    env = cfg.make_env()
    task_env = env.with_task(cfg.make_task(env))
    artifacts = ag.load_artifacts(args.artifacts) if args.artifacts else None
    res = ag.finetune(artifacts, task_env, cfg.finetune_config(), cfg.resolved_seed(), cfg.train_config())
    out = _out_dir(args, cfg)
    write_metrics_csv(out / "metrics.csv", res.metrics, timing=not args.no_timing)
    write_csv(out / "episodes.csv", ["episode", "end_step", "return", "success"],
              [[i + 1, s, r, ok] for i, (s, r, ok) in
               enumerate(zip(res.episode_end_steps, res.episode_returns, res.successes))])
    ep = res.episodes_to_success_rate(cfg.success_window, cfg.success_threshold)
    ex.write_json(out / "summary.json", {
        "label": cfg.label, "seed": cfg.resolved_seed(), "pretrained": artifacts is not None,
        "episodes": len(res.episode_returns), "success_episode": ep,
        "success_fraction": (sum(res.successes) / len(res.successes)) if res.successes else 0.0,
    })
    return EXIT_OK


def cmd_decay(args) -> int:
    cfg = _config_with_seed(args)
    result = ex.reward_decay_experiment(cfg)
    out = _out_dir(args, cfg)
    write_csv(out / "decay.csv", ["epoch", "mean_raw_intrinsic_reward"], result.epochs)
    write_metrics_csv(out / "metrics.csv", result.metrics, timing=not args.no_timing)
    ex.write_json(out / "summary.json", {
        "label": cfg.label, "seed": cfg.resolved_seed(), "first_epoch_mean": result.first_mean,
        "last_epoch_mean": _finite_or_str(result.last_mean), "ratio": _finite_or_str(result.ratio),
        "threshold": result.threshold, "passed": result.passed, "coverage": result.coverage,
    })
    print(f"decay ratio {result.ratio:.6g} (threshold {result.threshold}): {'PASS' if result.passed else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_CHECK


def _finite_or_str(x):
    return x if math.isfinite(x) else repr(x)


def cmd_compare(args) -> int:
    paths = args.method or ([args.config] if args.config else [])
    if not paths:
        raise ex.ConfigError("compare needs at least one --method config file")
    methods = [ex.load_run_config(p) for p in paths]
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s]
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = list(methods[0].seeds)
    out = Path(args.out or methods[0].out_dir)
    summary = ex.compare(methods, seeds, out)
    passed = True
    apt = next((m.label for m in methods if m.reward_source == ag.APT), None)
    base = next((m.label for m in methods if m.reward_source == ag.NONE), None)
    if apt and base:
        wins, n, ok = ex.coverage_ordering(summary, apt, base)
        print(f"coverage {apt} >= {base}: {wins}/{n} seeds: {'PASS' if ok else 'FAIL'}")
        passed &= ok
    return EXIT_OK if passed else EXIT_CHECK


def cmd_bench(args) -> int:
    cfg = _load(args.config)
    sizes = [int(v) for v in args.sizes.split(",") if v]
    dims = [int(v) for v in args.dims.split(",") if v]
    if not sizes or not dims or min(sizes) < 2 or min(dims) < 1 or args.k < 1:
        raise ex.ConfigError("sizes must be >= 2, dims >= 1 and k >= 1")
    seed = cfg.resolved_seed() if args.seed is None else args.seed
    rows = ex.bench_knn(sizes, dims, args.k, seed, timing=not args.no_timing)
    out = _out_dir(args, cfg)
    ex.write_bench_csv(out / "bench_knn.csv", rows, timing=not args.no_timing)
    return EXIT_OK if all(r["agrees_with_brute"] for r in rows) else EXIT_CHECK


def cmd_validate(args) -> int:
    if args.config is None:
        raise ex.ConfigError("validate-config needs --config")
    cfg = _config_with_seed(args)
    sys.stdout.write(ex.format_run_config(cfg))
    return EXIT_OK


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "decay": cmd_decay,
    "compare": cmd_compare,
    "bench-knn": cmd_bench,
    "validate-config": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ex.ConfigError, FileNotFoundError) as exc:
        print(f"apt-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
