"""Command line interface: run experiments, compare strategies, inspect affinity.

Progress goes to stderr, machine-readable results go to files. Each run owns
a directory named from the config hash (seed excluded) plus the seed, and a
manifest.json is written there before any result file; on failure the
manifest is the only file, marked failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, config as config_mod, data, engine, metrics
from .affinity import build_affinity_matrix, load_class_stats
from .errors import ConfigurationError, PartitionError

ROUND_METRICS_FILE = "metrics_rounds.csv"
SUMMARY_FILE = "summary.csv"
PARTITION_FILE = "partition.csv"
WEIGHTS_FILE = "weights.csv"
MANIFEST_FILE = "manifest.json"


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def _config_digest(config: engine.ExperimentConfig) -> str:
    lines = [l for l in config_mod.config_lines(config) if not l.startswith("seed ")]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:10]


def _run_dir(out_root: Path, config: engine.ExperimentConfig) -> Path:
    return out_root / f"run_{_config_digest(config)}_s{config.seed}"


def _write_manifest(run_dir: Path, payload: dict) -> None:
    (run_dir / MANIFEST_FILE).write_text(json.dumps(payload, indent=2) + "\n")


def _weights_csv(rows: list[tuple[int, int, int, float]]) -> str:
    lines = ["round,target,source,weight"]
    lines += [f"{t},{i},{j},{w:.10f}" for t, i, j, w in rows]
    return "\n".join(lines) + "\n"


def _execute_run(
    config: engine.ExperimentConfig, run_dir: Path
) -> engine.ExperimentLog:
    """Run one experiment with a manifest-first, results-last file protocol."""
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": __version__,
        "status": "running",
        "started_unix": time.time(),
        "seeds": [config.seed],
        "output_dir": str(run_dir),
        "config": dict(
            line.split(" = ", 1) for line in config_mod.config_lines(config)
        ),
        "result_files": [],
    }
    _write_manifest(run_dir, manifest)
    try:
        started = time.perf_counter()
        log = engine.run_experiment(config)
        elapsed = time.perf_counter() - started
    except (ConfigurationError, PartitionError, OSError) as exc:
        manifest["status"] = "failed"
        manifest["error"] = str(exc)
        manifest["finished_unix"] = time.time()
        _write_manifest(run_dir, manifest)
        raise

    files = {
        ROUND_METRICS_FILE: metrics.round_metrics_csv(log.history, log.stats),
        SUMMARY_FILE: metrics.summary_csv(
            config.strategy,
            config.dirichlet_alpha,
            config.seed,
            log.history,
            config.target_accuracies,
        ),
        PARTITION_FILE: data.partition_heatmap_csv(log.partition),
    }
    if config.dump_weights:
        files[WEIGHTS_FILE] = _weights_csv(log.weight_rows)
    for name, text in files.items():
        (run_dir / name).write_text(text)

    manifest["status"] = "complete"
    manifest["finished_unix"] = time.time()
    manifest["runtime_sec"] = elapsed
    manifest["result_files"] = sorted(files)
    _write_manifest(run_dir, manifest)
    last10 = log.last10_average()
    _log(
        f"run strategy={config.strategy} seed={config.seed} "
        f"last10_avg={'na' if last10 is None else f'{last10:.4f}'} "
        f"({elapsed:.1f}s) -> {run_dir}"
    )
    return log


def cmd_run(args: argparse.Namespace) -> int:
    overrides = _parse_overrides(args.set)
    if args.dump_weights:
        overrides["dump_weights"] = "true"
    config = config_mod.load_config(args.config, overrides)
    _execute_run(config, _run_dir(Path(args.out), config))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    overrides = _parse_overrides(args.set)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not strategies or not seeds:
        raise ConfigurationError("compare needs at least one strategy and one seed")

    out_root = Path(args.out)
    results: dict[str, list[float]] = {}
    for strategy in strategies:
        results[strategy] = []
        for seed in seeds:
            arm = dict(overrides)
            arm["strategy"] = strategy
            arm["seed"] = str(seed)
            try:
                config = config_mod.load_config(args.config, arm)
                log = _execute_run(config, _run_dir(out_root, config))
            except (ConfigurationError, PartitionError) as exc:
                raise ConfigurationError(
                    f"arm strategy={strategy} seed={seed}: {exc}"
                ) from exc
            last10 = log.last10_average()
            if last10 is None:
                raise ConfigurationError(
                    f"arm strategy={strategy} seed={seed}: no evaluations recorded"
                )
            results[strategy].append(last10)

    lines = ["strategy,mean_last10_avg_acc,stddev_last10_avg_acc,n_seeds"]
    print(f"{'strategy':<16} {'last10 avg acc':<20} seeds")
    for strategy in strategies:
        mean = statistics.mean(results[strategy])
        stddev = statistics.pstdev(results[strategy])
        lines.append(f"{strategy},{mean:.6f},{stddev:.6f},{len(seeds)}")
        print(f"{strategy:<16} {mean:.4f} +/- {stddev:.4f}      {len(seeds)}")
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "comparison.csv").write_text("\n".join(lines) + "\n")
    _log(f"comparison table -> {out_root / 'comparison.csv'}")
    return 0


def cmd_affinity(args: argparse.Namespace) -> int:
    stats = load_class_stats(args.stats)
    matrix = build_affinity_matrix(stats, stats[0].n_classes)
    n = matrix.n_clients
    print("normalized affinity matrix")
    print("      " + " ".join(f"{j:>6d}" for j in range(n)))
    for i in range(n):
        print(f"{i:>5d} " + " ".join(f"{matrix.values[i, j]:6.3f}" for j in range(n)))
    print()
    print("top affine peers")
    for i in range(n):
        ranked = sorted(
            (j for j in range(n) if j != i),
            key=lambda j: (-matrix.values[i, j], j),
        )[:3]
        peers = ", ".join(f"{j} ({matrix.values[i, j]:.3f})" for j in ranked)
        print(f"client {i}: {peers}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dapfl",
        description="Personalized federated learning simulator with "
        "affinity-driven dynamic aggregation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True, help="path to a key=value config file")
    run.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    run.add_argument("--out", default="runs", help="output root directory")
    run.add_argument(
        "--dump-weights",
        action="store_true",
        help="also write per-round aggregation weights",
    )
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="sweep strategies x seeds")
    compare.add_argument("--config", required=True)
    compare.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    compare.add_argument("--out", default="runs")
    compare.add_argument(
        "--strategies",
        default=",".join(engine.STRATEGIES),
        help="comma-separated strategy list",
    )
    compare.add_argument("--seeds", default="0", help="comma-separated seed list")
    compare.set_defaults(func=cmd_compare)

    affinity = sub.add_parser(
        "affinity", help="print the affinity matrix of a class-stats table"
    )
    affinity.add_argument("stats", help="text file: one client per row, K counts")
    affinity.set_defaults(func=cmd_affinity)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, PartitionError) as exc:
        _log(f"error: {exc}")
        return 2
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return 2
    except ValueError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
