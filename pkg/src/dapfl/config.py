"""Flat key=value experiment configuration files.

One line per key, `#` starts a comment, every key optional. The single
`seed` drives all randomness of a run: data generation, partitioning, model
init, client sampling, and batch order are independent sub-streams derived
from it inside the engine.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .data import SyntheticTaskSpec
from .engine import STRATEGIES, ExperimentConfig
from .errors import ConfigurationError
from .model import HyperParams

_TRUE_WORDS = {"true", "yes", "1", "on"}
_FALSE_WORDS = {"false", "no", "0", "off"}


def _parse_bool(raw: str) -> bool:
    word = raw.strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_float_list(raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


# key -> (parser, default as written in a config file)
KEYS: dict[str, tuple] = {
    "n_clients": (int, "20"),
    "participation_rate": (float, "0.4"),
    "rounds": (int, "150"),
    "strategy": (str, "dapfl"),
    "lambda": (float, "1.0"),
    "learning_rate": (float, "0.05"),
    "local_epochs": (int, "2"),
    "batch_size": (int, "10"),
    "sigma": (float, "1.0"),
    "epsilon": (float, "1e-8"),
    "scale_sigma_by_params": (_parse_bool, "false"),
    "hidden_units": (int, "32"),
    "n_classes": (int, "10"),
    "feature_dim": (int, "20"),
    "samples_per_class": (int, "200"),
    "cluster_spread": (float, "2.0"),
    "dirichlet_alpha": (float, "0.5"),
    "eval_every": (int, "1"),
    "seed": (int, "0"),
    "target_accuracies": (_parse_float_list, "0.4,0.5"),
    "dump_weights": (_parse_bool, "false"),
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw key -> value strings from a config file; keys are validated here."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, _, value = text.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigurationError(f"{key}: unknown configuration key")
        mapping[key] = value.strip()
    return mapping


def build_config(raw: Mapping[str, str]) -> ExperimentConfig:
    """Typed ExperimentConfig from raw strings, defaults filled in."""
    typed: dict[str, object] = {}
    for key, (parser, default) in KEYS.items():
        value = raw.get(key, default)
        try:
            typed[key] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"{key}: {exc}") from None
    for key in raw:
        if key not in KEYS:
            raise ConfigurationError(f"{key}: unknown configuration key")

    if typed["strategy"] not in STRATEGIES:
        raise ConfigurationError(
            f"strategy: unknown strategy {typed['strategy']!r}, "
            f"expected one of {', '.join(STRATEGIES)}"
        )
    try:
        hyper = HyperParams(
            prox_lambda=typed["lambda"],
            learning_rate=typed["learning_rate"],
            local_epochs=typed["local_epochs"],
            batch_size=typed["batch_size"],
            sigma=typed["sigma"],
            epsilon=typed["epsilon"],
        )
        # The engine derives the data seed from `seed`; the spec seed here is
        # a placeholder that run_experiment overrides.
        task = SyntheticTaskSpec(
            n_classes=typed["n_classes"],
            feature_dim=typed["feature_dim"],
            samples_per_class=typed["samples_per_class"],
            cluster_spread=typed["cluster_spread"],
            seed=0,
        )
        return ExperimentConfig(
            n_clients=typed["n_clients"],
            participation_rate=typed["participation_rate"],
            rounds=typed["rounds"],
            strategy=typed["strategy"],
            hyper=hyper,
            task=task,
            hidden_units=typed["hidden_units"],
            dirichlet_alpha=typed["dirichlet_alpha"],
            eval_every=typed["eval_every"],
            seed=typed["seed"],
            target_accuracies=typed["target_accuracies"],
            scale_sigma_by_params=typed["scale_sigma_by_params"],
            dump_weights=typed["dump_weights"],
        )
    except ConfigurationError:
        raise


def load_config(
    path: str | Path, overrides: Mapping[str, str] | None = None
) -> ExperimentConfig:
    """Read a config file and apply `key=value` overrides on top."""
    raw = read_config_file(path)
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigurationError(f"{key}: unknown configuration key")
        raw[key] = value
    return build_config(raw)


def config_lines(config: ExperimentConfig) -> list[str]:
    """Canonical `key = value` lines; parsing them rebuilds the same config."""
    values = {
        "n_clients": config.n_clients,
        "participation_rate": repr(config.participation_rate),
        "rounds": config.rounds,
        "strategy": config.strategy,
        "lambda": repr(config.hyper.prox_lambda),
        "learning_rate": repr(config.hyper.learning_rate),
        "local_epochs": config.hyper.local_epochs,
        "batch_size": config.hyper.batch_size,
        "sigma": repr(config.hyper.sigma),
        "epsilon": repr(config.hyper.epsilon),
        "scale_sigma_by_params": str(config.scale_sigma_by_params).lower(),
        "hidden_units": config.hidden_units,
        "n_classes": config.task.n_classes,
        "feature_dim": config.task.feature_dim,
        "samples_per_class": config.task.samples_per_class,
        "cluster_spread": repr(config.task.cluster_spread),
        "dirichlet_alpha": repr(config.dirichlet_alpha),
        "eval_every": config.eval_every,
        "seed": config.seed,
        "target_accuracies": ",".join(repr(t) for t in config.target_accuracies),
        "dump_weights": str(config.dump_weights).lower(),
    }
    return [f"{key} = {values[key]}" for key in sorted(KEYS)]
