"""Flat ``section.key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
Unknown keys are errors, so typos fail loudly.  Example::

    generator.num_predicates = 20
    train.T = 3000
    train.env_subset = normal, balanced, over_balanced
    eval.ks = 20, 50, 100
    run_seeds = 0, 1, 2
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .curriculum import AblationMode, LambdaSchedule
from .data import ConfigError, GeneratorConfig, default_context_diversity
from .environments import ALL_ENVIRONMENTS, EnvironmentKind
from .model import ModelConfig
from .trainer import TrainConfig


@dataclass
class SplitConfig:
    train_frac: float = 0.7
    val_count: int = 20
    seed: int = 0


@dataclass
class AblationGrid:
    env_subsets: list[frozenset[EnvironmentKind]] = field(default_factory=lambda: [frozenset(ALL_ENVIRONMENTS)])
    modes: list[AblationMode] = field(default_factory=lambda: [AblationMode.FULL])
    lambda_max: list[float] = field(default_factory=lambda: [0.9])
    T: list[int] = field(default_factory=lambda: [3000])
    penalty_weight: list[float] = field(default_factory=lambda: [1.0])


@dataclass
class ExperimentConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(feature_dim=32, num_predicates=20))
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    ablate: AblationGrid = field(default_factory=AblationGrid)
    eval_ks: list[int] = field(default_factory=lambda: [20, 50, 100])
    single_prediction: bool = False
    output_dir: Path = Path("runs")
    run_seeds: list[int] = field(default_factory=lambda: [0])

    def validate(self) -> None:
        self.generator.validate()
        self.model.validate()
        self.train.validate()
        if not self.eval_ks or any(k < 1 for k in self.eval_ks):
            raise ConfigError("eval.ks must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(self.eval_ks, self.eval_ks[1:])):
            raise ConfigError("eval.ks must be strictly increasing")
        if not self.run_seeds:
            raise ConfigError("run_seeds must not be empty")
        if self.model.feature_dim != self.generator.feature_dim:
            raise ConfigError("model feature_dim must equal generator.feature_dim")
        if self.model.num_predicates != self.generator.num_predicates:
            raise ConfigError("model num_predicates must equal generator.num_predicates")

    def for_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with model init and batch sampling keyed to ``seed``."""
        return replace(self, model=replace(self.model, seed=seed), train=replace(self.train, seed=seed))


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv: Callable[[str], Any]) -> Callable[[str], list]:
    return lambda text: [conv(p.strip()) for p in text.split(",") if p.strip()]


def _env_set(text: str) -> frozenset[EnvironmentKind]:
    return frozenset(EnvironmentKind.parse(p) for p in text.replace("+", ",").split(",") if p.strip())


def _env_sets(text: str) -> list[frozenset[EnvironmentKind]]:
    return [_env_set(group) for group in text.split(";") if group.strip()]


# key -> (target section, attribute, converter)
_KEYS: dict[str, tuple[str, str, Callable[[str], Any]]] = {
    "generator.num_predicates": ("generator", "num_predicates", _int),
    "generator.num_object_classes": ("generator", "num_object_classes", _int),
    "generator.num_scenes": ("generator", "num_scenes", _int),
    "generator.relations_per_scene": ("generator", "relations_per_scene", _int),
    "generator.zipf_exponent": ("generator", "zipf_exponent", float),
    "generator.context_diversity": ("generator", "context_diversity", _list(_int)),
    "generator.context_diversity_head": ("generator", "_cd_head", _int),
    "generator.context_diversity_tail": ("generator", "_cd_tail", _int),
    "generator.feature_dim": ("generator", "feature_dim", _int),
    "generator.noise_sigma": ("generator", "noise_sigma", float),
    "generator.seed": ("generator", "seed", _int),
    "model.hidden_dim": ("model", "hidden_dim", _int),
    "model.init_scale": ("model", "init_scale", float),
    "model.seed": ("model", "seed", _int),
    "train.total_iterations": ("train", "total_iterations", _int),
    "train.batch_size": ("train", "batch_size", _int),
    "train.learning_rate": ("train", "learning_rate", float),
    "train.momentum": ("train", "momentum", float),
    "train.T": ("train", "_T", _int),
    "train.lambda_max": ("train", "_lambda_max", float),
    "train.penalty_weight": ("train", "penalty_weight", float),
    "train.mode": ("train", "mode", AblationMode.parse),
    "train.env_subset": ("train", "env_subset", _env_set),
    "train.penalized_envs": ("train", "penalized_envs", _env_set),
    "train.seed": ("train", "seed", _int),
    "train.checkpoint_every": ("train", "checkpoint_every", _int),
    "train.warmup_iterations": ("train", "warmup_iterations", _int),
    "train.log_every": ("train", "log_every", _int),
    "split.train_frac": ("split", "train_frac", float),
    "split.val_count": ("split", "val_count", _int),
    "split.seed": ("split", "seed", _int),
    "ablate.env_subsets": ("ablate", "env_subsets", _env_sets),
    "ablate.modes": ("ablate", "modes", _list(AblationMode.parse)),
    "ablate.lambda_max": ("ablate", "lambda_max", _list(float)),
    "ablate.T": ("ablate", "T", _list(_int)),
    "ablate.penalty_weight": ("ablate", "penalty_weight", _list(float)),
    "eval.ks": ("root", "eval_ks", _list(_int)),
    "eval.single_prediction": ("root", "single_prediction", _bool),
    "output_dir": ("root", "output_dir", Path),
    "run_seeds": ("root", "run_seeds", _list(_int)),
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, tuple[int, Any]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = (lineno, _KEYS[key][2](value))
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None

    sections: dict[str, dict[str, Any]] = {s: {} for s in ("generator", "model", "train", "split", "ablate", "root")}
    for key, (_, value) in values.items():
        section, attr, _ = _KEYS[key]
        sections[section][attr] = value

    gen = sections["generator"]
    head, tail = gen.pop("_cd_head", 40), gen.pop("_cd_tail", 2)
    try:
        g = GeneratorConfig(**{k: v for k, v in gen.items() if k != "context_diversity"})
        if "context_diversity" in gen:
            cd = gen["context_diversity"]
            if len(cd) != g.num_predicates:
                raise ConfigError(
                    f"line {values['generator.context_diversity'][0]}: key 'generator.context_diversity' "
                    f"lists {len(cd)} values for {g.num_predicates} predicates")
            g.context_diversity = dict(enumerate(cd))
        else:
            g.context_diversity = default_context_diversity(g.num_predicates, g.num_object_classes, head, tail)

        tr = sections["train"]
        T, lmax = tr.pop("_T", 3000), tr.pop("_lambda_max", 0.9)
        train = TrainConfig(schedule=LambdaSchedule(T, lmax), **tr)
        model = ModelConfig(feature_dim=g.feature_dim, num_predicates=g.num_predicates, **sections["model"])
        ab = sections["ablate"]
        ab.setdefault("env_subsets", [train.env_subset])
        ab.setdefault("modes", [train.mode])
        ab.setdefault("lambda_max", [lmax])
        ab.setdefault("T", [T])
        ab.setdefault("penalty_weight", [train.penalty_weight])
        cfg = ExperimentConfig(generator=g, model=model, train=train, split=SplitConfig(**sections["split"]),
                               ablate=AblationGrid(**sections["ablate"]), **sections["root"])
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from None
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))
