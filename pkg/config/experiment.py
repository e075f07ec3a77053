"""
Experiment files: `key = value` lines under `[section]` headers.

    [task]            kind, d1, d2, d_out, perturbation, n_samples, noise_sigma, strength, seeds
    [training]        epochs, batch, truncate_rank, truncate_base
    [optimizer]       kind, lr, beta1, beta2, eps, warmup_steps
    [optimizer.NAME]  the same keys, for one method family only
    [sweep]           methods, budgets
    [weight_quality]  distances, methods
    [output]          dir, name, database

Lists are comma separated. See docs/config.md for the full grammar.
"""
import configparser
import logging
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from adapters.accounting import MethodFamily, MethodSpec
from numerics.errors import ConfigError, UnknownMethodError
from training.experiments import TrainingPlan
from training.optimizers import OptimizerSpec
from training.tasks import Perturbation, Task, make_mlp_task, make_task

logger = logging.getLogger(__name__)

SECTIONS = {"task", "training", "optimizer", "sweep", "weight_quality", "output"}


def _split(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [part.strip() for part in str(value).split(",") if part.strip()]


class TaskSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: str = "linear"
    d1: int = Field(16, ge=1)
    d2: int = Field(16, ge=1)
    d_out: int = Field(4, ge=1)
    perturbation: str = "sparse_spectrum:12"
    n_samples: int = Field(64, ge=1)
    noise_sigma: float = Field(0.0, ge=0)
    strength: float = 1.0
    seeds: list[int] = [0]

    @field_validator("kind")
    @classmethod
    def known_kind(cls, value: str) -> str:
        if value not in ("linear", "mlp"):
            raise ValueError(f"task kind must be linear or mlp, got {value!r}")
        return value

    @field_validator("perturbation")
    @classmethod
    def parseable(cls, value: str) -> str:
        Perturbation.parse(value)
        return value

    @field_validator("seeds", mode="before")
    @classmethod
    def seed_list(cls, value):
        seeds = [int(s) for s in _split(value)]
        if not seeds or any(s < 0 for s in seeds):
            raise ValueError("seeds must be a non-empty list of nonnegative integers")
        return seeds

    def build(self, seed: int) -> Task:
        if self.kind == "mlp":
            return make_mlp_task(
                self.d1, self.d2, self.d_out, self.perturbation, seed,
                self.n_samples, self.noise_sigma, self.strength,
            )
        return make_task(self.d1, self.d2, self.perturbation, seed, self.n_samples, self.noise_sigma, self.strength)


class TrainingSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(100, ge=0)
    batch: int | None = Field(None, ge=1)
    truncate_rank: int | None = Field(None, ge=1)
    truncate_base: bool = False


class SweepSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    methods: list[str] = []
    budgets: list[int] = []

    @field_validator("methods", mode="before")
    @classmethod
    def method_list(cls, value):
        methods = _split(value)
        for entry in methods:
            if ":" in entry:
                MethodSpec.parse(entry)
            else:
                MethodFamily(entry.lower())
        return methods

    @field_validator("budgets", mode="before")
    @classmethod
    def budget_list(cls, value):
        budgets = [int(b) for b in _split(value)]
        if any(b < 1 for b in budgets):
            raise ValueError("budgets must be positive")
        return budgets


class WeightQualitySection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    distances: list[float] = [1.0, 0.1]
    methods: list[str] = []

    @field_validator("distances", mode="before")
    @classmethod
    def distance_list(cls, value):
        distances = [float(d) for d in _split(value)]
        if not distances or any(d < 0 for d in distances):
            raise ValueError("distances must be a non-empty list of nonnegative numbers")
        return distances

    @field_validator("methods", mode="before")
    @classmethod
    def method_list(cls, value):
        methods = _split(value)
        for entry in methods:
            MethodSpec.parse(entry)
        return methods


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dir: str | None = None
    name: str = "experiment"
    database: str | None = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    task: TaskSection = TaskSection()
    training: TrainingSection = TrainingSection()
    optimizer: OptimizerSpec = OptimizerSpec()
    optimizer_overrides: dict[MethodFamily, OptimizerSpec] = {}
    sweep: SweepSection = SweepSection()
    weight_quality: WeightQualitySection = WeightQualitySection()
    output: OutputSection = OutputSection()

    def plan(self, seed: int, truncate_base: bool | None = None) -> TrainingPlan:
        return TrainingPlan(
            optimizer=self.optimizer,
            optimizer_overrides=self.optimizer_overrides,
            epochs=self.training.epochs,
            batch=self.training.batch,
            seed=seed,
            truncate_rank=self.training.truncate_rank,
            truncate_base=self.training.truncate_base if truncate_base is None else truncate_base,
        )


def parse_experiment(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e

    sections = {}
    overrides = {}
    for name in parser.sections():
        values = dict(parser.items(name))
        if name.startswith("optimizer."):
            family = name.split(".", 1)[1].strip().lower()
            try:
                overrides[MethodFamily(family)] = values
            except ValueError:
                raise ConfigError(f"{source}: [{name}] names no known method family") from None
        elif name in SECTIONS:
            sections[name] = values
        else:
            raise ConfigError(f"{source}: unknown section [{name}]")

    base_optimizer = sections.get("optimizer", {})
    try:
        config = ExperimentConfig(
            **sections,
            optimizer_overrides={family: {**base_optimizer, **values} for family, values in overrides.items()},
        )
    except (ValidationError, UnknownMethodError) as e:
        raise ConfigError(f"{source}: {e}") from e
    logger.debug("Parsed experiment %s from %s", config.output.name, source)
    return config


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_experiment(path.read_text(), source=str(path))
