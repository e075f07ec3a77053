"""
Budget sweeps, Pareto frontiers and the pretrained-quality and truncation studies.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from adapters.accounting import KNOB_NAMES, MethodFamily, MethodSpec
from adapters.patterns import banded
from numerics.decompositions import svd
from numerics.errors import BudgetError, ConfigError, DivergenceError, UnsupportedShapeError, ZeroColumnError
from numerics.matrix import frobenius
from training.optimizers import OptimizerSpec
from training.tasks import Task
from training.trainer import RunReport, TrainConfig, train_adapter

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["method", "variant", "trainable_params", "final_loss", "recovery", "seed", "wall_ms"]
TRUNCATABLE = (MethodFamily.SVFT_P, MethodFamily.SVFT_B)


class TrainingPlan(BaseModel):
    """Everything of a TrainConfig except the method, plus per-family optimizers"""
    model_config = ConfigDict(frozen=True)

    optimizer: OptimizerSpec = OptimizerSpec()
    optimizer_overrides: dict[MethodFamily, OptimizerSpec] = Field(default_factory=dict)
    epochs: int = Field(100, ge=0)
    batch: int | None = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    truncate_rank: int | None = Field(None, ge=1)
    truncate_base: bool = False

    def config_for(self, spec: MethodSpec) -> TrainConfig:
        truncating = spec.family in TRUNCATABLE
        return TrainConfig(
            method=spec,
            optimizer=self.optimizer_overrides.get(spec.family, self.optimizer),
            epochs=self.epochs,
            batch=self.batch,
            seed=self.seed,
            truncate_rank=self.truncate_rank if truncating else None,
            truncate_base=self.truncate_base and truncating,
        )


@dataclass(frozen=True)
class SkippedRun:
    method: str
    budget: int | None
    seed: int
    reason: str


@dataclass
class SweepResult:
    reports: list[RunReport] = field(default_factory=list)
    skipped: list[SkippedRun] = field(default_factory=list)

    def extend(self, other: "SweepResult") -> None:
        self.reports.extend(other.reports)
        self.skipped.extend(other.skipped)

    def by_family(self, family: MethodFamily | str) -> list[RunReport]:
        family = MethodFamily(family)
        return [r for r in self.reports if r.config.method.family == family]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "method": r.method,
                "variant": r.variant,
                "trainable_params": r.trainable_params,
                "final_loss": r.final_loss,
                "recovery": r.recovery,
                "seed": r.config.seed,
                "wall_ms": round(r.wall_ms, 3),
            }
            for r in self.reports
        ]
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)

    def frontier_frame(self) -> pd.DataFrame:
        return frontier_table(self.to_frame())


def resolve_budget(family: MethodFamily | str, budget: int, d1: int, d2: int, seed: int = 0) -> MethodSpec | None:
    """Largest configuration of the family whose trainable count fits in budget"""
    family = MethodFamily(family)
    smallest = min(d1, d2)
    if family == MethodFamily.SVFT_P:
        return MethodSpec(family=family) if smallest <= budget else None
    if family == MethodFamily.SVFT_B:
        best = None
        for d in range(max(d1, d2)):
            if len(banded(d1, d2, d)) > budget:
                break
            best = d
        return None if best is None else MethodSpec(family=family, knob=best)
    if family == MethodFamily.SVFT_R:
        if budget < smallest:
            return None
        return MethodSpec(family=family, knob=min(budget, d1 * d2), seed=seed)
    if family == MethodFamily.SVFT_T:
        if d1 != d2 or budget < 1:
            return None
        return MethodSpec(family=family, knob=min(budget, d1 * d2))
    if family == MethodFamily.LORA:
        r = budget // (d1 + d2)
    elif family == MethodFamily.DORA:
        r = (budget - d2) // (d1 + d2)
    elif family == MethodFamily.VERA:
        r = budget - d1
    else:
        return MethodSpec(family=family) if d1 * d2 <= budget else None
    return MethodSpec(family=family, knob=r, seed=seed if family == MethodFamily.VERA else 0) if r >= 1 else None


def _expand_jobs(methods, budgets, d1, d2, seed) -> tuple[list[MethodSpec], list[SkippedRun]]:
    jobs: list[MethodSpec] = []
    skipped: list[SkippedRun] = []
    for entry in methods:
        if isinstance(entry, MethodSpec):
            candidates = [(entry, None)]
        elif ":" in str(entry):
            candidates = [(MethodSpec.parse(str(entry)), None)]
        else:
            family = MethodFamily(entry.value if isinstance(entry, MethodFamily) else str(entry).strip().lower())
            if not budgets:
                if family in KNOB_NAMES:
                    raise ConfigError(f"{family.value} needs an explicit {KNOB_NAMES[family]} when no budgets are given")
                candidates = [(MethodSpec(family=family), None)]
            else:
                candidates = [(resolve_budget(family, b, d1, d2, seed), b) for b in budgets]
            for spec, b in candidates:
                if spec is None:
                    reason = f"no {family.value} configuration fits {b} trainable parameters for {d1}x{d2}"
                    logger.warning("Skipping budget: %s", reason)
                    skipped.append(SkippedRun(family.value, b, seed, reason))
        for spec, _ in candidates:
            if spec is not None and spec not in jobs:
                jobs.append(spec)
    return jobs, skipped


def budget_sweep(task: Task, methods: list, budgets: list[int], plan: TrainingPlan | None = None, threads: int = 1) -> SweepResult:
    """
    One run per (method, nearest feasible budget). Methods are bare families
    resolved against every budget, or explicit specs such as "lora:2". With no
    budgets, svft-p and full run as they are.
    """
    plan = plan or TrainingPlan()
    d1, d2 = task.shape
    jobs, skipped = _expand_jobs(methods, budgets, d1, d2, plan.seed)
    factors = svd(task.w_pretrained)
    reference = task.reference_loss()

    def run(spec: MethodSpec) -> RunReport | SkippedRun:
        try:
            return train_adapter(task, plan.config_for(spec), factors=factors, reference_loss=reference)
        except (DivergenceError, BudgetError, UnsupportedShapeError, ZeroColumnError) as e:
            logger.warning("Run %s (seed %d) skipped: %s", spec.label, plan.seed, e)
            return SkippedRun(spec.label, None, plan.seed, str(e))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(spec) for spec in jobs]

    result = SweepResult(skipped=skipped)
    for outcome in outcomes:
        if isinstance(outcome, RunReport):
            result.reports.append(outcome)
        else:
            result.skipped.append(outcome)
    result.reports.sort(key=lambda r: (r.method, r.trainable_params, r.config.method.label))
    return result


def pareto_frontier(reports: list[RunReport]) -> list[tuple[int, float]]:
    """(trainable_params, final_loss) points no cheaper run beats"""
    frontier = []
    best = math.inf
    for report in sorted(reports, key=lambda r: (r.trainable_params, r.final_loss)):
        if report.final_loss < best:
            best = report.final_loss
            frontier.append((report.trainable_params, report.final_loss))
    return frontier


def frontier_table(frame: pd.DataFrame) -> pd.DataFrame:
    """Per-family frontier of sweep rows, losses averaged over seeds first"""
    columns = ["family", "trainable_params", "final_loss"]
    if frame.empty:
        return pd.DataFrame(columns=columns)
    means = frame.groupby(["method", "variant", "trainable_params"], as_index=False)["final_loss"].mean()
    rows = []
    for family, group in means.groupby("method"):
        best = math.inf
        for params, loss in group.sort_values(["trainable_params", "final_loss"])[["trainable_params", "final_loss"]].itertuples(index=False):
            if loss < best:
                best = loss
                rows.append({"family": family, "trainable_params": int(params), "final_loss": float(loss)})
    return pd.DataFrame(rows, columns=columns)


def frontier_loss(frontier: list[tuple[int, float]], budget: int) -> float:
    """Best loss reachable within budget, inf if nothing fits"""
    losses = [loss for params, loss in frontier if params <= budget]
    return min(losses) if losses else math.inf


def frontier_dominates(a: list[RunReport], b: list[RunReport]) -> bool:
    """True if a's frontier is at least as good as b's at every budget where b has a point"""
    front_a = pareto_frontier(a)
    front_b = pareto_frontier(b)
    return all(frontier_loss(front_a, params) <= loss for params, loss in front_b)


def pattern_ablation(task: Task, budget: int, plan: TrainingPlan | None = None) -> SweepResult:
    """Plain, Banded, Random and Top-k at (nearest feasible) matched coefficient budgets"""
    families = [MethodFamily.SVFT_P, MethodFamily.SVFT_B, MethodFamily.SVFT_R]
    if task.shape[0] == task.shape[1]:
        families.append(MethodFamily.SVFT_T)
    return budget_sweep(task, families, [budget], plan)


@dataclass
class WeightQualityResult:
    rows: pd.DataFrame
    delta: pd.DataFrame


def weight_quality_study(task: Task, checkpoints: list[np.ndarray], methods: list, plan: TrainingPlan | None = None) -> WeightQualityResult:
    """
    Train every method from every checkpoint. Checkpoints are ordered from
    worst to best; delta_perf is the loss drop from the worst to the best one.
    """
    plan = plan or TrainingPlan()
    if not checkpoints:
        raise ConfigError("weight_quality_study needs at least one checkpoint")
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.parse(str(m)) for m in methods]
    rows = []
    for index, checkpoint in enumerate(checkpoints):
        if checkpoint.shape != task.shape:
            raise ConfigError(f"Checkpoint {index} is {checkpoint.shape}, task is {task.shape}")
        variant = replace(task, w_pretrained=checkpoint)
        factors = svd(checkpoint)
        reference = variant.reference_loss()
        distance = frobenius(checkpoint - task.w_teacher)
        for spec in specs:
            report = train_adapter(variant, plan.config_for(spec), factors=factors, reference_loss=reference)
            rows.append(
                {
                    "method": spec.label,
                    "checkpoint": index,
                    "teacher_distance": distance,
                    "trainable_params": report.trainable_params,
                    "final_loss": report.final_loss,
                    "recovery": report.recovery,
                }
            )
    frame = pd.DataFrame(rows)
    last = len(checkpoints) - 1
    delta_rows = []
    for spec in specs:
        mine = frame[frame["method"] == spec.label].set_index("checkpoint")["final_loss"]
        delta_rows.append(
            {
                "method": spec.label,
                "worst_loss": float(mine[0]),
                "best_loss": float(mine[last]),
                "delta_perf": float(mine[0] - mine[last]),
            }
        )
    return WeightQualityResult(rows=frame, delta=pd.DataFrame(delta_rows))


@dataclass
class TruncationResult:
    truncated: RunReport
    full: RunReport

    @property
    def loss_ratio(self) -> float:
        return self.truncated.final_loss / max(self.full.final_loss, 1e-300)


def truncation_study(
    task: Task,
    rank: int,
    band_truncated: int,
    band_full: int,
    plan: TrainingPlan | None = None,
    truncate_base: bool = True,
) -> TruncationResult:
    """Banded SVFT restricted to the leading `rank` directions against a full-rank run"""
    plan = plan or TrainingPlan()
    factors = svd(task.w_pretrained)
    reference = task.reference_loss()
    truncated_plan = plan.model_copy(update={"truncate_rank": rank, "truncate_base": truncate_base})
    full_plan = plan.model_copy(update={"truncate_rank": None, "truncate_base": False})
    truncated = train_adapter(
        task, truncated_plan.config_for(MethodSpec(family=MethodFamily.SVFT_B, knob=band_truncated)),
        factors=factors, reference_loss=reference,
    )
    full = train_adapter(
        task, full_plan.config_for(MethodSpec(family=MethodFamily.SVFT_B, knob=band_full)),
        factors=factors, reference_loss=reference,
    )
    logger.info(
        "Truncation study: rank %d (%d params) loss %.4e vs full rank (%d params) loss %.4e",
        rank, truncated.trainable_params, truncated.final_loss, full.trainable_params, full.final_loss,
    )
    return TruncationResult(truncated=truncated, full=full)
