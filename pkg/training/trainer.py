import logging
import math
import time

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from adapters.accounting import MethodSpec, trainable_params
from numerics.decompositions import SVDFactors
from numerics.errors import ConfigError, DivergenceError
from training.methods import build_method, num_trainable
from training.optimizers import OptimizerSpec, make_optimizer
from training.tasks import Task

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
TINY_LOSS = 1e-300


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: MethodSpec
    optimizer: OptimizerSpec = OptimizerSpec()
    epochs: int = Field(100, ge=0)
    batch: int | None = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    truncate_rank: int | None = Field(None, ge=1)
    truncate_base: bool = False


class RunReport(BaseModel):
    config: TrainConfig
    trainable_params: int
    loss_curve: list[float]
    initial_loss: float
    final_loss: float
    reference_loss: float
    recovery: float
    wall_ms: float = 0.0

    @property
    def method(self) -> str:
        return self.config.method.family.value

    @property
    def variant(self) -> str:
        parts = [self.config.method.variant]
        if self.config.truncate_rank is not None:
            parts.append(f"rank={self.config.truncate_rank}")
            if self.config.truncate_base:
                parts.append("base-truncated")
        return " ".join(p for p in parts if p)

    def to_json(self) -> str:
        return self.model_dump_json()


def recovery_ratio(initial: float, final: float, reference: float) -> float:
    """Fraction of the full fine-tuning loss reduction achieved, clipped to [0, 1]"""
    gap = initial - reference
    if gap <= 1e-15 * max(abs(initial), 1.0):
        return 0.0
    return float(min(1.0, max(0.0, (initial - final) / gap)))


def train_adapter(
    task: Task,
    config: TrainConfig,
    factors: SVDFactors | None = None,
    reference_loss: float | None = None,
) -> RunReport:
    started = time.perf_counter()
    d1, d2 = task.shape
    predicted = trainable_params(config.method, d1, d2, config.truncate_rank)
    method = build_method(
        config.method,
        task.w_pretrained,
        init_seed=config.seed,
        factors=factors,
        truncate_rank=config.truncate_rank,
        truncate_base=config.truncate_base,
    )
    counted = num_trainable(method)
    if counted != predicted:
        raise ConfigError(f"{config.method.label} has {counted} trainable scalars but the accountant predicts {predicted}")

    optimizer = make_optimizer(config.optimizer, method.parameters())
    rng = np.random.default_rng(config.seed)
    n = task.n_samples
    batch = min(config.batch or n, n)
    if reference_loss is None:
        reference_loss = task.reference_loss()

    initial = task.loss(method.forward(task.inputs))
    limit = DIVERGENCE_FACTOR * max(initial, TINY_LOSS)
    curve = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            x = task.inputs[:, idx]
            loss, grad_z = task.loss_and_grad(method.forward(x), idx)
            if not math.isfinite(loss) or loss > limit:
                raise DivergenceError(step, loss)
            optimizer.step(method.gradients(grad_z @ x.T))
            step += 1
        epoch_loss = task.loss(method.forward(task.inputs))
        if not math.isfinite(epoch_loss) or epoch_loss > limit:
            raise DivergenceError(step, epoch_loss)
        curve.append(epoch_loss)
        logger.debug("%s epoch %d loss %.6e", config.method.label, epoch, epoch_loss)

    final = curve[-1] if curve else initial
    report = RunReport(
        config=config,
        trainable_params=predicted,
        loss_curve=curve,
        initial_loss=initial,
        final_loss=final,
        reference_loss=reference_loss,
        recovery=recovery_ratio(initial, final, reference_loss) if curve else 0.0,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )
    logger.info(
        "Trained %s (%d params, seed %d): loss %.4e -> %.4e, recovery %.3f",
        config.method.label, predicted, config.seed, initial, final, report.recovery,
    )
    return report
