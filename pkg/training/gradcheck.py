import logging

import numpy as np

from adapters.accounting import MethodSpec
from training.methods import build_method
from training.tasks import Task

logger = logging.getLogger(__name__)

# per-coordinate error is |analytic - numeric| / max(|analytic|, |numeric|, GRADIENT_FLOOR)
GRADIENT_FLOOR = 1e-3


def _randomise(method, rng: np.random.Generator, scale: float) -> None:
    """Move every trainable tensor off its identity initialisation"""
    for p in method.parameters():
        p += scale * rng.standard_normal(p.shape)


def finite_diff_check(spec: MethodSpec | str, task: Task, step: float = 1e-6, seed: int = 0, scale: float = 0.1) -> float:
    """Max relative error between analytic and central-difference gradients"""
    if not 1e-8 < step < 1e-3:
        raise ValueError(f"Finite-difference step must lie in (1e-8, 1e-3), got {step}")
    if isinstance(spec, str):
        spec = MethodSpec.parse(spec)
    method = build_method(spec, task.w_pretrained, init_seed=seed)
    _randomise(method, np.random.default_rng(seed), scale)

    def full_loss() -> float:
        return task.loss(method.forward(task.inputs))

    _, grad_z = task.loss_and_grad(method.forward(task.inputs))
    analytic = [g.copy() for g in method.gradients(grad_z @ task.inputs.T)]

    worst = 0.0
    for param, grad in zip(method.parameters(), analytic):
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus = full_loss()
            flat[i] = saved - step
            minus = full_loss()
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(flat_grad[i]), abs(numeric), GRADIENT_FLOOR)
            worst = max(worst, abs(flat_grad[i] - numeric) / denom)
    logger.info("Gradient check %s: max relative error %.3e", spec.label, worst)
    return worst
