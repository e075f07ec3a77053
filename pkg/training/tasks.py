"""
Teacher-student regression tasks.

The frozen base W_pretrained sits a known, structured perturbation away from
the teacher map, so whether a method can close the gap is decided by the
algebra of its update. Loss is ||pred - Y||_F^2 / (2 n) on a batch of n columns.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from adapters.patterns import banded
from numerics.decompositions import svd
from numerics.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


class PerturbationKind(str, Enum):
    LOW_RANK = "low_rank"
    SPARSE_SPECTRUM = "sparse_spectrum"
    DENSE = "dense"


@dataclass(frozen=True)
class Perturbation:
    kind: PerturbationKind
    size: int = 0

    @classmethod
    def parse(cls, text: str) -> "Perturbation":
        name, _, size = text.strip().partition(":")
        try:
            kind = PerturbationKind(name.strip())
            count = int(size) if size else 0
        except ValueError as e:
            raise ConfigError(f"Unknown perturbation {text!r}") from e
        if count < 0:
            raise ConfigError(f"Perturbation size must be nonnegative, got {count}")
        if kind != PerturbationKind.DENSE and not size:
            raise ConfigError(f"{kind.value} needs a size, e.g. {kind.value}:4")
        return cls(kind, count)


@dataclass(frozen=True, eq=False)
class Task:
    w_teacher: np.ndarray
    w_pretrained: np.ndarray
    inputs: np.ndarray  # d2 x n, one sample per column
    targets: np.ndarray
    noise_sigma: float
    head: np.ndarray | None = None  # frozen tanh head of the two-layer variant
    planted_support: tuple[tuple[int, int], ...] = ()

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.w_pretrained.shape

    def input_columns(self) -> list[np.ndarray]:
        return [self.inputs[:, [i]] for i in range(self.n_samples)]

    def predict(self, z: np.ndarray) -> np.ndarray:
        return z if self.head is None else self.head @ np.tanh(z)

    def loss_and_grad(self, z: np.ndarray, idx=None) -> tuple[float, np.ndarray]:
        """Loss on the selected columns and its gradient with respect to z = W x"""
        targets = self.targets if idx is None else self.targets[:, idx]
        n = z.shape[1]
        if self.head is None:
            residual = z - targets
            return 0.5 * float(np.sum(residual * residual)) / n, residual / n
        hidden = np.tanh(z)
        residual = self.head @ hidden - targets
        grad = (self.head.T @ residual) * (1.0 - hidden * hidden) / n
        return 0.5 * float(np.sum(residual * residual)) / n, grad

    def loss(self, z: np.ndarray) -> float:
        residual = self.predict(z) - self.targets
        return 0.5 * float(np.sum(residual * residual)) / z.shape[1]

    def reference_loss(self) -> float:
        """
        Full fine-tuning floor: the least-squares optimum for the linear task,
        the teacher's own loss for the two-layer task.
        """
        if self.head is not None:
            return self.loss(self.w_teacher @ self.inputs)
        solution, *_ = np.linalg.lstsq(self.inputs.T, self.targets.T, rcond=None)
        return self.loss(solution.T @ self.inputs)


def _planted_support(d1: int, d2: int, k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """k positions, diagonal first, then the first off-diagonal band"""
    diagonal = [(i, i) for i in range(min(d1, d2))]
    if k <= len(diagonal):
        picks = rng.choice(len(diagonal), size=k, replace=False)
        return sorted(diagonal[int(p)] for p in picks)
    band = [ij for ij in banded(d1, d2, 1).indices if ij[0] != ij[1]]
    if k > len(diagonal) + len(band):
        raise ConfigError(f"Cannot plant {k} coefficients in a {d1}x{d2} tridiagonal band")
    picks = rng.choice(len(band), size=k - len(diagonal), replace=False)
    return sorted(diagonal + [band[int(p)] for p in picks])


def _perturb(w_pre: np.ndarray, perturbation: Perturbation, strength: float, rng: np.random.Generator):
    d1, d2 = w_pre.shape
    if perturbation.kind == PerturbationKind.SPARSE_SPECTRUM:
        support = _planted_support(d1, d2, perturbation.size, rng)
        m_star = np.zeros((d1, d2))
        for i, j in support:
            m_star[i, j] = strength * rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
        factors = svd(w_pre)
        return w_pre + factors.u @ m_star @ factors.v.T, tuple(support)
    if perturbation.kind == PerturbationKind.LOW_RANK:
        r = perturbation.size
        if r == 0:
            return w_pre.copy(), ()
        b = rng.standard_normal((d1, r))
        a = rng.standard_normal((r, d2)) / np.sqrt(d2)
        return w_pre + strength * (b @ a) / np.sqrt(r), ()
    return w_pre + strength * rng.standard_normal((d1, d2)) / np.sqrt(d2), ()


def make_task(
    d1: int,
    d2: int,
    perturbation: Perturbation | str,
    seed: int,
    n_samples: int = 64,
    noise_sigma: float = 0.0,
    strength: float = 1.0,
) -> Task:
    if isinstance(perturbation, str):
        perturbation = Perturbation.parse(perturbation)
    if d1 < 1 or d2 < 1 or n_samples < 1:
        raise ShapeError(f"Task dimensions must be positive, got {d1}x{d2} with {n_samples} samples")
    if noise_sigma < 0:
        raise ConfigError(f"Noise sigma must be nonnegative, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    w_pre = rng.standard_normal((d1, d2)) / np.sqrt(d2)
    w_teacher, support = _perturb(w_pre, perturbation, strength, rng)
    inputs = rng.standard_normal((d2, n_samples))
    targets = w_teacher @ inputs + noise_sigma * rng.standard_normal((d1, n_samples))
    logger.debug("Built %dx%d %s task (seed %d, %d samples)", d1, d2, perturbation.kind.value, seed, n_samples)
    return Task(w_teacher, w_pre, inputs, targets, noise_sigma, planted_support=support)


def make_mlp_task(
    d1: int,
    d2: int,
    d_out: int,
    perturbation: Perturbation | str,
    seed: int,
    n_samples: int = 64,
    noise_sigma: float = 0.0,
    strength: float = 1.0,
) -> Task:
    """Two-layer variant: y = H tanh(W x) with the head H frozen"""
    linear = make_task(d1, d2, perturbation, seed, n_samples, 0.0, strength)
    rng = np.random.default_rng([seed, 1])
    head = rng.standard_normal((d_out, d1)) / np.sqrt(d1)
    targets = head @ np.tanh(linear.w_teacher @ linear.inputs)
    targets = targets + noise_sigma * rng.standard_normal(targets.shape)
    return replace(linear, targets=targets, noise_sigma=noise_sigma, head=head)


def checkpoint_at_distance(task: Task, distance: float) -> np.ndarray:
    """Base weight `distance` of the way from the teacher back to task.w_pretrained"""
    return task.w_teacher + distance * (task.w_pretrained - task.w_teacher)
