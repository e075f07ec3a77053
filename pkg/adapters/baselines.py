"""
LoRA, VeRA and DoRA updates of a frozen weight, with analytic gradients.

All three start as exact identities: LoRA and DoRA zero B, VeRA zeroes
lambda_b. Gradients take G = dL/dW_eff (the gradient with respect to the
adapted weight) and return one array per trainable tensor.
"""
from dataclasses import dataclass

import numpy as np

from numerics.decompositions import qr
from numerics.errors import RankError, ShapeError, ZeroColumnError
from numerics.matrix import frobenius

MIN_COLUMN_NORM = 1e-12


def _check_input(w0: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != w0.shape[1]:
        raise ShapeError(f"Input has {x.shape[0]} rows, weight expects {w0.shape[1]}")
    return x


@dataclass(eq=False)
class LoRAAdapter:
    a: np.ndarray  # r x d2
    b: np.ndarray  # d1 x r

    @property
    def r(self) -> int:
        return self.a.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.a, self.b]


def init_lora(d1: int, d2: int, r: int, seed: int = 0) -> LoRAAdapter:
    if r < 1:
        raise RankError(f"LoRA rank must be at least 1, got {r}")
    rng = np.random.default_rng(seed)
    return LoRAAdapter(a=rng.standard_normal((r, d2)) / np.sqrt(r), b=np.zeros((d1, r)))


def lora_delta(a: LoRAAdapter) -> np.ndarray:
    return a.b @ a.a


def lora_forward(w0: np.ndarray, a: LoRAAdapter, x) -> np.ndarray:
    x = _check_input(w0, x)
    return w0 @ x + a.b @ (a.a @ x)


def lora_gradients(a: LoRAAdapter, upstream: np.ndarray) -> list[np.ndarray]:
    return [a.b.T @ upstream, upstream @ a.a.T]


@dataclass(eq=False)
class VeRAAdapter:
    a_hat: np.ndarray  # r x d2, frozen
    b_hat: np.ndarray  # d1 x r, frozen
    lambda_d: np.ndarray  # r
    lambda_b: np.ndarray  # d1
    seed: int

    @property
    def r(self) -> int:
        return self.a_hat.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.lambda_d, self.lambda_b]


def init_vera(d1: int, d2: int, r: int, seed: int = 0, d_init: float = 0.1) -> VeRAAdapter:
    """Frozen random projections are reproducible from the seed alone"""
    if r < 1:
        raise RankError(f"VeRA rank must be at least 1, got {r}")
    rng = np.random.default_rng(seed)
    return VeRAAdapter(
        a_hat=rng.standard_normal((r, d2)) / np.sqrt(d2),
        b_hat=rng.standard_normal((d1, r)) / np.sqrt(r),
        lambda_d=np.full(r, d_init),
        lambda_b=np.zeros(d1),
        seed=seed,
    )


def vera_delta(a: VeRAAdapter) -> np.ndarray:
    return a.lambda_b[:, None] * (a.b_hat @ (a.lambda_d[:, None] * a.a_hat))


def vera_rank_one_sum(a: VeRAAdapter) -> np.ndarray:
    """sum_k lambda_d[k] (b_hat_k * lambda_b) a_hat_k^T, one rank-one term per k"""
    delta = np.zeros((a.b_hat.shape[0], a.a_hat.shape[1]))
    for k in range(a.r):
        delta += a.lambda_d[k] * np.outer(a.b_hat[:, k] * a.lambda_b, a.a_hat[k])
    return delta


def vera_forward(w0: np.ndarray, a: VeRAAdapter, x) -> np.ndarray:
    x = _check_input(w0, x)
    return w0 @ x + a.lambda_b[:, None] * (a.b_hat @ (a.lambda_d[:, None] * (a.a_hat @ x)))


def vera_gradients(a: VeRAAdapter, upstream: np.ndarray) -> list[np.ndarray]:
    grad_d = np.sum((a.lambda_b[:, None] * a.b_hat) * (upstream @ a.a_hat.T), axis=0)
    grad_b = np.sum(upstream * (a.b_hat @ (a.lambda_d[:, None] * a.a_hat)), axis=1)
    return [grad_d, grad_b]


def vera_expressivity_gap(a: VeRAAdapter, target_delta: np.ndarray) -> float:
    """
    Lower bound on min ||vera_delta - target_delta||_F over all scaling vectors.
    Every reachable update lives in the row space of a_hat, so the part of the
    target orthogonal to it can never be produced.
    """
    q, _ = qr(a.a_hat.T)
    outside = target_delta - (target_delta @ q) @ q.T
    return frobenius(outside)


@dataclass(eq=False)
class DoRAAdapter:
    m: np.ndarray  # d2 column magnitudes
    lora: LoRAAdapter

    def parameters(self) -> list[np.ndarray]:
        return [self.m, self.lora.a, self.lora.b]


def column_norms(w: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(w * w, axis=0))


def init_dora(w0: np.ndarray, r: int, seed: int = 0) -> DoRAAdapter:
    d1, d2 = w0.shape
    return DoRAAdapter(m=column_norms(w0), lora=init_lora(d1, d2, r, seed))


def _directed(w0: np.ndarray, a: DoRAAdapter) -> tuple[np.ndarray, np.ndarray]:
    directed = w0 + lora_delta(a.lora)
    norms = column_norms(directed)
    if np.any(norms <= MIN_COLUMN_NORM):
        bad = int(np.argmin(norms))
        raise ZeroColumnError(f"Column {bad} of W0 + BA has norm {norms[bad]:.3e}")
    return directed, norms


def dora_weight(w0: np.ndarray, a: DoRAAdapter) -> np.ndarray:
    directed, norms = _directed(w0, a)
    return directed * (a.m / norms)


def dora_forward(w0: np.ndarray, a: DoRAAdapter, x) -> np.ndarray:
    x = _check_input(w0, x)
    return dora_weight(w0, a) @ x


def dora_gradients(w0: np.ndarray, a: DoRAAdapter, upstream: np.ndarray) -> list[np.ndarray]:
    """Exact gradients, the column norm is differentiated rather than detached"""
    directed, norms = _directed(w0, a)
    unit = directed / norms
    along = np.sum(upstream * unit, axis=0)
    grad_m = along
    grad_directed = (a.m / norms) * (upstream - unit * along)
    grad_a, grad_b = lora_gradients(a.lora, grad_directed)
    return [grad_m, grad_a, grad_b]
