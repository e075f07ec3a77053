"""
Householder QR and a full one-sided Jacobi SVD.

The SVD orthogonalises the columns of the (tall) input with plane rotations.
Each sweep visits every column pair once using a round-robin tournament, so a
round rotates n/2 disjoint pairs in one vectorised numpy update. The result is
deterministic for a fixed input.
"""
import logging
from dataclasses import dataclass

import numpy as np

from numerics.errors import ConvergenceError, RankError
from numerics.matrix import as_matrix, frobenius

logger = logging.getLogger(__name__)

EPS = np.finfo(np.float64).eps
MAX_SWEEPS = 60
JACOBI_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SVDFactors:
    """Full SVD W = U diag(S) V^T with U d1xd1, S of length min(d1, d2), V d2xd2"""
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def d1(self) -> int:
        return self.u.shape[0]

    @property
    def d2(self) -> int:
        return self.v.shape[0]

    @property
    def min_dim(self) -> int:
        return len(self.s)


def qr(w: np.ndarray, complete: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """
    Householder QR with diag(R) >= 0.
    Thin by default (Q is d1 x min(d1, d2)); complete=True returns a square Q.
    """
    a = np.array(w, dtype=np.float64)
    m, n = a.shape
    k = min(m, n)
    reflectors = []
    for j in range(min(m - 1, n)):
        x = a[j:, j]
        norm_x = np.sqrt(x @ x)
        if norm_x == 0.0:
            reflectors.append(None)
            continue
        alpha = -norm_x if x[0] >= 0 else norm_x
        v = x.copy()
        v[0] -= alpha
        v /= np.sqrt(v @ v)
        a[j:, j:] -= 2.0 * np.outer(v, v @ a[j:, j:])
        reflectors.append(v)

    q_cols = m if complete else k
    q = np.eye(m, q_cols)
    for j in reversed(range(len(reflectors))):
        v = reflectors[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    r = np.triu(a)[:q_cols, :]

    signs = np.ones(q_cols)
    diag = np.diag(r)
    signs[: len(diag)] = np.where(diag < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


def orthonormality_residual(q: np.ndarray) -> float:
    return frobenius(q.T @ q - np.eye(q.shape[1]))


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_basis(lead: np.ndarray, m: int) -> np.ndarray:
    k = lead.shape[1]
    if k == 0:
        return np.eye(m)
    if k == m:
        return lead.copy()
    q, _ = qr(lead, complete=True)
    return np.hstack([lead, q[:, k:]])


def _jacobi_tall(a: np.ndarray, max_sweeps: int, tol: float):
    m, n = a.shape
    v = np.eye(n)
    magnitude = float(np.max(np.abs(a)))
    if magnitude == 0.0:
        return np.eye(m), np.zeros(n), v
    # sums of squares of the raw entries under- or overflow beyond about 1e+-154
    work = a / magnitude
    scale = frobenius(work)

    negligible = (EPS * scale) ** 2
    rounds = _round_robin(n)
    residual = 0.0
    for sweep in range(max_sweeps):
        residual = 0.0
        rotated = False
        for p, q in rounds:
            ap = work[:, p]
            aq = work[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)

            live = (np.minimum(alpha, beta) > negligible) & (gamma != 0.0)
            ratio = np.zeros_like(gamma)
            ratio[live] = np.abs(gamma[live]) / np.sqrt(alpha[live] * beta[live])
            residual = max(residual, float(ratio.max()))
            active = ratio > tol
            if not active.any():
                continue
            rotated = True

            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)

            work[:, p] = c * ap - s * aq
            work[:, q] = s * ap + c * aq
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if not rotated:
            logger.debug("Jacobi SVD of %dx%d converged in %d sweeps", m, n, sweep + 1)
            break
    else:
        raise ConvergenceError(residual, max_sweeps)

    norms = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    s = norms * magnitude
    work = work[:, order]
    v = v[:, order]

    # anything at rounding level is an exact zero; its left vector comes from the completion
    keep = s > max(m, n) * EPS * s[0]
    k = int(keep.sum())
    s = np.where(keep, s, 0.0)
    u = _complete_basis(work[:, :k] / norms[:k], m)
    return u, s, v


def _apply_sign_convention(u: np.ndarray, s: np.ndarray, v: np.ndarray):
    k = len(s)
    cols = np.arange(u.shape[1])
    lead = u[np.argmax(np.abs(u), axis=0), cols]
    u_signs = np.where(lead < 0, -1.0, 1.0)

    v_signs = np.ones(v.shape[1])
    v_signs[:k] = u_signs[:k]
    if v.shape[1] > k:
        tail = v[:, k:]
        tail_lead = tail[np.argmax(np.abs(tail), axis=0), np.arange(tail.shape[1])]
        v_signs[k:] = np.where(tail_lead < 0, -1.0, 1.0)
    return u * u_signs, v * v_signs


def svd(w, *, max_sweeps: int = MAX_SWEEPS, tol: float = JACOBI_TOL) -> SVDFactors:
    """
    Full SVD of a finite matrix.
    For every column u_i the entry of largest magnitude is nonnegative (first
    such row on ties) and v_i carries the matching sign.
    """
    w = as_matrix(w, "w")
    d1, d2 = w.shape
    if d1 >= d2:
        u, s, v = _jacobi_tall(w, max_sweeps, tol)
    else:
        v, s, u = _jacobi_tall(w.T, max_sweeps, tol)
    u, v = _apply_sign_convention(u, s, v)
    return SVDFactors(u=u, s=s, v=v)


def reconstruct(factors: SVDFactors) -> np.ndarray:
    k = factors.min_dim
    return (factors.u[:, :k] * factors.s) @ factors.v[:, :k].T


def numerical_rank(w, tol: float = 1e-9) -> int:
    """Count of singular values above tol * max(S)"""
    if tol <= 0:
        raise RankError(f"Rank tolerance must be positive, got {tol}")
    s = svd(w).s
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
