"""
The SVFT adapter: h = U (Sigma + M) V^T x with M sparse on a fixed pattern.

U, Sigma and V come from the SVD of the frozen weight and never change. Only
the coefficients m_ij on the pattern are trainable; they are stored as a
vector in pattern order and materialised densely only by delta_w and fuse.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from adapters.patterns import SparsityPattern, restrict
from numerics.decompositions import SVDFactors, numerical_rank, svd
from numerics.errors import RankError, ShapeError, SpectrumDegeneracyError
from numerics.matrix import as_matrix, frobenius

logger = logging.getLogger(__name__)

ALIGNMENT_TOL = 1e-8
SEPARATION = 1e-6


@dataclass(eq=False)
class SVFTAdapter:
    factors: SVDFactors
    pattern: SparsityPattern
    values: np.ndarray
    effective_rank: int
    # drop the frozen singular tail beyond effective_rank as well (destructive ablation)
    truncate_base: bool = False

    def __post_init__(self):
        if (self.pattern.d1, self.pattern.d2) != (self.factors.d1, self.factors.d2):
            raise ShapeError(
                f"Pattern is {self.pattern.d1}x{self.pattern.d2} but factors are {self.factors.d1}x{self.factors.d2}"
            )
        if self.values.shape != (len(self.pattern),):
            raise ShapeError(f"Expected {len(self.pattern)} coefficient values, got shape {self.values.shape}")
        if not 1 <= self.effective_rank <= self.factors.min_dim:
            raise RankError(f"Effective rank {self.effective_rank} outside [1, {self.factors.min_dim}]")
        if self.effective_rank < self.factors.min_dim:
            r = self.effective_rank
            if np.any(self.pattern.rows >= r) or np.any(self.pattern.cols >= r):
                raise RankError(f"Pattern reaches outside the leading {r}x{r} block")

    @property
    def d1(self) -> int:
        return self.factors.d1

    @property
    def d2(self) -> int:
        return self.factors.d2

    @property
    def num_trainable(self) -> int:
        return len(self.values)

    def frozen_spectrum(self) -> np.ndarray:
        s = self.factors.s.copy()
        if self.truncate_base:
            s[self.effective_rank:] = 0.0
        return s


def init_adapter(w0, pattern: SparsityPattern, factors: SVDFactors | None = None) -> SVFTAdapter:
    """Zero-initialised adapter, so the adapted map starts as exactly W0"""
    w0 = as_matrix(w0, "w0")
    if w0.shape != (pattern.d1, pattern.d2):
        raise ShapeError(f"Pattern is {pattern.d1}x{pattern.d2} but w0 is {w0.shape[0]}x{w0.shape[1]}")
    if factors is None:
        factors = svd(w0)
    return SVFTAdapter(
        factors=factors,
        pattern=pattern,
        values=np.zeros(len(pattern)),
        effective_rank=factors.min_dim,
    )


def coefficient_matrix(a: SVFTAdapter) -> np.ndarray:
    m = np.zeros((a.d1, a.d2))
    m[a.pattern.rows, a.pattern.cols] = a.values
    return m


def _spectral_matrix(a: SVFTAdapter) -> np.ndarray:
    """Sigma + M as a dense d1 x d2 matrix"""
    m = coefficient_matrix(a)
    k = a.factors.min_dim
    m[np.arange(k), np.arange(k)] += a.frozen_spectrum()
    return m


def forward(a: SVFTAdapter, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != a.d2:
        raise ShapeError(f"Input has {x.shape[0]} rows, adapter expects {a.d2}")
    k = a.factors.min_dim
    y = a.factors.v.T @ x
    z = np.zeros((a.d1, x.shape[1]))
    z[:k] = a.frozen_spectrum()[:, None] * y[:k]
    np.add.at(z, a.pattern.rows, a.values[:, None] * y[a.pattern.cols])
    return a.factors.u @ z


def delta_w(a: SVFTAdapter) -> np.ndarray:
    """U M V^T, the sum of m_ij u_i v_j^T over the pattern"""
    return a.factors.u @ coefficient_matrix(a) @ a.factors.v.T


def fuse(a: SVFTAdapter) -> np.ndarray:
    """W0 + delta W as one dense matrix, so inference needs no adapter"""
    return a.factors.u @ _spectral_matrix(a) @ a.factors.v.T


def grad_values(a: SVFTAdapter, upstream) -> np.ndarray:
    """dL/dm_ij = u_i^T G v_j for G = dL/d(W0 + delta W)"""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (a.d1, a.d2):
        raise ShapeError(f"Upstream gradient is {upstream.shape}, adapter is {a.d1}x{a.d2}")
    projected = a.factors.u.T @ upstream @ a.factors.v
    return projected[a.pattern.rows, a.pattern.cols]


def update_rank(a: SVFTAdapter, tol: float = 1e-9) -> int:
    return numerical_rank(delta_w(a), tol)


def solve_expressivity(w0, target, rank: int | None = None) -> np.ndarray:
    """
    Dense M with W0 + U M V^T = target. With rank set, M is restricted to its
    leading rank x rank block and the target is only matched in that subspace.
    """
    w0 = as_matrix(w0, "w0")
    target = as_matrix(target, "target")
    if w0.shape != target.shape:
        raise ShapeError(f"w0 is {w0.shape} but target is {target.shape}")
    factors = svd(w0)
    m = factors.u.T @ (target - w0) @ factors.v
    if rank is not None:
        if not 1 <= rank <= factors.min_dim:
            raise RankError(f"Rank {rank} outside [1, {factors.min_dim}]")
        restricted = np.zeros_like(m)
        restricted[:rank, :rank] = m[:rank, :rank]
        m = restricted
    return m


def project_target(a: SVFTAdapter, target) -> SVFTAdapter:
    """
    Adapter whose values are the least-squares fit of fuse(a) to target.
    Exact coordinate read-off because U and V are orthogonal.
    """
    target = as_matrix(target, "target")
    if target.shape != (a.d1, a.d2):
        raise ShapeError(f"Target is {target.shape}, adapter is {a.d1}x{a.d2}")
    residual = target - fuse(replace(a, values=np.zeros_like(a.values)))
    coords = a.factors.u.T @ residual @ a.factors.v
    return replace(a, values=coords[a.pattern.rows, a.pattern.cols].copy())


def truncate(a: SVFTAdapter, r: int, truncate_base: bool = False) -> SVFTAdapter:
    """
    Restrict the update to the leading r singular directions.
    W0 stays exact unless truncate_base also drops its tail.
    """
    k = a.factors.min_dim
    if not 1 <= r <= k:
        raise RankError(f"Truncation rank {r} outside [1, {k}]")
    if r == k and not truncate_base:
        return replace(a, values=a.values.copy())
    pattern = restrict(a.pattern, r)
    keep = (a.pattern.rows < r) & (a.pattern.cols < r)
    logger.debug("Truncated %s to rank %d, %d of %d coefficients kept", a.pattern.describe(), r, int(keep.sum()), len(keep))
    return SVFTAdapter(
        factors=a.factors,
        pattern=pattern,
        values=a.values[keep].copy(),
        effective_rank=r,
        truncate_base=truncate_base,
    )


@dataclass(frozen=True, eq=False)
class StructureReport:
    u_alignment: np.ndarray
    v_alignment: np.ndarray
    expected_spectrum: np.ndarray
    recomputed_spectrum: np.ndarray
    tolerance: float = ALIGNMENT_TOL

    @property
    def min_alignment(self) -> float:
        return float(min(self.u_alignment.min(), self.v_alignment.min()))

    @property
    def spectrum_error(self) -> float:
        scale = float(self.expected_spectrum.max())
        return float(np.max(np.abs(self.expected_spectrum - self.recomputed_spectrum))) / scale

    @property
    def passed(self) -> bool:
        return self.min_alignment >= 1.0 - self.tolerance and self.spectrum_error <= self.tolerance


def singular_vector_alignment(before: SVDFactors, after: SVDFactors, matching) -> tuple[np.ndarray, np.ndarray]:
    """|u_i^T u'_m(i)| and |v_i^T v'_m(i)| for each leading column i"""
    matching = np.asarray(matching, dtype=np.int64)
    count = len(matching)
    u_align = np.abs(np.einsum("ij,ij->j", before.u[:, :count], after.u[:, matching]))
    v_align = np.abs(np.einsum("ij,ij->j", before.v[:, :count], after.v[:, matching]))
    return u_align, v_align


def _check_separated(values: np.ndarray, what: str, nonzero: bool = True) -> None:
    top = float(values.max())
    if top <= 0.0:
        raise SpectrumDegeneracyError(f"{what} is identically zero")
    if nonzero and float(values.min()) <= SEPARATION * top:
        raise SpectrumDegeneracyError(f"{what} has a (near) zero entry")
    ordered = np.sort(values)
    if len(ordered) > 1 and float(np.min(np.diff(ordered))) <= SEPARATION * top:
        raise SpectrumDegeneracyError(f"{what} has entries closer than {SEPARATION:g} relative")


def verify_plain_structure(w0, diag_values, decompose=svd) -> StructureReport:
    """
    Recompute the SVD of W0 + U diag(m) V^T and check its singular vectors
    match those of W0 up to sign and its spectrum equals |Sigma + m|.
    """
    w0 = as_matrix(w0, "w0")
    diag_values = np.asarray(diag_values, dtype=np.float64).ravel()
    factors = decompose(w0)
    k = factors.min_dim
    if diag_values.shape != (k,):
        raise ShapeError(f"Expected {k} diagonal values, got {diag_values.size}")
    _check_separated(factors.s, "Spectrum of w0", nonzero=False)
    shifted = np.abs(factors.s + diag_values)
    _check_separated(shifted, "Shifted spectrum |Sigma + M|")

    m = np.zeros(w0.shape)
    m[np.arange(k), np.arange(k)] = diag_values
    updated = decompose(w0 + factors.u @ m @ factors.v.T)

    matching = [int(np.argmin(np.abs(updated.s - value))) for value in shifted]
    u_align, v_align = singular_vector_alignment(factors, updated, matching)
    return StructureReport(
        u_alignment=u_align,
        v_alignment=v_align,
        expected_spectrum=np.sort(shifted)[::-1],
        recomputed_spectrum=updated.s.copy(),
    )


def structure_counterexample(w0, i: int, j: int, value: float, decompose=svd) -> float:
    """
    Minimum singular-vector alignment after adding one off-diagonal m_ij.
    Columns are matched in descending singular-value order.
    """
    w0 = as_matrix(w0, "w0")
    if i == j:
        raise ShapeError("Counterexample needs an off-diagonal position")
    factors = decompose(w0)
    m = np.zeros(w0.shape)
    m[i, j] = value
    updated = decompose(w0 + factors.u @ m @ factors.v.T)
    u_align, v_align = singular_vector_alignment(factors, updated, range(factors.min_dim))
    return float(min(u_align.min(), v_align.min()))
