"""
Fixed sparsity patterns for the coefficient matrix M.

Four constructions are supported: Plain (the diagonal), Banded (half-width d
around the diagonal), Random (diagonal plus a seeded set of off-diagonal
positions) and Top-k (the k strongest |u_i^T v_j| alignments).
"""
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np

from numerics.decompositions import SVDFactors
from numerics.errors import BudgetError, PatternError, UnsupportedShapeError
from numerics.rng import MASK64, SplitMix64


class PatternKind(IntEnum):
    PLAIN = 0
    BANDED = 1
    RANDOM = 2
    TOP_K = 3


@dataclass(frozen=True)
class SparsityPattern:
    d1: int
    d2: int
    indices: tuple[tuple[int, int], ...]
    kind: PatternKind
    params: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise PatternError(f"Pattern dimensions must be positive, got {self.d1}x{self.d2}")
        if not self.indices:
            raise PatternError("A sparsity pattern needs at least one trainable position")
        previous = (-1, -1)
        for i, j in self.indices:
            if not (0 <= i < self.d1 and 0 <= j < self.d2):
                raise PatternError(f"Index ({i}, {j}) out of bounds for {self.d1}x{self.d2}")
            if (i, j) <= previous:
                raise PatternError(f"Indices must be strictly row-major sorted, ({i}, {j}) follows {previous}")
            previous = (i, j)

    def __len__(self) -> int:
        return len(self.indices)

    @cached_property
    def rows(self) -> np.ndarray:
        return np.array([i for i, _ in self.indices], dtype=np.int64)

    @cached_property
    def cols(self) -> np.ndarray:
        return np.array([j for _, j in self.indices], dtype=np.int64)

    def coefficient_mask(self) -> np.ndarray:
        mask = np.zeros((self.d1, self.d2), dtype=bool)
        mask[self.rows, self.cols] = True
        return mask

    def as_set(self) -> set[tuple[int, int]]:
        return set(self.indices)

    def describe(self) -> str:
        label = self.kind.name.lower()
        if self.params:
            label += "(" + ", ".join(str(p) for p in self.params) + ")"
        return f"{label} {self.d1}x{self.d2}, |Omega|={len(self)}"


def _diagonal(d1: int, d2: int) -> list[tuple[int, int]]:
    return [(i, i) for i in range(min(d1, d2))]


def plain(d1: int, d2: int) -> SparsityPattern:
    return SparsityPattern(d1, d2, tuple(_diagonal(d1, d2)), PatternKind.PLAIN)


def banded(d1: int, d2: int, d: int) -> SparsityPattern:
    if d < 0:
        raise PatternError(f"Band half-width must be nonnegative, got {d}")
    indices = tuple(
        (i, j)
        for i in range(d1)
        for j in range(max(0, i - d), min(d2, i + d + 1))
    )
    return SparsityPattern(d1, d2, indices, PatternKind.BANDED, (d,))


def random_budget_for_band(d1: int, d2: int, d: int) -> int:
    """Total Random budget matching the Banded pattern of half-width d"""
    return len(banded(d1, d2, d))


def random_pattern(d1: int, d2: int, total: int, seed: int) -> SparsityPattern:
    seed &= MASK64
    diagonal = _diagonal(d1, d2)
    if not len(diagonal) <= total <= d1 * d2:
        raise BudgetError(f"Random budget {total} outside [{len(diagonal)}, {d1 * d2}] for {d1}x{d2}")
    on_diagonal = set(diagonal)
    candidates = [(i, j) for i in range(d1) for j in range(d2) if (i, j) not in on_diagonal]
    picks = SplitMix64(seed).sample_positions(len(candidates), total - len(diagonal))
    chosen = sorted(diagonal + [candidates[p] for p in picks])
    return SparsityPattern(d1, d2, tuple(chosen), PatternKind.RANDOM, (total, seed))


def alignment_scores(factors: SVDFactors) -> np.ndarray:
    """|u_i^T v_j| for every (i, j)"""
    return np.abs(factors.u.T @ factors.v)


def top_k(factors: SVDFactors, k: int) -> SparsityPattern:
    d1, d2 = factors.d1, factors.d2
    if d1 != d2:
        raise UnsupportedShapeError(f"Top-k needs square factors, got {d1}x{d2}")
    if not 1 <= k <= d1 * d2:
        raise BudgetError(f"Top-k budget {k} outside [1, {d1 * d2}]")
    scores = alignment_scores(factors).ravel()
    order = np.lexsort((np.arange(scores.size), -scores))
    chosen = sorted((int(p) // d2, int(p) % d2) for p in order[:k])
    return SparsityPattern(d1, d2, tuple(chosen), PatternKind.TOP_K, (k,))


def restrict(pattern: SparsityPattern, r: int) -> SparsityPattern:
    """Keep only positions inside the leading r x r block"""
    kept = tuple((i, j) for i, j in pattern.indices if i < r and j < r)
    if not kept:
        raise PatternError(f"No trainable position of {pattern.describe()} survives rank {r}")
    return SparsityPattern(pattern.d1, pattern.d2, kept, pattern.kind, pattern.params)


def pattern_cardinality(pattern: SparsityPattern) -> int:
    return len(pattern.indices)


def pattern_from_spec(text: str, factors: SVDFactors) -> SparsityPattern:
    """Build a pattern from "plain", "banded:D", "random:TOTAL:SEED" or "topk:K" """
    name, *args = [part.strip() for part in text.strip().lower().split(":")]
    try:
        numbers = [int(a) for a in args]
    except ValueError:
        raise PatternError(f"Pattern arguments must be integers: {text!r}") from None
    d1, d2 = factors.d1, factors.d2
    arity = {"plain": 0, "banded": 1, "random": 2, "topk": 1}
    if name not in arity:
        raise PatternError(f"Unknown pattern {name!r}, expected one of {', '.join(arity)}")
    if len(numbers) != arity[name]:
        raise PatternError(f"Pattern {name} takes {arity[name]} argument(s), got {text!r}")
    if name == "plain":
        return plain(d1, d2)
    if name == "banded":
        return banded(d1, d2, numbers[0])
    if name == "random":
        return random_pattern(d1, d2, numbers[0], numbers[1])
    return top_k(factors, numbers[0])
