import numpy as np
import pytest

from adapters.patterns import (
    PatternKind,
    SparsityPattern,
    alignment_scores,
    banded,
    pattern_from_spec,
    plain,
    random_budget_for_band,
    random_pattern,
    restrict,
    top_k,
)
from numerics.decompositions import SVDFactors, svd
from numerics.errors import BudgetError, PatternError, UnsupportedShapeError


def _read_golden(path):
    return tuple(tuple(int(x) for x in line.split()) for line in path.read_text().splitlines() if line.strip())


@pytest.mark.parametrize("d1, d2", [(1, 1), (4, 4), (3, 6), (6, 3)])
def test_plain_is_the_diagonal(d1, d2):
    p = plain(d1, d2)
    assert p.indices == tuple((i, i) for i in range(min(d1, d2)))
    assert p.kind == PatternKind.PLAIN


def test_banded_examples():
    assert len(banded(4, 4, 1)) == 10
    assert banded(3, 3, 0).indices == plain(3, 3).indices
    assert len(banded(3, 3, 5)) == 9


@pytest.mark.parametrize("d", range(0, 6))
def test_banded_square_count(d):
    n = 8
    assert len(banded(n, n, d)) == n * (2 * d + 1) - d * (d + 1)


def test_banded_rectangular_matches_enumeration():
    p = banded(3, 7, 2)
    assert p.as_set() == {(i, j) for i in range(3) for j in range(7) if abs(i - j) <= 2}


def test_banded_rejects_negative_width():
    with pytest.raises(PatternError):
        banded(4, 4, -1)


def test_random_pattern_golden(golden_dir):
    expected = _read_golden(golden_dir / "random_pattern_4x4_total8_seed0.txt")
    assert random_pattern(4, 4, 8, seed=0).indices == expected


def test_random_pattern_contains_diagonal_and_is_seeded():
    p = random_pattern(5, 7, 15, seed=42)
    assert len(p) == 15
    assert plain(5, 7).as_set() <= p.as_set()
    assert p == random_pattern(5, 7, 15, seed=42)
    assert p != random_pattern(5, 7, 15, seed=43)


@pytest.mark.parametrize("total", [3, 17])
def test_random_pattern_budget_bounds(total):
    with pytest.raises(BudgetError):
        random_pattern(4, 4, total, seed=0)


def test_random_budget_matches_band():
    assert random_budget_for_band(6, 6, 1) == len(banded(6, 6, 1))


def test_top_k_picks_largest_alignments(rng):
    factors = svd(rng.standard_normal((5, 5)))
    p = top_k(factors, 6)
    scores = alignment_scores(factors)
    chosen = sorted((scores[i, j] for i, j in p.indices), reverse=True)
    rest = [scores[i, j] for i in range(5) for j in range(5) if (i, j) not in p.as_set()]
    assert len(p) == 6
    assert chosen[-1] >= max(rest)


def test_top_k_breaks_ties_row_major():
    factors = svd(np.eye(3))
    # identity: u_i = v_i, so the three diagonal scores are exactly 1 and the rest 0
    assert top_k(factors, 2).indices == ((0, 0), (1, 1))


def test_top_k_rejects_rectangular_and_bad_budget(rng):
    with pytest.raises(UnsupportedShapeError):
        top_k(svd(rng.standard_normal((3, 4))), 2)
    with pytest.raises(BudgetError):
        top_k(svd(rng.standard_normal((3, 3))), 10)


def test_pattern_validation():
    with pytest.raises(PatternError):
        SparsityPattern(2, 2, ((1, 1), (0, 0)), PatternKind.RANDOM)
    with pytest.raises(PatternError):
        SparsityPattern(2, 2, ((0, 2),), PatternKind.RANDOM)
    with pytest.raises(PatternError):
        SparsityPattern(2, 2, (), PatternKind.RANDOM)


def test_restrict_keeps_leading_block():
    p = restrict(banded(5, 5, 1), 2)
    assert p.indices == ((0, 0), (0, 1), (1, 0), (1, 1))
    assert p.kind == PatternKind.BANDED


def test_coefficient_mask():
    mask = banded(3, 3, 1).coefficient_mask()
    assert mask.sum() == 7
    assert not mask[0, 2]


@pytest.mark.parametrize("text, size", [("plain", 4), ("banded:1", 10), ("random:9:3", 9), ("topk:5", 5)])
def test_pattern_from_spec(text, size, rng):
    assert len(pattern_from_spec(text, svd(rng.standard_normal((4, 4))))) == size


@pytest.mark.parametrize("text", ["diag", "banded", "banded:x", "random:9"])
def test_pattern_from_spec_rejects_bad_text(text, rng):
    with pytest.raises(PatternError):
        pattern_from_spec(text, svd(rng.standard_normal((4, 4))))


@pytest.mark.parametrize("d1, d2", [(4, 4), (5, 3), (2, 7)])
def test_banded_patterns_nest(d1, d2):
    previous = plain(d1, d2).as_set()
    for d in range(max(d1, d2)):
        current = banded(d1, d2, d).as_set()
        assert previous <= current
        previous = current
    assert previous == {(i, j) for i in range(d1) for j in range(d2)}


def test_random_pattern_accepts_64_bit_seeds():
    top = random_pattern(4, 4, 9, 2**64 - 1)
    assert top.params == (9, 2**64 - 1)
    assert random_pattern(4, 4, 9, -1).indices == top.indices
    assert random_pattern(4, 4, 9, 2**63).params[1] == 2**63


@pytest.mark.parametrize("seed", range(10))
def test_top_k_ignores_singular_vector_signs(seed):
    rng = np.random.default_rng(seed)
    factors = svd(rng.standard_normal((5, 5)))
    flips = rng.choice([-1.0, 1.0], size=5)
    flipped = SVDFactors(factors.u * flips, factors.s, factors.v * flips)
    for k in (1, 6, 13, 25):
        assert top_k(flipped, k).indices == top_k(factors, k).indices
