"""
Property suites behind `svft_cli.py verify`.

Each suite returns CheckResult rows; docs/verification.md maps every check to
the invariant it guards. Faults swap in a broken decomposition for the svd and
structure suites: "sign" negates v_0 alone, which breaks reconstruction, and
"sign-convention" negates u_0 and v_0 together, which only breaks the sign rule.
"""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from adapters import baselines, svft
from adapters.accounting import MethodFamily, MethodSpec, param_count
from adapters.patterns import PatternKind, banded, plain, random_pattern, top_k
from numerics.decompositions import SVDFactors, numerical_rank, orthonormality_residual, qr, reconstruct, svd
from numerics.errors import UnsupportedShapeError
from numerics.matrix import frobenius
from training.gradcheck import finite_diff_check
from training.methods import build_method, num_trainable
from training.tasks import make_task

logger = logging.getLogger(__name__)

FAULTS = ("sign", "sign-convention")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    check: str
    passed: bool
    detail: str = ""


def flipped_sign_svd(w) -> SVDFactors:
    """svd with v_0 negated, breaking U diag(S) V^T = W"""
    factors = svd(w)
    v = factors.v.copy()
    v[:, 0] = -v[:, 0]
    return SVDFactors(factors.u, factors.s, v)


def flipped_convention_svd(w) -> SVDFactors:
    """svd with u_0 and v_0 negated together; still a valid SVD, wrong sign convention"""
    factors = svd(w)
    u, v = factors.u.copy(), factors.v.copy()
    u[:, 0] = -u[:, 0]
    v[:, 0] = -v[:, 0]
    return SVDFactors(u, factors.s, v)


DECOMPOSITIONS: dict[str | None, Callable[..., SVDFactors]] = {
    None: svd,
    "sign": flipped_sign_svd,
    "sign-convention": flipped_convention_svd,
}


def _orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = qr(rng.standard_normal((n, n)))
    return q


def _separated_base(d: int, rng: np.random.Generator) -> np.ndarray:
    spectrum = np.arange(d, 0, -1, dtype=np.float64) + 1.0
    return _orthogonal(d, rng) @ np.diag(spectrum) @ _orthogonal(d, rng).T


def _check(suite: str, check: str, passed: bool, detail: str = "") -> CheckResult:
    return CheckResult(suite, check, bool(passed), detail)


def suite_svd(decompose: Callable = svd) -> list[CheckResult]:
    rng = np.random.default_rng(0)
    worst_recon = worst_ortho = worst_repeat = 0.0
    ordered = signs = True
    for trial in range(40):
        d1, d2 = int(rng.integers(1, 13)), int(rng.integers(1, 13))
        w = rng.standard_normal((d1, d2))
        if trial % 5 == 4 and min(d1, d2) > 1:
            w[:, -1] = w[:, 0]
        f = decompose(w)
        worst_recon = max(worst_recon, frobenius(reconstruct(f) - w) / frobenius(w))
        worst_ortho = max(
            worst_ortho,
            orthonormality_residual(f.u) / d1,
            orthonormality_residual(f.v) / d2,
        )
        ordered &= bool(np.all(f.s >= 0) and np.all(np.diff(f.s) <= 0))
        lead = f.u[np.argmax(np.abs(f.u), axis=0), np.arange(d1)]
        signs &= bool(np.all(lead >= 0))
        again = decompose(reconstruct(f))
        k = int(np.sum(f.s > 1e-8 * f.s[0]))
        worst_repeat = max(
            worst_repeat,
            float(np.max(np.abs(again.s - f.s))) / f.s[0],
            float(np.max(np.abs(again.u[:, :k] - f.u[:, :k]))),
            float(np.max(np.abs(again.v[:, :k] - f.v[:, :k]))),
        )
    g = rng.standard_normal((9, 5))
    q, r = qr(g)
    qr_residual = frobenius(q @ r - g) / frobenius(g)
    return [
        _check("svd", "reconstruction <= 1e-10 ||W||", worst_recon <= 1e-10, f"{worst_recon:.2e}"),
        _check("svd", "orthonormality <= 1e-10 dim", worst_ortho <= 1e-10, f"{worst_ortho:.2e}"),
        _check("svd", "singular values descending, nonnegative", ordered),
        _check("svd", "largest |u| entry nonnegative", signs),
        _check("svd", "svd of its own reconstruction is unchanged", worst_repeat <= 1e-8, f"{worst_repeat:.2e}"),
        _check(
            "svd", "qr reconstructs with orthonormal Q",
            qr_residual <= 1e-12 and orthonormality_residual(q) <= 1e-12 and np.allclose(np.tril(r, -1), 0),
            f"{qr_residual:.1e}",
        ),
    ]


def suite_patterns() -> list[CheckResult]:
    rng = np.random.default_rng(1)
    cards = sorted_ok = deterministic = nested = True
    for _ in range(30):
        d1, d2 = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        d = int(rng.integers(0, 4))
        nested &= plain(d1, d2).as_set() == banded(d1, d2, 0).as_set()
        nested &= banded(d1, d2, d).as_set() <= banded(d1, d2, d + 1).as_set()
        cards &= len(plain(d1, d2)) == min(d1, d2)
        band = banded(d1, d2, d)
        cards &= len(band) == sum(1 for i in range(d1) for j in range(d2) if abs(i - j) <= d)
        total = int(rng.integers(min(d1, d2), d1 * d2 + 1))
        first = random_pattern(d1, d2, total, seed=7)
        deterministic &= first == random_pattern(d1, d2, total, seed=7)
        cards &= len(first) == total and plain(d1, d2).as_set() <= first.as_set()
        sorted_ok &= list(band.indices) == sorted(band.indices) and list(first.indices) == sorted(first.indices)
    factors = svd(rng.standard_normal((6, 6)))
    top = top_k(factors, 5)
    scores = np.abs(factors.u.T @ factors.v)
    kept = min(scores[i, j] for i, j in top.indices)
    dropped = max(scores[i, j] for i in range(6) for j in range(6) if (i, j) not in top.as_set())
    flips = rng.choice([-1.0, 1.0], size=(2, 6))
    flipped = SVDFactors(factors.u * flips[0], factors.s, factors.v * flips[1])
    unsigned = all(top_k(flipped, k).indices == top_k(factors, k).indices for k in (1, 5, 12, 36))
    try:
        top_k(svd(rng.standard_normal((4, 6))), 3)
        rejects = False
    except UnsupportedShapeError:
        rejects = True
    return [
        _check("patterns", "cardinalities", cards),
        _check("patterns", "row-major order", sorted_ok),
        _check("patterns", "random pattern is seeded", deterministic),
        _check("patterns", "plain is banded(0) and bands nest", nested),
        _check("patterns", "top-k keeps the strongest alignments", kept >= dropped),
        _check("patterns", "top-k ignores singular vector signs", unsigned),
        _check("patterns", "top-k rejects rectangular factors", rejects),
    ]


def suite_structure(decompose: Callable = svd) -> list[CheckResult]:
    rng = np.random.default_rng(2)
    worst = 1.0
    spectrum_error = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 8))
        w0 = _separated_base(d, rng)
        report = svft.verify_plain_structure(w0, rng.uniform(-0.25, 0.25, d), decompose=decompose)
        worst = min(worst, report.min_alignment)
        spectrum_error = max(spectrum_error, report.spectrum_error)
    counter = svft.structure_counterexample(_separated_base(4, rng), 0, 1, 1.0, decompose=decompose)
    return [
        _check("structure", "diagonal M keeps singular vectors", worst >= 1 - svft.ALIGNMENT_TOL, f"min alignment {worst:.12f}"),
        _check("structure", "spectrum becomes |Sigma + M|", spectrum_error <= svft.ALIGNMENT_TOL, f"{spectrum_error:.2e}"),
        _check("structure", "off-diagonal M rotates singular vectors", counter < 1 - 1e-3, f"alignment {counter:.6f}"),
    ]


def suite_expressivity() -> list[CheckResult]:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        d1, d2 = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        w0, target = rng.standard_normal((d1, d2)), rng.standard_normal((d1, d2))
        m = svft.solve_expressivity(w0, target)
        f = svd(w0)
        worst = max(worst, frobenius(w0 + f.u @ m @ f.v.T - target) / frobenius(target))
    return [_check("expressivity", "full M reaches any target", worst <= 1e-9, f"{worst:.2e}")]


def suite_rank() -> list[CheckResult]:
    rng = np.random.default_rng(4)
    violations = 0
    equal = True
    for _ in range(30):
        d1, d2 = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        w0 = rng.standard_normal((d1, d2))
        factors = svd(w0)
        patterns = [plain(d1, d2), banded(d1, d2, 1), random_pattern(d1, d2, min(d1 * d2, min(d1, d2) + 3), 11)]
        if d1 == d2:
            patterns.append(top_k(factors, min(20, d1 * d2 // 2)))
        for pattern in patterns:
            a = svft.init_adapter(w0, pattern, factors)
            a.values[:] = rng.uniform(0.5, 1.5, len(pattern))
            rank = svft.update_rank(a)
            violations += rank > min(len(pattern), min(d1, d2))
            if pattern.kind == PatternKind.PLAIN:
                equal &= rank == min(d1, d2)
    invariant = True
    for _ in range(10):
        d1, d2 = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        r = int(rng.integers(1, min(d1, d2) + 1))
        w = rng.standard_normal((d1, r)) @ rng.standard_normal((r, d2))
        invariant &= numerical_rank(w) == r == numerical_rank(_orthogonal(d1, rng) @ w @ _orthogonal(d2, rng))
    return [
        _check("rank", "rank(U M V^T) <= min(|Omega|, min(d1, d2))", violations == 0, f"{violations} violations"),
        _check("rank", "diagonal support attains the bound", equal),
        _check("rank", "numerical_rank of a rank-2 product", numerical_rank(rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))) == 2),
        _check("rank", "numerical_rank is unchanged by rotations", invariant),
    ]


def suite_gradient() -> list[CheckResult]:
    results = []
    for label, limit in (("svft-b:1", 1e-5), ("svft-r:12", 1e-5), ("lora:2", 1e-5), ("vera:3", 1e-5), ("dora:2", 1e-4)):
        worst = max(finite_diff_check(label, make_task(5, 4, "dense", seed, n_samples=8), seed=seed) for seed in range(3))
        results.append(_check("gradient", f"{label} matches central differences", worst <= limit, f"{worst:.2e}"))
    return results


def suite_counts() -> list[CheckResult]:
    mismatches = []
    banded_identity = True
    for d in range(4, 13):
        w0 = np.random.default_rng(d).standard_normal((d, d))
        for k in range(0, min(5, d)):
            banded_identity &= d * (2 * k + 1) - k * (k + 1) == d * k + (d - k) * (k + 1)
            specs = [(MethodSpec(family=MethodFamily.SVFT_B, knob=k), k)]
            if k >= 1:
                specs += [(MethodSpec(family=f, knob=k), k) for f in (MethodFamily.LORA, MethodFamily.VERA, MethodFamily.DORA)]
            else:
                specs.append((MethodSpec(family=MethodFamily.SVFT_P), 0))
            for spec, knob in specs:
                enumerated = num_trainable(build_method(spec, w0))
                for layers in (1, 2, 4):
                    if param_count(spec.family, layers, d, knob) != layers * enumerated:
                        mismatches.append(f"{spec.label} L={layers} D={d}")
    band_mismatches = [
        f"D={d} k={k}"
        for d in range(1, 65)
        for k in sorted({*range(min(d, 9)), d - 1})
        if param_count(MethodFamily.SVFT_B, 1, d, k) != len(banded(d, d, k))
    ]
    return [
        _check("counts", "closed forms equal enumerated scalars", not mismatches, ", ".join(mismatches[:3])),
        _check("counts", "banded identity", banded_identity),
        _check("counts", "banded count equals enumerated band, D <= 64", not band_mismatches, ", ".join(band_mismatches[:3])),
    ]


def suite_fusion() -> list[CheckResult]:
    rng = np.random.default_rng(5)
    worst = worst_sum = 0.0
    for _ in range(10):
        d1, d2 = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        w0 = rng.standard_normal((d1, d2))
        factors = svd(w0)
        for pattern in (plain(d1, d2), banded(d1, d2, 1), random_pattern(d1, d2, min(d1, d2), 3)):
            a = svft.init_adapter(w0, pattern, factors)
            a.values[:] = rng.standard_normal(len(pattern))
            x = rng.standard_normal((d2, 10))
            adapted = svft.forward(a, x)
            worst = max(worst, frobenius(svft.fuse(a) @ x - adapted) / max(frobenius(adapted), 1e-300))
            expected = w0 @ x
            for (i, j), m in zip(pattern.indices, a.values):
                expected += m * np.outer(factors.u[:, i], factors.v[:, j] @ x)
            worst_sum = max(worst_sum, frobenius(expected - adapted) / max(frobenius(adapted), 1e-300))
    zero = svft.init_adapter(w0, plain(d1, d2), factors)
    base_error = frobenius(svft.fuse(zero) - w0) / frobenius(w0)
    return [
        _check("fusion", "fused forward equals adapter forward", worst <= 1e-10, f"{worst:.2e}"),
        _check("fusion", "adapter forward equals the sum of rank-one terms", worst_sum <= 1e-10, f"{worst_sum:.2e}"),
        _check("fusion", "zero adapter fuses back to W0", base_error <= 1e-10, f"{base_error:.2e}"),
    ]


def suite_baselines() -> list[CheckResult]:
    rng = np.random.default_rng(6)
    w0 = rng.standard_normal((6, 5))
    x = rng.standard_normal((5, 7))
    lora = baselines.init_lora(6, 5, 2, seed=1)
    vera = baselines.init_vera(6, 5, 2, seed=1)
    vera_at_init = np.allclose(baselines.vera_forward(w0, vera, x), w0 @ x)
    vera.lambda_b[:] = rng.standard_normal(6)
    dora = baselines.init_dora(w0, 2, seed=1)
    gap = baselines.vera_expressivity_gap(vera, rng.standard_normal((6, 5)))
    rank_law = True
    for r in (1, 2, 3, 4):
        trained = baselines.init_lora(6, 5, r, seed=r)
        trained.b[:] = rng.standard_normal(trained.b.shape)
        rank_law &= numerical_rank(baselines.lora_delta(trained)) <= r
    return [
        _check("baselines", "LoRA starts at W0", np.allclose(baselines.lora_forward(w0, lora, x), w0 @ x)),
        _check("baselines", "LoRA update rank is at most r", rank_law),
        _check("baselines", "VeRA starts at W0", vera_at_init),
        _check("baselines", "VeRA rank-one sum equals matrix form", np.allclose(baselines.vera_rank_one_sum(vera), baselines.vera_delta(vera))),
        _check("baselines", "VeRA cannot leave the row space of A", gap > 1e-6, f"gap {gap:.3e}"),
        _check("baselines", "DoRA starts at W0", np.allclose(baselines.dora_weight(w0, dora), w0)),
    ]


SUITES: dict[str, Callable[..., list[CheckResult]]] = {
    "svd": suite_svd,
    "patterns": suite_patterns,
    "structure": suite_structure,
    "expressivity": suite_expressivity,
    "rank": suite_rank,
    "gradient": suite_gradient,
    "counts": suite_counts,
    "fusion": suite_fusion,
    "baselines": suite_baselines,
}
FAULT_AWARE = ("svd", "structure")


def run_suites(names: list[str] | None = None, fault: str | None = None) -> list[CheckResult]:
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"Unknown suite(s): {', '.join(unknown)}")
    if fault not in DECOMPOSITIONS:
        raise KeyError(f"Unknown fault: {fault}")
    decompose = DECOMPOSITIONS[fault]
    results = []
    for name in names:
        suite = SUITES[name]
        rows = suite(decompose) if name in FAULT_AWARE else suite()
        failed = sum(not r.passed for r in rows)
        logger.info("Suite %s: %d checks, %d failed", name, len(rows), failed)
        results.extend(rows)
    return results


def results_table(results: list[CheckResult]) -> str:
    frame = pd.DataFrame(
        [{"suite": r.suite, "check": r.check, "result": "PASS" if r.passed else "FAIL", "detail": r.detail} for r in results]
    )
    return frame.to_string(index=False)
