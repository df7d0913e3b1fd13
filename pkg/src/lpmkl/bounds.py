"""Rademacher-complexity generalization bounds for lp-norm MKL.

``log`` in ceil(log M) is the natural logarithm throughout, matching the
factor e that appears next to it. The base is not pinned down at the
source, so treat this as a convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

C_CONST = 23.0 / 22.0
SCENARIOS = ("uniform", "sparse")


def _check_p(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ValidationError(f"p must be ≥ 1, got {p}")
    return p


def inverse_conjugate(p: float) -> float:
    """1/p* with p* = p/(p-1); 0 at p = 1 and 1 at p = inf, no overflow."""
    p = _check_p(p)
    return 1.0 if math.isinf(p) else 1.0 - 1.0 / p


def conversion_factor(M: float, p: float) -> float:
    """sqrt(M^(1/p*)): the l1-to-lp Rademacher conversion factor."""
    return math.sqrt(M ** inverse_conjugate(p))


def _check_common(M, R, n):
    if not M > 1:
        raise ValidationError(f"the bound needs M > 1 kernels, got M={M}")
    if not n >= 1:
        raise ValidationError(f"sample size must be >= 1, got n={n}")
    if not R > 0:
        raise ValidationError(f"radius R must be positive, got {R}")


def l1_rademacher_bound(M: float, R: float, n: float) -> float:
    _check_common(M, R, n)
    return math.sqrt(C_CONST * math.e * math.ceil(math.log(M)) * R * R / n)


def lp_rademacher_bound(M: float, R: float, n: float, p: float) -> float:
    return conversion_factor(M, p) * l1_rademacher_bound(M, R, n)


def cortes_bound(M: float, R: float, n: float, p: float) -> float:
    """Competitor bound sqrt(c e p* M^(1/p*) R^2 / n); infinite at p = 1."""
    _check_common(M, R, n)
    inv = inverse_conjugate(p)
    if inv == 0.0:
        return math.inf
    return math.sqrt(C_CONST * math.e * (1.0 / inv) * M**inv * R * R / n)


def confidence_term(n: float, delta: float) -> float:
    if not 0 < delta < 1:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class BoundInputs:
    M: float
    n: float
    R: float = 1.0
    p: float = 1.0
    gamma: float = 1.0
    delta: float = 0.05
    L: float = 1.0

    def __post_init__(self):
        _check_common(self.M, self.R, self.n)
        _check_p(self.p)
        if not 0 < self.delta < 1:
            raise ValidationError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.gamma > 0:
            raise ValidationError(f"margin gamma must be positive, got {self.gamma}")
        if not self.L >= 0:
            raise ValidationError(f"Lipschitz constant must be >= 0, got {self.L}")


def _check_risk(r):
    if not 0 <= r <= 1:
        raise ValidationError(f"empirical risk must lie in [0, 1], got {r}")


def generalization_bound(inputs: BoundInputs, empirical_risk: float) -> float:
    """Risk bound for an L-Lipschitz loss with values in [0, 1]."""
    _check_risk(empirical_risk)
    b = inputs
    return (empirical_risk + 2.0 * b.L * lp_rademacher_bound(b.M, b.R, b.n, b.p)
            + confidence_term(b.n, b.delta))


def radius_margin_bound(inputs: BoundInputs, empirical_margin_risk: float) -> float:
    _check_risk(empirical_margin_risk)
    b = inputs
    middle = (2.0 * b.R / b.gamma) * math.sqrt(
        C_CONST * math.e * b.M ** inverse_conjugate(b.p) * math.ceil(math.log(b.M)) / b.n)
    return empirical_margin_risk + middle + confidence_term(b.n, b.delta)


def scaled_bound(M, n, R, L, delta, p, radius, empirical_risk=0.0) -> float:
    """Bound for the hypothesis class with block norm ||w||_{2,q} <= radius."""
    _check_common(M, R, n)
    _check_risk(empirical_risk)
    inv = inverse_conjugate(p)
    middle = 2.0 * L * math.sqrt(
        C_CONST * math.e * M**inv * math.ceil(math.log(M)) * R * R * radius * radius / n)
    return empirical_risk + middle + confidence_term(n, delta)


def case_study_bounds(M, n, R, L, delta, scenario: str, p, empirical_risk=0.0) -> float:
    """Bound for a uniform or a one-hot Bayes weight vector.

    The radius is the smallest that still contains the Bayes classifier:
    ||(1,...,1)||_{2p/(p+1)} = M^((p+1)/(2p)) in the uniform case, 1 in the
    sparse case.
    """
    if scenario not in SCENARIOS:
        raise ValidationError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    p = _check_p(p)
    if scenario == "uniform":
        exponent = 0.5 if math.isinf(p) else (p + 1.0) / (2.0 * p)
        radius = M**exponent
    else:
        radius = 1.0
    return scaled_bound(M, n, R, L, delta, p, radius, empirical_risk)


def bound_table(Ms, ns, ps, R=1.0, delta=None, L=1.0, empirical_risk=0.0,
                cortes=False) -> list[dict]:
    """Rows of bound values over the Cartesian grid Ms x ns x ps."""
    rows = []
    for M in Ms:
        for n in ns:
            for p in ps:
                row = {"M": M, "n": n, "p": p, "R": R,
                       "l1_bound": l1_rademacher_bound(M, R, n),
                       "lp_bound": lp_rademacher_bound(M, R, n, p)}
                if delta is not None:
                    row["generalization_bound"] = generalization_bound(
                        BoundInputs(M=M, n=n, R=R, p=p, delta=delta, L=L), empirical_risk)
                if cortes:
                    row["cortes_bound"] = cortes_bound(M, R, n, p)
                rows.append(row)
    return rows
