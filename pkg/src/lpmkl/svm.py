"""Fixed-mixture SVM dual solver and the bookkeeping shared with MKL.

Dual variables are kept in *signed* form: ``alpha_i = y_i a_i`` with the
usual box ``0 <= a_i <= C``. The objective is then

    W(alpha) = sum_i y_i alpha_i - 1/2 alpha' K_theta alpha,   sum_i alpha_i = 0,

with ``K_theta = sum_m theta_m K_m``. Use :func:`to_labeled` /
:func:`to_signed` to move between the two conventions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _smo
from .errors import ConvergenceError, ValidationError


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    epsilon: float = 1e-3
    q: int = 10
    max_passes: int = 1_000_000
    shrinking: bool = False

    def __post_init__(self):
        if not self.C > 0 or not np.isfinite(self.C):
            raise ValidationError(f"C must be positive, got {self.C}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.q < 2 or self.q % 2:
            raise ValidationError(f"working-set size q must be even and >= 2, got {self.q}")
        if self.max_passes < 1:
            raise ValidationError("max_passes must be >= 1")


@dataclass
class SvmSolution:
    alpha: np.ndarray
    bias: float
    objective: float
    kkt_violation: float
    iterations: int
    ghat: np.ndarray = field(repr=False)

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alpha != 0.0)


@dataclass
class SolverState:
    """Per-kernel gradients and objective terms for a given signed alpha."""

    g: np.ndarray          # (M, n): g[m] = K_m alpha
    g_hat: np.ndarray      # (n,):  sum_m theta_m g[m]
    L: float               # sum_i y_i alpha_i
    S_m: np.ndarray        # (M,):  1/2 alpha' K_m alpha
    S: float               # sum_m theta_m S_m

    @classmethod
    def from_alpha(cls, stack, theta, alpha, y) -> "SolverState":
        alpha = np.asarray(alpha, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        g = np.einsum("mij,j->mi", stack.values, alpha)
        S_m = 0.5 * (g @ alpha)
        return cls(g, theta @ g, float(np.asarray(y, float) @ alpha), S_m, float(theta @ S_m))


def to_labeled(alpha, y) -> np.ndarray:
    """Signed alpha -> box form a_i = y_i alpha_i in [0, C]."""
    return np.asarray(alpha, float) * np.asarray(y, float)


def to_signed(a, y) -> np.ndarray:
    return np.asarray(a, float) * np.asarray(y, float)


def check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValidationError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValidationError("both classes must be present in the labels")
    return y


def _bounds(y, C):
    return np.where(y > 0, 0.0, -C), np.where(y > 0, C, 0.0)


def max_kkt_violation(state: SolverState, alpha, y, C) -> float:
    """Half the gap between the steepest ascent and descent feasible partials.

    Zero exactly at a fixed-theta optimum; this is the solver's stopping
    measure and equals the largest margin error left once the bias is set
    to the middle of its admissible interval.
    """
    alpha = np.asarray(alpha, float)
    y = np.asarray(y, float)
    lb, ub = _bounds(y, C)
    m_up, m_low = _smo.violation_np(alpha, state.g_hat, y, lb, ub)
    return max(0.0, 0.5 * float(m_up - m_low))


def per_kernel_objectives(state: SolverState) -> np.ndarray:
    return np.asarray(state.S_m, dtype=np.float64).copy()


def recover_bias(alpha, g_hat, y, C) -> float:
    """Threshold from the KKT conditions.

    Free support vectors fix b = y_i - g_hat_i; their mean is returned. With
    no free vector the admissible interval [max_up F, min_low F] is bounded
    by the at-bound vectors and its midpoint is used.
    """
    alpha = np.asarray(alpha, float)
    y = np.asarray(y, float)
    F = y - np.asarray(g_hat, float)
    lb, ub = _bounds(y, C)
    free = (alpha > lb) & (alpha < ub)
    if free.any():
        return float(F[free].mean())
    m_up, m_low = _smo.violation_np(alpha, g_hat, y, lb, ub)
    if np.isfinite(m_up) and np.isfinite(m_low):
        return float(0.5 * (m_up + m_low))
    return float(m_up if np.isfinite(m_up) else m_low)


def dual_value(alpha, g_hat, y) -> float:
    return float(np.asarray(y, float) @ alpha - 0.5 * alpha @ g_hat)


def _feasible_start(alpha, y, C):
    alpha = np.array(alpha, dtype=np.float64, copy=True)
    lb, ub = _bounds(y, C)
    np.clip(alpha, lb, ub, out=alpha)
    if abs(alpha.sum()) > 1e-10 * max(1.0, C * len(alpha)):
        raise ValidationError("warm start violates sum(alpha) = 0")
    return alpha


def solve_matrix(K, y, config: SvmConfig = SvmConfig(), warm_start=None,
                 history=None) -> SvmSolution:
    """Solve the dual on an explicit (combined) Gram matrix."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = check_labels(y)
    n = len(y)
    if K.shape != (n, n):
        raise ValidationError(f"kernel shape {K.shape} does not match {n} labels")
    if warm_start is None:
        alpha = np.zeros(n)
        ghat = np.zeros(n)
    else:
        alpha = _feasible_start(warm_start, y, config.C)
        ghat = K @ alpha
    hist = np.empty(0) if history is None else history
    it, status, viol = _smo.smo_dense(K, y, float(config.C), alpha, ghat, float(config.epsilon),
                                      int(config.q), int(config.max_passes),
                                      bool(config.shrinking), hist)
    sol = SvmSolution(alpha=alpha, bias=recover_bias(alpha, ghat, y, config.C),
                      objective=dual_value(alpha, ghat, y), kkt_violation=viol,
                      iterations=int(it), ghat=ghat)
    if status != _smo.STATUS_OK:
        raise ConvergenceError(
            f"SVM solver hit the iteration cap ({config.max_passes}) with KKT "
            f"violation {viol:.3e} > {config.epsilon:.1e}", best=sol)
    return sol


def check_theta(theta, M) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape != (M,):
        raise ValidationError(f"theta has length {theta.size}, expected {M}")
    if np.any(~np.isfinite(theta)) or np.any(theta < 0) or not np.any(theta > 0):
        raise ValidationError("theta must be finite, nonnegative and not all zero")
    return theta


def solve_dual(stack, theta, y, config: SvmConfig = SvmConfig(), warm_start=None,
               history=None) -> SvmSolution:
    """Maximise the fixed-theta dual over the kernel mixture sum_m theta_m K_m."""
    theta = check_theta(theta, stack.M)
    y = check_labels(y)
    if len(y) != stack.n:
        raise ValidationError(f"{len(y)} labels for {stack.n} samples")
    return solve_matrix(stack.combined(theta), y, config, warm_start, history)
