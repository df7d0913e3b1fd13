"""lp-norm multiple kernel learning by alternating analytic theta-steps.

Two trainers share one model type:

* :func:`train_wrapper` alternates full SVM solves and closed-form
  updates of the mixing weights.
* :func:`train_interleaved` runs the theta-step as a callback inside the
  chunking SVM solver, so the mixture is refined long before the SVM has
  converged.

``p = 1`` is handled as ``1 + P_ONE_DELTA`` (the closed form needs p > 1)
and ``p = inf`` is the plain SVM on the unweighted kernel sum.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _smo
from .errors import (ConvergenceError, DegenerateModelError, SingularUpdateError,
                     StallError, ValidationError)
from .svm import SvmConfig, check_labels, recover_bias, solve_matrix, dual_value

P_ONE = 1.0
P_INF = math.inf
P_ONE_DELTA = 1e-4
ZERO_NORM_RTOL = 1e-15
MODES = ("wrapper", "interleaved")


@dataclass(frozen=True)
class MklConfig:
    p: float | None = 2.0
    C: float = 1.0
    epsilon_svm: float = 1e-3
    epsilon_mkl: float = 1e-3
    mode: str = "wrapper"
    max_outer: int = 200
    q_block: float | None = None
    q: int = 10
    callback_interval: int = 1
    max_escalations: int = 3
    max_svm_iter: int = 1_000_000
    descent_rtol: float = 1e-9

    def __post_init__(self):
        if (self.p is None) == (self.q_block is None):
            raise ValidationError("set exactly one of p and q_block")
        if self.p is not None and not self.p >= 1:
            raise ValidationError(f"p must be ≥ 1, got {self.p}")
        if self.q_block is not None and not self.q_block > 2:
            raise ValidationError(f"q_block must be > 2, got {self.q_block}")
        if not self.C > 0 or not math.isfinite(self.C):
            raise ValidationError(f"C must be positive, got {self.C}")
        if not (self.epsilon_svm > 0 and self.epsilon_mkl > 0):
            raise ValidationError("tolerances must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_outer < 1 or self.callback_interval < 1:
            raise ValidationError("max_outer and callback_interval must be >= 1")
        SvmConfig(C=self.C, epsilon=self.epsilon_svm, q=self.q)

    @property
    def is_inf(self) -> bool:
        return self.p is not None and math.isinf(self.p)

    @property
    def effective_p(self) -> float:
        """The exponent the analytic update actually runs with."""
        if self.p is None:
            return math.nan
        return 1.0 + P_ONE_DELTA if self.p == 1.0 else float(self.p)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingReport:
    mode: str = "wrapper"
    outer_iterations: int = 0
    primal_trace: list = field(default_factory=list)
    dual_trace: list = field(default_factory=list)
    gap_trace: list = field(default_factory=list)
    theta_trace: list = field(default_factory=list)
    final_gap: float = math.nan
    wall_time: float = 0.0
    converged: bool = False
    escalations: int = 0
    epsilon_svm_final: float = math.nan
    svm_iterations: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_trace"] = [list(map(float, t)) for t in self.theta_trace]
        return d


@dataclass
class MklModel:
    theta: np.ndarray
    alpha: np.ndarray
    bias: float
    config: MklConfig
    report: TrainingReport = field(default_factory=TrainingReport)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha != 0.0)


# ------------------------------------------------------------ theta updates

def _positive_part(w_norms_sq):
    w = np.asarray(w_norms_sq, dtype=np.float64).ravel()
    if w.size == 0 or not np.all(np.isfinite(w)):
        raise ValidationError("w-norms must be a finite, non-empty vector")
    top = w.max()
    if not top > 0:
        raise DegenerateModelError(
            "no kernel has a strictly positive ||w_m||; the theta-step is undefined")
    return w, top, w > ZERO_NORM_RTOL * top


def update_theta(w_norms_sq, p: float) -> np.ndarray:
    """Minimiser of sum_m ||w_m||^2 / theta_m over the unit lp-sphere.

    theta_m is proportional to ||w_m||^(2/(p+1)). Kernels whose squared
    norm is not positive (indefinite kernels, round-off) get theta_m = 0.
    """
    if not (p > 1 and math.isfinite(p)):
        raise ValidationError(f"the analytic update needs 1 < p < inf, got {p}")
    w, top, keep = _positive_part(w_norms_sq)
    r = np.where(keep, w / top, 0.0)
    denom = np.sum(r[keep] ** (p / (p + 1.0))) ** (1.0 / p)
    return np.where(keep, r ** (1.0 / (p + 1.0)) / denom, 0.0)


def update_theta_blocknorm(w_norms_sq, q: float) -> np.ndarray:
    """theta-step for l_{2,q} block norms with q > 2, normalised in l_r, r = q/(q-2)."""
    if not q > 2:
        raise ValidationError(f"block-norm exponent must exceed 2, got {q}")
    w = np.asarray(w_norms_sq, dtype=np.float64).ravel()
    if np.any(~(w > 0)):
        bad = int(np.flatnonzero(~(w > 0))[0])
        raise SingularUpdateError(
            f"kernel {bad} has ||w||^2 = {w[bad]!r}; drop it before the block-norm update")
    if math.isinf(q):
        theta = (w == w.min()).astype(float)
        return theta / theta.sum()
    r = q / (q - 2.0)
    rel = w / w.min()
    num = rel ** (-1.0 / (r - 1.0))
    return num / np.sum(rel ** (-r / (r - 1.0))) ** (1.0 / r)


def blocknorm_step(quad_terms, q: float) -> np.ndarray:
    """theta-step used by the q > 2 trainer, from S_m = alpha' K_m alpha.

    Iterating theta <- update_theta_blocknorm(theta^2 S) is unstable: in log
    space its slope is -2/(r-1), so it oscillates and, for r <= 3,
    diverges. Its fixed point satisfies theta_m proportional to
    S_m^(-1/(r+1)), and this function returns it directly. That is the same
    update applied to the norms the fixed point implies.
    """
    S = np.asarray(quad_terms, dtype=np.float64).ravel()
    if np.any(~(S > 0)):
        bad = int(np.flatnonzero(~(S > 0))[0])
        raise SingularUpdateError(
            f"kernel {bad} has alpha' K alpha = {S[bad]!r}; drop it before the block-norm update")
    if math.isinf(q):
        th = (S / S.min()) ** -0.5
        return th / th.sum()
    r = q / (q - 2.0)
    return update_theta_blocknorm((S / S.max()) ** ((r - 1.0) / (r + 1.0)), q)


def compute_w_norms(alpha, theta, stack) -> np.ndarray:
    """||w_m||^2 = theta_m^2 alpha' K_m alpha, signed alpha."""
    theta = np.asarray(theta, dtype=np.float64)
    return theta**2 * stack.quad_terms(alpha)


def initial_theta(M: int, config: MklConfig) -> np.ndarray:
    if config.is_inf:
        return np.ones(M)
    if config.q_block is not None:
        if math.isinf(config.q_block):
            return np.full(M, 1.0 / M)
        r = config.q_block / (config.q_block - 2.0)
        return np.full(M, M ** (-1.0 / r))
    return np.full(M, M ** (-1.0 / config.effective_p))


# --------------------------------------------------------------- objectives

def _lp_norm(v, r: float) -> float:
    v = np.abs(np.asarray(v, dtype=np.float64))
    top = v.max() if v.size else 0.0
    if top == 0.0:
        return 0.0
    if math.isinf(r):
        return float(top)
    return float(top * np.sum((v / top) ** r) ** (1.0 / r))


def dual_exponent(config: MklConfig) -> float:
    """Conjugate exponent p* used by the dual objective."""
    if config.is_inf:
        return 1.0
    p = config.effective_p
    return p / (p - 1.0)


def decision_on_training(model: MklModel, stack) -> np.ndarray:
    return stack.apply(model.theta, model.alpha) + model.bias


def primal_objective(model: MklModel, stack, y) -> float:
    """C sum hinge + 1/2 sum ||w_m||^2 / theta_m, with t/0 = 0 iff t = 0."""
    y = np.asarray(y, dtype=np.float64)
    f = decision_on_training(model, stack)
    hinge = np.maximum(0.0, 1.0 - y * f).sum()
    w2 = compute_w_norms(model.alpha, model.theta, stack)
    reg = 0.0
    for t, th in zip(w2, model.theta):
        if th > 0:
            reg += t / th
        elif t != 0:
            return math.inf
    return float(model.config.C * hinge + 0.5 * reg)


def _check_feasible(alpha, y, C):
    n = len(alpha)
    if abs(alpha.sum()) > 1e-8 * C * max(n, 1):
        raise ValidationError(f"alpha violates sum(alpha) = 0 (sum = {alpha.sum():.3e})")
    a = alpha * y
    if np.any(a < -1e-10) or np.any(a > C + 1e-10):
        raise ValidationError("alpha violates the box constraint 0 <= y_i alpha_i <= C")


def dual_objective(model: MklModel, stack, y) -> float:
    """sum_i y_i alpha_i - 1/2 || (alpha' K_m alpha)_m ||_{p*}."""
    y = np.asarray(y, dtype=np.float64)
    alpha = np.asarray(model.alpha, dtype=np.float64)
    _check_feasible(alpha, y, model.config.C)
    if model.config.q_block is not None:
        return math.nan
    s = stack.quad_terms(alpha)
    return float(y @ alpha - 0.5 * _lp_norm(s, dual_exponent(model.config)))


def duality_gap(model: MklModel, stack, y) -> float:
    P = primal_objective(model, stack, y)
    D = dual_objective(model, stack, y)
    return (P - D) / _gap_scale(P)


def _gap_scale(P: float) -> float:
    # Below |P| = 1 the gap is absolute. With very small C the objective is
    # O(nC) and theta then matters little to the certificate.
    return max(1.0, abs(P))


def predict(model: MklModel, test_rows) -> np.ndarray:
    """Decision values f(x) = sum_m theta_m sum_i alpha_i k_m(x_i, x) + b.

    ``test_rows`` has shape (M, n_test, n_train); entry [m, t, i] is
    k_m(x_i, x_t).
    """
    rows = np.asarray(test_rows, dtype=np.float64)
    M, n = len(model.theta), len(model.alpha)
    if rows.ndim != 3 or rows.shape[0] != M or rows.shape[2] != n:
        raise ValidationError(
            f"test kernel rows have shape {rows.shape}, expected ({M}, n_test, {n})")
    return np.einsum("m,mti,i->t", model.theta, rows, model.alpha) + model.bias


def predict_labels(model: MklModel, test_rows) -> np.ndarray:
    return np.where(predict(model, test_rows) >= 0, 1, -1)


# ----------------------------------------------------------------- training

def _check_inputs(stack, y):
    y = check_labels(y)
    if len(y) != stack.n:
        raise ValidationError(f"{len(y)} labels for {stack.n} samples")
    return y


def _svm_config(config: MklConfig, eps: float) -> SvmConfig:
    return SvmConfig(C=config.C, epsilon=eps, q=config.q, max_passes=config.max_svm_iter)


def _evaluate(model, stack, y):
    """Primal, dual, relative gap and the part of the gap owed to the SVM."""
    K_alpha = stack.apply(model.theta, model.alpha)
    P = primal_objective(model, stack, y)
    D = dual_objective(model, stack, y)
    svm_dual = dual_value(model.alpha, K_alpha, y)
    scale = _gap_scale(P)
    return P, D, (P - D) / scale, (P - svm_dual) / scale


class _Tracker:
    """Outer-loop bookkeeping shared by both trainers."""

    def __init__(self, config: MklConfig, mode: str):
        self.config = config
        self.report = TrainingReport(mode=mode)
        self.eps_svm = config.epsilon_svm
        self.t0 = time.perf_counter()
        self.best = None
        self.prev_primal = None

    def increased(self, P) -> bool:
        # The q > 2 block-norm step solves a sup over theta, so the lp primal
        # is not expected to decrease there.
        if self.prev_primal is None or self.config.q_block is not None:
            return False
        return P > self.prev_primal + self.config.descent_rtol * _gap_scale(self.prev_primal)

    def can_escalate(self) -> bool:
        return self.report.escalations < self.config.max_escalations

    def escalate(self):
        self.eps_svm /= 10.0
        self.report.escalations += 1

    def accept(self, model, P, D, gap):
        r = self.report
        r.outer_iterations += 1
        r.primal_trace.append(float(P))
        r.dual_trace.append(float(D))
        r.gap_trace.append(float(gap))
        r.theta_trace.append(model.theta.copy())
        r.final_gap = float(gap)
        self.prev_primal = P
        self.best = model

    def finish(self, converged: bool, message: str, theta_trace=None):
        r = self.report
        if theta_trace is not None:
            r.theta_trace = list(theta_trace)
        r.converged = converged
        r.message = message
        r.wall_time = time.perf_counter() - self.t0
        r.epsilon_svm_final = self.eps_svm
        if self.best is not None:
            self.best.report = r
        return self.best


def train(stack, y, config: MklConfig) -> MklModel:
    if config.mode == "interleaved":
        return train_interleaved(stack, y, config)
    return train_wrapper(stack, y, config)


def train_wrapper(stack, y, config: MklConfig) -> MklModel:
    """Alternate a full SVM solve with the closed-form theta-step.

    Stops once the relative duality gap is at most ``epsilon_mkl``. When a
    theta-step raises the primal objective the SVM is re-solved at ten-fold
    precision (at most ``max_escalations`` times); an increase that
    survives escalation raises :class:`StallError`.
    """
    y = _check_inputs(stack, y)
    tr = _Tracker(config, "wrapper")
    theta = initial_theta(stack.M, config)
    alpha = None
    for _ in range(config.max_outer):
        while True:
            sol = solve_matrix(stack.combined(theta), y, _svm_config(config, tr.eps_svm),
                               warm_start=alpha)
            tr.report.svm_iterations += sol.iterations
            model = MklModel(theta.copy(), sol.alpha, sol.bias, config)
            P, D, gap, svm_gap = _evaluate(model, stack, y)
            if tr.increased(P) and tr.can_escalate():
                tr.escalate()
                continue
            break
        if tr.increased(P):
            tr.finish(False, "primal objective increased after precision escalation")
            raise StallError(
                f"primal objective rose from {tr.prev_primal:.10g} to {P:.10g} "
                f"after {tr.report.escalations} escalations", best=tr.best)
        tr.accept(model, P, D, gap)
        if config.q_block is not None:
            new = blocknorm_step(stack.quad_terms(sol.alpha), config.q_block)
            done = np.max(np.abs(new - theta)) < config.epsilon_mkl
            theta, alpha = new, sol.alpha
            if done:
                return tr.finish(True, "theta change below epsilon_mkl")
            continue
        if gap <= config.epsilon_mkl:
            return tr.finish(True, "relative duality gap below epsilon_mkl")
        if config.is_inf:
            # theta is pinned, only SVM precision can close the gap
            if not tr.can_escalate():
                break
            tr.escalate()
            alpha = sol.alpha
            continue
        if svm_gap > 0.5 * config.epsilon_mkl and tr.can_escalate():
            tr.escalate()
        theta = update_theta(compute_w_norms(sol.alpha, theta, stack), config.effective_p)
        alpha = sol.alpha
    tr.finish(False, f"max_outer={config.max_outer} reached")
    raise ConvergenceError(
        f"wrapper MKL did not reach gap {config.epsilon_mkl:g} in {config.max_outer} "
        f"outer iterations (last gap {tr.report.final_gap:.3e})", best=tr.best)


def _relabel(model, mode):
    model.report.mode = mode
    return model


def train_interleaved(stack, y, config: MklConfig) -> MklModel:
    """Chunking SVM with the theta-step run as an in-solver callback.

    The mixture starts at (1/M)^(1/p). After every ``callback_interval``
    chunking steps the per-kernel quadratic terms are refreshed and, unless
    the objective moved by less than ``epsilon_mkl`` relative to the last
    callback, theta is replaced by its analytic update. Once the SVM meets
    its KKT tolerance with theta frozen, the duality gap certifies the
    result; otherwise theta is unfrozen and the loop resumes.
    """
    if config.q_block is not None:
        raise ValidationError("block-norm updates are only available in wrapper mode")
    y = _check_inputs(stack, y)
    if config.is_inf:
        return _relabel(train_wrapper(stack, y, config), "interleaved")
    tr = _Tracker(config, "interleaved")
    Ks = np.ascontiguousarray(stack.values)
    M, n = stack.M, stack.n
    theta = initial_theta(M, config)
    alpha = np.zeros(n)
    g = np.zeros((M, n))
    ghat = np.zeros(n)
    omega_old, have_old = 0.0, False
    updates = 0
    iterations = 0
    snapshots = []
    p = config.effective_p
    while True:
        hist = np.empty((config.max_outer - updates, M))
        it, status, upd, omega_old, viol = _smo.interleaved(
            Ks, y, float(config.C), theta, p, alpha, g, ghat, float(tr.eps_svm),
            float(config.epsilon_mkl), int(config.q), int(config.callback_interval),
            int(config.max_svm_iter - iterations), int(config.max_outer - updates),
            float(omega_old), bool(have_old), hist)
        iterations += it
        updates += upd
        snapshots.extend(hist[:upd].copy())
        tr.report.svm_iterations = iterations
        if status == _smo.STATUS_DEGENERATE:
            tr.finish(False, "degenerate theta-step")
            raise DegenerateModelError(
                "all per-kernel quadratic terms are non-positive; the theta-step is undefined")
        model = MklModel(theta.copy(), alpha.copy(), recover_bias(alpha, ghat, y, config.C), config)
        P, D, gap, svm_gap = _evaluate(model, stack, y)
        if status != _smo.STATUS_OK:
            if tr.best is None or P <= tr.prev_primal:
                tr.accept(model, P, D, gap)
            tr.report.outer_iterations = updates
            tr.finish(False, "iteration cap reached", snapshots)
            raise ConvergenceError(
                f"interleaved MKL stopped ({'chunking' if status == 1 else 'theta-update'} cap) "
                f"with gap {gap:.3e}", best=tr.best)
        if tr.increased(P):
            if not tr.can_escalate():
                tr.report.outer_iterations = updates
                tr.finish(False, "primal objective increased after precision escalation",
                          snapshots)
                raise StallError(
                    f"primal objective rose from {tr.prev_primal:.10g} to {P:.10g} "
                    f"after {tr.report.escalations} escalations", best=tr.best)
            tr.escalate()
            have_old = False
            continue
        tr.accept(model, P, D, gap)
        tr.report.outer_iterations = updates
        if gap <= config.epsilon_mkl:
            return tr.finish(True, "relative duality gap below epsilon_mkl", snapshots)
        if svm_gap > 0.5 * config.epsilon_mkl and tr.can_escalate():
            tr.escalate()
        have_old = False
