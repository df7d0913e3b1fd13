"""Controlled sparsity study on synthetic Gaussian data.

Two isotropic Gaussians in d dimensions with opposite means along a binary
pattern ``theta_true``. One linear kernel per feature (or per feature
block), multiplicatively normalized on the training sample. For each
norm p, C is picked by validation error and the chosen model is scored on a
test set by its error rate and by the model error of its kernel weights.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from ._jit import backend_name
from .errors import LpMklError, ValidationError
from .kernels import FeatureBlockStack
from .mkl import P_INF, P_ONE, MklConfig, train

log = logging.getLogger(__name__)

DEFAULT_PS = (P_ONE, 4.0 / 3.0, 2.0, 4.0, P_INF)
DEFAULT_CS = tuple(10.0 ** np.arange(-4.0, 0.25, 0.5))
CSV_COLUMNS = ("scenario_nu", "p", "C_selected", "test_error", "test_error_stderr",
               "model_error", "model_error_stderr", "repetitions")


def leading_ones(d: int, k: int) -> np.ndarray:
    """Binary pattern with the first ``k`` of ``d`` entries equal to one."""
    if not 1 <= k <= d:
        raise ValidationError(f"need 1 <= k <= d, got k={k}, d={d}")
    pattern = np.zeros(d)
    pattern[:k] = 1.0
    return pattern


@dataclass(frozen=True)
class ToyConfig:
    d: int = 50
    theta_true: tuple | None = None
    rho: float = 1.75
    n_train: int = 50
    n_validate: int = 1000
    n_test: int = 1000
    seed: int = 0
    repetitions: int = 100
    block_size: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"d must be positive, got {self.d}")
        if self.theta_true is None:
            object.__setattr__(self, "theta_true", tuple([1.0] * self.d))
        t = np.asarray(self.theta_true, dtype=float)
        object.__setattr__(self, "theta_true", tuple(float(v) for v in t))
        if t.shape != (self.d,) or not np.all((t == 0) | (t == 1)):
            raise ValidationError("theta_true must be a binary vector of length d")
        if not t.any():
            raise ValidationError("theta_true needs at least one informative feature")
        if not self.rho > 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")
        for name in ("n_train", "n_validate", "n_test"):
            n = getattr(self, name)
            if n < 2 or n % 2:
                raise ValidationError(f"{name} must be even and >= 2, got {n}")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be positive")
        if self.block_size < 1 or self.d % self.block_size:
            raise ValidationError("block_size must divide d")

    @classmethod
    def with_informative(cls, k: int, d: int = 50, **kw) -> "ToyConfig":
        """Scenario whose first k features carry signal."""
        return cls(d=d, theta_true=tuple(leading_ones(d, k)), **kw)

    @property
    def nu(self) -> float:
        return 1.0 - float(np.sum(self.theta_true)) / self.d

    @property
    def mean(self) -> np.ndarray:
        t = np.asarray(self.theta_true)
        return self.rho * t / np.linalg.norm(t)

    def blocks(self) -> list[np.ndarray]:
        b = self.block_size
        return [np.arange(j, j + b) for j in range(0, self.d, b)]

    def block_truth(self) -> np.ndarray:
        """Per-kernel ground truth: squared mean mass carried by each block."""
        mu = self.mean
        return np.array([np.sum(mu[b] ** 2) for b in self.blocks()])


def generate_toy(config: ToyConfig, n: int | None = None, rng=None):
    """Draw an exactly balanced sample in shuffled order.

    Without ``rng`` the generator is seeded from ``config.seed``, so the
    same config gives the same data bit for bit.
    """
    n = config.n_train if n is None else int(n)
    if n < 2 or n % 2:
        raise ValidationError(f"sample size must be even and >= 2, got {n}")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    y = np.repeat([1.0, -1.0], n // 2)
    X = rng.standard_normal((n, config.d)) + y[:, None] * config.mean
    order = rng.permutation(n)
    return X[order], y[order]


def bayes_error(rho: float) -> float:
    """Phi(-rho): error of the optimal linear rule for means at distance 2 rho."""
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho}")
    return 0.5 * float(special.erfc(rho / math.sqrt(2.0)))


def model_error(theta_hat, theta_true) -> float:
    a = np.asarray(theta_hat, dtype=float)
    b = np.asarray(theta_true, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("model error is undefined for a zero vector")
    return float(np.linalg.norm(a / na - b / nb))


def cell_rng(seed: int, scenario: int, repetition: int) -> np.random.Generator:
    """Independent stream per (seed, scenario, repetition)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(scenario), int(repetition)))
    return np.random.Generator(np.random.PCG64(ss))


def _error_rate(f, y) -> float:
    return float(np.mean(np.where(f >= 0, 1.0, -1.0) != y))


def run_cell(config: ToyConfig, scenario: int, repetition: int, ps, Cs,
             mode="wrapper", epsilon_mkl=1e-3, epsilon_svm=1e-3) -> list[dict]:
    """Train every (p, C) on one draw; return one record per p."""
    rng = cell_rng(config.seed, scenario, repetition)
    Xtr, ytr = generate_toy(config, config.n_train, rng)
    Xva, yva = generate_toy(config, config.n_validate, rng)
    Xte, yte = generate_toy(config, config.n_test, rng)
    stack = FeatureBlockStack.multiplicative(Xtr, config.blocks())
    truth = config.block_truth()
    records = []
    for p in ps:
        val_errors, models, failures = [], [], []
        for C in Cs:
            cfg = MklConfig(p=p, C=C, mode=mode, epsilon_mkl=epsilon_mkl,
                            epsilon_svm=epsilon_svm)
            try:
                model = train(stack, ytr, cfg)
            except LpMklError as exc:
                failures.append(f"C={C:g}: {type(exc).__name__}: {exc}")
                model = getattr(exc, "best", None)
            if model is None:
                val_errors.append(math.nan)
                models.append(None)
                continue
            f = stack.decision_function(model.theta, model.alpha, model.bias, Xva)
            val_errors.append(_error_rate(f, yva))
            models.append(model)
        ve = np.array(val_errors)
        rec = {"scenario": scenario, "scenario_nu": config.nu, "repetition": repetition,
               "p": float(p), "validation_errors": [float(v) for v in ve],
               "failures": failures}
        if np.all(np.isnan(ve)):
            rec.update(C_selected=math.nan, test_error=math.nan, model_error=math.nan,
                       boundary=False)
        else:
            k = int(np.nanargmin(ve))
            model = models[k]
            f = stack.decision_function(model.theta, model.alpha, model.bias, Xte)
            rec.update(C_selected=float(Cs[k]), test_error=_error_rate(f, yte),
                       model_error=model_error(model.theta, truth),
                       boundary=k in (0, len(Cs) - 1))
        records.append(rec)
    return records


@dataclass
class ExperimentReport:
    rows: list[dict]
    cells: list[dict]
    manifest: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def samples(self, scenario: int, p: float, key="test_error") -> np.ndarray:
        """Per-repetition values of ``key``, ordered by repetition."""
        sel = [c for c in self.cells if c["scenario"] == scenario and c["p"] == float(p)]
        sel.sort(key=lambda c: c["repetition"])
        return np.array([c[key] for c in sel], dtype=float)

    def manifest_json(self) -> str:
        from .io import dumps_json
        return dumps_json(self.manifest)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def _cell_job(args):
    return run_cell(*args)


def _summarize(scenario, config, p, cells):
    te = np.array([c["test_error"] for c in cells])
    me = np.array([c["model_error"] for c in cells])
    ok = ~np.isnan(te)
    k = int(ok.sum())

    def se(v):
        return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0

    picked = Counter(c["C_selected"] for c in cells if not math.isnan(c["C_selected"]))
    # most frequent C, ties broken towards the smaller value
    C_sel = min(picked.items(), key=lambda kv: (-kv[1], kv[0]))[0] if picked else math.nan
    return {"scenario": scenario, "scenario_nu": config.nu, "p": float(p),
            "C_selected": C_sel,
            "test_error": float(te[ok].mean()) if k else math.nan,
            "test_error_stderr": se(te[ok]),
            "model_error": float(me[ok].mean()) if k else math.nan,
            "model_error_stderr": se(me[ok]),
            "repetitions": k}


def run_sparsity_sweep(configs: Sequence[ToyConfig], ps=DEFAULT_PS, Cs=DEFAULT_CS,
                       mode="wrapper", jobs: int = 1, epsilon_mkl=1e-3,
                       epsilon_svm=1e-3) -> ExperimentReport:
    """Grid search over (p, C) for every scenario and repetition.

    Each (scenario, repetition) cell draws from its own stream, so the
    result does not depend on ``jobs``. Cell failures are recorded rather
    than raised.
    """
    if not configs:
        raise ValidationError("need at least one scenario")
    Cs = tuple(float(c) for c in Cs)
    ps = tuple(float(p) for p in ps)
    if not Cs or not ps:
        raise ValidationError("p and C grids must be non-empty")
    tasks = [(cfg, s, r, ps, Cs, mode, epsilon_mkl, epsilon_svm)
             for s, cfg in enumerate(configs) for r in range(cfg.repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, tasks, chunksize=1))
    else:
        results = [_cell_job(t) for t in tasks]
    cells = [rec for res in results for rec in res]

    rows = []
    for s, cfg in enumerate(configs):
        for p in ps:
            mine = [c for c in cells if c["scenario"] == s and c["p"] == p]
            rows.append(_summarize(s, cfg, p, mine))
    n_fail = sum(bool(c["failures"]) for c in cells)
    n_edge = sum(bool(c["boundary"]) for c in cells)
    if n_edge:
        warnings.warn(f"{n_edge} of {len(cells)} cells selected C on the grid boundary",
                      RuntimeWarning, stacklevel=2)
    if n_fail:
        log.warning("%d cells recorded training failures", n_fail)
    manifest = {"configs": [asdict(c) for c in configs], "ps": list(ps), "Cs": list(Cs),
                "mode": mode, "epsilon_mkl": epsilon_mkl, "epsilon_svm": epsilon_svm,
                "seeds": [c.seed for c in configs], "backend": backend_name(),
                "failed_cells": n_fail, "boundary_cells": n_edge}
    return ExperimentReport(rows=rows, cells=cells, manifest=manifest)


def paired_less(a, b, alpha: float = 0.05) -> tuple[bool, float]:
    """One-sided paired t-test of mean(a) < mean(b); returns (reject, p-value)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape or a.size < 2:
        raise ValidationError("paired test needs two equal-length samples of size >= 2")
    d = a - b
    if np.ptp(d) <= 1e-12 * max(1.0, float(np.abs(d).max())):
        # (numerically) zero variance: the t statistic is undefined, so
        # decide on the sign of the common difference alone
        return bool(d.mean() < 0), 0.0 if d.mean() < 0 else 1.0
    pval = float(stats.ttest_rel(a, b, alternative="less").pvalue)
    return pval < alpha, pval
