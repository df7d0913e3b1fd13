"""Gram matrix containers, constructors, normalizations and alignment."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateKernelError, ValidationError

SYMMETRY_TOL = 1e-12


def _as_matrix(values) -> np.ndarray:
    K = np.array(values, dtype=np.float64, copy=True)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError(f"kernel matrix must be square, got shape {K.shape}")
    if K.shape[0] < 1:
        raise ValidationError("kernel matrix must have at least one row")
    if not np.all(np.isfinite(K)):
        raise ValidationError("kernel matrix contains NaN or Inf entries")
    asym = np.abs(K - K.T)
    limit = SYMMETRY_TOL * np.maximum(1.0, np.abs(K))
    if np.any(asym > limit):
        i, j = np.unravel_index(np.argmax(asym - limit), K.shape)
        raise ValidationError(
            f"kernel matrix is not symmetric: |K[{i},{j}] - K[{j},{i}]| = {asym[i, j]:.3e}"
        )
    K = 0.5 * (K + K.T)
    K.flags.writeable = False
    return K


@dataclass(frozen=True)
class KernelMatrix:
    """An immutable, symmetric, finite n x n Gram matrix."""

    values: np.ndarray
    name: str = "kernel"

    def __post_init__(self):
        object.__setattr__(self, "values", _as_matrix(self.values))
        object.__setattr__(self, "name", str(self.name))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def is_psd(self, rel_tol: float = 1e-8) -> bool:
        """Advisory check: smallest eigenvalue >= -rel_tol * trace."""
        lam_min = np.linalg.eigvalsh(self.values)[0]
        return lam_min >= -rel_tol * max(np.trace(self.values), 0.0)

    def renamed(self, name: str) -> "KernelMatrix":
        return KernelMatrix(self.values, name)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        return K.values
    return np.asarray(K, dtype=np.float64)


def _name(K, default="kernel") -> str:
    return K.name if isinstance(K, KernelMatrix) else default


class KernelStack:
    """Ordered collection of M kernels over the same n samples.

    Besides the member list this exposes the few reductions the solvers
    need, so alternative stack layouts (see :class:`FeatureBlockStack`) can
    stand in without materialising M dense matrices.
    """

    def __init__(self, kernels: Sequence[KernelMatrix]):
        kernels = [k if isinstance(k, KernelMatrix) else KernelMatrix(k, f"k{i}")
                   for i, k in enumerate(kernels)]
        if not kernels:
            raise ValidationError("a kernel stack needs at least one kernel")
        n = kernels[0].n
        for k in kernels:
            if k.n != n:
                raise ValidationError(
                    f"kernel {k.name!r} has n={k.n}, expected {n}")
        names = [k.name for k in kernels]
        if len(set(names)) != len(names):
            raise ValidationError(f"kernel names must be unique, got {names}")
        self.kernels = tuple(kernels)
        self.n = n
        self._dense = None

    @property
    def M(self) -> int:
        return len(self.kernels)

    @property
    def names(self) -> list[str]:
        return [k.name for k in self.kernels]

    def __len__(self):
        return self.M

    def __iter__(self):
        return iter(self.kernels)

    def __getitem__(self, m):
        return self.kernels[m]

    @property
    def values(self) -> np.ndarray:
        """Dense (M, n, n) array, built once."""
        if self._dense is None:
            dense = np.stack([k.values for k in self.kernels])
            dense.flags.writeable = False
            self._dense = dense
        return self._dense

    def combined(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        return np.tensordot(theta, self.values, axes=1)

    def apply(self, theta, alpha) -> np.ndarray:
        """(sum_m theta_m K_m) @ alpha."""
        return np.einsum("m,mij,j->i", np.asarray(theta, float), self.values,
                         np.asarray(alpha, float))

    def quad_terms(self, alpha) -> np.ndarray:
        """Vector of alpha' K_m alpha."""
        alpha = np.asarray(alpha, dtype=np.float64)
        return np.einsum("i,mij,j->m", alpha, self.values, alpha)


class FeatureBlockStack:
    """Linear kernels on disjoint feature blocks, kept in factored form.

    Kernel m is ``X[:, B_m] @ X[:, B_m].T`` after the columns of block m have
    been divided by ``sqrt(scale_m)``. Memory is O(n d) instead of O(M n^2),
    which is what makes the synthetic sweeps affordable.
    """

    def __init__(self, X, blocks=None, scales=None, names=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or not np.all(np.isfinite(X)):
            raise ValidationError("features must be a finite 2-d array")
        d = X.shape[1]
        if blocks is None:
            blocks = [np.array([j]) for j in range(d)]
        blocks = [np.asarray(b, dtype=np.int64) for b in blocks]
        owner = np.full(d, -1, dtype=np.int64)
        for m, b in enumerate(blocks):
            if np.any(owner[b] >= 0):
                raise ValidationError("feature blocks must be disjoint")
            owner[b] = m
        if np.any(owner < 0):
            raise ValidationError("every feature must belong to a block")
        self.blocks = blocks
        self.owner = owner
        self.scales = np.ones(len(blocks)) if scales is None else np.asarray(scales, float)
        self._col_scale = 1.0 / np.sqrt(self.scales[owner])
        self.X = X * self._col_scale
        self.n = X.shape[0]
        self._names = list(names) if names is not None else [f"f{m}" for m in range(len(blocks))]
        self._dense = None

    @classmethod
    def multiplicative(cls, X, blocks=None, names=None) -> "FeatureBlockStack":
        """Per-block linear kernels, each multiplicatively normalized on X."""
        X = np.asarray(X, dtype=np.float64)
        raw = cls(X, blocks, names=names)
        centred = X - X.mean(axis=0)
        scales = np.array([np.sum(centred[:, b] ** 2) / X.shape[0] for b in raw.blocks])
        tol = 1e-12 * max(1.0, float(np.max(np.sum(X * X, axis=1))))
        bad = np.flatnonzero(scales <= tol)
        if bad.size:
            raise DegenerateKernelError(
                f"block {raw._names[bad[0]]!r} has zero feature-space variance")
        return cls(X, raw.blocks, scales, names)

    @property
    def M(self) -> int:
        return len(self.blocks)

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self):
        return self.M

    def transform(self, Z) -> np.ndarray:
        """Apply the training-set block scaling to new rows."""
        return np.asarray(Z, dtype=np.float64) * self._col_scale

    def combined(self, theta) -> np.ndarray:
        w = np.asarray(theta, dtype=np.float64)[self.owner]
        return (self.X * w) @ self.X.T

    def apply(self, theta, alpha) -> np.ndarray:
        w = np.asarray(theta, float)[self.owner] * (self.X.T @ np.asarray(alpha, float))
        return self.X @ w

    def quad_terms(self, alpha) -> np.ndarray:
        u = self.X.T @ np.asarray(alpha, dtype=np.float64)
        return np.bincount(self.owner, weights=u * u, minlength=self.M)

    def decision_function(self, theta, alpha, bias, Z) -> np.ndarray:
        w = np.asarray(theta, float)[self.owner] * (self.X.T @ np.asarray(alpha, float))
        return self.transform(Z) @ w + bias

    def cross_rows(self, Z) -> np.ndarray:
        """(M, n_test, n) kernel evaluations k_m(x_i, z)."""
        Zs = self.transform(Z)
        return np.stack([Zs[:, b] @ self.X[:, b].T for b in self.blocks])

    @property
    def values(self) -> np.ndarray:
        if self._dense is None:
            self._dense = np.stack([self.X[:, b] @ self.X[:, b].T for b in self.blocks])
        return self._dense

    def to_stack(self) -> KernelStack:
        return KernelStack([KernelMatrix(K, nm) for K, nm in zip(self.values, self._names)])


# ---------------------------------------------------------------- builders

def _features(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValidationError(f"expected an n x d feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain NaN or Inf entries")
    return X


def linear_kernel(X, name: str = "linear") -> KernelMatrix:
    X = _features(X)
    return KernelMatrix(X @ X.T, name)


def rbf_kernel(X, two_sigma_sq: float, name: str = "rbf") -> KernelMatrix:
    """Gaussian kernel exp(-||x_i - x_j||^2 / two_sigma_sq)."""
    if not two_sigma_sq > 0 or not np.isfinite(two_sigma_sq):
        raise ValidationError(f"bandwidth must be positive and finite, got {two_sigma_sq}")
    X = _features(X)
    sq = np.sum(X * X, axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(dist, 0.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return KernelMatrix(np.exp(-dist / two_sigma_sq), name)


# ---------------------------------------------------------- normalization

def multiplicative_denominator(K) -> float:
    """(1/n) tr K - (1/n^2) sum_ij K_ij: mean squared distance to the centroid."""
    V = _values(K)
    n = V.shape[0]
    return float(np.trace(V) / n - V.sum() / n**2)


def normalize_multiplicative(K) -> KernelMatrix:
    """Rescale so the data have unit variance in feature space."""
    V = _values(K)
    D = multiplicative_denominator(V)
    if D <= 1e-12 * max(float(np.max(np.abs(V))), np.finfo(float).tiny):
        raise DegenerateKernelError(
            f"kernel {_name(K)!r}: all points coincide in feature space (D={D:.3e})")
    return KernelMatrix(V / D, _name(K))


def normalize_spherical(K) -> KernelMatrix:
    """Rescale every point to unit norm: K_ij / sqrt(K_ii K_jj)."""
    V = _values(K)
    diag = np.diag(V)
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise ValidationError(
            f"kernel {_name(K)!r}: diagonal entry {bad[0]} is {diag[bad[0]]!r}, must be > 0")
    s = 1.0 / np.sqrt(diag)
    out = V * s[:, None] * s[None, :]
    np.fill_diagonal(out, 1.0)
    return KernelMatrix(out, _name(K))


def center(K) -> KernelMatrix:
    """Center the implicit features at their empirical mean."""
    V = _values(K)
    r = V.mean(axis=0)
    out = V - r[None, :] - r[:, None] + V.mean()
    return KernelMatrix(out, _name(K))


def _unchanged(K) -> KernelMatrix:
    return K if isinstance(K, KernelMatrix) else KernelMatrix(K)


NORMALIZERS = {
    "none": _unchanged,
    "multiplicative": normalize_multiplicative,
    "spherical": normalize_spherical,
    "center": center,
}


# -------------------------------------------------------------- alignment

def alignment(Ki, Kj) -> float:
    """Frobenius cosine <Ki, Kj>_F / (||Ki||_F ||Kj||_F). Does not center."""
    A, B = _values(Ki), _values(Kj)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {B.shape}")
    na, nb = np.linalg.norm(A), np.linalg.norm(B)
    for nrm, K in ((na, Ki), (nb, Kj)):
        if nrm == 0.0:
            raise DegenerateKernelError(f"kernel {_name(K)!r} has zero Frobenius norm")
    value = float(np.vdot(A, B) / (na * nb))
    return min(1.0, max(-1.0, value))


def alignment_matrix(stack) -> np.ndarray:
    """Pairwise alignments of the centered members of ``stack``."""
    kernels = list(stack)
    centred = []
    for k in kernels:
        c = center(k)
        if np.linalg.norm(c.values) == 0.0:
            raise DegenerateKernelError(
                f"kernel {_name(k)!r} is zero after centering")
        centred.append(c)
    M = len(centred)
    A = np.eye(M)
    for i in range(M):
        for j in range(i + 1, M):
            A[i, j] = A[j, i] = alignment(centred[i], centred[j])
    return A
