"""Joint dependence of standardized residuals across vector elements.

Provides the empirical correlation, a penalized sparse estimate solved
by majorize-minimize with off-diagonal soft-thresholding, and the
variance helpers for element differences and the grand mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import ZeroVariance

EIG_FLOOR = 1e-8
NONZERO_TOL = 1e-10


@dataclass(frozen=True)
class DependenceModel:
    """A correlation matrix over vector elements with its provenance."""

    corr: np.ndarray
    provenance: str
    penalty: Optional[float] = None        # lambda when provenance == "sparse"
    shrink_weight: Optional[float] = None  # delta when provenance == "shrunk"
    converged: bool = True

    def __post_init__(self):
        c = self.corr
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(c, c.T, atol=1e-10):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(c), 1.0, atol=1e-10):
            raise ValueError("correlation matrix must have unit diagonal")
        if np.any(np.abs(c) > 1.0 + 1e-10):
            raise ValueError("correlation entries must lie in [-1, 1]")
        if np.min(linalg.eigvalsh(c)) < -1e-10:
            raise ValueError("correlation matrix must be positive semidefinite")

    @property
    def n_elements(self) -> int:
        return self.corr.shape[0]


def identity_model(n: int) -> DependenceModel:
    return DependenceModel(corr=np.eye(n), provenance="identity")


def empirical_correlation(samples: np.ndarray) -> DependenceModel:
    """Sample correlation of pooled standardized residual vectors."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an (N, n_elements) sample matrix with N >= 2")
    if np.any(x.std(axis=0) == 0.0):
        raise ZeroVariance("a column has zero variance")
    corr = np.corrcoef(x, rowvar=False)
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return DependenceModel(corr=corr, provenance="empirical")


def _floor_pd(c: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Clip eigenvalues from below, then restore the unit diagonal."""
    vals, vecs = linalg.eigh(0.5 * (c + c.T))
    if vals[0] >= floor:
        out = 0.5 * (c + c.T)
    else:
        out = (vecs * np.maximum(vals, floor)) @ vecs.T
    d = np.sqrt(np.diag(out))
    out = out / np.outer(d, d)
    out = np.clip(0.5 * (out + out.T), -1.0, 1.0)
    np.fill_diagonal(out, 1.0)
    return out


def _penalty(c: np.ndarray, lam: float) -> float:
    off = np.abs(c).sum() - np.trace(np.abs(c))
    return lam * off


def _objective(c: np.ndarray, c_hat: np.ndarray, lam: float) -> float:
    factor = linalg.cho_factor(c, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    trace_term = np.trace(linalg.cho_solve(factor, c_hat))
    return float(logdet + trace_term + _penalty(c, lam))


def _surrogate(c: np.ndarray, c0_inv: np.ndarray, c_hat: np.ndarray, lam: float) -> float:
    factor = linalg.cho_factor(c, lower=True)
    trace_term = np.trace(linalg.cho_solve(factor, c_hat))
    return float(np.sum(c0_inv * c) + trace_term + _penalty(c, lam))


def _soft_threshold_off_diag(c: np.ndarray, amount: float) -> np.ndarray:
    out = np.sign(c) * np.maximum(np.abs(c) - amount, 0.0)
    np.fill_diagonal(out, np.diag(c))
    return out


def sparse_correlation(c_hat: np.ndarray, lambda_s: float,
                       max_outer: int = 500, tol: float = 1e-6,
                       max_inner: int = 25,
                       objective_trace: list | None = None) -> DependenceModel:
    """Penalized sparse correlation via majorize-minimize.

    Minimizes  log det(C) + tr(C^-1 C_hat) + lambda * sum |off-diagonal|
    over symmetric positive-definite matrices with unit diagonal.  The
    concave log-determinant is majorized by its tangent at the current
    iterate; the convex surrogate is descended by generalized gradient
    steps with off-diagonal soft-thresholding and a halving line
    search.  Eigenvalues are floored at 1e-8 and the diagonal is
    re-normalized after every step, and a step only counts if it
    decreases the surrogate, so the true objective never increases.
    """
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if lambda_s < 0.0:
        raise ValueError("lambda_s must be >= 0")
    c = _floor_pd(c_hat)
    obj = _objective(c, c_hat, lambda_s)
    if objective_trace is not None:
        objective_trace.append(obj)
    converged = False
    step = 1.0
    for _ in range(max_outer):
        factor = linalg.cho_factor(c, lower=True)
        c0_inv = linalg.cho_solve(factor, np.eye(c.shape[0]))
        current = _surrogate(c, c0_inv, c_hat, lambda_s)
        for _ in range(max_inner):
            c_inv = linalg.cho_solve(linalg.cho_factor(c, lower=True),
                                     np.eye(c.shape[0]))
            grad = c0_inv - c_inv @ c_hat @ c_inv
            if np.max(np.abs(grad)) < 1e-14 and lambda_s == 0.0:
                break
            step = min(step * 2.0, 1.0)
            improved = False
            while step >= 1e-12:
                cand = _soft_threshold_off_diag(c - step * grad, step * lambda_s)
                np.fill_diagonal(cand, 1.0)
                cand = _floor_pd(cand)
                value = _surrogate(cand, c0_inv, c_hat, lambda_s)
                if value < current - 1e-14:
                    c = cand
                    current = value
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        new_obj = _objective(c, c_hat, lambda_s)
        if objective_trace is not None:
            objective_trace.append(new_obj)
        if abs(new_obj - obj) < tol:
            obj = new_obj
            converged = True
            break
        obj = new_obj
    if not converged:
        warnings.warn("sparse correlation solver hit the outer iteration cap",
                      RuntimeWarning, stacklevel=2)
    return DependenceModel(corr=c, provenance="sparse", penalty=float(lambda_s),
                           converged=converged)


def grand_mean_variance(model: DependenceModel) -> float:
    """Variance of the across-element average of unit-variance residuals."""
    n = model.n_elements
    return float(model.corr.sum() / (n * n))


def difference_variance(model: DependenceModel, i: int, j: int) -> float:
    """Variance of the difference between elements i and j."""
    n = model.n_elements
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"element index out of range for n={n}")
    c = model.corr
    return float(c[i, i] + c[j, j] - 2.0 * c[i, j])


def nonzero_proportion(model: DependenceModel) -> float:
    """Fraction of off-diagonal entries with magnitude above 1e-10."""
    c = model.corr
    n = c.shape[0]
    if n < 2:
        return 0.0
    off_mask = ~np.eye(n, dtype=bool)
    return float(np.mean(np.abs(c[off_mask]) > NONZERO_TOL))


def ring_neighbor_pairs(n: int) -> list[tuple[int, int]]:
    """Adjacent index pairs on a cyclic layout."""
    return [(i, (i + 1) % n) for i in range(n)]


def mild_correlation_pairs(model: DependenceModel,
                           pairs: Optional[list[tuple[int, int]]] = None,
                           lo: float = 0.4, hi: float = 0.6) -> list[tuple[int, int]]:
    """Neighbor pairs whose absolute correlation falls in [lo, hi]."""
    if pairs is None:
        pairs = ring_neighbor_pairs(model.n_elements)
    c = model.corr
    return [(i, j) for i, j in pairs if lo <= abs(c[i, j]) <= hi]
