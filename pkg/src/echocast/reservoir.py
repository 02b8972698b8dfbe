"""Sparse stochastic reservoirs: weight generation, state evolution, ridge readout.

Weights follow a spike-and-slab law: each entry is a standard normal
draw kept with probability equal to the density, else exactly zero.
The reservoir matrix is applied scaled to a target spectral radius so
the state recursion forgets its initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, sparse

from . import kernels
from .errors import (
    DegenerateReservoir,
    DimensionMismatch,
    NonFiniteState,
    SingularSystem,
)

_POWER_TOL = 1e-8
_POWER_MAXITER = 10_000
_DENSE_EIG_LIMIT = 512


@dataclass(frozen=True)
class HyperParams:
    """Reduced hyper-parameter vector plus fixed structural settings.

    n_reservoir: hidden units; embed: number of lagged input blocks;
    lead: spacing (in recorded steps) between lagged blocks, equal to
    the forecast lead; spectral_radius: target radius in (0,1);
    ridge: readout penalty; leak: convex-combination weight on the new
    activation; reservoir_density / input_density: keep-probabilities
    of the spike-and-slab weights.
    """

    n_reservoir: int = 60
    embed: int = 4
    lead: int = 1
    spectral_radius: float = 0.55
    ridge: float = 0.001
    leak: float = 0.0023
    reservoir_density: float = 0.1
    input_density: float = 0.1
    activation: str = "tanh"
    include_bias: bool = True
    washout: int = 0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ValueError("n_reservoir must be >= 1")
        if self.embed < 1:
            raise ValueError("embed must be >= 1")
        if self.lead < 1:
            raise ValueError("lead must be >= 1")
        if not 0.0 < self.spectral_radius < 1.0:
            raise ValueError("spectral_radius must lie in (0, 1)")
        if not 0.0 < self.leak <= 1.0:
            raise ValueError("leak must lie in (0, 1]")
        if self.ridge < 0.0:
            raise ValueError("ridge must be >= 0")
        if not 0.0 <= self.reservoir_density <= 1.0:
            raise ValueError("reservoir_density must lie in [0, 1]")
        if not 0.0 <= self.input_density <= 1.0:
            raise ValueError("input_density must lie in [0, 1]")
        if self.activation not in kernels.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.washout < 0:
            raise ValueError("washout must be >= 0")

    def n_inputs(self, n_outputs: int) -> int:
        """Input dimension for a given output dimension."""
        return n_outputs * self.embed + (1 if self.include_bias else 0)


@dataclass(frozen=True)
class WeightMatrices:
    """A sampled reservoir/input weight pair with spectral metadata.

    `w_res` is stored unscaled; the state recursion applies the factor
    spectral_radius_target / raw_spectral_radius.
    """

    w_res: sparse.csr_matrix
    w_in: sparse.csr_matrix
    raw_spectral_radius: float
    seed: int

    @property
    def n_reservoir(self) -> int:
        return self.w_res.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w_in.shape[1]

    def scale_for(self, target: float) -> float:
        """Multiplier bringing the reservoir matrix to the target radius."""
        return target / self.raw_spectral_radius


@dataclass(frozen=True)
class StateMatrix:
    """Hidden states stacked row-wise, with the washout prefix flagged."""

    states: np.ndarray
    washout: int = 0

    @property
    def h_last(self) -> np.ndarray:
        return self.states[-1]

    @property
    def included(self) -> np.ndarray:
        """Rows eligible for readout fitting (washout removed)."""
        return self.states[self.washout:]


@dataclass(frozen=True)
class Readout:
    """Linear readout coefficients, hidden units by outputs."""

    coef: np.ndarray

    def predict(self, states: np.ndarray) -> np.ndarray:
        return states @ self.coef


def spectral_radius(w: sparse.csr_matrix, rng: np.random.Generator,
                    tol: float = _POWER_TOL,
                    max_iter: int = _POWER_MAXITER) -> float:
    """Spectral radius of a sparse matrix.

    Power iteration with a seeded random start; when the estimate fails
    to settle (typical when the dominant eigenvalue is a complex pair,
    which makes the iteration oscillate forever), falls back to dense
    eigendecomposition for matrices up to 512 rows and raises beyond
    that.  With the dense fallback available the power budget is capped
    well below `max_iter`: burning the full budget would only delay the
    identical dense answer.
    """
    n = w.shape[0]
    dense_ok = n <= _DENSE_EIG_LIMIT
    budget = min(max_iter, 300) if dense_ok else max_iter
    mat = w.toarray() if dense_ok else w
    v = rng.standard_normal(n)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.ones(n)
        norm = np.sqrt(n)
    v /= norm
    estimate = 0.0
    for _ in range(budget):
        wv = mat @ v
        norm = np.linalg.norm(wv)
        if norm < 1e-300:
            return 0.0
        new_estimate = norm
        v = wv / norm
        if abs(new_estimate - estimate) <= tol * max(1.0, new_estimate):
            return float(new_estimate)
        estimate = new_estimate
    if dense_ok:
        return float(np.max(np.abs(np.linalg.eigvals(mat))))
    raise DegenerateReservoir(
        f"power iteration did not converge for n={n} > {_DENSE_EIG_LIMIT}"
    )


def _spike_slab(rng: np.random.Generator, shape, density: float) -> sparse.csr_matrix:
    keep = rng.random(shape) < density
    values = rng.standard_normal(shape)
    mat = sparse.csr_matrix(np.where(keep, values, 0.0))
    mat.indices = mat.indices.astype(np.int32)
    mat.indptr = mat.indptr.astype(np.int32)
    return mat


def generate_weights(hp: HyperParams, n_inputs: int, seed: int) -> WeightMatrices:
    """Sample a reservoir/input weight pair.

    The draw order (reservoir mask, reservoir values, input mask, input
    values, power-iteration start) is fixed, so identical seeds give
    bit-identical matrices.
    """
    if hp.n_reservoir < 1:
        raise ValueError("n_reservoir must be >= 1")
    if n_inputs < 1:
        raise ValueError("n_inputs must be >= 1")
    rng = np.random.default_rng(seed)
    w_res = _spike_slab(rng, (hp.n_reservoir, hp.n_reservoir), hp.reservoir_density)
    w_in = _spike_slab(rng, (hp.n_reservoir, n_inputs), hp.input_density)
    rho = spectral_radius(w_res, rng)
    if rho < 1e-12:
        raise DegenerateReservoir(
            f"reservoir spectral radius {rho:.3e} below 1e-12 for seed {seed}; "
            "resample with a new seed"
        )
    return WeightMatrices(w_res=w_res, w_in=w_in, raw_spectral_radius=rho, seed=seed)


def _check_dims(wm: WeightMatrices, n_state: int, n_input: int) -> None:
    if wm.n_reservoir != n_state:
        raise DimensionMismatch(
            f"state has {n_state} entries, reservoir expects {wm.n_reservoir}"
        )
    if wm.n_inputs != n_input:
        raise DimensionMismatch(
            f"input has {n_input} entries, input map expects {wm.n_inputs}"
        )


def _run_kernel(inputs: np.ndarray, h0: np.ndarray, wm: WeightMatrices,
                hp: HyperParams) -> np.ndarray:
    scale = wm.scale_for(hp.spectral_radius)
    act = kernels.ACTIVATIONS[hp.activation]
    drive = np.ascontiguousarray((wm.w_in @ inputs.T).T, dtype=np.float64)
    return kernels.run_states(
        wm.w_res.data, wm.w_res.indices, wm.w_res.indptr,
        drive, np.ascontiguousarray(h0, dtype=np.float64),
        scale, hp.leak, act,
    )


def update_state(h_prev: np.ndarray, x_t: np.ndarray, wm: WeightMatrices,
                 hp: HyperParams) -> np.ndarray:
    """One step of the leaky state recursion."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_dims(wm, h_prev.shape[0], x_t.shape[0])
    return _run_kernel(x_t[None, :], h_prev, wm, hp)[0]


def run_reservoir(inputs: np.ndarray, wm: WeightMatrices, hp: HyperParams) -> StateMatrix:
    """Evolve the reservoir from the zero state over a full input sequence."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise DimensionMismatch("inputs must be a (T, n_x) matrix with T >= 1")
    _check_dims(wm, wm.n_reservoir, inputs.shape[1])
    h0 = np.zeros(wm.n_reservoir)
    states = _run_kernel(inputs, h0, wm, hp)
    if not np.isfinite(states).all():
        raise NonFiniteState(
            "state evolution overflowed; check activation/scaling"
        )
    return StateMatrix(states=states, washout=hp.washout)


def fit_readout(states: np.ndarray, targets: np.ndarray, ridge: float) -> Readout:
    """Ridge readout: coefficients minimizing the penalized squared error.

    Solved from the normal equations by Cholesky factorization; the
    Gram matrix plus penalty is symmetric positive definite whenever
    ridge > 0 or the states have full column rank.
    """
    h = np.asarray(states, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if h.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"{h.shape[0]} state rows vs {y.shape[0]} target rows"
        )
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    gram = h.T @ h
    gram[np.diag_indices_from(gram)] += ridge
    try:
        factor = linalg.cho_factor(gram)
    except linalg.LinAlgError as exc:
        raise SingularSystem(
            "normal equations are singular; use ridge > 0"
        ) from exc
    coef = linalg.cho_solve(factor, h.T @ y)
    return Readout(coef=coef)
