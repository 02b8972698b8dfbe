"""Recursive long-lead ensemble forecasting, hyper-parameter validation, scoring.

Each ensemble member owns an independently sampled reservoir; all
members share the input history.  At every recursion step the members'
one-step forecasts are averaged, the average is appended to the history
as a pseudo-observation, and every member's readout is refit on the
extended series (reservoir weights stay fixed).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse

from . import kernels
from .errors import (
    DegenerateReservoir,
    EmptyEnsemble,
    EmptyGrid,
    InsufficientHistory,
    NonFiniteForecast,
    ShapeMismatch,
)
from .reservoir import HyperParams, generate_weights

_CHUNK = 256


@dataclass(frozen=True)
class ForecastEnsemble:
    """Member trajectories and their mean for one forecast window."""

    members: np.ndarray  # (n_ens, n_f, n_outputs)
    mean: np.ndarray     # (n_f, n_outputs)
    origin: int          # number of observed rows conditioned on
    member_seeds: tuple

    def __post_init__(self):
        if self.members.shape[0] < 1:
            raise EmptyEnsemble("ensemble needs at least one member")
        if not np.allclose(self.mean, self.members.mean(axis=0), atol=1e-12):
            raise ValueError("stored mean deviates from the member average")

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def horizon(self) -> int:
        return self.members.shape[1]


@dataclass(frozen=True)
class ValidationResult:
    """Grid-search outcome: one pooled validation MSE per candidate."""

    grid: tuple
    scores: np.ndarray
    best: int

    @property
    def best_params(self) -> HyperParams:
        return self.grid[self.best]


class _Standardizer:
    """Per-element z-scoring frozen on the training block."""

    def __init__(self, train: np.ndarray):
        self.mean = train.mean(axis=0)
        sd = train.std(axis=0, ddof=0)
        self.sd = np.where(sd > 0.0, sd, 1.0)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.sd


def _sample_members(hp: HyperParams, n_x: int, seed: int, n_ens: int):
    """Deterministic member reservoirs derived from the ensemble seed.

    Zero-spectral-radius draws (possible for very small or very sparse
    reservoirs) are retried here with the next candidate seed from the
    same stream, so the accepted members stay reproducible; the retry
    policy is the ensemble's, not the weight sampler's.
    """
    rng = np.random.default_rng(seed)
    members = []
    seeds = []
    attempts = 0
    while len(members) < n_ens:
        candidate = int(rng.integers(0, 2**63 - 1))
        attempts += 1
        if attempts > 100 * n_ens + 100:
            raise DegenerateReservoir(
                "could not sample a non-degenerate reservoir; "
                "increase size or density"
            )
        try:
            members.append(generate_weights(hp, n_x, candidate))
        except DegenerateReservoir:
            continue
        seeds.append(candidate)
    return members, seeds


def _embed_rows(z_hist: np.ndarray, hp: HyperParams, t_from: int, t_to: int) -> np.ndarray:
    """Lagged-input rows for target indices t_from..t_to-1.

    Row for target t concatenates the standardized series at lags
    lead, 2*lead, ..., embed*lead, plus a trailing 1 when a bias input
    is configured.
    """
    n_l = z_hist.shape[1]
    n_rows = t_to - t_from
    out = np.empty((n_rows, hp.n_inputs(n_l)))
    for k in range(1, hp.embed + 1):
        lo = t_from - k * hp.lead
        out[:, (k - 1) * n_l:k * n_l] = z_hist[lo:lo + n_rows]
    if hp.include_bias:
        out[:, -1] = 1.0
    return out


class _BlockedEnsemble:
    """All member reservoirs stacked into one block-diagonal system.

    A single kernel call then evolves every member at once; per-row CSR
    accumulation makes the blocked run bit-identical to member-by-member
    runs on the same backend.
    """

    def __init__(self, hp: HyperParams, n_outputs: int, seed: int, n_ens: int):
        self.hp = hp
        self.n_outputs = n_outputs
        self.n_ens = n_ens
        n_x = hp.n_inputs(n_outputs)
        members, self.member_seeds = _sample_members(hp, n_x, seed, n_ens)
        scaled = [m.w_res * m.scale_for(hp.spectral_radius) for m in members]
        w_blk = sparse.block_diag(scaled, format="csr")
        self.w_data = w_blk.data
        self.w_indices = w_blk.indices.astype(np.int32)
        self.w_indptr = w_blk.indptr.astype(np.int32)
        self.win_blk = sparse.vstack([m.w_in for m in members], format="csr")
        self.n_state = self.n_ens * hp.n_reservoir
        self.act = kernels.ACTIVATIONS[hp.activation]

    def _run(self, inputs: np.ndarray, h: np.ndarray) -> np.ndarray:
        drive = np.ascontiguousarray((self.win_blk @ inputs.T).T)
        return kernels.run_states(
            self.w_data, self.w_indices, self.w_indptr,
            drive, h, 1.0, self.hp.leak, self.act,
        )

    def train_pass(self, inputs: np.ndarray, targets: np.ndarray):
        """Evolve over the training rows, accumulating per-member Gram blocks.

        Returns (final blocked state, G, A) where G[m] = H_m' H_m and
        A[m] = H_m' Y over the washout-trimmed rows.
        """
        hp = self.hp
        n_h = hp.n_reservoir
        n_rows = inputs.shape[0]
        h = np.zeros(self.n_state)
        gram = np.zeros((self.n_ens, n_h, n_h))
        cross = np.zeros((self.n_ens, n_h, self.n_outputs))
        for start in range(0, n_rows, _CHUNK):
            end = min(start + _CHUNK, n_rows)
            states = self._run(np.ascontiguousarray(inputs[start:end]), h)
            h = states[-1].copy()
            keep = max(hp.washout - start, 0)
            if keep >= end - start:
                continue
            block = states[keep:].reshape(-1, self.n_ens, n_h)
            block = np.ascontiguousarray(block.transpose(1, 0, 2))
            gram += np.matmul(block.transpose(0, 2, 1), block)
            cross += np.matmul(block.transpose(0, 2, 1), targets[start + keep:end])
        if not np.isfinite(gram).all():
            raise NonFiniteForecast("training-state evolution diverged")
        return h, gram, cross

    def step(self, x_t: np.ndarray, h: np.ndarray) -> np.ndarray:
        return self._run(np.ascontiguousarray(x_t[None, :]), h)[0]

    def solve_readouts(self, gram: np.ndarray, cross: np.ndarray) -> np.ndarray:
        """Batched ridge solve, one readout per member."""
        lhs = gram + self.hp.ridge * np.eye(self.hp.n_reservoir)
        return np.linalg.solve(lhs, cross)


@lru_cache(maxsize=8)
def _cached_ensemble(hp: HyperParams, n_outputs: int, seed: int,
                     n_ens: int) -> _BlockedEnsemble:
    """Member weights are deterministic in (hp, seed), so consecutive
    forecast windows (as in calibration) can share the blocked system;
    the object holds no per-run state."""
    return _BlockedEnsemble(hp, n_outputs, seed, n_ens)


def iterative_forecast(train: np.ndarray, hp: HyperParams, n_f: int,
                       n_ens: int, seed: int) -> ForecastEnsemble:
    """Recursive multi-step ensemble forecast from the end of `train`.

    The cross-member average of each one-step forecast is appended as a
    pseudo-observation before the next step; readouts are refit on the
    extended series while reservoir weights stay fixed.
    """
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2:
        raise ShapeMismatch("train must be a (T, n_outputs) matrix")
    n_obs, n_l = train.shape
    if n_f < 1:
        raise ValueError("n_f must be >= 1")
    if n_obs <= hp.embed * hp.lead + hp.washout:
        raise InsufficientHistory(
            f"need more than {hp.embed * hp.lead + hp.washout} rows, got {n_obs}"
        )
    ens = _cached_ensemble(hp, n_l, seed, n_ens)
    std = _Standardizer(train)

    z_hist = np.empty((n_obs + n_f, n_l))
    z_hist[:n_obs] = std.apply(train)
    t0 = hp.embed * hp.lead
    inputs = _embed_rows(z_hist, hp, t0, n_obs)
    h, gram, cross = ens.train_pass(inputs, train[t0:])
    readouts = ens.solve_readouts(gram, cross)

    n_h = hp.n_reservoir
    members = np.empty((n_ens, n_f, n_l))
    for j in range(n_f):
        t = n_obs + j
        x_t = _embed_rows(z_hist, hp, t, t + 1)[0]
        h = ens.step(x_t, h)
        states = h.reshape(n_ens, n_h)
        preds = np.einsum("mh,mho->mo", states, readouts)
        if not np.isfinite(preds).all():
            raise NonFiniteForecast(f"trajectory diverged at step {j + 1}")
        members[:, j] = preds
        step_mean = preds.mean(axis=0)
        z_hist[t] = std.apply(step_mean)
        gram += states[:, :, None] * states[:, None, :]
        cross += states[:, :, None] * step_mean[None, None, :]
        readouts = ens.solve_readouts(gram, cross)

    return ForecastEnsemble(
        members=members,
        mean=members.mean(axis=0),
        origin=n_obs,
        member_seeds=tuple(ens.member_seeds),
    )


def validate_hyperparameters(train: np.ndarray, validation: np.ndarray,
                             grid: Sequence[HyperParams], n_f: int,
                             n_ens: int, seed: int) -> ValidationResult:
    """Score each candidate by pooled forecast MSE over the validation block.

    The validation block is covered by consecutive windows of length
    n_f (the last may be shorter); each window's forecast conditions on
    everything observed before it.  Ties go to the earliest candidate.
    """
    grid = tuple(grid)
    if len(grid) == 0:
        raise EmptyGrid("hyper-parameter grid is empty")
    train = np.asarray(train, dtype=np.float64)
    validation = np.asarray(validation, dtype=np.float64)
    if validation.shape[0] < n_f:
        raise InsufficientHistory("validation block shorter than one horizon")
    n_val = validation.shape[0]
    scores = np.empty(len(grid))
    for i, hp in enumerate(grid):
        sq_err = 0.0
        count = 0
        start = 0
        while start < n_val:
            horizon = min(n_f, n_val - start)
            history = np.vstack([train, validation[:start]])
            fc = iterative_forecast(history, hp, horizon, n_ens, seed)
            err = fc.mean - validation[start:start + horizon]
            sq_err += float(np.sum(err * err))
            count += err.size
            start += horizon
        scores[i] = sq_err / count
    best = int(np.argmin(scores))
    return ValidationResult(grid=grid, scores=scores, best=best)


def mse(forecast: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Mean squared error per output element, averaged over steps."""
    forecast = np.asarray(forecast, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if forecast.shape != truth.shape:
        raise ShapeMismatch(f"{forecast.shape} vs {truth.shape}")
    err = forecast - truth
    if err.ndim == 1:
        err = err[:, None]
    return np.mean(err * err, axis=0)


def median_iqr(values: np.ndarray) -> tuple[float, float]:
    """Median and interquartile range pooled over all entries."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    q1, q2, q3 = np.percentile(flat, [25.0, 50.0, 75.0])
    return float(q2), float(q3 - q1)


def crps(members: np.ndarray, y: float) -> float:
    """Empirical-ensemble CRPS of a scalar observation.

    mean|m_i - y| - 0.5 * mean|m_i - m_j|, the second mean over all
    ordered member pairs; uses the sorted-sums identity rather than the
    quadratic double loop.
    """
    m = np.asarray(members, dtype=np.float64).ravel()
    n = m.size
    if n == 0:
        raise EmptyEnsemble("CRPS needs at least one member")
    term1 = np.mean(np.abs(m - y))
    srt = np.sort(m)
    weights = 2.0 * np.arange(n) - n + 1.0
    half_pair_mean = np.dot(weights, srt) / (n * n)  # 0.5 * mean |m_i - m_j|
    return float(max(term1 - half_pair_mean, 0.0))


def crps_field(members: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """CRPS per (step, element) for an (n_ens, n_f, n_l) member block."""
    members = np.asarray(members, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if members.shape[1:] != truth.shape:
        raise ShapeMismatch(f"{members.shape[1:]} vs {truth.shape}")
    n = members.shape[0]
    if n == 0:
        raise EmptyEnsemble("CRPS needs at least one member")
    term1 = np.mean(np.abs(members - truth[None]), axis=0)
    srt = np.sort(members, axis=0)
    weights = 2.0 * np.arange(n) - n + 1.0
    half_pair_mean = np.einsum("i,ijk->jk", weights, srt) / (n * n)
    return np.maximum(term1 - half_pair_mean, 0.0)
