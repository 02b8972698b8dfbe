"""Cyclic 40-variable chaotic benchmark system, integrated with fixed-step RK4."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EchocastError


class Diverged(EchocastError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class Lorenz96Config:
    n_vars: int = 40
    forcing: float = 4.5
    dt: float = 0.01
    sample_every: int = 20
    spinup: int = 400
    init_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_vars < 4:
            raise ValueError("n_vars must be >= 4")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.spinup < 0:
            raise ValueError("spinup must be >= 0")


def derivative(state: np.ndarray, forcing: float) -> np.ndarray:
    """Advection minus damping plus forcing, with cyclic neighbor indexing."""
    y = np.asarray(state, dtype=np.float64)
    if y.shape[-1] < 4:
        raise ValueError("state needs at least 4 variables")
    return ((np.roll(y, -1, axis=-1) - np.roll(y, 2, axis=-1)) * np.roll(y, 1, axis=-1)
            - y + forcing)


def rk4_step(state: np.ndarray, forcing: float, dt: float) -> np.ndarray:
    k1 = derivative(state, forcing)
    k2 = derivative(state + 0.5 * dt * k1, forcing)
    k3 = derivative(state + 0.5 * dt * k2, forcing)
    k4 = derivative(state + dt * k3, forcing)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(cfg: Lorenz96Config, n_points: int, n_realizations: int = 1) -> np.ndarray:
    """Integrate seeded realizations and record every `sample_every`-th step.

    Initial conditions are the forcing value plus independent Gaussian
    perturbations; the spinup prefix is discarded before recording.
    Returns an (n_realizations, n_points, n_vars) array.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_realizations)
    out = np.empty((n_realizations, n_points, cfg.n_vars))
    for r, child in enumerate(seeds):
        rng = np.random.default_rng(child)
        state = cfg.forcing + cfg.init_sd * rng.standard_normal(cfg.n_vars)
        for _ in range(cfg.spinup):
            state = rk4_step(state, cfg.forcing, cfg.dt)
        for i in range(n_points):
            for _ in range(cfg.sample_every):
                state = rk4_step(state, cfg.forcing, cfg.dt)
            out[r, i] = state
        if not np.isfinite(out[r]).all():
            raise Diverged(f"realization {r} produced non-finite values")
    return out
