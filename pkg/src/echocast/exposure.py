"""District aggregation of interpolated fields and exposed-population series.

Grid values are averaged into districts by centroid membership; the
exposed population per time step comes from Monte Carlo draws of the
joint log-scale field over districts, thresholded on the concentration
scale (the log transform is monotone, so thresholding the log field at
log(threshold) is exact).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from shapely.geometry import shape
from shapely import contains_xy

from .errors import BadThreshold, EmptyDistrict
from .spatial import InterpolatedField


@dataclass(frozen=True)
class DistrictSet:
    """District polygons with susceptible-population counts."""

    ids: tuple
    polygons: tuple
    populations: np.ndarray

    def __post_init__(self):
        if np.any(self.populations < 0):
            raise ValueError("populations must be nonnegative")
        for did, poly in zip(self.ids, self.polygons):
            if not poly.is_valid:
                raise ValueError(f"district {did!r} polygon is not simple")

    @property
    def n_districts(self) -> int:
        return len(self.ids)


def load_districts(path: str | Path) -> DistrictSet:
    """Read districts from GeoJSON with a `population` property per feature."""
    with open(path) as fh:
        doc = json.load(fh)
    ids, polys, pops = [], [], []
    for k, feature in enumerate(doc["features"]):
        props = feature.get("properties", {})
        ids.append(props.get("id", k))
        polys.append(shape(feature["geometry"]))
        pops.append(float(props["population"]))
    return DistrictSet(ids=tuple(ids), polygons=tuple(polys),
                       populations=np.array(pops))


def district_membership(districts: DistrictSet, points: np.ndarray) -> list:
    """Grid-point indices inside each district (centroid inclusion)."""
    pts = np.atleast_2d(points)
    members = []
    for did, poly in zip(districts.ids, districts.polygons):
        inside = contains_xy(poly, pts[:, 0], pts[:, 1])
        idx = np.nonzero(inside)[0]
        if idx.size == 0:
            raise EmptyDistrict(f"district {did!r} contains no grid point")
        members.append(idx)
    return members


def district_means(field: InterpolatedField, districts: DistrictSet) -> np.ndarray:
    """Average field value per district per time, (n_t, n_districts)."""
    members = district_membership(districts, field.points)
    out = np.empty((field.mean.shape[0], districts.n_districts))
    for d, idx in enumerate(members):
        out[:, d] = field.mean[:, idx].mean(axis=1)
    return out


def district_sds(field: InterpolatedField, districts: DistrictSet) -> np.ndarray:
    """Average field SD per district per time (uncertainty scale proxy)."""
    members = district_membership(districts, field.points)
    out = np.empty((field.sd.shape[0], districts.n_districts))
    for d, idx in enumerate(members):
        out[:, d] = field.sd[:, idx].mean(axis=1)
    return out


def exposure_series(means: np.ndarray, cov: np.ndarray, threshold: float,
                    populations: np.ndarray, n_draws: int = 2000,
                    seed: int = 0) -> dict:
    """Exposed-population mean and prediction interval per time step.

    `means` is the (n_t, n_d) log-scale district field; `cov` the
    log-scale district covariance, either (n_d, n_d) shared or
    (n_t, n_d, n_d).  Each draw thresholds the sampled log field at
    log(threshold) and sums the populations of exceeding districts.
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    populations = np.asarray(populations, dtype=np.float64)
    if threshold <= 0.0:
        raise BadThreshold("threshold must be positive on the concentration scale")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    n_t, n_d = means.shape
    log_thresh = np.log(threshold)
    cov = np.asarray(cov, dtype=np.float64)
    shared = cov.ndim == 2

    rng = np.random.default_rng(seed)
    mean_exposed = np.empty(n_t)
    lo = np.empty(n_t)
    hi = np.empty(n_t)
    exceed_prob = np.empty((n_t, n_d))
    if shared:
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(n_d))
    for t in range(n_t):
        if not shared:
            chol = np.linalg.cholesky(cov[t] + 1e-12 * np.eye(n_d))
        draws = means[t] + rng.standard_normal((n_draws, n_d)) @ chol.T
        over = draws > log_thresh
        exceed_prob[t] = over.mean(axis=0)
        exposed = over @ populations
        mean_exposed[t] = exposed.mean()
        lo[t] = np.percentile(exposed, 2.5, method="nearest")
        hi[t] = np.percentile(exposed, 97.5, method="nearest")
    return {
        "mean_exposed": mean_exposed,
        "lo": lo,
        "hi": hi,
        "exceedance_probability": exceed_prob,
    }
