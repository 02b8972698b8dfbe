"""File formats for pipeline artifacts.

Every writer has a matching reader that round-trips exactly; floats are
written at full precision so reruns with the same seed are
byte-identical (manifests carry the only timestamps).
"""

from __future__ import annotations

import hashlib
import json
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import MissingInput

_FLOAT_FMT = "%.17g"


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"required input {p} does not exist")
    return p


def element_names(n: int) -> list[str]:
    return [f"e{i + 1}" for i in range(n)]


# -- time series ------------------------------------------------------------

def write_series(path, data: np.ndarray, names=None) -> None:
    """Time series CSV: header time,<element_1>,...  Times are 1-based rows."""
    data = np.atleast_2d(data)
    names = names or element_names(data.shape[1])
    df = pd.DataFrame(data, columns=names)
    df.insert(0, "time", np.arange(1, len(df) + 1))
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_series(path) -> tuple[np.ndarray, list[str]]:
    df = pd.read_csv(_require(path), float_precision="round_trip")
    if df.isna().any().any():
        raise ValueError(f"{path} contains missing values")
    names = [c for c in df.columns if c != "time"]
    return df[names].to_numpy(dtype=np.float64), names


# -- stations / metadata ----------------------------------------------------

def write_stations(path, ids, coords: np.ndarray) -> None:
    coords = np.atleast_2d(coords)
    df = pd.DataFrame({"id": ids, "lon": coords[:, 0], "lat": coords[:, 1]})
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_stations(path) -> tuple[list, np.ndarray]:
    df = pd.read_csv(_require(path), float_precision="round_trip")
    return df["id"].tolist(), df[["lon", "lat"]].to_numpy(dtype=np.float64)


# -- forecasts --------------------------------------------------------------

def write_forecast(path, mean: np.ndarray, origin: int, names=None,
                   members: np.ndarray | None = None) -> None:
    """Forecast CSV: time, element, mean, and optionally member_id rows."""
    mean = np.atleast_2d(mean)
    n_f, n_l = mean.shape
    names = names or element_names(n_l)
    times = np.repeat(np.arange(origin + 1, origin + n_f + 1), n_l)
    rows = {
        "time": times,
        "element": np.tile(names, n_f),
        "mean": mean.ravel(),
        "member_id": [""] * (n_f * n_l),
    }
    df = pd.DataFrame(rows)
    if members is not None:
        extra = []
        for m in range(members.shape[0]):
            extra.append(pd.DataFrame({
                "time": times,
                "element": np.tile(names, n_f),
                "mean": members[m].ravel(),
                "member_id": [str(m)] * (n_f * n_l),
            }))
        df = pd.concat([df] + extra, ignore_index=True)
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_forecast(path) -> tuple[np.ndarray, list[str], int]:
    """Returns (mean matrix, element names, origin)."""
    df = pd.read_csv(_require(path), float_precision="round_trip", keep_default_na=False,
                     dtype={"member_id": str})
    mean_rows = df[df["member_id"] == ""]
    names = list(dict.fromkeys(mean_rows["element"]))
    times = np.sort(mean_rows["time"].unique())
    pivot = mean_rows.pivot(index="time", columns="element", values="mean")
    mean = pivot.loc[times, names].to_numpy(dtype=np.float64)
    return mean, names, int(times[0] - 1)


# -- calibration ------------------------------------------------------------

def write_calibration(path, sigma_hat: np.ndarray, sigma_tilde: np.ndarray,
                      names=None) -> None:
    n_l, n_f = sigma_hat.shape
    names = names or element_names(n_l)
    df = pd.DataFrame({
        "element": np.repeat(names, n_f),
        "step": np.tile(np.arange(1, n_f + 1), n_l),
        "sigma_hat": sigma_hat.ravel(),
        "sigma_tilde": sigma_tilde.ravel(),
    })
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_calibration(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    df = pd.read_csv(_require(path), float_precision="round_trip")
    names = list(dict.fromkeys(df["element"]))
    n_f = df["step"].max()
    shape = (len(names), int(n_f))
    return (df["sigma_hat"].to_numpy().reshape(shape),
            df["sigma_tilde"].to_numpy().reshape(shape), names)


def write_pit(path, pit_calibrated: np.ndarray, pit_uncalibrated: np.ndarray,
              names=None) -> None:
    """PIT archive: one row per (element, step, window)."""
    n_l, n_f, n_w = pit_calibrated.shape
    names = names or element_names(n_l)
    df = pd.DataFrame({
        "element": np.repeat(names, n_f * n_w),
        "step": np.tile(np.repeat(np.arange(1, n_f + 1), n_w), n_l),
        "window": np.tile(np.arange(1, n_w + 1), n_l * n_f),
        "pit_calibrated": pit_calibrated.ravel(),
        "pit_uncalibrated": pit_uncalibrated.ravel(),
    })
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_pit(path) -> pd.DataFrame:
    return pd.read_csv(_require(path), float_precision="round_trip")


# -- residual archive -------------------------------------------------------

def write_residual_archive(path, samples: np.ndarray, names=None) -> None:
    """Pooled standardized residual vectors, one row per (step, window) sample."""
    samples = np.atleast_2d(samples)
    names = names or element_names(samples.shape[1])
    df = pd.DataFrame(samples, columns=names)
    df.insert(0, "sample", np.arange(1, len(df) + 1))
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_residual_archive(path) -> tuple[np.ndarray, list[str]]:
    df = pd.read_csv(_require(path), float_precision="round_trip")
    names = [c for c in df.columns if c != "sample"]
    return df[names].to_numpy(dtype=np.float64), names


# -- correlation matrices ---------------------------------------------------

def write_correlation(path, corr: np.ndarray, names=None) -> None:
    """Correlation heatmap triplets: element_i, element_j, value."""
    n = corr.shape[0]
    names = names or element_names(n)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    df = pd.DataFrame({
        "element_i": np.asarray(names)[ii.ravel()],
        "element_j": np.asarray(names)[jj.ravel()],
        "value": corr.ravel(),
    })
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_correlation(path) -> tuple[np.ndarray, list[str]]:
    df = pd.read_csv(_require(path), float_precision="round_trip")
    names = list(dict.fromkeys(df["element_i"]))
    n = len(names)
    return df["value"].to_numpy(dtype=np.float64).reshape(n, n), names


def write_lambda_tradeoff(path, lambdas, variance_ratio_pct, nonzero_prop) -> None:
    df = pd.DataFrame({
        "lambda_s": lambdas,
        "variance_ratio_pct": variance_ratio_pct,
        "nonzero_proportion": nonzero_prop,
    })
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_lambda_tradeoff(path) -> pd.DataFrame:
    return pd.read_csv(_require(path), float_precision="round_trip")


# -- interpolated fields ----------------------------------------------------

def write_field(path, field) -> None:
    """Field CSV: lon, lat, time, mean, sd."""
    n_t, n_g = field.mean.shape
    df = pd.DataFrame({
        "lon": np.tile(field.points[:, 0], n_t),
        "lat": np.tile(field.points[:, 1], n_t),
        "time": np.repeat(field.times, n_g),
        "mean": field.mean.ravel(),
        "sd": field.sd.ravel(),
    })
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_field(path):
    from .spatial import InterpolatedField
    df = pd.read_csv(_require(path), float_precision="round_trip")
    times = np.sort(df["time"].unique())
    first = df[df["time"] == times[0]]
    points = first[["lon", "lat"]].to_numpy(dtype=np.float64)
    n_t, n_g = len(times), len(points)
    mean = df["mean"].to_numpy(dtype=np.float64).reshape(n_t, n_g)
    sd = df["sd"].to_numpy(dtype=np.float64).reshape(n_t, n_g)
    return InterpolatedField(points=points, times=times, mean=mean, sd=sd)


# -- intervals / exposure ---------------------------------------------------

def write_intervals(path, df: pd.DataFrame) -> None:
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_intervals(path) -> pd.DataFrame:
    return pd.read_csv(_require(path), float_precision="round_trip")


def write_exposure(path, times, mean_exposed, lo, hi) -> None:
    df = pd.DataFrame({"time": times, "mean_exposed": mean_exposed,
                       "lo": lo, "hi": hi})
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_exposure(path) -> pd.DataFrame:
    return pd.read_csv(_require(path), float_precision="round_trip")


def write_exceedance(path, times, district_ids, probability: np.ndarray,
                     threshold_prob: float = 0.5) -> None:
    n_t, n_d = probability.shape
    df = pd.DataFrame({
        "time": np.repeat(times, n_d),
        "district": np.tile(district_ids, n_t),
        "exceedance_probability": probability.ravel(),
        "exceeded": (probability.ravel() > threshold_prob).astype(int),
    })
    df.to_csv(path, index=False, float_format=_FLOAT_FMT)


def read_exceedance(path) -> pd.DataFrame:
    return pd.read_csv(_require(path), float_precision="round_trip")


# -- scores and manifests ---------------------------------------------------

def write_scores(path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)


def read_scores(path) -> list[dict]:
    with open(_require(path)) as fh:
        return json.load(fh)


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, stage: str, seed: int, cfg_hash: str | None,
                   **extra) -> None:
    import numpy
    import scipy
    from . import kernels
    doc = {
        "stage": stage,
        "seed": seed,
        "config_hash": cfg_hash,
        "package_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "numpy_version": numpy.__version__,
        "scipy_version": scipy.__version__,
        "python_version": platform.python_version(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def read_manifest(path) -> dict:
    with open(_require(path)) as fh:
        return json.load(fh)
