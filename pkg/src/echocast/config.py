"""Run configuration: an INI file with one section per pipeline stage.

Grid values accept comma lists and `start:stop:step` ranges (inclusive
of the stop within half a step), which may be mixed:
``leak = 0.01:1.0:0.01, 0.0001:0.01:0.0001``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .reservoir import HyperParams


def parse_grid(text: str) -> tuple[float, ...]:
    """Parse a comma/range grid specification into a float tuple."""
    values: list[float] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            pieces = part.split(":")
            if len(pieces) != 3:
                raise ConfigError(f"range must be start:stop:step, got {part!r}")
            start, stop, step = (float(x) for x in pieces)
            if step <= 0:
                raise ConfigError(f"range step must be positive in {part!r}")
            grid = np.round(np.arange(start, stop + 0.5 * step, step), 12)
            values.extend(grid.tolist())
        else:
            values.append(float(part))
    if not values:
        raise ConfigError(f"empty grid specification {text!r}")
    return tuple(values)


# Hyper-parameter search grids: reservoir sizes 30..180, embedding depths
# 2..6, spectral radii in 0.05 steps (the echo-state property needs < 1,
# so the top of the grid stops at 0.95), ridge penalties, and the two
# leak grids (coarse 0.01..1 and fine 0.0001..0.01).
DEFAULT_GRIDS = {
    "n_reservoir": tuple(30 + 30 * s for s in range(6)),
    "embed": (2, 3, 4, 5, 6),
    "spectral_radius": tuple(np.round(np.arange(0.05, 0.9999, 0.05), 2)),
    "ridge": (0.001, 0.005, 0.01),
    "leak": tuple(np.round(np.arange(0.01, 1.0001, 0.01), 4))
    + tuple(np.round(np.arange(0.0001, 0.01, 0.0001), 6)),
}


@dataclass
class RunConfig:
    """Everything a pipeline run needs, with benchmark-scale defaults."""

    train_path: str | None = None
    stations_path: str | None = None
    districts_path: str | None = None
    transform: str = "none"

    hyper: HyperParams = field(default_factory=HyperParams)
    grids: dict = field(default_factory=lambda: dict(DEFAULT_GRIDS))

    horizon: int = 20
    ensemble: int = 300
    holdout: int = 100

    cal_windows: int = 20
    cal_horizon: int = 20

    lambda_grid: tuple = tuple(np.round(np.arange(0.0, 0.2001, 0.02), 2))
    lambda_s: float = 0.1

    knots_nx: int = 3
    knots_ny: int = 2
    grid_nx: int = 20
    grid_ny: int = 20
    grid_margin: float = 0.05

    threshold: float = 12.1
    draws: int = 2000

    seed: int = 0
    threads: int = 0

    def __post_init__(self):
        if self.transform not in ("none", "log"):
            raise ConfigError(f"transform must be none or log, got {self.transform!r}")
        for name, grid in self.grids.items():
            if len(grid) == 0:
                raise ConfigError(f"grid {name!r} is empty")
        for label, p in (("train", self.train_path),
                         ("stations", self.stations_path),
                         ("districts", self.districts_path)):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{label} path {p} does not exist")


def load_config(path) -> RunConfig:
    """Read a RunConfig from an INI file; unspecified keys keep defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    kwargs = {}
    if parser.has_section("data"):
        sec = parser["data"]
        kwargs["train_path"] = sec.get("train", fallback=None)
        kwargs["stations_path"] = sec.get("stations", fallback=None)
        kwargs["districts_path"] = sec.get("districts", fallback=None)
        kwargs["transform"] = sec.get("transform", fallback="none")

    hp_kwargs = {}
    if parser.has_section("esn"):
        sec = parser["esn"]
        for key, cast in (("n_reservoir", int), ("embed", int), ("lead", int),
                          ("washout", int), ("spectral_radius", float),
                          ("ridge", float), ("leak", float),
                          ("reservoir_density", float), ("input_density", float)):
            if key in sec:
                hp_kwargs[key] = cast(sec[key])
        if "activation" in sec:
            hp_kwargs["activation"] = sec["activation"].strip()
        if "include_bias" in sec:
            hp_kwargs["include_bias"] = sec.getboolean("include_bias")
    try:
        kwargs["hyper"] = HyperParams(**hp_kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid [esn] settings: {exc}") from exc

    grids = dict(DEFAULT_GRIDS)
    if parser.has_section("grids"):
        for key in parser["grids"]:
            grids[key] = parse_grid(parser["grids"][key])
    kwargs["grids"] = grids

    def take(section, key, cast, target):
        if parser.has_section(section) and key in parser[section]:
            kwargs[target] = cast(parser[section][key])

    take("forecast", "horizon", int, "horizon")
    take("forecast", "ensemble", int, "ensemble")
    take("validate", "holdout", int, "holdout")
    take("calibration", "windows", int, "cal_windows")
    take("calibration", "horizon", int, "cal_horizon")
    take("dependence", "lambda_s", float, "lambda_s")
    if parser.has_section("dependence") and "lambda_grid" in parser["dependence"]:
        kwargs["lambda_grid"] = parse_grid(parser["dependence"]["lambda_grid"])
    take("spatial", "knots_nx", int, "knots_nx")
    take("spatial", "knots_ny", int, "knots_ny")
    take("spatial", "grid_nx", int, "grid_nx")
    take("spatial", "grid_ny", int, "grid_ny")
    take("spatial", "margin", float, "grid_margin")
    take("exposure", "threshold", float, "threshold")
    take("exposure", "draws", int, "draws")
    take("run", "seed", int, "seed")
    take("run", "threads", int, "threads")

    try:
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
