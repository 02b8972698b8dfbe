"""Batch pipeline entry point.

Each subcommand reads prior-stage artifacts from the output directory,
writes CSV/JSON artifacts plus a stage manifest, and exits 0 on
success, 1 on usage errors, 2 on runtime failures (one line per cause
on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import baselines, calibration, dependence, exposure, forecasting, io, spatial
from .config import RunConfig, load_config
from .errors import ConfigError, EchocastError, MissingInput
from .lorenz96 import Lorenz96Config, simulate
from .reservoir import HyperParams


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echocast",
        description="Echo-state forecasting pipeline with calibration, "
                    "dependence modeling, interpolation, and exposure.",
    )
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (0 = all cores)")
    parser.add_argument("--out-dir", default=".", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-lorenz96", help="generate benchmark realizations")
    p.add_argument("--realizations", type=int, default=10)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--n-vars", type=int, default=40)
    p.add_argument("--forcing", type=float, default=4.5)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--sample-every", type=int, default=20)
    p.add_argument("--spinup", type=int, default=400)

    sub.add_parser("validate", help="grid-search hyper-parameters on a holdout")
    p = sub.add_parser("forecast", help="ensemble forecast from the series end")
    p.add_argument("--with-intervals", action="store_true",
                   help="attach calibrated prediction intervals (needs calibrate)")
    p.add_argument("--with-members", action="store_true",
                   help="emit individual member trajectories")
    p.add_argument("--level", type=float, default=0.95)

    sub.add_parser("calibrate", help="windowed forecast calibration")
    sub.add_parser("dependence", help="empirical and sparse residual correlation")
    sub.add_parser("spatial", help="nonstationary spatial model and shrinkage")
    sub.add_parser("interpolate", help="krige calibrated forecasts onto a grid")
    sub.add_parser("exposure", help="district exposure series with intervals")
    p = sub.add_parser("benchmark", help="method comparison on simulated data")
    p.add_argument("--realizations", type=int, default=10)
    p.add_argument("--ensemble", type=int, default=None)
    return parser


def _load_run_config(args) -> tuple[RunConfig, str | None]:
    if args.config:
        cfg = load_config(args.config)
        cfg_hash = io.config_hash(args.config)
    else:
        cfg = RunConfig()
        cfg_hash = None
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg, cfg_hash


def _load_train(cfg: RunConfig):
    if cfg.train_path is None:
        raise MissingInput("config [data] train path is required for this stage")
    data, names = io.read_series(cfg.train_path)
    if cfg.transform == "log":
        if np.any(data <= 0.0):
            raise EchocastError("log transform requires positive data")
        data = np.log(data)
    return data, names


def _back_transform(cfg: RunConfig, values):
    return np.exp(values) if cfg.transform == "log" else values


def cmd_simulate(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    sim_cfg = Lorenz96Config(n_vars=args.n_vars, forcing=args.forcing,
                             dt=args.dt, sample_every=args.sample_every,
                             spinup=args.spinup, seed=cfg.seed)
    data = simulate(sim_cfg, args.points, args.realizations)
    for r in range(args.realizations):
        io.write_series(out / f"lorenz96_r{r}.csv", data[r])
    io.write_manifest(out / "manifest_simulate-lorenz96.json", "simulate-lorenz96",
                      cfg.seed, cfg_hash, realizations=args.realizations,
                      points=args.points)


def cmd_validate(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    data, _ = _load_train(cfg)
    if cfg.holdout < cfg.horizon:
        raise ConfigError("validation holdout shorter than the forecast horizon")
    train, val = data[:-cfg.holdout], data[-cfg.holdout:]
    grid = [replace(cfg.hyper, n_reservoir=int(n), embed=int(m),
                    spectral_radius=float(v), ridge=float(r), leak=float(a))
            for n in cfg.grids["n_reservoir"]
            for m in cfg.grids["embed"]
            for v in cfg.grids["spectral_radius"]
            for r in cfg.grids["ridge"]
            for a in cfg.grids["leak"]]
    result = forecasting.validate_hyperparameters(
        train, val, grid, cfg.horizon, cfg.ensemble, cfg.seed)
    best = result.best_params
    doc = {
        "scores": result.scores.tolist(),
        "best_index": result.best,
        "best": {"n_reservoir": best.n_reservoir, "embed": best.embed,
                 "spectral_radius": best.spectral_radius, "ridge": best.ridge,
                 "leak": best.leak},
        "grid_size": len(grid),
    }
    with open(out / "validation.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    io.write_manifest(out / "manifest_validate.json", "validate", cfg.seed, cfg_hash)


def cmd_forecast(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    data, names = _load_train(cfg)
    fc = forecasting.iterative_forecast(data, cfg.hyper, cfg.horizon,
                                        cfg.ensemble, cfg.seed)
    io.write_forecast(out / "forecast.csv", fc.mean, fc.origin, names,
                      members=fc.members if args.with_members else None)
    if args.with_intervals:
        sigma_hat, sigma_tilde, cal_names = io.read_calibration(out / "calibration.csv")
        if cal_names != names:
            raise EchocastError("calibration elements do not match the series")
        if cfg.horizon > sigma_tilde.shape[1]:
            raise EchocastError(
                f"horizon {cfg.horizon} exceeds calibrated steps {sigma_tilde.shape[1]}"
            )
        sig = sigma_tilde[:, :cfg.horizon].T  # (n_f, n_l)
        lo, hi = calibration.interval(fc.mean, sig, args.level)
        n_f, n_l = fc.mean.shape
        df = pd.DataFrame({
            "time": np.repeat(np.arange(fc.origin + 1, fc.origin + n_f + 1), n_l),
            "element": np.tile(names, n_f),
            "level": args.level,
            "mean": fc.mean.ravel(),
            "lo": lo.ravel(),
            "hi": hi.ravel(),
            "mean_orig": _back_transform(cfg, fc.mean).ravel(),
            "lo_orig": _back_transform(cfg, lo).ravel(),
            "hi_orig": _back_transform(cfg, hi).ravel(),
        })
        io.write_intervals(out / "intervals.csv", df)
    io.write_manifest(out / "manifest_forecast.json", "forecast", cfg.seed,
                      cfg_hash, horizon=cfg.horizon, ensemble=cfg.ensemble)


def cmd_calibrate(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    data, names = _load_train(cfg)
    wf = calibration.build_windowed_forecasts(
        data, cfg.hyper, cfg.cal_windows, cfg.cal_horizon, cfg.ensemble, cfg.seed)
    model = calibration.fit_calibration(wf)
    io.write_calibration(out / "calibration.csv", model.sigma_hat,
                         model.sigma_tilde, names)
    pit_cal = calibration.pit(model.standardized)
    pit_unc = calibration.pit(calibration.uncalibrated_standardized(wf))
    io.write_pit(out / "pit.csv", pit_cal, pit_unc, names)
    io.write_residual_archive(out / "standardized_residuals.csv",
                              model.pooled_samples, names)
    io.write_manifest(out / "manifest_calibrate.json", "calibrate", cfg.seed,
                      cfg_hash, windows=cfg.cal_windows, horizon=cfg.cal_horizon)


def cmd_dependence(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    samples, names = io.read_residual_archive(out / "standardized_residuals.csv")
    emp = dependence.empirical_correlation(samples)
    io.write_correlation(out / "correlation_empirical.csv", emp.corr, names)
    base_var = dependence.grand_mean_variance(emp)
    ratios, props = [], []
    for lam in cfg.lambda_grid:
        model = dependence.sparse_correlation(emp.corr, float(lam))
        ratios.append(100.0 * dependence.grand_mean_variance(model) / base_var)
        props.append(dependence.nonzero_proportion(model))
    io.write_lambda_tradeoff(out / "lambda_tradeoff.csv", list(cfg.lambda_grid),
                             ratios, props)
    chosen = dependence.sparse_correlation(emp.corr, cfg.lambda_s)
    io.write_correlation(out / "correlation_sparse.csv", chosen.corr, names)
    io.write_manifest(out / "manifest_dependence.json", "dependence", cfg.seed,
                      cfg_hash, lambda_s=cfg.lambda_s)


def _station_grid(cfg: RunConfig, coords: np.ndarray) -> np.ndarray:
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    margin = cfg.grid_margin * (hi - lo)
    xs = np.linspace(lo[0] - margin[0], hi[0] + margin[0], cfg.grid_nx)
    ys = np.linspace(lo[1] - margin[1], hi[1] + margin[1], cfg.grid_ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def cmd_spatial(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    if cfg.stations_path is None:
        raise MissingInput("config [data] stations path is required")
    samples, names = io.read_residual_archive(out / "standardized_residuals.csv")
    ids, coords = io.read_stations(cfg.stations_path)
    if len(ids) != samples.shape[1]:
        raise EchocastError("station count does not match residual columns")
    knots = spatial.knot_grid(coords, cfg.knots_nx, cfg.knots_ny)
    model = spatial.fit_local_ranges(coords, samples, knots)
    c_spatial = spatial.correlation_matrix(coords, model)
    emp = dependence.empirical_correlation(samples)
    delta = spatial.select_delta(c_spatial, emp.corr, samples)
    shrunk = spatial.shrink(c_spatial, emp.corr, delta)
    io.write_correlation(out / "correlation_spatial.csv", c_spatial, names)
    io.write_correlation(out / "correlation_shrunk.csv", shrunk.corr, names)
    doc = {
        "knots": model.knots.tolist(),
        "ranges": model.ranges.tolist(),
        "bandwidth": model.bandwidth,
        "nugget": model.nugget,
        "delta_c": delta,
    }
    with open(out / "spatial_model.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    io.write_manifest(out / "manifest_spatial.json", "spatial", cfg.seed,
                      cfg_hash, delta_c=delta)


def _load_spatial_model(out: Path) -> spatial.SpatialModel:
    with open(io._require(out / "spatial_model.json")) as fh:
        doc = json.load(fh)
    return spatial.SpatialModel(
        knots=np.asarray(doc["knots"], dtype=np.float64),
        ranges=np.asarray(doc["ranges"], dtype=np.float64),
        bandwidth=float(doc["bandwidth"]),
        nugget=float(doc["nugget"]),
    )


def cmd_interpolate(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    if cfg.stations_path is None:
        raise MissingInput("config [data] stations path is required")
    mean, names, origin = io.read_forecast(out / "forecast.csv")
    sigma_hat, sigma_tilde, cal_names = io.read_calibration(out / "calibration.csv")
    if cal_names != names:
        raise EchocastError("calibration elements do not match the forecast")
    ids, coords = io.read_stations(cfg.stations_path)
    model = _load_spatial_model(out)
    n_f = mean.shape[0]
    if n_f > sigma_tilde.shape[1]:
        raise EchocastError("forecast horizon exceeds calibrated steps")
    field = spatial.krige(mean, sigma_tilde[:, :n_f].T, coords, model,
                          _station_grid(cfg, coords),
                          times=np.arange(origin + 1, origin + n_f + 1))
    io.write_field(out / "field.csv", field)
    io.write_manifest(out / "manifest_interpolate.json", "interpolate", cfg.seed,
                      cfg_hash)


def cmd_exposure(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    if cfg.districts_path is None:
        raise MissingInput("config [data] districts path is required")
    if cfg.stations_path is None:
        raise MissingInput("config [data] stations path is required")
    field = io.read_field(out / "field.csv")
    districts = exposure.load_districts(cfg.districts_path)
    corr, _ = io.read_correlation(out / "correlation_shrunk.csv")
    ids, coords = io.read_stations(cfg.stations_path)
    sigma_hat, sigma_tilde, _ = io.read_calibration(out / "calibration.csv")
    model = _load_spatial_model(out)

    members = exposure.district_membership(districts, field.points)
    means = exposure.district_means(field, districts)
    n_t = field.mean.shape[0]
    if sigma_tilde.shape[1] < n_t:
        raise EchocastError("calibration does not cover the field horizon")
    lam, _ = spatial.kriging_system(coords, model, field.points)
    sigma0 = spatial.idw_interpolate(coords, sigma_tilde[:, :n_t].T, field.points)
    covs = np.empty((n_t, districts.n_districts, districts.n_districts))
    for t in range(n_t):
        load_grid = sigma0[t][:, None] * lam.T          # (n_g, n_s)
        load_dist = np.stack([load_grid[idx].mean(axis=0) for idx in members])
        covs[t] = load_dist @ corr @ load_dist.T
    result = exposure.exposure_series(means, covs, cfg.threshold,
                                      districts.populations, cfg.draws, cfg.seed)
    io.write_exposure(out / "exposure.csv", field.times,
                      result["mean_exposed"], result["lo"], result["hi"])
    io.write_exceedance(out / "exceedance.csv", field.times, list(districts.ids),
                        result["exceedance_probability"])
    io.write_manifest(out / "manifest_exposure.json", "exposure", cfg.seed,
                      cfg_hash, threshold=cfg.threshold, draws=cfg.draws)


def _worker_count(threads: int) -> int:
    return threads if threads > 0 else (os.cpu_count() or 1)


def run_benchmark(data: np.ndarray, hp: HyperParams, n_f: int, n_ens: int,
                  seed: int, threads: int = 1) -> list[dict]:
    """Score the four comparison methods on (R, T, n_l) realizations.

    Returns one record per (method, realization, element) with MSE and
    CRPS averaged over the forecast steps.  Realizations are scored in
    parallel worker threads (results keep realization order).
    """
    n_real = data.shape[0]
    hp_one = replace(hp, leak=1.0)

    def score_realization(r: int) -> list[dict]:
        records = []
        train, test = data[r, :-n_f], data[r, -n_f:]
        runs = {
            "esn_opt": forecasting.iterative_forecast(train, hp, n_f, n_ens,
                                                      seed + r),
            "esn_alpha1": forecasting.iterative_forecast(train, hp_one, n_f,
                                                         n_ens, seed + r),
            "state_space": baselines.state_space_forecast(train, hp, n_f, n_ens,
                                                          seed + r),
        }
        for method, fc in runs.items():
            per_el_mse = forecasting.mse(fc.mean, test)
            per_el_crps = forecasting.crps_field(fc.members, test).mean(axis=0)
            for ell in range(test.shape[1]):
                records.append({"method": method, "realization": r,
                                "element": ell, "mse": float(per_el_mse[ell]),
                                "crps": float(per_el_crps[ell])})
        rng = np.random.default_rng(seed + 7000 + r)
        for ell in range(test.shape[1]):
            model = baselines.fit_arfima(train[:, ell])
            point, sd = baselines.forecast_arfima(model, train[:, ell], n_f)
            gauss = point[None, :] + sd[None, :] * rng.standard_normal((n_ens, n_f))
            records.append({
                "method": "arfima", "realization": r, "element": ell,
                "mse": float(np.mean((point - test[:, ell]) ** 2)),
                "crps": float(np.mean(
                    forecasting.crps_field(gauss[:, :, None],
                                           test[:, ell][:, None]))),
            })
        return records

    workers = min(_worker_count(threads), n_real)
    if workers <= 1:
        batches = [score_realization(r) for r in range(n_real)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(score_realization, range(n_real)))
    return [rec for batch in batches for rec in batch]


def summarize_benchmark(records: list[dict]) -> pd.DataFrame:
    """Median (IQR) of MSE and CRPS per method, pooled over elements and runs."""
    df = pd.DataFrame(records)
    rows = []
    for method, grp in df.groupby("method", sort=False):
        mse_med, mse_iqr = forecasting.median_iqr(grp["mse"].to_numpy())
        crps_med, crps_iqr = forecasting.median_iqr(grp["crps"].to_numpy())
        rows.append({"method": method, "mse_median": mse_med, "mse_iqr": mse_iqr,
                     "crps_median": crps_med, "crps_iqr": crps_iqr})
    return pd.DataFrame(rows)


def cmd_benchmark(args, cfg: RunConfig, cfg_hash, out: Path) -> None:
    n_ens = args.ensemble if args.ensemble is not None else cfg.ensemble
    paths = sorted(out.glob("lorenz96_r*.csv"),
                   key=lambda p: int(p.stem.split("_r")[-1]))
    if paths:
        data = np.stack([io.read_series(p)[0] for p in paths[:args.realizations]])
    else:
        sim_cfg = Lorenz96Config(seed=cfg.seed)
        data = simulate(sim_cfg, 1000, args.realizations)
    records = run_benchmark(data, cfg.hyper, cfg.horizon, n_ens, cfg.seed,
                            threads=cfg.threads)
    io.write_scores(out / "scores.json", records)
    table = summarize_benchmark(records)
    table.to_csv(out / "benchmark.csv", index=False, float_format="%.17g")
    print(f"{'method':>12} {'MSE':>16} {'CRPS':>16}")
    for _, row in table.iterrows():
        print(f"{row['method']:>12} "
              f"{row['mse_median']:8.2f} ({row['mse_iqr']:.2f}) "
              f"{row['crps_median']:8.2f} ({row['crps_iqr']:.2f})")
    io.write_manifest(out / "manifest_benchmark.json", "benchmark", cfg.seed,
                      cfg_hash, realizations=args.realizations, ensemble=n_ens)


_COMMANDS = {
    "simulate-lorenz96": cmd_simulate,
    "validate": cmd_validate,
    "forecast": cmd_forecast,
    "calibrate": cmd_calibrate,
    "dependence": cmd_dependence,
    "spatial": cmd_spatial,
    "interpolate": cmd_interpolate,
    "exposure": cmd_exposure,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg, cfg_hash = _load_run_config(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](args, cfg, cfg_hash, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (EchocastError, OSError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
