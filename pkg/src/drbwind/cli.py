"""Command-line front end: ``drbwind {simulate,sysid,estimate,profile,compare}``.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io, nominal, profiling, sysid
from .config import ConfigError, RunConfig
from .models import (
    SUBMODELS,
    GammaPreset,
    INPUT_INDEX,
    TrimCondition,
    assemble_model,
    extract_submodels,
    submodels_to_dict,
)
from .observer import augment, design_gain, observability_rank, run_observer, select_model
from .scenarios import UnknownScenario, get_scenario
from .simulator import SensorNoiseSpec, simulate

logger = logging.getLogger("drbwind")


class UsageError(Exception):
    pass


def emit(event, **fields):
    parts = [f"event={event}"] + [f"{k}={v}" for k, v in fields.items()]
    logger.info(" ".join(parts))


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging():
    if not logger.handlers:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
        logger.propagate = False


def _map(func, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


# --- simulate -------------------------------------------------------------


def _simulate_one(args):
    name, seed, out_dir, preset = args
    sc = get_scenario(name)
    model = sc.model(preset)
    log = simulate(
        model,
        sc.inputs(),
        sc.wind,
        SensorNoiseSpec(seed=seed),
        dt=sc.dt,
        t_end=sc.duration_s,
        initial_altitude=sc.initial_altitude_m,
        metadata={"scenario": name, "sysid_kind": sc.sysid_kind},
    )
    stem = f"{name}_seed{seed}"
    out = Path(out_dir)
    io.write_log(out / f"{stem}.csv", log)
    io.write_truth(out / f"{stem}.truth.csv", log)
    return [str(out / f"{stem}.csv"), str(out / f"{stem}.truth.csv")]


def run_simulate(cfg: RunConfig) -> list:
    cfg.require("scenario")
    names = cfg.scenario if isinstance(cfg.scenario, list) else [cfg.scenario]
    for name in names:
        try:
            get_scenario(name)
        except UnknownScenario:
            raise UsageError(f"unknown scenario {name!r}") from None
    preset = GammaPreset(cfg.gamma_preset or GammaPreset.OUTPUT_WIND.value)
    jobs = [(name, cfg.seed, cfg.out_dir, preset) for name in names]
    written = [p for paths in _map(_simulate_one, jobs, cfg.workers) for p in paths]
    for name in names:
        emit("simulate.done", scenario=name, seed=cfg.seed, out_dir=cfg.out_dir)
    return written


# --- sysid ----------------------------------------------------------------


def _kind_of(log) -> str:
    kind = log.metadata.get("sysid_kind")
    if kind in SUBMODELS:
        return kind
    energy = {k: float(np.sum(log.u[:, INPUT_INDEX[s.input]] ** 2)) for k, s in SUBMODELS.items()}
    kind = max(energy, key=energy.get)
    if energy[kind] == 0.0:
        raise ValueError("log carries no excitation input")
    return kind


def _fit_one(args):
    path, F_in, F_out, min_gain, window = args
    log = io.read_log(path)
    kind = _kind_of(log)
    entries, init, results = sysid.select_structure(
        log, kind, smooth_window_s=window or None, F_in=F_in, F_out=F_out, min_r2_gain=min_gain
    )
    if not entries:
        raise sysid.IdentificationError(f"{path}: stepwise regression selected no regressors")
    fit = sysid.output_error_fit(kind, log, init, structure=entries)
    rmse = sysid.validate_rmse(fit.outputs, sysid.submodel_measurements(kind, log))
    report = {
        # file name only, so reports do not depend on where the run happened
        "log": Path(path).name,
        "kind": kind,
        "trim_mps": log.ascent_rate,
        "structure": [list(e) for e in fit.structure],
        "params": fit.params,
        "se": fit.se,
        "rcov_diag": fit.rcov_diag,
        "r2": {r.target: r.r2 for r in results},
        "f0": {r.target: r.f0 for r in results},
        "rmse_validation": dict(zip(SUBMODELS[kind].states, rmse.tolist())),
        "iterations": fit.iterations,
        "converged": fit.converged,
    }
    fit.outputs = None
    return kind, log.ascent_rate, fit, report


def run_sysid(cfg: RunConfig) -> list:
    cfg.require("logs")
    cfg.check_paths("logs")
    jobs = [(p, cfg.F_in, cfg.F_out, cfg.min_r2_gain, cfg.smooth_window_s) for p in cfg.logs]
    results = _map(_fit_one, jobs, cfg.workers)
    groups = defaultdict(list)
    reports = []
    for (kind, rate, fit, report), path in zip(results, cfg.logs):
        groups[(kind, rate)].append((fit, path))
        reports.append(report)
        emit("sysid.fit", log=report["log"], kind=kind, trim=rate, iterations=fit.iterations)

    subs = {}
    averaged = []
    for (kind, rate), items in sorted(groups.items()):
        fits = [f for f, _ in items]
        if len(fits) >= 2:
            avg = sysid.average_fits(fits)
            sub = avg.to_submodel()
            entry = {"params": avg.params, "se": avg.se, "spread": avg.spread, "n": avg.n}
        else:
            sub = fits[0].to_submodel()
            entry = {"params": fits[0].params, "se": fits[0].se, "spread": None, "n": 1}
        rmse = []
        for fit, path in items:
            log = io.read_log(path)
            rmse.append(sysid.validate_rmse(sysid.submodel_output(sub, log), sysid.submodel_measurements(kind, log)))
        entry.update(
            kind=kind,
            trim_mps=rate,
            structure=[list(e) for e in fits[0].structure],
            rmse_validation=dict(zip(SUBMODELS[kind].states, np.mean(rmse, axis=0).tolist())),
        )
        averaged.append(entry)
        subs[(kind, rate)] = sub

    preset = GammaPreset(cfg.gamma_preset or GammaPreset.OUTPUT_WIND.value)
    out = Path(cfg.out_dir)
    written = []
    rates = sorted({rate for kind, rate in subs if kind in ("roll", "pitch")})
    shared = {}
    for kind in ("plunge", "yaw"):
        have = sorted(rate for k, rate in subs if k == kind)
        if have:
            # shared across ascent rates; prefer the hover identification
            shared[kind] = subs[(kind, have[0])]
    for rate in rates:
        if ("roll", rate) not in subs or ("pitch", rate) not in subs:
            continue
        missing = [k for k in ("plunge", "yaw") if k not in shared]
        if missing:
            raise sysid.IdentificationError(f"no {' or '.join(missing)} identification logs")
        doc = submodels_to_dict(
            shared["plunge"], shared["yaw"], subs[("roll", rate)], subs[("pitch", rate)], TrimCondition(rate), preset
        )
        path = out / f"model_{rate:g}.json"
        io.write_json(path, doc)
        written.append(str(path))
        emit("sysid.model", trim=rate, path=path)
    report_path = out / "fit_report.json"
    io.write_json(report_path, {"fits": reports, "averaged": averaged})
    written.append(str(report_path))
    return written


# --- estimate -------------------------------------------------------------


def _load_models(cfg: RunConfig, preset):
    if cfg.models:
        models = [io.read_model(p) for p in cfg.models]
    else:
        models = [nominal.nominal_model(r, preset) for r in nominal.TRIM_RATES]
    if cfg.gamma_preset:
        models = [
            assemble_model(*extract_submodels(m), trim=m.trim, gamma_preset=cfg.gamma_preset) for m in models
        ]
    return models


def run_estimate(cfg: RunConfig) -> list:
    cfg.require("log")
    cfg.check_paths("log", "models")
    log = io.read_log(cfg.log)
    preset = GammaPreset(cfg.gamma_preset or log.metadata.get("gamma_preset", GammaPreset.OUTPUT_WIND.value))
    model = select_model(_load_models(cfg, preset), log.ascent_rate)
    aug = augment(model)
    report = observability_rank(aug)
    emit("estimate.observability", rank=report.rank, trim=model.trim.ascent_rate, preset=model.gamma_preset.value)
    gain = design_gain(aug, log.dt, cfg.q_weights, cfg.r_weights)
    est = run_observer(aug, gain, log)
    path = Path(cfg.out_dir) / f"{Path(cfg.log).stem}.estimate.csv"
    io.write_estimates(path, est)
    emit("estimate.done", log=cfg.log, trim=model.trim.ascent_rate, spectral_radius=f"{gain.spectral_radius:.6f}")
    return [str(path)]


# --- profile --------------------------------------------------------------


def _profile_outputs(src, cfg: RunConfig, out: Path) -> list:
    t, h, w = io.read_wind_vectors(src)
    stem = Path(src).name.removesuffix(".csv")
    profile = profiling.profile_from_vectors(t, h, w, cfg.bin_edges, cfg.pre_average_s or None)
    written = [out / f"{stem}.profile.csv"]
    io.write_profile(written[-1], profile)
    # plot data: 1-s series and window averages of speed and direction
    if cfg.pre_average_s:
        t1, h1, w1 = profiling.pre_average_vectors(t, h, w, cfg.pre_average_s)
    else:
        t1, h1, w1 = t, h, w
    series = profiling.WindSeries.from_vectors(t1, h1, w1)
    written.append(out / f"{stem}.series.csv")
    io.write_series(written[-1], series)
    if cfg.average_s:
        written.append(out / f"{stem}.timeavg.csv")
        io.write_series(written[-1], profiling.time_average(series, cfg.average_s))
    return [str(p) for p in written]


def run_profile(cfg: RunConfig) -> list:
    cfg.require("estimates")
    cfg.check_paths("estimates", "truth")
    out = Path(cfg.out_dir)
    written = _profile_outputs(cfg.estimates, cfg, out)
    if cfg.truth:
        written += _profile_outputs(cfg.truth, cfg, out)
    emit("profile.done", estimates=cfg.estimates, bins=len(cfg.bin_edges) - 1)
    return written


# --- compare --------------------------------------------------------------


def run_compare(cfg: RunConfig) -> list:
    cfg.require("series", "reference")
    cfg.check_paths("series", "reference")
    a_is_profile = io.is_profile_file(cfg.series)
    if a_is_profile != io.is_profile_file(cfg.reference):
        raise ConfigError("series and reference must both be profiles or both be time series")
    if a_is_profile:
        rep = profiling.compare_profiles(io.read_profile(cfg.series), io.read_profile(cfg.reference), cfg.reference_name)
    else:
        a = io.read_wind_series(cfg.series)
        b = io.read_wind_series(cfg.reference)
        if cfg.average_s:
            a = profiling.time_average(a, cfg.average_s)
            b = profiling.time_average(b, cfg.average_s)
        rep = profiling.compare(a, b, cfg.max_skew_s, cfg.reference_name)
    for m in rep.metrics:
        if m.n and not m.rmse >= abs(m.mbe):
            raise RuntimeError(f"metric invariant violated for {m.quantity}: rmse < |mbe|")
    a_stem = Path(cfg.series).name.removesuffix(".csv")
    b_stem = Path(cfg.reference).name.removesuffix(".csv")
    path = Path(cfg.out_dir) / f"{a_stem}.vs.{b_stem}.report.json"
    io.write_json(path, rep.to_list())
    emit("compare.done", speed_rmse=f"{rep.speed.rmse:.6g}", direction_rmse=f"{rep.direction.rmse:.6g}", n=rep.speed.n)
    return [str(path)]


COMMANDS = {
    "simulate": run_simulate,
    "sysid": run_sysid,
    "estimate": run_estimate,
    "profile": run_profile,
    "compare": run_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drbwind", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--gamma-preset", choices=[g.value for g in GammaPreset])
        if name == "simulate":
            p.add_argument("--scenario", nargs="+")
        if name == "sysid":
            p.add_argument("--logs", nargs="+")
        if name == "estimate":
            p.add_argument("--log")
            p.add_argument("--models", nargs="+")
        if name == "profile":
            p.add_argument("--estimates")
            p.add_argument("--truth")
            p.add_argument("--pre-average-s", type=float)
        if name in ("profile", "compare"):
            p.add_argument("--average-s", type=float)
        if name == "compare":
            p.add_argument("--series")
            p.add_argument("--reference")
            p.add_argument("--reference-name")
            p.add_argument("--max-skew-s", type=float)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        if isinstance(overrides.get("scenario"), list) and len(overrides["scenario"]) == 1:
            overrides["scenario"] = overrides["scenario"][0]
        cfg = cfg.override(**overrides)
    except (ConfigError, TypeError) as exc:
        print(f"drbwind: config error: {exc}", file=sys.stderr)
        return 2
    emit("run.start", command=args.command, seed=cfg.seed)
    try:
        written = COMMANDS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"drbwind: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 1
        print(f"drbwind: error: {exc}", file=sys.stderr)
        emit("run.failed", command=args.command, seed=cfg.seed, error=type(exc).__name__)
        return 1
    for path in written:
        emit("run.wrote", path=path)
    emit("run.done", command=args.command, seed=cfg.seed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
