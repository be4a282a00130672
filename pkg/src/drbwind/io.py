"""File schemas: flight logs, wind series, profiles, model and report JSON.

Every writer goes through :func:`atomic_write` (temp file + rename) and
formats floats with ``repr`` so reruns are byte-identical and values
round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .models import LinearModel, model_from_dict, model_to_dict
from .profiling import WindProfile, WindSeries, speed_dir_arrays
from .simulator import FlightLog

LOG_COLUMNS = (
    "time_s,x_m,y_m,z_m,roll_rad,pitch_rad,yaw_rad,u_mps,v_mps,w_mps,"
    "p_radps,q_radps,r_radps,d_roll,d_pitch,d_plunge,d_yaw"
).split(",")
ESTIMATE_COLUMNS = ["time_s", "height_m", "wx_mps", "wy_mps", "wz_mps", "innov_norm"]
TRUTH_COLUMNS = ["time_s", "height_m", "wx_mps", "wy_mps", "wz_mps"]
PROFILE_COLUMNS = ["bin_lo_m", "bin_hi_m", "center_m", "mean_speed_mps", "dir_deg", "count", "speed_std"]
SERIES_COLUMNS = ["time_s", "height_m", "speed_mps", "dir_deg"]


class SchemaError(ValueError):
    pass


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_table(path, columns) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != list(columns):
            raise SchemaError(f"{path}: expected columns {','.join(columns)}, got {','.join(header)}")
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array(rows, dtype=float).reshape(-1, len(columns))


# --- flight logs ----------------------------------------------------------


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_log(path, log: FlightLog):
    """Write the CSV and a ``<name>.meta.json`` sidecar with trim and altitude."""
    data = np.column_stack([log.time, log.z, log.u])
    atomic_write(path, _csv_text(LOG_COLUMNS, data))
    write_json(meta_path(path), dict(log.metadata))


def read_log(path, metadata: dict | None = None) -> FlightLog:
    data = read_table(path, LOG_COLUMNS)
    if len(data) < 2:
        raise SchemaError(f"{path}: a flight log needs at least two rows")
    t = data[:, 0]
    dt = float(np.mean(np.diff(t)))
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-9):
        raise SchemaError(f"{path}: time base is not uniform")
    meta = {}
    mp = meta_path(path)
    if mp.exists():
        meta = read_json(mp)
    meta.update(metadata or {})
    return FlightLog(dt, data[:, 1:13], data[:, 13:17], float(t[0]), meta)


# --- wind series ----------------------------------------------------------


def write_estimates(path, estimates):
    data = np.column_stack([estimates.time, estimates.heights, estimates.wind, estimates.innovation_norm])
    atomic_write(path, _csv_text(ESTIMATE_COLUMNS, data))


def write_truth(path, log: FlightLog):
    data = np.column_stack([log.time, log.true_heights, log.true_wind])
    atomic_write(path, _csv_text(TRUTH_COLUMNS, data))


def read_wind_vectors(path):
    """``(time, height, wind)`` from an estimate or truth CSV."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if header == ESTIMATE_COLUMNS:
        data = read_table(path, ESTIMATE_COLUMNS)
    elif header == TRUTH_COLUMNS:
        data = read_table(path, TRUTH_COLUMNS)
    else:
        raise SchemaError(f"{path}: not a wind estimate or truth file")
    return data[:, 0], data[:, 1], data[:, 2:5]


def read_wind_series(path) -> WindSeries:
    """Speed/direction series from an estimate, truth or speed/direction CSV."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if header == SERIES_COLUMNS:
        d = read_table(path, SERIES_COLUMNS)
        return WindSeries(d[:, 0], d[:, 1], d[:, 2], d[:, 3])
    t, h, w = read_wind_vectors(path)
    speed, direction = speed_dir_arrays(w)
    return WindSeries(t, h, speed, direction)


def write_series(path, series: WindSeries):
    data = np.column_stack([series.time, series.height, series.speed, series.direction])
    atomic_write(path, _csv_text(SERIES_COLUMNS, data))


# --- profiles -------------------------------------------------------------


def write_profile(path, profile: WindProfile):
    rows = [
        (lo, hi, c, s, d, n, sd)
        for lo, hi, c, s, d, n, sd in zip(
            profile.edges[:-1],
            profile.edges[1:],
            profile.center,
            profile.mean_speed,
            profile.direction,
            profile.count,
            profile.speed_std,
        )
    ]
    atomic_write(path, _csv_text(PROFILE_COLUMNS, rows))


def read_profile(path) -> WindProfile:
    d = read_table(path, PROFILE_COLUMNS)
    edges = np.r_[d[:, 0], d[-1, 1]] if len(d) else np.array([])
    return WindProfile(
        edges=edges,
        center=d[:, 2],
        mean_height=d[:, 2].copy(),
        mean_speed=d[:, 3],
        direction=d[:, 4],
        count=d[:, 5].astype(int),
        speed_std=d[:, 6],
    )


def is_profile_file(path) -> bool:
    with open(path, newline="") as fh:
        return next(csv.reader(fh), []) == PROFILE_COLUMNS


# --- models ---------------------------------------------------------------


def write_model(path, model: LinearModel, se: dict | None = None):
    write_json(path, model_to_dict(model, se))


def read_model(path) -> LinearModel:
    return model_from_dict(read_json(path))
