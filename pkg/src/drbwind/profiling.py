"""Wind speed/direction conversion, averaging, vertical binning and comparison metrics.

Directions follow the meteorological convention: the compass bearing the
wind blows FROM, in degrees clockwise from north, with x-north / y-east.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

CALM_SPEED = 0.1  # m/s; directions below this speed are not averaged
DEFAULT_EDGES = tuple(range(10, 131, 10))
DEFAULT_WINDOW_S = 300.0
DEFAULT_MAX_SKEW_S = 15.0


class UndefinedMeanError(ValueError):
    """Circular mean requested for directions whose resultant vanishes."""


def _bearing(deg):
    """Fold angles into [0, 360); ``-tiny % 360`` rounds to 360 otherwise."""
    d = np.mod(deg, 360.0)
    return np.where(d >= 360.0, 0.0, d) + 0.0


class SpeedDirection(NamedTuple):
    speed: float
    direction: float
    calm: bool


def to_speed_dir(w) -> SpeedDirection:
    """Horizontal speed and FROM-direction of a wind vector ``(W_x, W_y[, W_z])``."""
    speed, direction = speed_dir_arrays([[float(w[0]), float(w[1])]])
    speed, direction = float(speed[0]), float(direction[0])
    return SpeedDirection(speed, direction, speed < CALM_SPEED)


def speed_dir_arrays(wind) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`to_speed_dir` for an ``(n, 2+)`` array."""
    wind = np.asarray(wind, dtype=float).reshape(-1, np.shape(wind)[-1])
    speed = np.hypot(wind[:, 0], wind[:, 1])
    direction = _bearing(np.degrees(np.arctan2(-wind[:, 1], -wind[:, 0])))
    direction[speed == 0.0] = 0.0
    return speed, direction


def wrap_difference(a, b):
    """``a - b`` wrapped into (-180, 180] degrees."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return 180.0 - np.mod(180.0 - d, 360.0)


def circular_mean(directions, weights=None) -> float:
    d = np.radians(np.asarray(directions, dtype=float).ravel())
    if d.size == 0:
        raise ValueError("circular mean of an empty set")
    w = np.ones_like(d) if weights is None else np.asarray(weights, dtype=float).ravel()
    s = float(np.sum(w * np.sin(d))) / d.size
    c = float(np.sum(w * np.cos(d))) / d.size
    if math.hypot(s, c) < 1e-9:
        raise UndefinedMeanError("resultant length vanishes; mean direction undefined")
    return float(_bearing(math.degrees(math.atan2(s, c))))


def _direction_mean(speed, direction):
    keep = speed >= CALM_SPEED
    if not np.any(keep):
        return math.nan
    try:
        return circular_mean(direction[keep])
    except UndefinedMeanError:
        return math.nan


@dataclass
class WindSeries:
    """Time series of horizontal wind as speed and FROM-direction."""

    time: np.ndarray
    height: np.ndarray
    speed: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float).ravel()
        n = len(self.time)
        self.height = np.broadcast_to(np.asarray(self.height, dtype=float), (n,)).copy()
        self.speed = np.asarray(self.speed, dtype=float).ravel()
        self.direction = np.asarray(self.direction, dtype=float).ravel()
        if not (len(self.speed) == len(self.direction) == n):
            raise ValueError("series fields differ in length")

    def __len__(self):
        return len(self.time)

    @classmethod
    def from_vectors(cls, time, height, wind):
        speed, direction = speed_dir_arrays(wind)
        return cls(time, height, speed, direction)


def time_average(series: WindSeries, window_s: float = DEFAULT_WINDOW_S) -> WindSeries:
    """Tumbling-window averages aligned to the first sample.

    Speed is averaged arithmetically and direction circularly (calm samples
    excluded; NaN if all are calm).  Each output row is stamped with the
    window centre.  Windows without samples are omitted.
    """
    if window_s <= 0:
        raise ValueError("window must be positive")
    t = series.time
    if len(t) == 0:
        return WindSeries([], [], [], [])
    if np.any(np.diff(t) < 0):
        raise ValueError("series must be sorted by time")
    idx = np.floor((t - t[0]) / window_s).astype(int)
    rows = []
    for k in np.unique(idx):
        sel = idx == k
        rows.append(
            (
                t[0] + (k + 0.5) * window_s,
                series.height[sel].mean(),
                series.speed[sel].mean(),
                _direction_mean(series.speed[sel], series.direction[sel]),
            )
        )
    return WindSeries(*map(np.array, zip(*rows)))


def pre_average_vectors(time, height, wind, window_s=1.0):
    """Component-wise tumbling means of wind vectors (e.g. 1-s averages)."""
    time = np.asarray(time, dtype=float)
    wind = np.asarray(wind, dtype=float)
    height = np.asarray(height, dtype=float)
    if len(time) == 0:
        return time, height, wind
    idx = np.floor((time - time[0]) / window_s + 1e-9).astype(int)
    keys, inverse, counts = np.unique(idx, return_inverse=True, return_counts=True)

    def mean(a):
        out = np.zeros((len(keys),) + a.shape[1:])
        np.add.at(out, inverse, a)
        return out / counts.reshape((-1,) + (1,) * (a.ndim - 1))

    return mean(time), mean(height), mean(wind)


@dataclass
class WindProfile:
    edges: np.ndarray
    center: np.ndarray
    mean_height: np.ndarray
    mean_speed: np.ndarray
    direction: np.ndarray
    count: np.ndarray
    speed_std: np.ndarray
    n_outside: int = 0

    @property
    def empty(self) -> np.ndarray:
        return self.count == 0

    def __len__(self):
        return len(self.center)


def bin_profile(heights, speed, direction, edges=DEFAULT_EDGES) -> WindProfile:
    """Aggregate samples into half-open height bins ``[lo, hi)``.

    Empty bins carry NaN statistics and a zero count.  Samples outside the
    edges are counted in ``n_outside``.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    h = np.asarray(heights, dtype=float).ravel()
    speed = np.asarray(speed, dtype=float).ravel()
    direction = np.asarray(direction, dtype=float).ravel()
    if not np.all(np.isfinite(h)):
        raise ValueError("heights must be finite")
    nb = len(edges) - 1
    which = np.searchsorted(edges, h, side="right") - 1
    inside = (which >= 0) & (which < nb)
    stats = {k: np.full(nb, np.nan) for k in ("mean_height", "mean_speed", "direction", "speed_std")}
    count = np.zeros(nb, dtype=int)
    for b in range(nb):
        sel = inside & (which == b)
        count[b] = int(sel.sum())
        if not count[b]:
            continue
        stats["mean_height"][b] = h[sel].mean()
        stats["mean_speed"][b] = speed[sel].mean()
        stats["speed_std"][b] = speed[sel].std()
        stats["direction"][b] = _direction_mean(speed[sel], direction[sel])
    return WindProfile(
        edges=edges,
        center=0.5 * (edges[:-1] + edges[1:]),
        count=count,
        n_outside=int((~inside).sum()),
        **stats,
    )


def profile_from_vectors(time, heights, wind, edges=DEFAULT_EDGES, pre_average_s=None) -> WindProfile:
    """Bin wind vectors by height, optionally after component-wise time averaging."""
    if pre_average_s:
        time, heights, wind = pre_average_vectors(time, heights, wind, pre_average_s)
    speed, direction = speed_dir_arrays(wind)
    return bin_profile(heights, speed, direction, edges)


# --- comparison -----------------------------------------------------------


@dataclass(frozen=True)
class Metric:
    quantity: str
    mbe: float
    rmse: float
    n: int
    reference: str

    def to_dict(self):
        return {"quantity": self.quantity, "mbe": self.mbe, "rmse": self.rmse, "n": self.n, "reference": self.reference}


@dataclass(frozen=True)
class ComparisonReport:
    speed: Metric
    direction: Metric

    @property
    def metrics(self):
        return [self.speed, self.direction]

    def to_list(self):
        return [m.to_dict() for m in self.metrics]


class PairingError(ValueError):
    pass


def _metric(quantity, diffs, reference) -> Metric:
    diffs = np.asarray(diffs, dtype=float)
    if diffs.size == 0:
        return Metric(quantity, math.nan, math.nan, 0, reference)
    mbe = float(np.mean(diffs))
    rmse = float(np.sqrt(np.mean(diffs**2)))
    # power-mean inequality; guards against rounding in the last digit
    rmse = max(rmse, abs(mbe))
    return Metric(quantity, mbe, rmse, int(diffs.size), reference)


def _report(speed_a, dir_a, speed_b, dir_b, reference):
    speed_diff = speed_a - speed_b
    ok = (speed_a >= CALM_SPEED) & (speed_b >= CALM_SPEED) & np.isfinite(dir_a) & np.isfinite(dir_b)
    dir_diff = wrap_difference(dir_a[ok], dir_b[ok])
    return ComparisonReport(_metric("speed", speed_diff, reference), _metric("direction", dir_diff, reference))


def pair_nearest(t_a, t_b, max_skew_s):
    """Indices ``(i, j)`` pairing each ``t_a[i]`` with its nearest ``t_b[j]`` within the skew."""
    t_a = np.asarray(t_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    if len(t_a) == 0 or len(t_b) == 0:
        raise PairingError("both series must be nonempty")
    order = np.argsort(t_b, kind="stable")
    tb = t_b[order]
    pos = np.clip(np.searchsorted(tb, t_a), 1, len(tb) - 1) if len(tb) > 1 else np.zeros(len(t_a), int)
    if len(tb) > 1:
        left = pos - 1
        pick = np.where(np.abs(tb[left] - t_a) <= np.abs(tb[pos] - t_a), left, pos)
    else:
        pick = pos
    ok = np.abs(tb[pick] - t_a) <= max_skew_s
    return np.flatnonzero(ok), order[pick[ok]]


def compare(a: WindSeries, ref: WindSeries, max_pairing_skew_s=DEFAULT_MAX_SKEW_S, reference="reference"):
    """MBE and RMSE of ``a`` against ``ref`` after nearest-time pairing.

    Direction differences are wrapped into (-180, 180]; pairs where either
    speed is calm are left out of the direction statistics.
    """
    i, j = pair_nearest(a.time, ref.time, max_pairing_skew_s)
    if len(i) == 0:
        raise PairingError(f"no sample pairs within {max_pairing_skew_s} s")
    return _report(a.speed[i], a.direction[i], ref.speed[j], ref.direction[j], reference)


def compare_profiles(a: WindProfile, ref: WindProfile, reference="reference"):
    """MBE and RMSE over height bins populated in both profiles."""
    if len(a.edges) != len(ref.edges) or not np.allclose(a.edges, ref.edges):
        raise PairingError("profiles use different bin edges")
    ok = (a.count > 0) & (ref.count > 0)
    if not np.any(ok):
        raise PairingError("no height bin is populated in both profiles")
    return _report(a.mean_speed[ok], a.direction[ok], ref.mean_speed[ok], ref.direction[ok], reference)
