"""Synthetic flight logs from a linear model, excitation inputs and a wind field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .models import (
    N_INPUTS,
    N_STATES,
    N_WIND,
    LinearModel,
    ModelError,
    Z,
)

DEFAULT_DT = 0.125
MAX_DT = 0.25
DIVERGENCE_LIMIT = 1e6

# measurement standard deviations: position m, attitude rad, velocity m/s, rates rad/s
DEFAULT_SIGMA = (0.5,) * 3 + (0.01,) * 3 + (0.2,) * 3 + (0.02,) * 3


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int, time: float):
        super().__init__(f"state diverged (|x| > {DIVERGENCE_LIMIT:g}) at step {step}, t = {time:g} s")
        self.step = step
        self.time = time


class Discretization(NamedTuple):
    Ad: np.ndarray
    Bd: np.ndarray
    Gd: np.ndarray


def _check_dt(dt):
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and 0.0 < dt <= MAX_DT):
        raise ValueError(f"dt must be in (0, {MAX_DT}] s, got {dt!r}")


def zoh(A, B, dt):
    """Exact zero-order-hold discretization of ``x' = A x + B u``.

    Uses the matrix exponential of the block matrix ``[[A, B], [0, 0]] * dt``.
    """
    _check_dt(dt)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = scipy.linalg.expm(M * dt)
    return E[:n, :n], E[:n, n:]


def discretize(model: LinearModel, dt: float = DEFAULT_DT) -> Discretization:
    """ZOH transition pair ``(Ad, Bd, Gd)``; input and wind are both held over a step."""
    Ad, BG = zoh(model.A, np.hstack([model.B, model.Gamma]), dt)
    return Discretization(Ad, BG[:, :N_INPUTS], BG[:, N_INPUTS:])


# --- wind fields ----------------------------------------------------------


def _toward_components(speed, from_deg):
    """Horizontal wind vector (north, east) for a meteorological FROM-direction."""
    rad = math.radians(from_deg)
    return -speed * math.cos(rad), -speed * math.sin(rad)


@dataclass(frozen=True)
class WindField:
    """Wind vector ``(W_x, W_y, W_z)`` in m/s as a function of time and height.

    Use the constructors :meth:`constant`, :meth:`shear` and :meth:`gust`;
    ``descriptor`` records the parameters so a field can be rebuilt from a
    log's metadata.
    """

    func: Callable[[float, float], np.ndarray] = field(repr=False)
    descriptor: dict = field(default_factory=dict)

    def __call__(self, t: float, h: float) -> np.ndarray:
        return self.func(t, h)

    def sample(self, times, heights) -> np.ndarray:
        return np.array([self.func(float(t), float(h)) for t, h in zip(times, heights)]).reshape(-1, 3)

    @classmethod
    def constant(cls, wx=0.0, wy=0.0, wz=0.0):
        vec = np.array([wx, wy, wz], dtype=float)
        desc = {"kind": "constant", "wx": float(wx), "wy": float(wy), "wz": float(wz)}
        return cls(lambda t, h: vec.copy(), desc)

    @classmethod
    def calm(cls):
        return cls.constant()

    @classmethod
    def from_speed_direction(cls, speed, from_deg, wz=0.0):
        wx, wy = _toward_components(speed, from_deg)
        return cls.constant(wx, wy, wz)

    @classmethod
    def shear(cls, base_speed=1.0, gradient=0.02, from_deg=315.0, wz=0.0):
        """Speed ``base_speed + gradient * h`` from a fixed direction.

        Below the height where the law crosses zero the vector reverses; the
        field stays linear in ``h``.
        """
        cx, cy = _toward_components(1.0, from_deg)

        def func(t, h):
            s = base_speed + gradient * h
            return np.array([s * cx, s * cy, wz])

        desc = {
            "kind": "shear",
            "base_speed": float(base_speed),
            "gradient": float(gradient),
            "from_deg": float(from_deg),
            "wz": float(wz),
        }
        return cls(func, desc)

    @classmethod
    def gust(cls, mean_speed=3.0, from_deg=315.0, amplitude=1.0, period_s=20.0, wz=0.0):
        """Sinusoidal gust in speed about a mean, direction fixed."""
        cx, cy = _toward_components(1.0, from_deg)
        omega = 2.0 * math.pi / period_s

        def func(t, h):
            s = mean_speed + amplitude * math.sin(omega * t)
            return np.array([s * cx, s * cy, wz])

        desc = {
            "kind": "gust",
            "mean_speed": float(mean_speed),
            "from_deg": float(from_deg),
            "amplitude": float(amplitude),
            "period_s": float(period_s),
            "wz": float(wz),
        }
        return cls(func, desc)

    @classmethod
    def ramp(cls, rate_x=0.05, rate_y=0.0, rate_z=0.0):
        """Wind growing linearly in time from zero."""
        rates = np.array([rate_x, rate_y, rate_z], dtype=float)
        desc = {"kind": "ramp", "rate_x": float(rate_x), "rate_y": float(rate_y), "rate_z": float(rate_z)}
        return cls(lambda t, h: rates * t, desc)

    @classmethod
    def from_descriptor(cls, desc: dict):
        desc = dict(desc)
        kind = desc.pop("kind")
        builders = {
            "constant": cls.constant,
            "shear": cls.shear,
            "gust": cls.gust,
            "ramp": cls.ramp,
        }
        if kind not in builders:
            raise ValueError(f"unknown wind field kind {kind!r}")
        return builders[kind](**desc)


# --- noise and logs -------------------------------------------------------


@dataclass(frozen=True)
class SensorNoiseSpec:
    sigma: tuple = DEFAULT_SIGMA
    seed: int = 0

    def __post_init__(self):
        sigma = tuple(float(s) for s in self.sigma)
        if len(sigma) != N_STATES:
            raise ValueError(f"need {N_STATES} noise standard deviations, got {len(sigma)}")
        if any(not math.isfinite(s) or s < 0 for s in sigma):
            raise ValueError("noise standard deviations must be finite and >= 0")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def zero(cls, seed=0):
        return cls((0.0,) * N_STATES, seed)

    def draw(self, n: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((n, N_STATES)) * np.asarray(self.sigma)


@dataclass
class FlightLog:
    """Uniformly sampled measurements ``z(k)`` and inputs ``u(k)``.

    ``true_states``, ``true_wind`` and ``true_heights`` are filled in by the
    simulator and are not part of the CSV schema.
    """

    dt: float
    z: np.ndarray
    u: np.ndarray
    t0: float = 0.0
    metadata: dict = field(default_factory=dict)
    true_states: np.ndarray | None = field(default=None, repr=False)
    true_wind: np.ndarray | None = field(default=None, repr=False)
    true_heights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1, N_STATES)
        self.u = np.asarray(self.u, dtype=float).reshape(-1, N_INPUTS)
        if len(self.z) != len(self.u):
            raise ValueError("measurement and input rows differ in length")
        if len(self.z) < 2:
            raise ValueError("a flight log needs at least two rows")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"invalid dt {self.dt!r}")
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.u))):
            raise ValueError("flight log contains non-finite entries")

    def __len__(self):
        return len(self.z)

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.z))

    @property
    def ascent_rate(self) -> float:
        return float(self.metadata.get("trim_mps", 0.0))

    @property
    def initial_altitude(self) -> float:
        return float(self.metadata.get("initial_altitude_m", 0.0))

    def heights(self, z_perturbation=None) -> np.ndarray:
        """Altitude above ground: start height + trim climb + vertical perturbation."""
        zp = self.z[:, Z] if z_perturbation is None else np.asarray(z_perturbation)
        return self.initial_altitude + self.ascent_rate * (self.time - self.t0) + zp


def excitation_multisine(channel, amplitude, freqs_hz, duration_s, dt=DEFAULT_DT) -> np.ndarray:
    """Multisine on one input channel, zeros elsewhere.

    Phases are spread uniformly over the cycle and the sum is scaled so its
    peak magnitude equals ``amplitude``.  Returns ``round(duration_s / dt)``
    rows of ``[d_roll, d_pitch, d_plunge, d_yaw]``.
    """
    from .models import INPUT_INDEX

    col = INPUT_INDEX[channel] if isinstance(channel, str) else int(channel)
    if not 0 <= col < N_INPUTS:
        raise ValueError(f"invalid input channel {channel!r}")
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError(f"amplitude must be within [0, 1], got {amplitude}")
    freqs = [float(f) for f in freqs_hz]
    if len(set(freqs)) != len(freqs):
        raise ValueError("excitation frequencies must be distinct")
    nyquist = 0.5 / dt
    for f in freqs:
        if not 0.0 < f < nyquist:
            raise ValueError(f"frequency {f} Hz outside (0, {nyquist}) Hz for dt = {dt}")
    n = int(round(duration_s / dt))
    out = np.zeros((n, N_INPUTS))
    if not freqs or amplitude == 0.0:
        return out
    t = dt * np.arange(n)
    phases = 2.0 * np.pi * np.arange(len(freqs)) / len(freqs)
    s = np.sum([np.sin(2.0 * np.pi * f * t + ph) for f, ph in zip(freqs, phases)], axis=0)
    peak = np.max(np.abs(s))
    if peak > 0:
        out[:, col] = amplitude * s / peak
    return out


def simulate(
    model: LinearModel,
    inputs=None,
    wind: WindField | None = None,
    noise: SensorNoiseSpec | None = None,
    dt: float = DEFAULT_DT,
    t_end: float = 60.0,
    initial_altitude: float = 0.0,
    x0=None,
    metadata: dict | None = None,
) -> FlightLog:
    """Step the model and sample noisy measurements.

    The state propagates without process noise; inputs and wind are held
    over each step.  Wind is looked up at the current altitude
    ``initial_altitude + ascent_rate * t + z``.  Inputs shorter than the run
    are padded with zeros (free response).
    """
    n = int(round(t_end / dt)) + 1
    disc = discretize(model, dt)
    wind = wind or WindField.calm()
    noise = noise or SensorNoiseSpec.zero()

    u = np.zeros((n, N_INPUTS))
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float).reshape(-1, N_INPUTS)
        m = min(n, len(inputs))
        u[:m] = inputs[:m]
    if np.any(np.abs(u) > 1.0) or not np.all(np.isfinite(u)):
        raise ModelError("inputs must be finite stick deflections within [-1, 1]")

    x = np.zeros(N_STATES) if x0 is None else np.asarray(x0, dtype=float).copy()
    states = np.empty((n, N_STATES))
    winds = np.empty((n, N_WIND))
    heights = np.empty(n)
    rate = model.trim.ascent_rate
    Ad, Bd, Gd = disc
    for k in range(n):
        t = k * dt
        if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
            raise SimulationDiverged(k, t)
        h = initial_altitude + rate * t + x[Z]
        w = np.asarray(wind(t, h), dtype=float)
        states[k] = x
        winds[k] = w
        heights[k] = h
        x = Ad @ x + Bd @ u[k] + Gd @ w

    z = states + winds @ model.output_wind_matrix().T + noise.draw(n)
    meta = {
        "trim_mps": rate,
        "gamma_preset": model.gamma_preset.value,
        "initial_altitude_m": float(initial_altitude),
        "seed": noise.seed,
        "wind": wind.descriptor,
    }
    meta.update(metadata or {})
    return FlightLog(dt, z, u, 0.0, meta, states, winds, heights)
