"""Wind-augmented models, observability check, gain synthesis and the observer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import N_INPUTS, N_STATES, N_WIND, LinearModel, Z
from .simulator import DIVERGENCE_LIMIT, FlightLog, SimulationDiverged, zoh

N_AUG = N_STATES + N_WIND
WIND_SLICE = slice(N_STATES, N_AUG)

# per-step process weights: rigid-body states, then wind
DEFAULT_STATE_WEIGHT = 1e-3
DEFAULT_WIND_WEIGHT = 1e-2
# measurement standard deviations: position m, attitude rad, velocity m/s, rates rad/s
DEFAULT_MEAS_SIGMA = (0.5,) * 3 + (0.01,) * 3 + (0.2,) * 3 + (0.02,) * 3


def default_q_weights() -> np.ndarray:
    return np.r_[np.full(N_STATES, DEFAULT_STATE_WEIGHT), np.full(N_WIND, DEFAULT_WIND_WEIGHT)]


def default_r_weights() -> np.ndarray:
    return np.asarray(DEFAULT_MEAS_SIGMA) ** 2


class NotObservableError(RuntimeError):
    def __init__(self, report):
        super().__init__(
            f"wind-augmented model is not observable: rank {report.rank} < {N_AUG} "
            f"(smallest singular value {report.singular_values[-1]:.3g}, tolerance {report.tol:.3g})"
        )
        self.report = report


class RiccatiError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    """State ``[x~; w]`` with ``d/dt w = 0``; measurements ``z = C_A x_A``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    source: LinearModel


def augment(model: LinearModel) -> AugmentedModel:
    A = np.zeros((N_AUG, N_AUG))
    A[:N_STATES, :N_STATES] = model.A
    A[:N_STATES, WIND_SLICE] = model.Gamma
    B = np.zeros((N_AUG, N_INPUTS))
    B[:N_STATES] = model.B
    C = np.zeros((N_STATES, N_AUG))
    C[:, :N_STATES] = np.eye(N_STATES)
    C[:, WIND_SLICE] = model.output_wind_matrix()
    for m in (A, B, C):
        m.setflags(write=False)
    return AugmentedModel(A, B, C, model)


@dataclass(frozen=True)
class ObservabilityReport:
    rank: int
    singular_values: np.ndarray
    tol: float

    @property
    def full_rank(self) -> bool:
        return self.rank == len(self.singular_values)

    @property
    def gap(self) -> float:
        """Ratio of the last retained to the first discarded singular value."""
        s = self.singular_values
        if self.rank == 0:
            return 0.0
        if self.rank >= len(s):
            return math.inf
        return float(s[self.rank - 1] / max(s[self.rank], np.finfo(float).tiny))


def observability_matrix(A, C, order=None) -> np.ndarray:
    n = A.shape[0]
    order = order or n
    blocks = [C]
    for _ in range(order - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def observability_rank(aug: AugmentedModel) -> ObservabilityReport:
    """Numerical rank of the stacked observability matrix.

    Singular values below ``max(dim) * eps * sigma_max`` count as zero.
    """
    O = observability_matrix(aug.A, aug.C)
    s = np.linalg.svd(O, compute_uv=False)
    tol = max(O.shape) * np.finfo(float).eps * s[0] if s.size else 0.0
    return ObservabilityReport(int(np.sum(s > tol)), s, float(tol))


@dataclass(frozen=True, eq=False)
class ObserverGain:
    G: np.ndarray
    spectral_radius: float
    P: np.ndarray
    Ad: np.ndarray
    Bd: np.ndarray
    C: np.ndarray
    dt: float
    iterations: int


def riccati_fixed_point(Ad, C, Q, R, tol=1e-10, max_iter=10000):
    """Steady prior covariance of the discrete filter Riccati recursion.

    ``P = Ad P Ad' + Q - Ad P C' (C P C' + R)^-1 C P Ad'``, reached by the
    doubling form of the recursion: the k-th iterate equals the plain
    recursion after ``2**k`` steps from zero, so weakly damped modes (large
    ``R``) still settle in a few dozen iterations.  Iterates until the
    relative change is below ``tol``.

    Returns the covariance and the number of iterations.
    """
    n = Ad.shape[0]
    A = np.array(Ad, dtype=float).T
    G = C.T @ np.linalg.solve(R, C)
    H = np.array(Q, dtype=float)
    eye = np.eye(n)
    trace = []
    for it in range(1, max_iter + 1):
        W = eye + G @ H
        WA = np.linalg.solve(W, A)
        H_next = H + A.T @ H @ WA
        G = G + A @ np.linalg.solve(W, G) @ A.T
        A = A @ WA
        H_next = 0.5 * (H_next + H_next.T)
        G = 0.5 * (G + G.T)
        if not np.all(np.isfinite(H_next)):
            raise RiccatiError(f"Riccati iteration produced non-finite values at step {it}", trace)
        change = np.linalg.norm(H_next - H) / max(np.linalg.norm(H_next), np.finfo(float).tiny)
        trace.append(change)
        H = H_next
        if change < tol:
            return H, it
    raise RiccatiError(
        f"Riccati iteration did not converge in {max_iter} steps (last relative change {trace[-1]:.3g})",
        trace,
    )


def design_gain(aug: AugmentedModel, dt: float = 0.125, q_weights=None, r_weights=None) -> ObserverGain:
    """Steady-state filter gain for the ZOH-discretized augmented model.

    ``q_weights`` (15) and ``r_weights`` (12) are the diagonals of the
    per-step process and measurement covariances.
    """
    report = observability_rank(aug)
    if not report.full_rank:
        raise NotObservableError(report)
    q = default_q_weights() if q_weights is None else np.asarray(q_weights, dtype=float)
    r = default_r_weights() if r_weights is None else np.asarray(r_weights, dtype=float)
    if q.shape != (N_AUG,) or r.shape != (N_STATES,):
        raise ValueError(f"need {N_AUG} process and {N_STATES} measurement weights")
    if np.any(q <= 0) or np.any(r <= 0) or not (np.all(np.isfinite(q)) and np.all(np.isfinite(r))):
        raise ValueError("observer weights must be finite and positive")
    Ad, Bd = zoh(aug.A, aug.B, dt)
    C = np.asarray(aug.C)
    P, iters = riccati_fixed_point(Ad, C, np.diag(q), np.diag(r))
    G = np.linalg.solve(C @ P @ C.T + np.diag(r), C @ P).T
    closed = (np.eye(N_AUG) - G @ C) @ Ad
    rho = float(np.max(np.abs(np.linalg.eigvals(closed))))
    if not rho < 1.0:
        raise RiccatiError(f"observer error dynamics are not stable (spectral radius {rho:.6f})", [])
    return ObserverGain(G, rho, P, Ad, Bd, C, float(dt), iters)


@dataclass
class WindEstimateSeries:
    time: np.ndarray
    wind: np.ndarray
    states: np.ndarray = field(repr=False)
    innovation_norm: np.ndarray = field(repr=False)
    heights: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.time)


def run_observer(aug: AugmentedModel, gain: ObserverGain, log: FlightLog, x0=None) -> WindEstimateSeries:
    """Predict/correct recursion over a log, starting from trim (zero) by default."""
    if not math.isclose(log.dt, gain.dt, rel_tol=1e-9):
        raise ValueError(f"log dt {log.dt} differs from the observer design dt {gain.dt}")
    Ad, Bd, C, G = gain.Ad, gain.Bd, gain.C, gain.G
    n = len(log)
    est = np.empty((n, N_AUG))
    innov = np.empty(n)
    prior = np.zeros(N_AUG) if x0 is None else np.asarray(x0, dtype=float).copy()
    for k in range(n):
        e = log.z[k] - C @ prior
        xk = prior + G @ e
        if not np.all(np.abs(xk) <= DIVERGENCE_LIMIT):
            raise SimulationDiverged(k, float(log.time[k]))
        est[k] = xk
        innov[k] = math.sqrt(float(e @ e))
        prior = Ad @ xk + Bd @ log.u[k]
    return WindEstimateSeries(
        time=log.time,
        wind=est[:, WIND_SLICE].copy(),
        states=est,
        innovation_norm=innov,
        heights=log.heights(est[:, Z]),
    )


def select_model(models, ascent_rate: float):
    """Model whose trim ascent rate is nearest ``ascent_rate`` (ties go to the slower trim)."""
    models = list(models)
    if not models:
        raise ValueError("no models to choose from")
    return min(models, key=lambda m: (abs(m.trim.ascent_rate - ascent_rate), m.trim.ascent_rate))
