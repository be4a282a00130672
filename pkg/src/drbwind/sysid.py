"""Model structure selection and output-error parameter estimation.

Structure is chosen per dynamic equation by stepwise regression on
numerically differentiated states.  Parameters of the selected structure
are then estimated by the output-error method: the sub-model is simulated
from the measured inputs and its outputs are matched to the measured
states under a diagonal measurement-noise covariance.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .models import (
    INPUT_INDEX,
    INPUT_NAMES,
    KINEMATIC_PAIRS,
    PLACEMENT,
    STATE_INDEX,
    STATE_NAMES,
    SUBMODELS,
    structure_of,
)
from .simulator import FlightLog, zoh

log = logging.getLogger(__name__)

F_IN = 4.0
F_OUT = 3.9
# regressors must raise R^2 by at least this much to enter
MIN_R2_GAIN = 0.005

ENTRY_TO_PARAM = {
    (STATE_NAMES[pl.row], (STATE_NAMES if pl.matrix == "A" else INPUT_NAMES)[pl.col]): name
    for name, pl in PLACEMENT.items()
}


class IdentificationError(RuntimeError):
    pass


class CollinearityError(IdentificationError):
    def __init__(self, first, second):
        super().__init__(f"regressors {first!r} and {second!r} are collinear")
        self.pair = (first, second)


def param_name(entry) -> str:
    row, col = entry
    return ENTRY_TO_PARAM.get((row, col), f"{row}<-{col}")


# --- regressor pools ------------------------------------------------------


@dataclass
class RegressorPool:
    """Candidate regressors and one derivative target.

    ``names[0]`` is always ``"bias"`` (a column of ones, forced into every
    model); the remaining columns are the candidates.
    """

    names: list
    X: np.ndarray
    target: str
    z: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.X.shape != (len(self.z), len(self.names)):
            raise ValueError("regressor matrix shape does not match names/target")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.z))):
            raise ValueError("regressor pool contains non-finite entries")
        if len(self.z) < 10 * (len(self.names) - 1):
            raise ValueError(
                f"need at least {10 * (len(self.names) - 1)} samples for "
                f"{len(self.names) - 1} candidates, got {len(self.z)}"
            )

    @property
    def candidates(self) -> list:
        return self.names[1:]

    def column(self, name) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def differentiate(x, dt) -> np.ndarray:
    """Central differences in the interior, one-sided at the ends."""
    return np.gradient(np.asarray(x, dtype=float), dt, axis=0)


def smooth(x, dt, window_s, deriv=0) -> np.ndarray:
    """Cubic Savitzky-Golay smoothing (or differentiation) over ``window_s`` seconds."""
    n = max(5, int(round(window_s / dt)) | 1)
    return savgol_filter(np.asarray(x, dtype=float), n, 3, deriv=deriv, delta=dt, axis=0)


def build_regressor_pool(
    log_: FlightLog, kind: str, target: str | None = None, smooth_window_s: float | None = None
) -> RegressorPool:
    """Candidate pool for one dynamic equation of a sub-model.

    The candidates are the sub-model's states and its input; ``target``
    defaults to the last dynamic state (``w``, ``r``, ``p`` or ``q``).
    By default the target is the central-difference derivative of the
    measured channel.  With ``smooth_window_s`` the measured states are
    Savitzky-Golay smoothed and the target is the filter's derivative,
    which keeps sensor noise from swamping the regression on noisy logs.
    """
    if kind not in SUBMODELS:
        raise ValueError(f"unknown sub-model kind {kind!r}")
    spec = SUBMODELS[kind]
    target = target or spec.dynamic_states[-1]
    if target not in spec.states:
        raise ValueError(f"{target!r} is not a state of the {kind} sub-model")
    names = ["bias", *spec.states, spec.input]
    cols = [np.ones(len(log_))]
    for s in spec.states:
        x = log_.z[:, STATE_INDEX[s]]
        cols.append(smooth(x, log_.dt, smooth_window_s) if smooth_window_s else x)
    cols.append(log_.u[:, INPUT_INDEX[spec.input]])
    if smooth_window_s:
        z = smooth(log_.z[:, STATE_INDEX[target]], log_.dt, smooth_window_s, deriv=1)
    else:
        z = differentiate(log_.z[:, STATE_INDEX[target]], log_.dt)
    return RegressorPool(names, np.column_stack(cols), target, z)


# --- stepwise regression --------------------------------------------------


@dataclass
class StepwiseResult:
    target: str
    selected: list
    coefficients: dict
    f0: dict
    r2: float
    residual_variance: float
    history: list = field(default_factory=list)

    @property
    def entries(self) -> list:
        """Selected ``(target, regressor)`` pairs, bias excluded."""
        return [(self.target, name) for name in self.selected]


def _fit(X, z, cols):
    A = X[:, cols]
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    resid = z - A @ coef
    return coef, float(resid @ resid)


def _check_collinear(pool: RegressorPool):
    X = pool.X[:, 1:]
    Xc = X - X.mean(axis=0)
    norms = np.linalg.norm(Xc, axis=0)
    live = [i for i in range(X.shape[1]) if norms[i] > 1e-12 * max(1.0, np.abs(X[:, i]).max())]
    for i, j in itertools.combinations(live, 2):
        r = abs(Xc[:, i] @ Xc[:, j]) / (norms[i] * norms[j])
        if r >= 1.0 - 1e-12:
            raise CollinearityError(pool.candidates[i], pool.candidates[j])


def stepwise_regress(
    pool: RegressorPool,
    F_in: float = F_IN,
    F_out: float = F_OUT,
    min_r2_gain: float = MIN_R2_GAIN,
) -> StepwiseResult:
    """Forward/backward selection by partial F statistic.

    Each forward step admits the candidate with the largest partial F if it
    reaches ``F_in`` and raises R^2 by at least ``min_r2_gain``; each
    backward step drops the weakest retained regressor if its partial F
    falls below ``F_out``.  The bias is always in the model.
    """
    if not F_in > F_out:
        raise ValueError("F_in must exceed F_out")
    _check_collinear(pool)
    X, z = pool.X, pool.z
    N = len(z)
    sst = float(np.sum((z - z.mean()) ** 2))
    exact = 1e-20 * max(sst, np.finfo(float).tiny)
    selected: list[int] = []
    history = []

    def sse_of(cols):
        return _fit(X, z, [0, *cols])[1]

    sse = sse_of(selected)
    seen = {()}
    for _ in range(4 * X.shape[1] + 4):
        changed = False
        remaining = [i for i in range(1, X.shape[1]) if i not in selected]
        if remaining and sse > exact:
            dof = N - (len(selected) + 2)
            trials = []
            for i in remaining:
                s = sse_of(selected + [i])
                F = math.inf if s <= exact else (sse - s) / (s / dof)
                trials.append((F, -i, s))
            F, neg_i, s = max(trials)
            gain = (sse - s) / sst if sst > 0 else 0.0
            key = tuple(sorted(selected + [-neg_i]))
            if F >= F_in and gain >= min_r2_gain and key not in seen:
                selected.append(-neg_i)
                seen.add(key)
                sse = s
                changed = True
                history.append(("add", pool.names[-neg_i], F, gain))
        if len(selected) > 1:
            dof = N - (len(selected) + 1)
            trials = []
            for i in selected:
                rest = [j for j in selected if j != i]
                s = sse_of(rest)
                F = math.inf if sse <= exact and s > exact else (s - sse) / max(sse / dof, exact)
                trials.append((F, i))
            F, i = min(trials)
            if F < F_out:
                selected.remove(i)
                sse = sse_of(selected)
                changed = True
                history.append(("remove", pool.names[i], F, None))
        if not changed:
            break

    selected.sort()
    cols = [0, *selected]
    coef, sse = _fit(X, z, cols)
    dof = max(N - len(cols), 1)
    f0 = {}
    for i in selected:
        s = sse_of([j for j in selected if j != i])
        f0[pool.names[i]] = math.inf if sse <= exact else (s - sse) / (sse / dof)
    r2 = 0.0 if sst <= 0 else min(1.0, max(0.0, 1.0 - sse / sst))
    return StepwiseResult(
        target=pool.target,
        selected=[pool.names[i] for i in selected],
        coefficients={pool.names[c]: float(a) for c, a in zip(cols, coef)},
        f0=f0,
        r2=r2,
        residual_variance=sse / dof,
        history=history,
    )


def select_structure(
    log_: FlightLog, kind: str, smooth_window_s: float | None = None, **kwargs
) -> tuple[list, dict, list]:
    """Run stepwise regression on every dynamic equation of a sub-model.

    Returns the selected ``(row, regressor)`` entries, initial parameter
    values taken from the regression coefficients, and the per-equation
    :class:`StepwiseResult` objects.
    """
    entries, init, results = [], {}, []
    for target in SUBMODELS[kind].dynamic_states:
        res = stepwise_regress(build_regressor_pool(log_, kind, target, smooth_window_s), **kwargs)
        results.append(res)
        for entry in res.entries:
            entries.append(entry)
            init[entry] = res.coefficients[entry[1]]
    return entries, init, results


# --- output-error estimation ----------------------------------------------


@dataclass
class OEFit:
    kind: str
    structure: list
    params: dict
    se: dict
    rcov_diag: dict
    cost_trace: list
    converged: bool
    iterations: int
    rcov_updates: list = field(default_factory=list)
    outputs: np.ndarray | None = field(default=None, repr=False)

    @property
    def names(self) -> list:
        return [param_name(e) for e in self.structure]

    def theta(self) -> np.ndarray:
        return np.array([self.params[n] for n in self.names])

    def to_submodel(self):
        """Sub-model dataclass, if the structure is the nominal one."""
        spec = SUBMODELS[self.kind]
        if sorted(self.structure) != sorted(structure_of(self.kind)):
            raise IdentificationError(f"fitted structure differs from the nominal {self.kind} structure")
        return spec.cls(se=dict(self.se), **self.params)


class _SubmodelSystem:
    """Parametrized sub-model ``A(theta), B(theta)`` with fixed kinematics."""

    def __init__(self, kind, structure):
        spec = SUBMODELS[kind]
        self.kind = kind
        self.states = spec.states
        self.n = len(spec.states)
        idx = {s: i for i, s in enumerate(spec.states)}
        self.A0 = np.zeros((self.n, self.n))
        for row, col in KINEMATIC_PAIRS:
            r, c = STATE_NAMES[row], STATE_NAMES[col]
            if r in idx and c in idx:
                self.A0[idx[r], idx[c]] = 1.0
        self.slots = []
        for row, col in structure:
            if row not in idx:
                raise IdentificationError(f"{row!r} is not a state of the {kind} sub-model")
            if col == spec.input:
                self.slots.append(("B", idx[row], 0))
            elif col in idx:
                self.slots.append(("A", idx[row], idx[col]))
            else:
                raise IdentificationError(f"{col!r} is not a regressor of the {kind} sub-model")

    def matrices(self, theta):
        A = self.A0.copy()
        B = np.zeros((self.n, 1))
        for (m, r, c), v in zip(self.slots, theta):
            (A if m == "A" else B)[r, c] = v
        return A, B

    def simulate(self, theta, u, dt, x0):
        Ad, Bd = zoh(*self.matrices(theta), dt)
        return _propagate(Ad, Bd[:, 0], u, x0)

    def simulate_with_sensitivities(self, theta, u, dt, x0):
        """Outputs and their exact parameter derivatives.

        The sensitivity equations ``s_j' = A s_j + dA/dtheta_j x + dB/dtheta_j u``
        are stacked with the state and discretized together, which gives the
        derivatives of the sampled trajectory itself.
        """
        n, p = self.n, len(theta)
        A, B = self.matrices(theta)
        big_A = np.zeros((n * (p + 1), n * (p + 1)))
        big_B = np.zeros(n * (p + 1))
        big_A[:n, :n] = A
        big_B[:n] = B[:, 0]
        for j, (m, r, c) in enumerate(self.slots):
            blk = slice(n * (j + 1), n * (j + 2))
            big_A[blk, blk] = A
            if m == "A":
                big_A[n * (j + 1) + r, c] = 1.0
            else:
                big_B[n * (j + 1) + r] = 1.0
        Ad, Bd = zoh(big_A, big_B, dt)
        x0_big = np.zeros(n * (p + 1))
        x0_big[:n] = x0
        traj = _propagate(Ad, Bd[:, 0], u, x0_big)
        y = traj[:, :n]
        S = traj[:, n:].reshape(len(u), p, n).transpose(0, 2, 1)
        return y, S


def _propagate(Ad, bd, u, x0):
    """States ``x_k`` of ``x_{k+1} = Ad x_k + bd u_k`` for a scalar input."""
    N = len(u)
    out = np.empty((N, len(x0)))
    bu = np.outer(u, bd)
    x = np.array(x0, dtype=float)
    AdT = Ad.T.copy()
    for k in range(N):
        out[k] = x
        x = x @ AdT + bu[k]
    return out


def _cost(resid, rinv):
    return 0.5 * float(np.sum(resid * resid * rinv))


def output_error_fit(
    kind: str,
    log_: FlightLog,
    init,
    structure=None,
    x0=None,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> OEFit:
    """Output-error maximum-likelihood fit of one sub-model.

    Parameters
    ----------
    kind : {"plunge", "yaw", "roll", "pitch"}
    log_ : FlightLog
        Log whose measured sub-model states and input are matched.
    init : dict or sequence
        Starting values, keyed by parameter name or ``(row, regressor)``
        entry, or given in structure order.
    structure : list of (row, regressor), optional
        Entries to estimate; the nominal structure when omitted.
    x0 : array, optional
        Initial sub-model state; trim (zeros) by default.

    Notes
    -----
    The noise covariance starts as the diagonal residual second moment at
    ``init`` and is re-estimated whenever the Gauss-Newton loop converges
    for the current covariance.  Standard errors come from the inverse of
    the Fisher information at the solution.
    """
    structure = list(structure) if structure is not None else structure_of(kind)
    system = _SubmodelSystem(kind, structure)
    names = [param_name(e) for e in structure]
    theta = _init_vector(init, structure, names)
    spec = SUBMODELS[kind]
    z = log_.z[:, [STATE_INDEX[s] for s in spec.states]]
    u = log_.u[:, INPUT_INDEX[spec.input]]
    dt = log_.dt
    x0 = np.zeros(system.n) if x0 is None else np.asarray(x0, dtype=float)
    N = len(z)
    r_floor = 1e-20 * np.maximum(np.mean(z * z, axis=0), 1e-10)

    def run(th):
        return system.simulate(th, u, dt, x0)

    def rcov(resid):
        return np.maximum(np.mean(resid * resid, axis=0), r_floor)

    def sensitivities(th):
        return system.simulate_with_sensitivities(th, u, dt, x0)[1]

    y = run(theta)
    resid = z - y
    if not np.all(np.isfinite(resid)):
        raise IdentificationError("non-finite model output at the initial parameters")
    R = rcov(resid)
    rinv = 1.0 / R
    J = _cost(resid, rinv)
    trace = [J]
    updates = [0]
    converged = False
    it = 0
    tiny = 1e-24 * N
    while it < max_iter:
        it += 1
        S = sensitivities(theta)
        M = np.einsum("kip,i,kiq->pq", S, rinv, S)
        g = np.einsum("kip,i,ki->p", S, rinv, resid)
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > 1e14:
            raise IdentificationError(f"information matrix is singular (condition number {cond:.3g})")
        step = np.linalg.solve(M, g)
        accepted = False
        for _ in range(12):
            cand = theta + step
            y_c = run(cand)
            r_c = z - y_c
            J_c = _cost(r_c, rinv) if np.all(np.isfinite(r_c)) else math.inf
            if J_c <= J:
                accepted = True
                break
            step = 0.5 * step
        if not math.isfinite(J_c) and not accepted:
            raise IdentificationError("cost is not finite along the search direction")
        if accepted:
            dJ = J - J_c
            theta, resid, J = cand, r_c, J_c
            trace.append(J)
        else:
            dJ = 0.0
        if J <= tiny or dJ <= tol * J:
            R_new = rcov(resid)
            change = np.max(np.abs(R_new / R - 1.0))
            if change < 1e-2 or J <= tiny:
                converged = True
                break
            R, rinv = R_new, 1.0 / R_new
            J = _cost(resid, rinv)
            trace.append(J)
            updates.append(len(trace) - 1)
    if not np.all(np.isfinite(theta)):
        raise IdentificationError("non-finite parameter estimates")

    S = sensitivities(theta)
    M = np.einsum("kip,i,kiq->pq", S, rinv, S)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise IdentificationError(f"information matrix is singular (condition number {cond:.3g})")
    se = np.sqrt(np.diag(np.linalg.inv(M)))
    return OEFit(
        kind=kind,
        structure=structure,
        params={n: float(v) for n, v in zip(names, theta)},
        se={n: float(v) for n, v in zip(names, se)},
        rcov_diag={s: float(r) for s, r in zip(spec.states, R)},
        cost_trace=trace,
        converged=converged,
        iterations=it,
        rcov_updates=updates,
        outputs=run(theta),
    )


def _init_vector(init, structure, names):
    if isinstance(init, dict):
        out = []
        for entry, name in zip(structure, names):
            if entry in init:
                out.append(init[entry])
            elif name in init:
                out.append(init[name])
            else:
                raise ValueError(f"no initial value for {name}")
        theta = np.array(out, dtype=float)
    else:
        theta = np.asarray(init, dtype=float).ravel()
        if len(theta) != len(structure):
            raise ValueError(f"expected {len(structure)} initial values, got {len(theta)}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("initial parameters must be finite")
    return theta


def validate_rmse(y, z) -> np.ndarray:
    """Per-channel root-mean-square difference between model output and measurement."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != z.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {z.shape}")
    return np.sqrt(np.mean((y - z) ** 2, axis=0))


def submodel_output(sub, log_: FlightLog, x0=None) -> np.ndarray:
    """Simulated sub-model states driven by the log's inputs."""
    kind = next(k for k, s in SUBMODELS.items() if isinstance(sub, s.cls))
    system = _SubmodelSystem(kind, structure_of(kind))
    u = log_.u[:, INPUT_INDEX[SUBMODELS[kind].input]]
    x0 = np.zeros(system.n) if x0 is None else np.asarray(x0, dtype=float)
    return system.simulate(np.array(list(sub.params().values())), u, log_.dt, x0)


def submodel_measurements(kind: str, log_: FlightLog) -> np.ndarray:
    return log_.z[:, [STATE_INDEX[s] for s in SUBMODELS[kind].states]]


@dataclass
class AveragedFit:
    kind: str
    structure: list
    params: dict
    se: dict
    spread: dict
    n: int

    def to_submodel(self):
        if sorted(self.structure) != sorted(structure_of(self.kind)):
            raise IdentificationError(f"averaged structure differs from the nominal {self.kind} structure")
        return SUBMODELS[self.kind].cls(se=dict(self.se), **self.params)


def average_fits(fits) -> AveragedFit:
    """Average repeated fits of one structure.

    The spread is the range (max - min) of the estimates; the standard
    error is that of the mean of independent estimates.
    """
    fits = list(fits)
    if len(fits) < 2:
        raise ValueError("averaging needs at least two fits")
    first = fits[0]
    for f in fits[1:]:
        if f.kind != first.kind or list(f.structure) != list(first.structure):
            raise IdentificationError("cannot average fits with different structures")
    names = first.names
    values = np.array([[f.params[n] for n in names] for f in fits])
    ses = np.array([[f.se[n] for n in names] for f in fits])
    mean = values.mean(axis=0)
    spread = values.max(axis=0) - values.min(axis=0)
    se = np.sqrt(np.sum(ses**2, axis=0)) / len(fits)
    return AveragedFit(
        kind=first.kind,
        structure=list(first.structure),
        params=dict(zip(names, mean.tolist())),
        se=dict(zip(names, se.tolist())),
        spread=dict(zip(names, spread.tolist())),
        n=len(fits),
    )
