"""Linear quadrotor models built from four decoupled sub-models.

State ordering is ``[x, y, z, phi, theta, psi, u, v, w, p, q, r]`` with
x-north, y-east, z-up.  Inputs are normalized stick deflections from trim,
ordered ``[d_roll, d_pitch, d_plunge, d_yaw]``.  Wind is an inertial vector
``[W_x, W_y, W_z]``.

Two conventions for how wind enters the model are supported (see
:class:`GammaPreset`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

STATE_NAMES = ("x", "y", "z", "phi", "theta", "psi", "u", "v", "w", "p", "q", "r")
INPUT_NAMES = ("d_roll", "d_pitch", "d_plunge", "d_yaw")
WIND_NAMES = ("W_x", "W_y", "W_z")

X, Y, Z, PHI, THETA, PSI, U, V, W, P, Q, R = range(12)
D_ROLL, D_PITCH, D_PLUNGE, D_YAW = range(4)
WX, WY, WZ = range(3)

N_STATES = 12
N_INPUTS = 4
N_WIND = 3

STATE_INDEX = {name: i for i, name in enumerate(STATE_NAMES)}
INPUT_INDEX = {name: i for i, name in enumerate(INPUT_NAMES)}

POSITION = slice(0, 3)
ATTITUDE = slice(3, 6)
VELOCITY = slice(6, 9)
RATES = slice(9, 12)

IDENTIFIED_TRIM_RATES = (0.0, 0.5, 1.0, 1.5, 2.0)

# (derivative row, state) pairs that are exact unit couplings
KINEMATIC_PAIRS = ((X, U), (Y, V), (Z, W), (PHI, P), (THETA, Q), (PSI, R))


class GammaPreset(str, enum.Enum):
    """How wind enters the linear model.

    ``OutputWind``: translational velocity states are air-relative.  Wind
    drives the position kinematics (ground velocity = air velocity + wind)
    and appears additively on the measured velocity channels.

    ``DynamicWind``: translational velocity states are inertial.  Drag acts
    on the air-relative velocity, so the velocity rows of Gamma carry the
    negated drag derivatives; measured velocity is the state itself.
    """

    OUTPUT_WIND = "OutputWind"
    DYNAMIC_WIND = "DynamicWind"


class ModelError(ValueError):
    """Invalid model parameters or matrices."""


def _check_finite(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not math.isfinite(value):
            raise ModelError(f"{type(obj).__name__}.{name} is not finite: {value!r}")


@dataclass(frozen=True)
class TrimCondition:
    """Steady vertical ascent at ``ascent_rate`` m/s (positive up)."""

    ascent_rate: float = 0.0

    def __post_init__(self):
        rate = float(self.ascent_rate)
        if not math.isfinite(rate) or rate < 0.0:
            raise ModelError(f"ascent_rate must be finite and >= 0, got {self.ascent_rate!r}")
        object.__setattr__(self, "ascent_rate", rate)

    @property
    def is_identified(self) -> bool:
        """True when the trim is one of the five identified ascent rates."""
        return self.ascent_rate in IDENTIFIED_TRIM_RATES


@dataclass(frozen=True)
class _SubModel:
    se: dict | None = field(default=None, compare=False, kw_only=True)

    @classmethod
    def param_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if f.name != "se")

    def params(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.param_names()}

    def __post_init__(self):
        for name in self.param_names():
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_finite(self, self.param_names())


@dataclass(frozen=True)
class PlungeModel(_SubModel):
    Z_w: float = 0.0
    Z_delta: float = 0.0


@dataclass(frozen=True)
class YawModel(_SubModel):
    N_psi: float = 0.0
    N_r: float = 0.0
    N_delta: float = 0.0


@dataclass(frozen=True)
class RollModel(_SubModel):
    Y_phi: float = 0.0
    Y_v: float = 0.0
    L_phi: float = 0.0
    L_p: float = 0.0
    L_delta: float = 0.0


@dataclass(frozen=True)
class PitchModel(_SubModel):
    X_theta: float = 0.0
    X_u: float = 0.0
    M_theta: float = 0.0
    M_q: float = 0.0
    M_delta: float = 0.0


class Placement(NamedTuple):
    matrix: str  # "A" or "B"
    row: int
    col: int


# Where each sub-model coefficient lives in the full 12-state model.
PLACEMENT: dict[str, Placement] = {
    "Z_w": Placement("A", W, W),
    "Z_delta": Placement("B", W, D_PLUNGE),
    "N_psi": Placement("A", R, PSI),
    "N_r": Placement("A", R, R),
    "N_delta": Placement("B", R, D_YAW),
    "Y_phi": Placement("A", V, PHI),
    "Y_v": Placement("A", V, V),
    "L_phi": Placement("A", P, PHI),
    "L_p": Placement("A", P, P),
    "L_delta": Placement("B", P, D_ROLL),
    "X_theta": Placement("A", U, THETA),
    "X_u": Placement("A", U, U),
    "M_theta": Placement("A", Q, THETA),
    "M_q": Placement("A", Q, Q),
    "M_delta": Placement("B", Q, D_PITCH),
}


class SubmodelSpec(NamedTuple):
    """Channels belonging to one decoupled sub-model."""

    kind: str
    states: tuple[str, ...]
    input: str
    dynamic_states: tuple[str, ...]
    cls: type


SUBMODELS: dict[str, SubmodelSpec] = {
    "plunge": SubmodelSpec("plunge", ("z", "w"), "d_plunge", ("w",), PlungeModel),
    "yaw": SubmodelSpec("yaw", ("psi", "r"), "d_yaw", ("r",), YawModel),
    "roll": SubmodelSpec("roll", ("y", "phi", "v", "p"), "d_roll", ("v", "p"), RollModel),
    "pitch": SubmodelSpec("pitch", ("x", "theta", "u", "q"), "d_pitch", ("u", "q"), PitchModel),
}


def structure_of(kind: str) -> list[tuple[str, str]]:
    """Nominal (row, regressor) entries of a sub-model, by parameter order."""
    spec = SUBMODELS[kind]
    out = []
    for name in spec.cls.param_names():
        pl = PLACEMENT[name]
        col = STATE_NAMES[pl.col] if pl.matrix == "A" else INPUT_NAMES[pl.col]
        out.append((STATE_NAMES[pl.row], col))
    return out


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Continuous-time perturbation model ``x' = A x + B u + Gamma w``."""

    A: np.ndarray
    B: np.ndarray
    Gamma: np.ndarray
    trim: TrimCondition = field(default_factory=TrimCondition)
    gamma_preset: GammaPreset = GammaPreset.OUTPUT_WIND

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))
        object.__setattr__(self, "Gamma", _frozen(self.Gamma))
        object.__setattr__(self, "gamma_preset", GammaPreset(self.gamma_preset))
        shapes = {"A": (12, 12), "B": (12, 4), "Gamma": (12, 3)}
        for name, shape in shapes.items():
            m = getattr(self, name)
            if m.shape != shape:
                raise ModelError(f"{name} must have shape {shape}, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ModelError(f"{name} has non-finite entries")

    @property
    def wind_in_output(self) -> bool:
        return self.gamma_preset is GammaPreset.OUTPUT_WIND

    def output_wind_matrix(self) -> np.ndarray:
        """12x3 map from wind to the measured channels."""
        Cw = np.zeros((N_STATES, N_WIND))
        if self.wind_in_output:
            Cw[VELOCITY] = np.eye(3)
        return Cw


def gamma_matrix(preset, roll: RollModel, pitch: PitchModel, plunge: PlungeModel) -> np.ndarray:
    preset = GammaPreset(preset)
    G = np.zeros((N_STATES, N_WIND))
    if preset is GammaPreset.OUTPUT_WIND:
        G[POSITION] = np.eye(3)
    else:
        G[U, WX] = -pitch.X_u
        G[V, WY] = -roll.Y_v
        G[W, WZ] = -plunge.Z_w
    return G


def assemble_model(
    plunge: PlungeModel,
    yaw: YawModel,
    roll: RollModel,
    pitch: PitchModel,
    trim: TrimCondition | None = None,
    gamma_preset=GammaPreset.OUTPUT_WIND,
) -> LinearModel:
    """Place four sub-models into the 12-state ``A``, ``B`` and ``Gamma``."""
    A = np.zeros((N_STATES, N_STATES))
    B = np.zeros((N_STATES, N_INPUTS))
    for row, col in KINEMATIC_PAIRS:
        A[row, col] = 1.0
    for sub in (plunge, yaw, roll, pitch):
        for name, value in sub.params().items():
            pl = PLACEMENT[name]
            target = A if pl.matrix == "A" else B
            target[pl.row, pl.col] = value
    Gamma = gamma_matrix(gamma_preset, roll, pitch, plunge)
    return LinearModel(A, B, Gamma, trim or TrimCondition(), GammaPreset(gamma_preset))


def extract_submodels(model: LinearModel) -> tuple[PlungeModel, YawModel, RollModel, PitchModel]:
    """Inverse of :func:`assemble_model` (standard errors are not recovered)."""
    out = []
    for kind in ("plunge", "yaw", "roll", "pitch"):
        cls = SUBMODELS[kind].cls
        values = {}
        for name in cls.param_names():
            pl = PLACEMENT[name]
            values[name] = float((model.A if pl.matrix == "A" else model.B)[pl.row, pl.col])
        out.append(cls(**values))
    return tuple(out)


def submodel_matrices(sub) -> tuple[np.ndarray, np.ndarray]:
    """Small ``(A, B)`` pair of a sub-model in its own state ordering."""
    kind = next(k for k, s in SUBMODELS.items() if isinstance(sub, s.cls))
    spec = SUBMODELS[kind]
    idx = {STATE_INDEX[s]: i for i, s in enumerate(spec.states)}
    n = len(spec.states)
    A = np.zeros((n, n))
    B = np.zeros((n, 1))
    for row, col in KINEMATIC_PAIRS:
        if row in idx and col in idx:
            A[idx[row], idx[col]] = 1.0
    for name, value in sub.params().items():
        pl = PLACEMENT[name]
        if pl.matrix == "A":
            A[idx[pl.row], idx[pl.col]] = value
        else:
            B[idx[pl.row], 0] = value
    return A, B


@dataclass(frozen=True)
class TrendFit:
    mean: float
    slope: float
    intercept: float
    rms0: float
    rms1: float

    def __call__(self, rate, order=1):
        if order == 0:
            return self.mean + 0.0 * np.asarray(rate, dtype=float)
        return self.intercept + self.slope * np.asarray(rate, dtype=float)


def parameter_trend_fit(params_by_rate) -> TrendFit:
    """Zeroth- and first-order polynomial fits of a parameter vs ascent rate.

    Parameters
    ----------
    params_by_rate : iterable of (ascent_rate, value)

    Returns
    -------
    TrendFit
        Mean (order 0), least-squares slope and intercept (order 1) and the
        residual RMS of each fit.
    """
    pts = np.asarray(list(params_by_rate), dtype=float).reshape(-1, 2)
    rates, values = pts[:, 0], pts[:, 1]
    if len(np.unique(rates)) < 2:
        raise ModelError("trend fit needs at least two distinct ascent rates")
    mean = float(values.mean())
    slope, intercept = np.polyfit(rates, values, 1)
    rms0 = float(np.sqrt(np.mean((values - mean) ** 2)))
    rms1 = float(np.sqrt(np.mean((values - (intercept + slope * rates)) ** 2)))
    return TrendFit(mean, float(slope), float(intercept), rms0, rms1)


# --- model file (JSON) ----------------------------------------------------

_SHORT = {
    "plunge": {"Zw": "Z_w", "Zd": "Z_delta"},
    "yaw": {"Npsi": "N_psi", "Nr": "N_r", "Nd": "N_delta"},
    "roll": {"Yphi": "Y_phi", "Yv": "Y_v", "Lphi": "L_phi", "Lp": "L_p", "Ld": "L_delta"},
    "pitch": {"Xtheta": "X_theta", "Xu": "X_u", "Mtheta": "M_theta", "Mq": "M_q", "Md": "M_delta"},
}
_LONG = {kind: {v: k for k, v in m.items()} for kind, m in _SHORT.items()}


def submodels_to_dict(plunge, yaw, roll, pitch, trim: TrimCondition, gamma_preset) -> dict:
    doc = {"trim_mps": trim.ascent_rate, "gamma_preset": GammaPreset(gamma_preset).value}
    se = {}
    for kind, sub in zip(("plunge", "yaw", "roll", "pitch"), (plunge, yaw, roll, pitch)):
        doc[kind] = {_LONG[kind][name]: value for name, value in sub.params().items()}
        if sub.se:
            se[kind] = {_LONG[kind][name]: float(v) for name, v in sub.se.items()}
    if se:
        doc["se"] = se
    return doc


def model_to_dict(model: LinearModel, se: dict | None = None) -> dict:
    subs = extract_submodels(model)
    doc = submodels_to_dict(*subs, model.trim, model.gamma_preset)
    if se:
        doc["se"] = se
    return doc


def submodels_from_dict(doc: dict):
    """Parse a model document into ``(plunge, yaw, roll, pitch, trim, preset)``."""
    try:
        trim = TrimCondition(doc["trim_mps"])
        preset = GammaPreset(doc.get("gamma_preset", GammaPreset.OUTPUT_WIND.value))
        se_doc = doc.get("se") or {}
        subs = []
        for kind in ("plunge", "yaw", "roll", "pitch"):
            section = doc[kind]
            unknown = set(section) - set(_SHORT[kind])
            if unknown:
                raise ModelError(f"unknown {kind} parameters: {sorted(unknown)}")
            values = {_SHORT[kind][k]: v for k, v in section.items()}
            se = {_SHORT[kind][k]: v for k, v in se_doc.get(kind, {}).items()} or None
            subs.append(SUBMODELS[kind].cls(se=se, **values))
    except KeyError as exc:
        raise ModelError(f"model document missing field {exc}") from None
    return (*subs, trim, preset)


def model_from_dict(doc: dict) -> LinearModel:
    *subs, trim, preset = submodels_from_dict(doc)
    return assemble_model(*subs, trim=trim, gamma_preset=preset)
