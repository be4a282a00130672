"""Nominal parameter sets for the five identified trim conditions.

Plunge and yaw dynamics are shared by every ascent rate; roll and pitch
change with it.  Values are averaged estimates with their standard errors.
"""

from __future__ import annotations

from .models import (
    GammaPreset,
    LinearModel,
    PitchModel,
    PlungeModel,
    RollModel,
    TrimCondition,
    YawModel,
    assemble_model,
)

PLUNGE = PlungeModel(Z_w=-0.55, Z_delta=-1.71, se={"Z_w": 0.28, "Z_delta": 0.79})
YAW = YawModel(N_psi=-1.71, N_r=-0.84, N_delta=2.41, se={"N_psi": 0.41, "N_r": 0.53, "N_delta": 1.18})

# rate: (Y_phi, Y_v, L_phi, L_p, L_delta), (standard errors)
_ROLL = {
    0.0: ((3.28, -0.49, -4.54, -1.09, 4.62), (0.37, 0.68, 4.17, 2.62, 3.55)),
    0.5: ((2.91, -0.31, -3.95, -1.15, 5.76), (0.34, 0.04, 0.12, 0.22, 0.32)),
    1.0: ((4.73, -0.70, -5.87, -1.62, 8.52), (0.87, 2.33, 2.55, 1.99, 2.28)),
    1.5: ((4.68, -0.62, -4.07, -0.82, 6.27), (0.21, 0.14, 0.26, 0.23, 0.31)),
    2.0: ((6.62, -1.06, -5.92, -1.80, 9.68), (0.63, 0.25, 0.10, 1.17, 0.65)),
}

# rate: (X_theta, X_u, M_theta, M_q, M_delta), (standard errors)
_PITCH = {
    0.0: ((-4.03, -0.71, -6.23, -1.46, 6.61), (0.10, 0.56, 1.67, 0.87, 0.36)),
    0.5: ((-3.94, -0.61, -5.20, -1.42, 6.32), (0.12, 0.08, 0.11, 0.35, 0.28)),
    1.0: ((-6.27, -0.80, -8.63, -2.63, 10.80), (0.78, 0.19, 2.64, 0.65, 1.98)),
    1.5: ((-5.48, -0.67, -4.44, -1.27, 6.81), (0.14, 0.08, 0.23, 0.50, 0.40)),
    2.0: ((-8.02, -1.24, -7.78, -2.09, 10.70), (0.68, 0.28, 2.69, 0.84, 0.64)),
}

TRIM_RATES = tuple(sorted(_ROLL))


def _build(cls, values, ses):
    names = cls.param_names()
    return cls(se=dict(zip(names, ses)), **dict(zip(names, values)))


def roll(rate: float) -> RollModel:
    return _build(RollModel, *_ROLL[float(rate)])


def pitch(rate: float) -> PitchModel:
    return _build(PitchModel, *_PITCH[float(rate)])


def submodels(rate: float):
    """``(plunge, yaw, roll, pitch)`` for one of the tabulated ascent rates."""
    rate = float(rate)
    if rate not in _ROLL:
        raise KeyError(f"no nominal parameters for ascent rate {rate} m/s; have {TRIM_RATES}")
    return PLUNGE, YAW, roll(rate), pitch(rate)


def nominal_model(rate: float = 0.0, gamma_preset=GammaPreset.OUTPUT_WIND) -> LinearModel:
    return assemble_model(*submodels(rate), trim=TrimCondition(rate), gamma_preset=gamma_preset)


def hover_model(gamma_preset=GammaPreset.OUTPUT_WIND) -> LinearModel:
    return nominal_model(0.0, gamma_preset)
