"""Named synthetic flights used by the ``simulate`` command.

Excitation amplitudes and frequency bands for identification flights are
engineering defaults (multisine, 0.1-1 Hz, peak 0.3).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import nominal
from .models import SUBMODELS, GammaPreset, LinearModel
from .simulator import DEFAULT_DT, WindField, excitation_multisine

PREVAILING_FROM_DEG = 315.0
CONST_WIND_SPEED = 4.0
PROFILE_BOTTOM_M = 10.0
PROFILE_TOP_M = 120.0

SYSID_DT = 0.02
SYSID_DURATION_S = 120.0
SYSID_FREQS_HZ = (0.1, 0.2, 0.35, 0.5, 0.7, 1.0)
SYSID_AMPLITUDE = 0.3


class UnknownScenario(KeyError):
    pass


@dataclass
class Scenario:
    name: str
    trim_mps: float
    wind: WindField
    duration_s: float
    initial_altitude_m: float = PROFILE_BOTTOM_M
    dt: float = DEFAULT_DT
    sysid_kind: str | None = None
    metadata: dict = field(default_factory=dict)

    def inputs(self):
        if self.sysid_kind is None:
            return None
        channel = SUBMODELS[self.sysid_kind].input
        return excitation_multisine(channel, SYSID_AMPLITUDE, SYSID_FREQS_HZ, self.duration_s, self.dt)

    def model(self, gamma_preset=GammaPreset.OUTPUT_WIND) -> LinearModel:
        return nominal.nominal_model(self.trim_mps, gamma_preset)


def _climb(rate, wind, name):
    duration = (PROFILE_TOP_M - PROFILE_BOTTOM_M) / rate
    return Scenario(name, rate, wind, duration, PROFILE_BOTTOM_M)


def _const():
    return WindField.from_speed_direction(CONST_WIND_SPEED, PREVAILING_FROM_DEG)


def _shear():
    return WindField.shear(1.0, 0.02, PREVAILING_FROM_DEG)


def get_scenario(name: str) -> Scenario:
    """Build a scenario by name.

    Known names: ``hover``, ``hover-constwind``, ``gust``, ``shear``,
    ``climb-<rate>``, ``climb-<rate>-shear`` and ``sysid-<kind>-<rate>``,
    where ``<rate>`` is one of the tabulated ascent rates.
    """
    if name == "hover":
        return Scenario(name, 0.0, WindField.calm(), 600.0)
    if name == "hover-constwind":
        return Scenario(name, 0.0, _const(), 600.0)
    if name == "gust":
        return Scenario(name, 0.0, WindField.gust(CONST_WIND_SPEED, PREVAILING_FROM_DEG, 1.0, 20.0), 600.0)
    if name == "shear":
        return _climb(1.0, _shear(), name)
    m = re.fullmatch(r"climb-(\d+(?:\.\d+)?)(-shear)?", name)
    if m:
        rate = float(m.group(1))
        if rate in nominal.TRIM_RATES and rate > 0:
            return _climb(rate, _shear() if m.group(2) else _const(), name)
    m = re.fullmatch(r"sysid-(plunge|yaw|roll|pitch)-(\d+(?:\.\d+)?)", name)
    if m:
        rate = float(m.group(2))
        if rate in nominal.TRIM_RATES:
            return Scenario(
                name,
                rate,
                WindField.calm(),
                SYSID_DURATION_S,
                PROFILE_BOTTOM_M,
                dt=SYSID_DT,
                sysid_kind=m.group(1),
            )
    raise UnknownScenario(name)


def scenario_names() -> list[str]:
    names = ["hover", "hover-constwind", "gust", "shear"]
    for r in nominal.TRIM_RATES[1:]:
        names += [f"climb-{r}", f"climb-{r}-shear"]
    for kind in SUBMODELS:
        names += [f"sysid-{kind}-{r}" for r in nominal.TRIM_RATES]
    return names
