import numpy as np
import pytest

from drbwind import nominal
from drbwind.models import SUBMODELS, GammaPreset
from drbwind.scenarios import SYSID_AMPLITUDE, SYSID_FREQS_HZ, get_scenario
from drbwind.simulator import SensorNoiseSpec, excitation_multisine, simulate


def rk4_propagate(A, B, u, x0, dt, substeps):
    """Classical RK4 with ``substeps`` steps per sample; input held per sample."""
    h = dt / substeps
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for uk in u[:-1]:
        f = lambda s: A @ s + B @ uk  # noqa: E731
        for _ in range(substeps):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)


def rk4_transition(A, dt, substeps=20):
    """Transition matrix by RK4 sub-integration of each unit initial state."""
    n = A.shape[0]
    h = dt / substeps
    step = np.eye(n) + h * A + (h * A) @ (h * A) / 2 + np.linalg.matrix_power(h * A, 3) / 6
    step += np.linalg.matrix_power(h * A, 4) / 24
    return np.linalg.matrix_power(step, substeps)


@pytest.fixture
def hover():
    return nominal.hover_model()


@pytest.fixture
def hover_dynamic():
    return nominal.hover_model(GammaPreset.DYNAMIC_WIND)


def sysid_log(kind, rate=0.0, seed=None, duration_s=None):
    """Identification flight for one sub-model; noise-free unless ``seed`` is given."""
    sc = get_scenario(f"sysid-{kind}-{rate}")
    duration = duration_s or sc.duration_s

    u = excitation_multisine(SUBMODELS[kind].input, SYSID_AMPLITUDE, SYSID_FREQS_HZ, duration, sc.dt)
    noise = SensorNoiseSpec.zero() if seed is None else SensorNoiseSpec(seed=seed)
    return simulate(sc.model(), u, sc.wind, noise, dt=sc.dt, t_end=duration, initial_altitude=10.0)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
