import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg

from drbwind import nominal
from drbwind.models import (
    STATE_INDEX,
    GammaPreset,
    PitchModel,
    PlungeModel,
    RollModel,
    YawModel,
    assemble_model,
    extract_submodels,
)
from drbwind.observer import (
    N_AUG,
    WIND_SLICE,
    NotObservableError,
    ObserverGain,
    augment,
    default_q_weights,
    default_r_weights,
    design_gain,
    observability_rank,
    riccati_fixed_point,
    run_observer,
    select_model,
)
from drbwind.simulator import FlightLog, SensorNoiseSpec, WindField, simulate, zoh

S = STATE_INDEX


def no_drag(model):
    plunge, yaw, roll, pitch = extract_submodels(model)
    return assemble_model(
        replace(plunge, Z_w=0.0),
        yaw,
        replace(roll, Y_v=0.0),
        replace(pitch, X_u=0.0),
        trim=model.trim,
        gamma_preset=model.gamma_preset,
    )


def test_augment_blocks(hover):
    aug = augment(hover)
    assert aug.A.shape == (15, 15) and aug.B.shape == (15, 4) and aug.C.shape == (12, 15)
    np.testing.assert_array_equal(aug.A[12:], 0.0)
    np.testing.assert_array_equal(aug.A[:12, :12], hover.A)
    np.testing.assert_array_equal(aug.A[:12, 12:], hover.Gamma)
    np.testing.assert_array_equal(aug.B[:12], hover.B)
    np.testing.assert_array_equal(aug.C[:, :12], np.eye(12))
    assert aug.C[S["u"], 12] == 1.0
    assert aug.C[S["x"], 12] == 0.0


def test_augment_dynamic_wind(hover_dynamic):
    aug = augment(hover_dynamic)
    assert aug.A[S["u"], 12] == pytest.approx(0.71)
    np.testing.assert_array_equal(aug.C[:, 12:], 0.0)


def test_augment_zero_model_keeps_output_identity():
    zero = assemble_model(PlungeModel(), YawModel(), RollModel(), PitchModel())
    aug = augment(zero)
    np.testing.assert_array_equal(aug.B, 0.0)
    # only the unit kinematic couplings and the wind drift of position remain
    assert np.count_nonzero(aug.A) == 9
    np.testing.assert_array_equal(aug.C[:, :12], np.eye(12))
    np.testing.assert_array_equal(aug.C[6:9, 12:], np.eye(3))


@pytest.mark.parametrize("preset", list(GammaPreset))
@pytest.mark.parametrize("rate", nominal.TRIM_RATES)
def test_rank_full(rate, preset):
    report = observability_rank(augment(nominal.nominal_model(rate, preset)))
    assert report.rank == 15 and report.full_rank


def test_rank_deficient_without_drag(hover):
    report = observability_rank(augment(no_drag(hover)))
    assert report.rank < 15
    assert report.gap > 1e6


def test_design_gain_refuses_unobservable(hover):
    with pytest.raises(NotObservableError, match="rank 12"):
        design_gain(augment(no_drag(hover)))


def test_scalar_riccati_golden_ratio():
    P, _ = riccati_fixed_point(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    # p = p + 1 - p^2 / (p + 1)  =>  p^2 - p - 1 = 0
    assert P[0, 0] == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-9)


def test_riccati_matches_plain_recursion():
    rng = np.random.default_rng(5)
    A = 0.9 * np.linalg.qr(rng.standard_normal((4, 4)))[0]
    C = rng.standard_normal((2, 4))
    Q, R = np.eye(4) * 0.1, np.eye(2)
    P = np.zeros((4, 4))
    for _ in range(2000):
        P = A @ P @ A.T + Q - A @ P @ C.T @ np.linalg.solve(C @ P @ C.T + R, C @ P @ A.T)
    np.testing.assert_allclose(riccati_fixed_point(A, C, Q, R)[0], P, atol=1e-10)


def test_riccati_matches_scipy(hover):
    aug = augment(hover)
    Ad, _ = zoh(aug.A, aug.B, 0.125)
    Q, R = np.diag(default_q_weights()), np.diag(default_r_weights())
    P, _ = riccati_fixed_point(Ad, aug.C, Q, R)
    ref = scipy.linalg.solve_discrete_are(Ad.T, aug.C.T, Q, R)
    np.testing.assert_allclose(P, ref, rtol=1e-6, atol=1e-12)


def test_hover_gain_stable(hover):
    gain = design_gain(augment(hover))
    assert gain.G.shape == (15, 12)
    assert gain.spectral_radius < 1.0
    closed = (np.eye(N_AUG) - gain.G @ gain.C) @ gain.Ad
    assert np.max(np.abs(np.linalg.eigvals(closed))) == pytest.approx(gain.spectral_radius)


def test_gain_vanishes_without_measurement_trust(hover):
    aug = augment(hover)
    peaks = [np.max(np.abs(design_gain(aug, r_weights=np.full(12, r)).G)) for r in (1e4, 1e8, 1e12)]
    assert peaks[0] > peaks[1] > peaks[2]
    # integrator chains make the decay slow (about r**-0.25), not zero at 1e12
    assert peaks[2] < 1e-3 * np.max(np.abs(design_gain(aug).G))


def test_weight_validation(hover):
    with pytest.raises(ValueError):
        design_gain(augment(hover), q_weights=np.ones(14))
    with pytest.raises(ValueError):
        design_gain(augment(hover), r_weights=-np.ones(12))


def test_estimates_invariant_to_weight_scaling(hover):
    aug = augment(hover)
    log = simulate(hover, wind=WindField.constant(2.0, -1.0, 0.0), noise=SensorNoiseSpec(seed=4), t_end=30.0)
    a = run_observer(aug, design_gain(aug), log)
    k = 37.5
    b = run_observer(aug, design_gain(aug, q_weights=k * default_q_weights(), r_weights=k * default_r_weights()), log)
    np.testing.assert_allclose(b.states, a.states, rtol=0, atol=1e-8)


def test_zero_log_zero_estimates(hover):
    aug = augment(hover)
    est = run_observer(aug, design_gain(aug), FlightLog(0.125, np.zeros((50, 12)), np.zeros((50, 4))))
    np.testing.assert_array_equal(est.wind, 0.0)
    assert len(est) == 50


def test_constant_wind_convergence(hover):
    aug = augment(hover)
    W = np.array([2.0, -1.0, 0.0])
    log = simulate(hover, wind=WindField.constant(*W), t_end=60.0)
    est = run_observer(aug, design_gain(aug), log)
    late = est.time >= 15.0
    assert np.max(np.linalg.norm(est.wind[late] - W, axis=1)) < 0.02
    assert np.all(np.isfinite(est.innovation_norm))


def test_ramp_tracking_lag(hover):
    aug = augment(hover)
    log = simulate(hover, wind=WindField.ramp(0.05), t_end=120.0)
    est = run_observer(aug, design_gain(aug), log)
    late = est.time >= 20.0
    lag = np.abs(est.wind[late, 0] - log.true_wind[late, 0])
    assert np.max(lag) < 0.15


def test_dynamic_wind_preset_converges(hover_dynamic):
    aug = augment(hover_dynamic)
    W = np.array([-1.5, 2.5, 0.3])
    log = simulate(hover_dynamic, wind=WindField.constant(*W), t_end=120.0)
    est = run_observer(aug, design_gain(aug), log)
    assert np.max(np.abs(est.wind[-1] - W)) < 0.01


def test_recursion_reduces_to_state_observer(hover):
    # with the wind rows of the gain zeroed, the wind estimate stays at zero
    # and the state recursion is the plain 12-state predict/correct loop
    aug = augment(hover)
    Ad, Bd = zoh(hover.A, hover.B, 0.125)
    Q, R = 1e-3 * np.eye(12), np.diag(default_r_weights())
    P, _ = riccati_fixed_point(Ad, np.eye(12), Q, R)
    G12 = P @ np.linalg.inv(P + R)
    AdA, BdA = zoh(aug.A, aug.B, 0.125)
    G = np.zeros((15, 12))
    G[:12] = G12
    gain = ObserverGain(G, 0.0, None, AdA, BdA, aug.C, 0.125, 0)
    u = np.zeros((200, 4))
    u[:, 0] = 0.2 * np.sin(0.3 * np.arange(200))
    log = simulate(hover, u, noise=SensorNoiseSpec(seed=1), t_end=199 * 0.125)
    est = run_observer(aug, gain, log)
    x = np.zeros(12)
    for k in range(len(log)):
        x = x + G12 @ (log.z[k] - x)
        np.testing.assert_array_equal(est.states[k, :12], x)
        x = Ad @ x + Bd @ log.u[k]
    np.testing.assert_array_equal(est.wind, 0.0)


def test_run_observer_checks_dt(hover):
    aug = augment(hover)
    with pytest.raises(ValueError):
        run_observer(aug, design_gain(aug, dt=0.125), FlightLog(0.1, np.zeros((5, 12)), np.zeros((5, 4))))


def test_estimated_heights_follow_climb():
    model = nominal.nominal_model(1.0)
    aug = augment(model)
    log = simulate(model, t_end=20.0, initial_altitude=10.0)
    est = run_observer(aug, design_gain(aug), log)
    np.testing.assert_allclose(est.heights, 10.0 + est.time, atol=1e-12)


def test_select_model_nearest():
    models = [nominal.nominal_model(r) for r in nominal.TRIM_RATES]
    assert select_model(models, 1.2).trim.ascent_rate == 1.0
    assert select_model(models, 0.75).trim.ascent_rate == 0.5
    assert select_model(models, 5.0).trim.ascent_rate == 2.0
    with pytest.raises(ValueError):
        select_model([], 1.0)


def test_wind_slice():
    assert WIND_SLICE == slice(12, 15)
