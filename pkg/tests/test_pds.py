import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cldepth.pds import (
    CameraInput,
    EuclideanPoint,
    FeatureState,
    InvalidTrajectoryError,
    NoiseSpec,
    StateBounds,
    add_noise,
    differentiate_state,
    f_m,
    f_u,
    omega_row,
    pds_rhs,
    project_chi,
    simulate_truth,
    state_noise_std,
)
from cldepth.profiles import ConstantProfile, Sim1Profile

finite = st.floats(-5, 5, allow_nan=False)
vec2 = st.tuples(finite, finite)
vec3 = st.tuples(finite, finite, finite)


def test_euclidean_to_feature():
    f = EuclideanPoint(2.5, 0.5, 3.0).to_feature()
    assert f.x == pytest.approx(2.5 / 3) and f.y == pytest.approx(0.5 / 3)
    assert f.chi == pytest.approx(1 / 3)
    assert f.depth == pytest.approx(3.0)


def test_point_behind_camera_rejected():
    with pytest.raises(ValueError):
        EuclideanPoint(0, 0, -1)


def test_state_bounds_check():
    b = StateBounds()
    FeatureState(0.1, 0.2, 1.0).check(b)
    with pytest.raises(InvalidTrajectoryError):
        FeatureState(5.0, 0.0, 1.0).check(b)
    with pytest.raises(InvalidTrajectoryError):
        FeatureState(0.0, 0.0, 0.001).check(b)
    with pytest.raises(ValueError):
        StateBounds(chi_lo=2.0, chi_hi=1.0)


def test_camera_input_bounds():
    with pytest.raises(InvalidTrajectoryError):
        CameraInput(np.array([20.0, 0, 0]), np.zeros(3)).check(StateBounds())
    with pytest.raises(InvalidTrajectoryError):
        CameraInput(np.array([np.nan, 0, 0]), np.zeros(3)).check(StateBounds())


def test_rhs_matches_hand_computation():
    s, chi = np.array([0.5, -0.2]), 0.4
    v, w = np.array([0.1, 0.2, 0.3]), np.array([0.01, -0.02, 0.03])
    x, y = s
    sx = x * y * w[0] - (1 + x * x) * w[1] + y * w[2] + (x * v[2] - v[0]) * chi
    sy = (1 + y * y) * w[0] - x * y * w[1] - x * w[2] + (y * v[2] - v[1]) * chi
    cd = v[2] * chi ** 2 + (y * w[0] - x * w[1]) * chi
    np.testing.assert_allclose(pds_rhs([x, y, chi], v, w), [sx, sy, cd], rtol=1e-14)


def test_rhs_is_euclidean_motion():
    # static point seen from a camera with velocities (v, w): dm/dt = -v - w x m
    m = np.array([0.4, -0.3, 2.0])
    v, w = np.array([0.2, -0.1, 0.3]), np.array([0.05, 0.1, -0.2])
    md = -v - np.cross(w, m)
    x, y, chi = m[0] / m[2], m[1] / m[2], 1 / m[2]
    expect = [(md[0] * m[2] - m[0] * md[2]) / m[2] ** 2,
              (md[1] * m[2] - m[1] * md[2]) / m[2] ** 2,
              -md[2] / m[2] ** 2]
    np.testing.assert_allclose(pds_rhs([x, y, chi], v, w), expect, rtol=1e-12)


@given(vec2, vec3, vec3)
def test_chi_zero_is_fixed_point(s, v, w):
    assert f_u(np.array(s), 0.0, np.array(v), np.array(w)) == 0.0


@given(st.floats(-10, 10, allow_nan=False))
def test_centre_point_along_optical_axis_gives_no_information(vz):
    row = omega_row(np.zeros(2), np.array([0.0, 0.0, vz]))
    assert float(row @ row) == 0.0


def test_vectorised_dynamics_broadcast():
    s = np.random.default_rng(0).normal(size=(7, 2))
    w = np.random.default_rng(1).normal(size=(7, 3))
    out = f_m(s, w)
    assert out.shape == (7, 2)
    np.testing.assert_allclose(out[3], f_m(s[3], w[3]))


def test_simulate_truth_sampling_and_bounds():
    tr = simulate_truth(EuclideanPoint(2.5, 0.5, 3.0), Sim1Profile(), 1 / 30, 50.0)
    assert len(tr) == 1501
    assert tr.t[-1] == pytest.approx(50.0)
    assert tr.dt * 30 == pytest.approx(1.0)
    assert np.all(np.abs(tr.s) <= 4) and np.all(tr.chi > 0.01)


def test_simulate_truth_rejects_leaving_bounds():
    prof = ConstantProfile(v=(-2.0, 0, 0))
    with pytest.raises(InvalidTrajectoryError):
        simulate_truth(EuclideanPoint(0.0, 0.0, 1.0), prof, 1 / 30, 5.0)


def test_simulate_truth_argument_checks():
    with pytest.raises(ValueError):
        simulate_truth(EuclideanPoint(0, 0, 1), ConstantProfile(), 0.0, 1.0)
    with pytest.raises(ValueError):
        simulate_truth(EuclideanPoint(0, 0, 1), ConstantProfile(), 0.1, 0.01)


def test_plain_callable_profile():
    tr = simulate_truth(EuclideanPoint(0.1, 0.1, 2.0), lambda t: ((0.1, 0, 0), (0, 0, 0)), 0.1, 1.0)
    np.testing.assert_array_equal(tr.v[:, 0], 0.1)


def test_noise_snr_convention():
    s = np.column_stack([np.ones(1000) * 2.0, np.ones(1000) * 0.5])
    np.testing.assert_allclose(state_noise_std(s, 40.0), [2.0 * 0.01, 0.5 * 0.01])


def test_noise_is_pure_function_of_seed():
    tr = simulate_truth(EuclideanPoint(2.5, 0.5, 3.0), Sim1Profile(), 1 / 30, 5.0)
    spec = NoiseSpec(40.0, 0.01, seed=7)
    a, b = add_noise(tr, spec), add_noise(tr, spec)
    np.testing.assert_array_equal(a.s, b.s)
    np.testing.assert_array_equal(a.v, b.v)
    np.testing.assert_array_equal(a.chi, tr.chi)
    c = add_noise(tr, NoiseSpec(40.0, 0.01, seed=8))
    assert not np.array_equal(a.s, c.s)
    # realised SNR close to the requested one (151 samples per channel)
    p_sig = np.mean(tr.s ** 2, axis=0)
    p_noise = np.mean((a.s - tr.s) ** 2, axis=0)
    np.testing.assert_allclose(10 * np.log10(p_sig / p_noise), 40.0, atol=1.5)


def test_noise_off_returns_copy():
    tr = simulate_truth(EuclideanPoint(2.5, 0.5, 3.0), Sim1Profile(), 1 / 30, 1.0)
    out = add_noise(tr, NoiseSpec())
    np.testing.assert_array_equal(out.s, tr.s)
    assert out.s is not tr.s


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(vel_noise_var=-1)
    with pytest.raises(ValueError):
        NoiseSpec(state_snr_db=math.inf)


@pytest.mark.parametrize("method", ["central", "backward"])
def test_derivative_of_constant_and_linear(method):
    t = np.arange(20) * 0.1
    np.testing.assert_array_equal(differentiate_state(np.ones((20, 2)), 0.1, method), 0.0)
    d = differentiate_state(np.column_stack([t, 2 * t]), 0.1, method)
    np.testing.assert_allclose(d[1:-1], np.tile([1.0, 2.0], (18, 1)), atol=1e-12)


def test_central_derivative_error_bound():
    dt = 1 / 30
    t = np.arange(0, 10, dt)
    s = np.column_stack([np.sin(t), np.sin(t)])
    d = differentiate_state(s, dt, "central")
    err = np.abs(d[1:-1, 0] - np.cos(t[1:-1]))
    assert err.max() <= dt ** 2 / 6


def test_derivative_needs_samples():
    with pytest.raises(ValueError):
        differentiate_state(np.zeros((2, 2)), 0.1, "central")
    with pytest.raises(ValueError):
        differentiate_state(np.zeros((1, 2)), 0.1, "backward")
    with pytest.raises(ValueError):
        differentiate_state(np.zeros((5, 2)), 0.1, "spline")


@given(st.floats(-1e3, 1e3, allow_nan=False), st.sampled_from(["hard", "soft"]))
def test_projection_stays_in_bounds(c, mode):
    out = project_chi(c, 0.01, 100.0, mode)
    assert 0.01 <= out <= 100.0


@given(st.floats(0.02, 90.0), st.sampled_from(["hard", "soft"]))
def test_projection_identity_inside(c, mode):
    assert project_chi(c, 0.01, 100.0, mode) == c


def test_soft_projection_continuous_at_bound():
    vals = [project_chi(100.0 + d, 0.01, 100.0, "soft") for d in (1e-3, 1e-6, 1e-9, 0.0)]
    assert abs(vals[0] - vals[-1]) < 1e-3
    assert abs(vals[2] - vals[-1]) < 1e-8
    knee = 95.0
    assert project_chi(knee + 1e-9, 0.01, 100.0, "soft") == pytest.approx(knee, abs=1e-8)


def test_projection_unknown_mode():
    with pytest.raises(ValueError):
        project_chi(1.0, mode="wavy")
