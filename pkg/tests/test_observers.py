import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cldepth.excitation import AuxiliaryStack, HistoryStack, make_entry, push_measurement
from cldepth.observers import (
    TOL_SV,
    FullOrderGains,
    FullOrderObserver,
    FullOrderState,
    Projector,
    ReducedOrderObserver,
    ReducedOrderState,
    StackConfigurationError,
    check_gain_condition_full,
    check_gain_condition_reduced,
    estimate_lipschitz_g,
    full_bound_core,
    full_error_dynamics,
    full_order_rhs,
    full_order_step,
    g_term,
    ls_baseline,
    ls_series,
    reduced_bound_core,
    reduced_gamma,
    reduced_order_step_differential,
    stack_sums,
)
from cldepth.pds import CameraInput, EuclideanPoint, f_u, pds_rhs, simulate_truth
from cldepth.profiles import Sim1Profile

small = st.floats(-2, 2, allow_nan=False)
chis = st.floats(0.05, 5.0)


def exact_truth(horizon=6.0):
    tr = simulate_truth(EuclideanPoint(2.5, 0.5, 3.0), Sim1Profile(), 1 / 30, horizon)
    return tr, tr.true_s_dot()


def test_gain_validation():
    with pytest.raises(ValueError):
        FullOrderGains(H=(1.0, -1.0))
    with pytest.raises(ValueError):
        FullOrderGains(Gamma=0.0)
    with pytest.raises(ValueError):
        ReducedOrderState(0.0, 0.0, K_bar=0.0)
    with pytest.raises(ValueError):
        ReducedOrderState(0.0, 0.0, K_bar=1.0, mode="sideways")


@given(small, small, chis, small, small, chis, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_error_dynamics_identity(x, y, chi, sx, sy, chi_hat, vx, vy, vz, wx, wy, wz):
    """Truth minus observer right-hand sides equals the error system at every instant."""
    gains = FullOrderGains()
    u = CameraInput(np.array([vx, vy, vz]), np.array([wx, wy, wz]))
    s = np.array([x, y])
    # two stored points with exact derivatives plus a current slot
    pts = [(np.array([0.3, -0.1]), 0.7), (np.array([-0.4, 0.2]), 1.3), (s, chi)]
    entries, chi_j = [], []
    for p, c in pts:
        sd = pds_rhs([p[0], p[1], c], u.v, u.omega)[:2]
        entries.append(make_entry(0.0, p, u.v, u.omega, sd))
        chi_j.append(c)
    sums = stack_sums(entries[:2], entries[2], need_derivative=True)
    ds_hat, dchi_hat = full_order_rhs((sx, sy), chi_hat, s, u, sums, gains)
    truth = pds_rhs([x, y, chi], u.v, u.omega)
    xi = (x - sx, y - sy)
    xi_dot, z_dot = full_error_dynamics(xi, chi - chi_hat, s, chi, u, entries, chi_j,
                                        [(0.0, 0.0)] * 3, gains)
    np.testing.assert_allclose(truth[:2] - ds_hat, xi_dot, atol=1e-9)
    assert truth[2] - dchi_hat == pytest.approx(z_dot, abs=1e-9)


def test_error_dynamics_along_a_run():
    tr, sd = exact_truth(3.0)
    gains = FullOrderGains()
    dt = tr.dt
    hist, aux = HistoryStack(3, 0.1), AuxiliaryStack(5)
    st_ = FullOrderState((1.0, 0.5), 0.8)
    worst = 0.0
    for k in range(len(tr)):
        u = tr.input_at(k)
        e = make_entry(tr.t[k], tr.s[k], u.v, u.omega, sd[k], u.v_dot, k)
        push_measurement(aux, hist, e)
        sums = stack_sums(hist, e, need_derivative=True)
        ds_hat, dchi_hat = full_order_rhs(st_.s_hat, st_.chi_hat, tr.s[k], u, sums, gains)
        entries = hist.entries + [e]
        xi = tr.s[k] - np.array(st_.s_hat)
        xi_dot, z_dot = full_error_dynamics(xi, tr.chi[k] - st_.chi_hat, tr.s[k], tr.chi[k], u, entries,
                                            [tr.chi[x.index] for x in entries], [(0, 0)] * len(entries), gains)
        obs = np.concatenate([sd[k] - ds_hat, [f_u(tr.s[k], tr.chi[k], u.v, u.omega) - dchi_hat]])
        worst = max(worst, np.abs(obs - np.concatenate([xi_dot, [z_dot]])).max())
        st_ = full_order_step(st_, tr.s[k], u, hist, gains, dt, e)
    assert worst <= 10 * dt ** 4


def test_full_observer_needs_derivatives():
    e = make_entry(0.0, (0.1, 0.1), (0.1, 0, 0), (0, 0, 0))
    with pytest.raises(StackConfigurationError):
        full_order_step(FullOrderState((0, 0), 1.0), (0.1, 0.1), CameraInput(np.zeros(3), np.zeros(3)),
                        [e], FullOrderGains(), 0.1)
    with pytest.raises(StackConfigurationError):
        reduced_order_step_differential(ReducedOrderState(1.0, 0.0, 1.0, "differential"), (0.1, 0.1),
                                        CameraInput(np.zeros(3), np.zeros(3)), [e], 0.1)


def test_step_rejects_bad_dt():
    e = make_entry(0.0, (0.1, 0.1), (0.1, 0, 0), (0, 0, 0), (0, 0))
    with pytest.raises(ValueError):
        full_order_step(FullOrderState((0, 0), 1.0), (0.1, 0.1), CameraInput(np.zeros(3), np.zeros(3)),
                        [e], FullOrderGains(), 0.0)


@pytest.mark.parametrize("mode", ["integral", "differential"])
def test_noiseless_exact_derivatives_converge(mode):
    tr, sd = exact_truth(15.0)
    hist, aux = HistoryStack(3, 0.1), AuxiliaryStack(5)
    obs = ReducedOrderObserver(0.75, 3.0, mode)
    full = FullOrderObserver(FullOrderGains(), (10.0, 5.0), 3.0)
    hist2, aux2 = HistoryStack(3, 0.1), AuxiliaryStack(5)
    zr, zf = [], []
    for k in range(len(tr)):
        u = tr.input_at(k)
        e = make_entry(tr.t[k], tr.s[k], u.v, u.omega, sd[k], u.v_dot, k)
        push_measurement(aux, hist, e)
        push_measurement(aux2, hist2, e)
        obs.sync(hist, e, tr.t[k])
        zr.append(tr.chi[k] - obs.chi_hat)
        zf.append(tr.chi[k] - full.chi_hat)
        obs.step(tr.s[k], u, hist, e, tr.dt)
        full.step(tr.s[k], u, hist2, e, tr.dt)
    late = tr.t >= 10
    assert np.abs(np.array(zf)[late]).max() < 1e-3
    if mode == "differential":
        assert np.abs(np.array(zr)[late]).max() < 1e-3
    else:
        # integral mode carries the stale-stack bias; still far inside the initial error
        assert np.abs(np.array(zr)[late]).max() < 0.05


def test_reduced_gamma_jumps_are_reported():
    tr, sd = exact_truth(2.0)
    hist, aux = HistoryStack(3, 0.1), AuxiliaryStack(5)
    obs = ReducedOrderObserver(0.75, 2.0, "integral")
    for k in range(len(tr)):
        u = tr.input_at(k)
        e = make_entry(tr.t[k], tr.s[k], u.v, u.omega, sd[k], u.v_dot, k)
        push_measurement(aux, hist, e)
        kappa_before, chi_before = obs.state.kappa, obs.state.chi_hat
        jump = obs.sync(hist, e, tr.t[k])
        if k == 0:
            assert obs.state.chi_hat == pytest.approx(2.0)
            assert jump == 0.0
        else:
            assert obs.state.kappa == kappa_before
            assert obs.state.chi_hat - chi_before == pytest.approx(jump, abs=1e-12)
            assert jump == pytest.approx(reduced_gamma(hist, e, 0.75) - (chi_before - kappa_before), abs=1e-12)
        obs.step(tr.s[k], u, hist, e, tr.dt)
    assert obs.jumps and all(np.isfinite(j) for _, j in obs.jumps)


def test_projection_keeps_estimate_in_bounds():
    proj = Projector(0.5, 2.0)
    obs = FullOrderObserver(FullOrderGains(), (0, 0), 10.0, proj)
    assert obs.chi_hat == 2.0
    e = make_entry(0, (0.5, 0.5), (1.0, 0, 0), (0, 0, 0), (-50.0, 0))
    for _ in range(20):
        obs.step((0.5, 0.5), CameraInput(np.array([1.0, 0, 0]), np.zeros(3)), [e], e, 0.05)
        assert 0.5 <= obs.chi_hat <= 2.0


@given(st.floats(0.01, 100), st.floats(-1e3, 1e3, allow_nan=False))
def test_projection_never_increases_error(chi, chi_hat):
    p = Projector(0.01, 100.0, "hard")
    assert abs(chi - p(chi_hat)) <= abs(chi - chi_hat)


@given(st.floats(0.0105, 95.0), st.floats(-1e3, 1e3, allow_nan=False))
def test_soft_projection_never_increases_error_inside_band(chi, chi_hat):
    # the smooth mode bends inside the outer 5% band, so only the inner band is covered
    p = Projector(0.01, 100.0, "soft")
    assert abs(chi - p(chi_hat)) <= abs(chi - chi_hat) + 1e-12


def test_ls_baseline_exact_and_ill_conditioned():
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = rng.uniform(-1, 1, 2)
        v, w = rng.uniform(-1, 1, 3), rng.uniform(-0.5, 0.5, 3)
        chi = rng.uniform(0.1, 3)
        sd = pds_rhs([s[0], s[1], chi], v, w)[:2]
        row = np.array([s[0] * v[2] - v[0], s[1] * v[2] - v[1]])
        if np.linalg.norm(row) > TOL_SV:
            est = ls_baseline(s, CameraInput(v, w), sd)
            assert abs(est - chi) / chi <= 1e-6
    assert ls_baseline((0, 0), CameraInput(np.array([0, 0, 1.0]), np.zeros(3)), (0, 0)) is None
    out = ls_series(np.zeros((2, 2)), np.array([[0, 0, 1.0], [-1.0, 0, 0]]), np.zeros((2, 3)),
                    np.array([[0, 0], [2.0, 0]]))
    assert math.isnan(out[0]) and out[1] == pytest.approx(2.0)


def test_gain_condition_examples():
    c = check_gain_condition_reduced(1.0, 2.0, 1.0)
    assert c.passed and c.margin == pytest.approx(0.5)
    assert not check_gain_condition_reduced(0.5, 2.0, 1.0).passed
    c = check_gain_condition_full(0.15, 5.0, 0.0, 1.0)
    assert not c.passed and c.unachievable
    c = check_gain_condition_full(1.0, 2.0, 1.0, 1.0)
    assert c.passed and c.required == pytest.approx(0.5)
    assert not check_gain_condition_full(0.5, 2.0, 1.0, 1.0).passed
    with pytest.raises(ValueError):
        check_gain_condition_full(1, 1, -1, 1)


def test_lipschitz_examples():
    s = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    zero = [(0.0, 0.0)] * 3
    assert estimate_lipschitz_g(s, [(-1, 1), (-1, 1), (0, 0)], zero, (0.1, 1.0)) == 0.0
    lg = estimate_lipschitz_g(s, [(0, 0), (0, 0), (-0.3, 0.3)], zero, (0.0, 1.0))
    assert lg == pytest.approx(0.6)


@given(small, small, chis, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_g_vanishes_at_zero_error(x, y, chi, vz, wx, wy):
    assert g_term(np.array([x, y]), chi, chi, np.array([0, 0, vz]), np.array([wx, wy, 0])) == 0.0


def test_bound_core_monotone():
    base = full_bound_core(0.15, 4, 2.0, 0.1, 0.05)
    assert full_bound_core(0.15, 4, 2.0, 0.1, 0.01) <= base
    assert full_bound_core(0.15, 4, 2.0, 0.01, 0.05) <= base
    assert full_bound_core(0.15, 4, 2.0, 0.0, 0.0) == 0.0
    assert reduced_bound_core(0.1, 4, 2.0, 0.05) <= reduced_bound_core(0.1, 4, 2.0, 0.1)
    assert reduced_bound_core(0.1, 4, 2.0, 0.0) == 0.0
