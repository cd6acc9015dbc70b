"""Concurrent-learning depth observers, the least-squares baseline and gain diagnostics.

Measurements are held constant over each integration step (zero-order hold),
so every right-hand side below is affine or quadratic in the estimate with
coefficients fixed for the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .excitation import HistoryStack, StackEntry
from .pds import CameraInput, f_u, project_chi


class StackConfigurationError(ValueError):
    """Stack contents do not match what the observer needs."""


@dataclass(frozen=True)
class Projector:
    chi_lo: float = 0.01
    chi_hi: float = 100.0
    mode: str = "hard"

    def __call__(self, chi_hat: float) -> float:
        return project_chi(chi_hat, self.chi_lo, self.chi_hi, self.mode)


@dataclass(frozen=True)
class FullOrderGains:
    H: tuple[float, float] = (10.0, 10.0)
    Gamma: float = 5.0
    K_cl: float = 0.15

    def __post_init__(self):
        if len(self.H) != 2 or min(self.H) <= 0:
            raise ValueError(f"H must be a positive diagonal (h1, h2), got {self.H}")
        if self.Gamma <= 0 or self.K_cl <= 0:
            raise ValueError("Gamma and K_cl must be positive")


@dataclass(frozen=True)
class FullOrderState:
    s_hat: tuple[float, float]
    chi_hat: float


@dataclass(frozen=True)
class ReducedOrderState:
    """Reduced-order observer state.

    In integral mode ``kappa`` is the internal state and the estimate is
    kappa + gamma_val.  In differential mode ``kappa`` holds the estimate
    itself and ``gamma_val`` stays zero.
    """

    kappa: float
    gamma_val: float
    K_bar: float
    mode: str = "integral"

    def __post_init__(self):
        if self.mode not in ("integral", "differential"):
            raise ValueError(f"unknown reduced-order mode {self.mode!r}")
        if self.K_bar <= 0:
            raise ValueError("K_bar must be positive")

    @property
    def chi_hat(self) -> float:
        return self.kappa + self.gamma_val


@dataclass(frozen=True)
class StackSums:
    """Aggregates over stored entries plus the current-time slot."""

    info: float
    residual: float
    theta_v: float
    drift: float


def stack_sums(stack: HistoryStack | Sequence[StackEntry], current: StackEntry | None = None,
               need_derivative: bool = False) -> StackSums:
    if isinstance(stack, HistoryStack):
        info, res, tv, dr = stack.sigma1, stack.sum_residual, stack.sum_theta_v, stack.sum_drift
        entries = stack._entries
    else:
        entries = list(stack)
        info = math.fsum(e.info for e in entries)
        res = math.fsum(e.residual for e in entries)
        tv = math.fsum(e.theta_v for e in entries)
        dr = math.fsum(e.theta_vdot - (e.row[0] * e.fm[0] + e.row[1] * e.fm[1]) for e in entries)
    if need_derivative:
        for e in entries if current is None else [*entries, current]:
            if e.s_dot_bar is None:
                raise StackConfigurationError(
                    f"stack entry at t={e.t} has no image-velocity estimate")
    if current is not None:
        info += current.info
        res += current.residual
        tv += current.theta_v
        dr += current.theta_vdot - (current.row[0] * current.fm[0] + current.row[1] * current.fm[1])
    return StackSums(info, res, tv, dr)


def _input_terms(s, u: CameraInput):
    x, y = float(s[0]), float(s[1])
    vx, vy, vz = (float(c) for c in u.v)
    wx, wy, wz = (float(c) for c in u.omega)
    fm0 = x * y * wx - (1 + x * x) * wy + y * wz
    fm1 = (1 + y * y) * wx - x * y * wy - x * wz
    r0, r1 = x * vz - vx, y * vz - vy
    lin = y * wx - x * wy  # f_u = vz*chi^2 + lin*chi
    return x, y, fm0, fm1, r0, r1, vz, lin


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# --------------------------------------------------------------------------
# Full-order observer
# --------------------------------------------------------------------------

def full_order_rhs(s_hat, chi_hat: float, s, u: CameraInput, sums: StackSums,
                   gains: FullOrderGains) -> tuple[np.ndarray, float]:
    """(d s_hat/dt, d chi_hat/dt) of the full-order observer."""
    x, y, fm0, fm1, r0, r1, vz, lin = _input_terms(s, u)
    xi0, xi1 = x - s_hat[0], y - s_hat[1]
    ds = np.array([fm0 + r0 * chi_hat + gains.H[0] * xi0,
                   fm1 + r1 * chi_hat + gains.H[1] * xi1])
    dchi = (vz * chi_hat * chi_hat + lin * chi_hat
            + gains.Gamma * (r0 * xi0 + r1 * xi1)
            + gains.K_cl * gains.Gamma * (sums.residual - sums.info * chi_hat))
    return ds, dchi


def full_order_step(state: FullOrderState, s, u: CameraInput,
                    stack: HistoryStack | Sequence[StackEntry], gains: FullOrderGains,
                    dt: float, current: StackEntry | None = None,
                    projector: Projector | None = None) -> FullOrderState:
    """Advance the full-order estimate by one RK4 step, then project chi_hat."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    sums = stack_sums(stack, current, need_derivative=True)
    x, y, fm0, fm1, r0, r1, vz, lin = _input_terms(s, u)
    h0, h1 = gains.H
    G, KG = gains.Gamma, gains.K_cl * gains.Gamma
    a, b = sums.residual, sums.info

    def f(z):
        sx, sy, c = z
        xi0, xi1 = x - sx, y - sy
        return np.array([fm0 + r0 * c + h0 * xi0,
                         fm1 + r1 * c + h1 * xi1,
                         vz * c * c + lin * c + G * (r0 * xi0 + r1 * xi1) + KG * (a - b * c)])

    z = _rk4(f, np.array([state.s_hat[0], state.s_hat[1], state.chi_hat]), dt)
    chi = float(z[2])
    if projector is not None:
        chi = projector(chi)
    return FullOrderState((float(z[0]), float(z[1])), chi)


def full_error_dynamics(xi, z: float, s, chi: float, u: CameraInput,
                        entries: Sequence[StackEntry], chi_j: Sequence[float],
                        d_j: Sequence[Sequence[float]], gains: FullOrderGains):
    """Right-hand side of the estimation-error system (xi_dot, z_dot).

    ``entries`` must include the current-time slot; ``chi_j`` are the true
    inverse depths at the entry times and ``d_j`` the derivative errors.
    """
    x, y, fm0, fm1, r0, r1, vz, lin = _input_terms(s, u)
    chi_hat = chi - z
    g = (vz * chi * chi + lin * chi) - (vz * chi_hat * chi_hat + lin * chi_hat)
    xi_dot = np.array([-gains.H[0] * xi[0] + r0 * z, -gains.H[1] * xi[1] + r1 * z])
    sum_d = sum(e.row[0] * d[0] + e.row[1] * d[1] for e, d in zip(entries, d_j))
    sum_i = sum(e.info * (z + cj - chi) for e, cj in zip(entries, chi_j))
    z_dot = -gains.Gamma * (r0 * xi[0] + r1 * xi[1]) + g - gains.K_cl * gains.Gamma * (sum_d + sum_i)
    return xi_dot, z_dot


class FullOrderObserver:
    def __init__(self, gains: FullOrderGains, s_hat0, chi_hat0: float,
                 projector: Projector | None = None):
        self.gains = gains
        self.projector = projector or Projector()
        self.state = FullOrderState((float(s_hat0[0]), float(s_hat0[1])),
                                    self.projector(float(chi_hat0)))

    @property
    def chi_hat(self) -> float:
        return self.state.chi_hat

    @property
    def s_hat(self) -> tuple[float, float]:
        return self.state.s_hat

    def step(self, s, u, stack, current, dt) -> FullOrderState:
        self.state = full_order_step(self.state, s, u, stack, self.gains, dt, current, self.projector)
        return self.state


# --------------------------------------------------------------------------
# Reduced-order observer
# --------------------------------------------------------------------------

def reduced_gamma(stack, current: StackEntry | None, K_bar: float) -> float:
    """Output-injection term -K_bar * sum_j theta_j^T v_j."""
    return -K_bar * stack_sums(stack, current).theta_v


def theta(s) -> np.ndarray:
    x, y = float(s[0]), float(s[1])
    return np.array([x, y, -(x * x + y * y) / 2])


def reduced_order_step_integral(state: ReducedOrderState, s, u: CameraInput, stack, dt: float,
                                current: StackEntry | None = None,
                                projector: Projector | None = None) -> ReducedOrderState:
    """Recompute gamma from ``stack`` and advance kappa by one RK4 step.

    The returned state carries the new kappa and the gamma that was used;
    the estimate at the next sample is obtained after gamma is refreshed
    from the next stack.
    """
    if state.mode != "integral":
        raise ValueError("state is not in integral mode")
    if dt <= 0:
        raise ValueError("dt must be positive")
    proj = projector or (lambda c: c)
    sums = stack_sums(stack, current)
    gam = -state.K_bar * sums.theta_v
    x, y, fm0, fm1, r0, r1, vz, lin = _input_terms(s, u)
    K = state.K_bar
    drift, info = sums.drift, sums.info

    def f(kp):
        c = proj(kp + gam)
        return vz * c * c + lin * c + K * (drift - info * c)

    k1 = f(state.kappa)
    k2 = f(state.kappa + 0.5 * dt * k1)
    k3 = f(state.kappa + 0.5 * dt * k2)
    k4 = f(state.kappa + dt * k3)
    kappa = state.kappa + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return replace(state, kappa=kappa, gamma_val=gam)


def reduced_order_step_differential(state: ReducedOrderState, s, u: CameraInput, stack,
                                    dt: float, current: StackEntry | None = None,
                                    projector: Projector | None = None) -> ReducedOrderState:
    """Integrate the estimate directly using stored image-velocity estimates."""
    if state.mode != "differential":
        raise ValueError("state is not in differential mode")
    if dt <= 0:
        raise ValueError("dt must be positive")
    sums = stack_sums(stack, current, need_derivative=True)
    x, y, fm0, fm1, r0, r1, vz, lin = _input_terms(s, u)
    K = state.K_bar
    a, b = sums.residual, sums.info

    def f(c):
        return vz * c * c + lin * c + K * (a - b * c)

    chi = _rk4(f, state.kappa, dt)
    if projector is not None:
        chi = projector(chi)
    return replace(state, kappa=chi, gamma_val=0.0)


class ReducedOrderObserver:
    """Stateful wrapper; records every jump of gamma caused by stack changes."""

    def __init__(self, K_bar: float, chi_hat0: float, mode: str = "integral",
                 projector: Projector | None = None):
        self.projector = projector or Projector()
        self.state = ReducedOrderState(kappa=float(chi_hat0), gamma_val=0.0, K_bar=K_bar, mode=mode)
        self._initialised = mode == "differential"
        self._chi_hat0 = float(chi_hat0)
        self.jumps: list[tuple[float, float]] = []

    @property
    def mode(self) -> str:
        return self.state.mode

    def sync(self, stack, current: StackEntry | None, t: float = float("nan")) -> float:
        """Refresh gamma for the stack seen at time t; returns the jump in gamma."""
        if self.mode == "differential":
            return 0.0
        gam = reduced_gamma(stack, current, self.state.K_bar)
        if not self._initialised:
            # choose kappa(t0) so that the first output equals chi_hat0
            self.state = replace(self.state, kappa=self._chi_hat0 - gam, gamma_val=gam)
            self._initialised = True
            return 0.0
        jump = gam - self.state.gamma_val
        self.state = replace(self.state, gamma_val=gam)
        if jump != 0.0:
            self.jumps.append((t, jump))
        return jump

    @property
    def chi_hat(self) -> float:
        return self.projector(self.state.chi_hat)

    def step(self, s, u, stack, current, dt) -> ReducedOrderState:
        if self.mode == "integral":
            self.state = reduced_order_step_integral(self.state, s, u, stack, dt, current, self.projector)
        else:
            self.state = reduced_order_step_differential(self.state, s, u, stack, dt, current,
                                                         self.projector)
        return self.state


# --------------------------------------------------------------------------
# Least-squares baseline
# --------------------------------------------------------------------------

TOL_SV = 1e-3


def ls_baseline(s, u: CameraInput, s_dot_bar, tol_sv: float = TOL_SV) -> float | None:
    """Pointwise pseudo-inverse estimate of chi; None when Omega is near singular."""
    x, y, fm0, fm1, r0, r1, vz, lin = _input_terms(s, u)
    norm2 = r0 * r0 + r1 * r1
    if math.sqrt(norm2) < tol_sv:
        return None
    return (r0 * (s_dot_bar[0] - fm0) + r1 * (s_dot_bar[1] - fm1)) / norm2


def ls_series(s, v, omega, s_dot_bar, tol_sv: float = TOL_SV) -> np.ndarray:
    """Vectorised baseline; NaN where ill-conditioned."""
    from .pds import f_m, omega_row

    row = omega_row(s, v)
    res = np.asarray(s_dot_bar, float) - f_m(s, omega)
    norm2 = np.einsum("ij,ij->i", row, row)
    num = np.einsum("ij,ij->i", row, res)
    out = np.full(len(norm2), np.nan)
    ok = np.sqrt(norm2) >= tol_sv
    out[ok] = num[ok] / norm2[ok]
    return out


# --------------------------------------------------------------------------
# Gain conditions and Lipschitz estimate
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GainCheck:
    passed: bool
    margin: float
    required: float

    @property
    def unachievable(self) -> bool:
        return math.isinf(self.required)


def _check(gain: float, required: float) -> GainCheck:
    return GainCheck(gain > required, gain - required, required)


def check_gain_condition_full(K_cl: float, Gamma: float, sigma1: float, L_g: float) -> GainCheck:
    """Sufficient condition K_cl > L_g / (sigma1 * Gamma) for a complete stack."""
    if sigma1 < 0 or L_g < 0:
        raise ValueError("sigma1 and L_g must be non-negative")
    if sigma1 == 0:
        return GainCheck(False, -math.inf, math.inf)
    return _check(K_cl, L_g / (sigma1 * Gamma))


def check_gain_condition_reduced(K_bar: float, sigma1: float, L_g: float) -> GainCheck:
    """Sufficient condition K_bar > L_g / sigma1 for a complete stack."""
    if sigma1 < 0 or L_g < 0:
        raise ValueError("sigma1 and L_g must be non-negative")
    if sigma1 == 0:
        return GainCheck(False, -math.inf, math.inf)
    return _check(K_bar, L_g / sigma1)


def g_term(s, chi, chi_hat, v, omega):
    """f_u(s, chi, u) - f_u(s, chi_hat, u)."""
    return f_u(s, chi, v, omega) - f_u(s, chi_hat, v, omega)


def estimate_lipschitz_g(s, v_box, omega_box, chi_box, chi_hat_box=None,
                         n_random: int = 2000, seed: int = 0) -> float:
    """Empirical Lipschitz constant of g in the estimation error.

    Maximises |(chi + chi_hat) v_Z + (y w_X - x w_Y)| over the image points
    ``s`` (array (n, 2), e.g. a trajectory), the velocity boxes ``v_box`` /
    ``omega_box`` ((lo, hi) per component) and the inverse-depth boxes.
    The expression is multilinear, so the box corners attain the sup; random
    interior samples are added as a cross-check.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    chi_hat_box = chi_box if chi_hat_box is None else chi_hat_box
    csum = np.array([chi_box[0] + chi_hat_box[0], chi_box[1] + chi_hat_box[1]])
    vz = np.asarray(v_box[2], float)
    wx = np.asarray(omega_box[0], float)
    wy = np.asarray(omega_box[1], float)
    lin = s[:, 1, None, None] * wx[None, :, None] - s[:, 0, None, None] * wy[None, None, :]
    best = np.abs(np.add.outer(np.multiply.outer(csum, vz).ravel(), [lin.min(), lin.max()])).max()
    if n_random:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, len(s), n_random)
        c = rng.uniform(*chi_box, n_random) + rng.uniform(*chi_hat_box, n_random)
        rand = np.abs(c * rng.uniform(*vz, n_random) + s[idx, 1] * rng.uniform(*wx, n_random)
                      - s[idx, 0] * rng.uniform(*wy, n_random))
        best = max(best, rand.max())
    return float(best)


def full_bound_core(K_cl: float, M: int, sigma_bar: float, chi_bar: float, d_bar: float) -> float:
    """Constructive factor of the complete-stack ultimate bound (positive constants dropped)."""
    return K_cl * ((M - 1) * sigma_bar * chi_bar + M * d_bar * math.sqrt(sigma_bar))


def reduced_bound_core(K_bar: float, M: int, sigma_bar: float, chi_bar: float) -> float:
    return K_bar * sigma_bar * (M - 1) * chi_bar
