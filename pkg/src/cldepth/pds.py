"""Perspective dynamical system of a single static feature point.

State is the normalized image-plane position s = (x, y) and the inverse
depth chi = 1/Z.  Camera motion enters through the body-frame linear
velocity v, angular velocity omega and linear acceleration v_dot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

DEFAULT_DT = 1.0 / 30.0


class InvalidTrajectoryError(ValueError):
    """Raised when a simulated state leaves the admissible set."""


@dataclass(frozen=True)
class StateBounds:
    x: tuple[float, float] = (-4.0, 4.0)
    y: tuple[float, float] = (-4.0, 4.0)
    chi_lo: float = 0.01
    chi_hi: float = 100.0  # 1/lambda for lambda = 0.01 m
    v_max: float = 10.0
    omega_max: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.chi_lo < self.chi_hi:
            raise ValueError(f"need 0 < chi_lo < chi_hi, got {self.chi_lo}, {self.chi_hi}")

    @classmethod
    def from_focal_length(cls, focal_length: float, **kw) -> "StateBounds":
        return cls(chi_hi=1.0 / focal_length, **kw)


@dataclass(frozen=True)
class FeatureState:
    x: float
    y: float
    chi: float

    @property
    def s(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def depth(self) -> float:
        return 1.0 / self.chi

    def check(self, bounds: StateBounds) -> None:
        if not (bounds.x[0] <= self.x <= bounds.x[1] and bounds.y[0] <= self.y <= bounds.y[1]):
            raise InvalidTrajectoryError(f"image point ({self.x:.4g}, {self.y:.4g}) outside bounds")
        if not (bounds.chi_lo < self.chi <= bounds.chi_hi):
            raise InvalidTrajectoryError(
                f"inverse depth {self.chi:.4g} outside ({bounds.chi_lo}, {bounds.chi_hi}]")


@dataclass(frozen=True)
class EuclideanPoint:
    X: float
    Y: float
    Z: float

    def __post_init__(self):
        if not self.Z > 0:
            raise ValueError(f"point must lie in front of the camera, got Z={self.Z}")

    def to_feature(self) -> FeatureState:
        return FeatureState(self.X / self.Z, self.Y / self.Z, 1.0 / self.Z)


@dataclass(frozen=True)
class CameraInput:
    v: np.ndarray
    omega: np.ndarray
    v_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def check(self, bounds: StateBounds) -> None:
        parts = np.concatenate([self.v, self.omega, self.v_dot])
        if not np.all(np.isfinite(parts)):
            raise InvalidTrajectoryError(f"non-finite camera input at t={self.t}")
        if np.linalg.norm(self.v) > bounds.v_max or np.linalg.norm(self.omega) > bounds.omega_max:
            raise InvalidTrajectoryError(f"camera velocity exceeds bounds at t={self.t}")


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement corruption.

    ``state_snr_db=None`` disables image-plane noise.  Velocity noise is
    zero-mean Gaussian with variance ``vel_noise_var`` on all six channels.
    """

    state_snr_db: float | None = None
    vel_noise_var: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.vel_noise_var < 0:
            raise ValueError("vel_noise_var must be >= 0")
        if self.state_snr_db is not None and not math.isfinite(self.state_snr_db):
            raise ValueError("state_snr_db must be finite or None")

    @property
    def is_off(self) -> bool:
        return self.state_snr_db is None and self.vel_noise_var == 0


# --------------------------------------------------------------------------
# Dynamics.  All three accept broadcastable arrays: s[..., 2], omega[..., 3].
# --------------------------------------------------------------------------

def f_m(s, omega) -> np.ndarray:
    """Rotational part of the image motion, independent of depth."""
    s = np.asarray(s, dtype=float)
    w = np.asarray(omega, dtype=float)
    x, y = s[..., 0], s[..., 1]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    return np.stack([x * y * wx - (1 + x * x) * wy + y * wz,
                     (1 + y * y) * wx - x * y * wy - x * wz], axis=-1)


def omega_row(s, v) -> np.ndarray:
    """Translational regressor: the image motion is omega_row * chi."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([s[..., 0] * v[..., 2] - v[..., 0],
                     s[..., 1] * v[..., 2] - v[..., 1]], axis=-1)


def f_u(s, chi, v, omega):
    """Inverse-depth dynamics."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(omega, dtype=float)
    return v[..., 2] * chi * chi + (s[..., 1] * w[..., 0] - s[..., 0] * w[..., 1]) * chi


def pds_rhs(state, v, omega) -> np.ndarray:
    """Time derivative of (x, y, chi)."""
    state = np.asarray(state, dtype=float)
    s, chi = state[:2], state[2]
    s_dot = f_m(s, omega) + omega_row(s, v) * chi
    return np.array([s_dot[0], s_dot[1], f_u(s, chi, v, omega)])


# --------------------------------------------------------------------------
# Time series
# --------------------------------------------------------------------------

@dataclass
class Series:
    """Uniformly sampled measurement/truth record.

    ``chi`` is None for measurement-only data.
    """

    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    v_dot: np.ndarray
    chi: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        if len(self.t) < 2:
            raise ValueError("series needs at least two samples to define dt")
        return float(self.t[1] - self.t[0])

    def copy(self) -> "Series":
        return Series(self.t.copy(), self.s.copy(), self.v.copy(), self.omega.copy(),
                      self.v_dot.copy(), None if self.chi is None else self.chi.copy())

    def input_at(self, k: int) -> CameraInput:
        return CameraInput(self.v[k], self.omega[k], self.v_dot[k], float(self.t[k]))

    def omega_info(self) -> np.ndarray:
        """Omega(s, v) Omega(s, v)^T at every sample."""
        row = omega_row(self.s, self.v)
        return np.einsum("ij,ij->i", row, row)

    def true_s_dot(self) -> np.ndarray:
        if self.chi is None:
            raise ValueError("exact derivative needs the inverse-depth channel")
        return f_m(self.s, self.omega) + omega_row(self.s, self.v) * self.chi[:, None]


# --------------------------------------------------------------------------
# Camera motion profiles
# --------------------------------------------------------------------------

class VelocityProfile(Protocol):
    def is_feedback(self, t: float) -> bool: ...

    def __call__(self, t: float, s: np.ndarray, s_dot: np.ndarray,
                 t_seg: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...


def _as_profile(fn: Callable) -> VelocityProfile:
    if hasattr(fn, "is_feedback"):
        return fn

    class _Wrapped:
        def is_feedback(self, t):
            return False

        def __call__(self, t, s, s_dot, t_seg=None):
            out = fn(t)
            if isinstance(out, CameraInput):
                return np.asarray(out.v, float), np.asarray(out.omega, float), np.asarray(out.v_dot, float)
            v, w, *rest = out
            a = rest[0] if rest else np.zeros(3)
            return np.asarray(v, float), np.asarray(w, float), np.asarray(a, float)

    return _Wrapped()


def simulate_truth(m0: EuclideanPoint | FeatureState, profile, dt: float = DEFAULT_DT,
                   horizon: float = 50.0, bounds: StateBounds | None = None,
                   feedback_noise: np.ndarray | None = None) -> Series:
    """Integrate the PDS with fixed-step RK4 and return samples t = 0, dt, ..., horizon.

    ``profile`` is either a plain ``t -> (v, omega[, v_dot])`` callable or a
    VelocityProfile.  For state-feedback segments the input is computed once
    per step from the sampled state (plus ``feedback_noise[k]`` when given,
    i.e. from the measurement) and held over the step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < dt:
        raise ValueError("horizon must be at least one step")
    bounds = bounds or StateBounds()
    profile = _as_profile(profile)
    feat = m0.to_feature() if isinstance(m0, EuclideanPoint) else m0
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt

    S = np.empty((n + 1, 3))
    V = np.empty((n + 1, 3))
    W = np.empty((n + 1, 3))
    A = np.empty((n + 1, 3))
    st = np.array([feat.x, feat.y, feat.chi], dtype=float)

    def deriv(state, tt, t_seg):
        s = state[:2]
        # v_dot is unused by the dynamics; pass the drift-free image velocity guess
        v, w, _ = profile(tt, s, np.zeros(2), t_seg)
        return pds_rhs(state, v, w)

    for k in range(n + 1):
        tk = t[k]
        FeatureState(*st).check(bounds)
        if profile.is_feedback(tk):
            s_fb = st[:2] if feedback_noise is None else st[:2] + feedback_noise[k]
            v0, w0, _ = profile(tk, s_fb, np.zeros(2), tk)
            s_dot = pds_rhs(st, v0, w0)[:2]
            v, w, a = profile(tk, s_fb, s_dot, tk)
        else:
            v, w, _ = profile(tk, st[:2], np.zeros(2), tk)
            s_dot = pds_rhs(st, v, w)[:2]
            v, w, a = profile(tk, st[:2], s_dot, tk)
        inp = CameraInput(v, w, a, tk)
        inp.check(bounds)
        S[k], V[k], W[k], A[k] = st, v, w, a
        if k == n:
            break
        if profile.is_feedback(tk):
            k1 = pds_rhs(st, v, w)
            k2 = pds_rhs(st + 0.5 * dt * k1, v, w)
            k3 = pds_rhs(st + 0.5 * dt * k2, v, w)
            k4 = pds_rhs(st + dt * k3, v, w)
        else:
            th = tk + 0.5 * dt
            k1 = pds_rhs(st, v, w)
            k2 = deriv(st + 0.5 * dt * k1, th, tk)
            k3 = deriv(st + 0.5 * dt * k2, th, tk)
            k4 = deriv(st + dt * k3, tk + dt, tk)
        st = st + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(st)):
            raise InvalidTrajectoryError(f"integration blew up at t={t[k + 1]:.4g}")

    return Series(t=t, s=S[:, :2].copy(), v=V, omega=W, v_dot=A, chi=S[:, 2].copy())


# --------------------------------------------------------------------------
# Noise
# --------------------------------------------------------------------------

def state_noise_std(s_clean: np.ndarray, snr_db: float) -> np.ndarray:
    """Per-channel noise std for a power SNR measured over the whole clean series."""
    power = np.mean(np.asarray(s_clean, float) ** 2, axis=0)
    return np.sqrt(power * 10.0 ** (-snr_db / 10.0))


def draw_state_noise(s_clean: np.ndarray, snr_db: float | None,
                     rng: np.random.Generator) -> np.ndarray:
    if snr_db is None:
        return np.zeros_like(s_clean)
    return rng.standard_normal(s_clean.shape) * state_noise_std(s_clean, snr_db)


def add_noise(series: Series, spec: NoiseSpec, state_noise: np.ndarray | None = None,
              rng: np.random.Generator | None = None) -> Series:
    """Return a noisy copy of ``series``; the ground-truth chi channel is kept.

    Draw order is fixed (image-plane noise, then linear then angular velocity
    noise) so a given seed always produces the same realization.
    """
    out = series.copy()
    if spec.is_off and state_noise is None:
        return out
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if state_noise is None:
        state_noise = draw_state_noise(series.s, spec.state_snr_db, rng)
    out.s = series.s + state_noise
    if spec.vel_noise_var > 0:
        sd = math.sqrt(spec.vel_noise_var)
        out.v = series.v + sd * rng.standard_normal(series.v.shape)
        out.omega = series.omega + sd * rng.standard_normal(series.omega.shape)
    return out


# --------------------------------------------------------------------------
# Numerical differentiation
# --------------------------------------------------------------------------

_MIN_SAMPLES = {"central": 3, "backward": 2}


def differentiate_state(s, dt: float, method: str = "central") -> np.ndarray:
    """Numerical image-plane velocity.

    ``central``: second-order central differences inside, second-order
    one-sided stencils at the ends (offline use).
    ``backward``: first-order backward difference, causal; the first sample
    repeats the first available difference.
    """
    s = np.asarray(s, dtype=float)
    if method not in _MIN_SAMPLES:
        raise ValueError(f"unknown differentiation method {method!r}")
    if len(s) < _MIN_SAMPLES[method]:
        raise ValueError(f"{method} differences need at least {_MIN_SAMPLES[method]} samples, got {len(s)}")
    if method == "central":
        return np.gradient(s, dt, axis=0, edge_order=2)
    d = np.empty_like(s)
    d[1:] = (s[1:] - s[:-1]) / dt
    d[0] = d[1]
    return d


# --------------------------------------------------------------------------
# Projection
# --------------------------------------------------------------------------

def project_chi(chi_hat: float, chi_lo: float = 0.01, chi_hi: float = 100.0,
                mode: str = "hard", soft_fraction: float = 0.05) -> float:
    """Keep an inverse-depth estimate inside [chi_lo, chi_hi].

    ``hard`` clamps.  ``soft`` is the identity on the inner band
    [chi_lo*(1+f), chi_hi*(1-f)] and saturates exponentially (C1) outside it.
    """
    if mode == "hard":
        return min(max(chi_hat, chi_lo), chi_hi)
    if mode != "soft":
        raise ValueError(f"unknown projection mode {mode!r}")
    if not math.isfinite(chi_hat):
        return chi_hi if chi_hat > 0 else chi_lo
    w_hi = soft_fraction * chi_hi
    w_lo = soft_fraction * chi_lo
    knee_hi = chi_hi - w_hi
    knee_lo = chi_lo + w_lo
    if chi_hat > knee_hi:
        return chi_hi - w_hi * math.exp(-(chi_hat - knee_hi) / w_hi)
    if chi_hat < knee_lo:
        return chi_lo + w_lo * math.exp((chi_hat - knee_lo) / w_lo)
    return chi_hat
