"""Camera velocity profiles.

A profile is called as ``profile(t, s, s_dot, t_seg)`` and returns
``(v, omega, v_dot)``.  ``t_seg`` (the start of the current integration
step) selects the piecewise segment so that a single RK4 step never mixes
two laws.  Profiles are also built from config dicts via ``make_profile``.
"""

from __future__ import annotations

import math

import numpy as np

_TOL = 1e-9
_ZERO3 = np.zeros(3)


class Profile:
    kind = "base"

    def is_feedback(self, t: float) -> bool:
        return False

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}


class ConstantProfile(Profile):
    kind = "constant"

    def __init__(self, v=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0)):
        self.v = np.asarray(v, dtype=float)
        self.omega = np.asarray(omega, dtype=float)

    def __call__(self, t, s=None, s_dot=None, t_seg=None):
        return self.v.copy(), self.omega.copy(), _ZERO3.copy()

    def params(self):
        return {"v": self.v.tolist(), "omega": self.omega.tolist()}


class Sim1Profile(Profile):
    """v = (0.3, 0.2 cos(pi t / 4), -0.3), omega = (0, -pi/30, 0)."""

    kind = "sim1"

    def __call__(self, t, s=None, s_dot=None, t_seg=None):
        c = math.cos(math.pi * t / 4)
        v = np.array([0.3, 0.2 * c, -0.3])
        w = np.array([0.0, -math.pi / 30, 0.0])
        a = np.array([0.0, -0.2 * math.pi / 4 * math.sin(math.pi * t / 4), 0.0])
        return v, w, a


class Sim2Profile(Profile):
    """Sim1 motion with a state-feedback segment that zeroes Omega(s, v).

    Inside [t_start, t_end] (closed): v = (x, y, 1) * c1 / 10 with
    c1 = cos(pi t / 4), omega = 0.
    """

    kind = "sim2"

    def __init__(self, t_start: float = 31.0, t_end: float = 38.0, scale: float = 0.1):
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.scale = float(scale)
        self._base = Sim1Profile()

    def is_feedback(self, t):
        return self.t_start - _TOL <= t <= self.t_end + _TOL

    def __call__(self, t, s=None, s_dot=None, t_seg=None):
        seg = t if t_seg is None else t_seg
        if not self.is_feedback(seg):
            return self._base(t)
        x, y = float(s[0]), float(s[1])
        c = self.scale * math.cos(math.pi * t / 4)
        cd = -self.scale * math.pi / 4 * math.sin(math.pi * t / 4)
        xd, yd = (0.0, 0.0) if s_dot is None else (float(s_dot[0]), float(s_dot[1]))
        v = np.array([x * c, y * c, c])
        a = np.array([xd * c + x * cd, yd * c + y * cd, cd])
        return v, np.zeros(3), a

    def params(self):
        return {"t_start": self.t_start, "t_end": self.t_end, "scale": self.scale}


class TabulatedProfile(Profile):
    """Linear interpolation of sampled (v, omega); v_dot from the table or by differencing."""

    kind = "tabulated"

    def __init__(self, t, v, omega, v_dot=None):
        self.t = np.asarray(t, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        if v_dot is None:
            v_dot = np.gradient(self.v, self.t, axis=0) if len(self.t) > 1 else np.zeros_like(self.v)
        self.v_dot = np.asarray(v_dot, dtype=float)

    def __call__(self, t, s=None, s_dot=None, t_seg=None):
        interp = lambda arr: np.array([np.interp(t, self.t, arr[:, i]) for i in range(3)])
        return interp(self.v), interp(self.omega), interp(self.v_dot)

    def params(self):
        return {"t": self.t.tolist(), "v": self.v.tolist(), "omega": self.omega.tolist(),
                "v_dot": self.v_dot.tolist()}


_KINDS = {
    "constant": ConstantProfile,
    "sim1": Sim1Profile,
    "sim2": Sim2Profile,
    "tabulated": TabulatedProfile,
}


def make_profile(spec: dict) -> Profile:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "zero":
        return ConstantProfile()
    if kind not in _KINDS:
        raise ValueError(f"unknown velocity profile kind {kind!r}")
    return _KINDS[kind](**spec)
