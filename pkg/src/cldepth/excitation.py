"""History stack, auxiliary stack and excitation measures.

The history stack keeps M-1 recorded samples that feed the concurrent
learning sums; the auxiliary stack is a sliding window of the N most recent
samples from which the most informative M-1 are promoted.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StackEntry:
    """One recorded sample.  Derived regressor terms are computed on construction."""

    t: float
    s: tuple[float, float]
    v: tuple[float, float, float]
    omega: tuple[float, float, float]
    s_dot_bar: tuple[float, float] | None = None
    v_dot: tuple[float, float, float] | None = None
    index: int = -1
    # derived
    row: tuple[float, float] = field(init=False)
    fm: tuple[float, float] = field(init=False)
    info: float = field(init=False)
    theta_v: float = field(init=False)
    theta_vdot: float = field(init=False)
    residual: float = field(init=False)

    def __post_init__(self):
        x, y = self.s
        vx, vy, vz = self.v
        wx, wy, wz = self.omega
        r0, r1 = x * vz - vx, y * vz - vy
        fm0 = x * y * wx - (1 + x * x) * wy + y * wz
        fm1 = (1 + y * y) * wx - x * y * wy - x * wz
        theta2 = -(x * x + y * y) / 2
        set_ = object.__setattr__
        set_(self, "row", (r0, r1))
        set_(self, "fm", (fm0, fm1))
        set_(self, "info", r0 * r0 + r1 * r1)
        set_(self, "theta_v", x * vx + y * vy + theta2 * vz)
        if self.v_dot is not None:
            ax, ay, az = self.v_dot
            set_(self, "theta_vdot", x * ax + y * ay + theta2 * az)
        else:
            set_(self, "theta_vdot", 0.0)
        if self.s_dot_bar is not None:
            d0, d1 = self.s_dot_bar
            set_(self, "residual", r0 * (d0 - fm0) + r1 * (d1 - fm1))
        else:
            set_(self, "residual", 0.0)

    @property
    def is_zero(self) -> bool:
        return self.index < 0

    @property
    def theta(self) -> tuple[float, float, float]:
        x, y = self.s
        return (x, y, -(x * x + y * y) / 2)


ZERO_ENTRY = StackEntry(t=-math.inf, s=(0.0, 0.0), v=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0),
                        s_dot_bar=(0.0, 0.0), v_dot=(0.0, 0.0, 0.0), index=-1)


def make_entry(t, s, v, omega, s_dot_bar=None, v_dot=None, index=-1) -> StackEntry:
    """Build an entry from array-likes."""
    tup = lambda a, n: None if a is None else tuple(float(c) for c in np.asarray(a).reshape(n))
    return StackEntry(float(t), tup(s, 2), tup(v, 3), tup(omega, 3), tup(s_dot_bar, 2),
                      tup(v_dot, 3), int(index))


class AuxiliaryStack:
    """Ring of the N most recent entries, zero-initialised."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("auxiliary stack capacity must be >= 1")
        self.capacity = capacity
        self._ring: deque[StackEntry] = deque([ZERO_ENTRY] * capacity, maxlen=capacity)
        self._count = 0

    def push(self, entry: StackEntry) -> None:
        self._ring.append(entry)
        self._count += 1

    @property
    def entries(self) -> list[StackEntry]:
        """Newest first."""
        return list(reversed(self._ring))

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    def top(self, k: int) -> list[StackEntry]:
        """k most informative entries; ties go to the newer entry."""
        ring = self._ring
        # position in the ring is recency: larger position = newer
        best = heapq.nlargest(k, range(len(ring)), key=lambda i: (ring[i].info, i))
        return [ring[i] for i in best]


class HistoryStack:
    """Recorded samples used by the concurrent-learning terms.

    ``capacity`` is M-1; the current sample (slot M) is supplied separately to
    the observers and is not part of ``sigma1``.
    """

    def __init__(self, capacity: int, epsilon: float):
        if capacity < 1:
            raise ValueError("history stack capacity must be >= 1")
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.capacity = capacity
        self.epsilon = float(epsilon)
        self._entries: list[StackEntry] = []
        self.version = 0
        self.n_replacements = 0
        self._sigma_bar = 0.0
        self._refresh()

    def _refresh(self) -> None:
        e = self._entries
        self.sigma1 = math.fsum(x.info for x in e)
        self.sum_residual = math.fsum(x.residual for x in e)
        self.sum_theta_v = math.fsum(x.theta_v for x in e)
        self.sum_drift = math.fsum(x.theta_vdot - (x.row[0] * x.fm[0] + x.row[1] * x.fm[1]) for x in e)
        self._sigma_bar = max([self._sigma_bar] + [x.info for x in e])
        self.version += 1

    @property
    def entries(self) -> list[StackEntry]:
        return list(self._entries)

    @property
    def is_full(self) -> bool:
        return len(self._entries) >= self.capacity

    @property
    def is_complete(self) -> bool:
        """Fully populated with informative points (sigma1 > 0)."""
        return self.is_full and self.sigma1 > 0

    @property
    def sigma_bar(self) -> float:
        return self._sigma_bar

    def observe(self, entry: StackEntry) -> None:
        """Account for a sample seen in the current-time slot."""
        if entry.info > self._sigma_bar:
            self._sigma_bar = entry.info

    def append(self, entry: StackEntry) -> None:
        if self.is_full:
            raise ValueError("history stack is full")
        self._entries.append(entry)
        self._refresh()

    def replace(self, entries: list[StackEntry]) -> None:
        if len(entries) != self.capacity:
            raise ValueError(f"replacement needs {self.capacity} entries, got {len(entries)}")
        self._entries = sorted(entries, key=lambda e: (e.t, e.index))
        self.n_replacements += 1
        self._refresh()


def push_measurement(aux: AuxiliaryStack, hist: HistoryStack, entry: StackEntry) -> bool:
    """One iteration of the stack-update algorithm.  Returns True on replacement."""
    if aux.capacity < hist.capacity:
        raise ValueError(f"auxiliary stack ({aux.capacity}) must hold at least as many "
                         f"entries as the history stack ({hist.capacity})")
    hist.observe(entry)
    if not hist.is_full:
        hist.append(entry)
    aux.push(entry)
    if hist.is_full:
        chosen = aux.top(hist.capacity)
        if math.fsum(e.info for e in chosen) >= hist.epsilon:
            hist.replace(chosen)
            return True
    return False


def sigma1(hist: HistoryStack | list[StackEntry]) -> float:
    """Sum of Omega_j Omega_j^T over the stored entries."""
    if isinstance(hist, HistoryStack):
        return hist.sigma1
    return math.fsum(e.info for e in hist)


def sigma_bar(hist: HistoryStack | list[StackEntry]) -> float:
    """Largest Omega_j Omega_j^T ever held (running max for a live stack)."""
    if isinstance(hist, HistoryStack):
        return hist.sigma_bar
    return max((e.info for e in hist), default=0.0)


def pe_integral(t, info, t0: float, t1: float, tol: float = 1e-9) -> float:
    """Trapezoidal integral of Omega Omega^T over samples with t0 <= t <= t1."""
    t = np.asarray(t, dtype=float)
    info = np.asarray(info, dtype=float)
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    if t0 < t[0] - tol or t1 > t[-1] + tol:
        raise ValueError(f"interval [{t0}, {t1}] outside series [{t[0]}, {t[-1]}]")
    m = (t >= t0 - tol) & (t <= t1 + tol)
    if m.sum() < 2:
        return 0.0
    return float(np.trapezoid(info[m], t[m]))


def trailing_pe_integral(t, info, window: float) -> np.ndarray:
    """PE integral over [t - window, t] for every sample (clipped at the start)."""
    t = np.asarray(t, dtype=float)
    info = np.asarray(info, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (info[1:] + info[:-1]) * np.diff(t))])
    start = np.searchsorted(t, t - window - 1e-9)
    return cum - cum[start]


def weak_excitation_windows(t, info, window: float, threshold: float) -> list[tuple[float, float, float]]:
    """Consecutive non-overlapping windows whose PE integral is below ``threshold``.

    Adjacent weak windows are merged; each item is (t_start, t_end, integral).
    """
    t = np.asarray(t, dtype=float)
    out: list[tuple[float, float, float]] = []
    edges = np.arange(t[0], t[-1] + 1e-9, window)
    for a, b in zip(edges[:-1], edges[1:]):
        val = pe_integral(t, info, a, b)
        if val < threshold:
            if out and abs(out[-1][1] - a) < 1e-9:
                out[-1] = (out[-1][0], b, out[-1][2] + val)
            else:
                out.append((a, b, val))
    return out


def low_excitation_intervals(t, info, level: float, min_duration: float) -> list[tuple[float, float, float]]:
    """Maximal runs of samples with Omega Omega^T <= level lasting at least ``min_duration``.

    Each item is (t_start, t_end, PE integral over the run).
    """
    t = np.asarray(t, dtype=float)
    low = np.asarray(info, dtype=float) <= level
    out = []
    edges = np.flatnonzero(np.diff(np.concatenate([[0], low.astype(np.int8), [0]])))
    for a, b in zip(edges[::2], edges[1::2]):
        t0, t1 = t[a], t[b - 1]
        if t1 - t0 >= min_duration - 1e-9:
            out.append((float(t0), float(t1), pe_integral(t, info, t0, t1) if t1 > t0 else 0.0))
    return out
