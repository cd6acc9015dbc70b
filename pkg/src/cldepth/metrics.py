"""Depth-error metrics and delimited-file persistence.

All error metrics work in depth (metres); inverse-depth channels are
converted with Z = 1/chi before they get here.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pds import Series

SERIES_COLUMNS = ("t", "x", "y", "chi", "vx", "vy", "vz", "wx", "wy", "wz", "ax", "ay", "az")
REQUIRED_COLUMNS = tuple(c for c in SERIES_COLUMNS if c != "chi")


class LogFormatError(ValueError):
    """Malformed or incomplete time-series file."""


@dataclass(frozen=True)
class MetricsReport:
    rmse_m: float
    mape_pct: float
    conv_time_s: float | None
    window: tuple[float, float]

    def __post_init__(self):
        if self.rmse_m < 0 or self.mape_pct < 0:
            raise ValueError("metrics must be non-negative")


def _window_mask(t, window):
    if t is None or window is None:
        return None
    t = np.asarray(t, dtype=float)
    return (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)


def _select(z_true, z_est, t, window):
    z_true = np.asarray(z_true, dtype=float)
    z_est = np.asarray(z_est, dtype=float)
    if z_true.shape != z_est.shape:
        raise ValueError("truth and estimate are not aligned")
    m = _window_mask(t, window)
    if m is not None:
        z_true, z_est = z_true[m], z_est[m]
    if z_true.size == 0:
        raise ValueError("empty metrics window")
    return z_true, z_est


def rmse(z_true, z_est, t=None, window=None) -> float:
    """Root mean square depth error over the samples with t in ``window``."""
    a, b = _select(z_true, z_est, t, window)
    return float(np.sqrt(np.mean((b - a) ** 2)))


def mape(z_true, z_est, t=None, window=None) -> float:
    """Mean absolute percentage depth error, in percent."""
    a, b = _select(z_true, z_est, t, window)
    return float(100.0 * np.mean(np.abs(b - a) / np.abs(a)))


def convergence_time(t, z_true, z_est, threshold_pct: float = 5.0) -> float | None:
    """First time after which the relative depth error stays below the threshold.

    None when the last sample is still outside the threshold.
    """
    if threshold_pct <= 0:
        raise ValueError("threshold must be positive")
    t = np.asarray(t, dtype=float)
    rel = 100.0 * np.abs(np.asarray(z_est, float) - np.asarray(z_true, float)) / np.abs(z_true)
    bad = np.flatnonzero(~(rel < threshold_pct))
    if bad.size == 0:
        return float(t[0])
    if bad[-1] + 1 >= len(t):
        return None
    return float(t[bad[-1] + 1])


def depth(chi) -> np.ndarray:
    return 1.0 / np.asarray(chi, dtype=float)


# --------------------------------------------------------------------------
# Delimited text
# --------------------------------------------------------------------------

def fmt(x) -> str:
    """Shortest round-trip decimal for floats; blanks for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_columns(path, columns: dict[str, np.ndarray]) -> Path:
    """Write equal-length columns with a header line."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = {len(a) for a in arrays}
    if len(n) > 1:
        raise ValueError(f"columns have different lengths: {sorted(n)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*arrays):
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)) and math.isnan(v):
        return "nan"
    return fmt(v.item() if hasattr(v, "item") else v)


def read_columns(path) -> dict[str, np.ndarray]:
    """Read a headered numeric CSV.  Empty cells become NaN."""
    path = Path(path)
    text = path.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise LogFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise LogFormatError(
                f"{path}: line {lineno} has {len(row)} fields, expected {len(header)} (truncated?)")
        try:
            data.append([float(c) if c.strip() else math.nan for c in row])
        except ValueError as exc:
            raise LogFormatError(f"{path}: line {lineno}: {exc}") from None
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {h: arr[:, i] for i, h in enumerate(header)}


def write_series_csv(path, series: Series, extra: dict[str, np.ndarray] | None = None) -> Path:
    cols = {"t": series.t, "x": series.s[:, 0], "y": series.s[:, 1]}
    cols["chi"] = series.chi if series.chi is not None else np.full(len(series), np.nan)
    for i, c in enumerate("xyz"):
        cols["v" + c] = series.v[:, i]
    for i, c in enumerate("xyz"):
        cols["w" + c] = series.omega[:, i]
    for i, c in enumerate("xyz"):
        cols["a" + c] = series.v_dot[:, i]
    if extra:
        cols.update(extra)
    return write_columns(path, cols)


def series_from_columns(cols: dict[str, np.ndarray], source="log") -> Series:
    missing = [c for c in REQUIRED_COLUMNS if c not in cols]
    if missing:
        raise LogFormatError(f"{source}: missing required columns {missing}")
    if len(cols["t"]) < 2:
        raise LogFormatError(f"{source}: need at least two samples")
    chi = cols.get("chi")
    if chi is not None and np.all(np.isnan(chi)):
        chi = None
    stack3 = lambda p: np.column_stack([cols[p + c] for c in "xyz"])
    return Series(t=cols["t"].copy(), s=np.column_stack([cols["x"], cols["y"]]),
                  v=stack3("v"), omega=stack3("w"), v_dot=stack3("a"),
                  chi=None if chi is None else chi.copy())


def read_series_csv(path) -> Series:
    return series_from_columns(read_columns(path), source=str(path))


def write_metrics(path, values: dict) -> Path:
    """Flat ``key=value`` text, one per line."""
    lines = []
    for k, v in values.items():
        if v is None:
            v = "none"
        elif isinstance(v, float):
            v = fmt(v)
        lines.append(f"{k}={v}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_metrics(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        k, _, v = line.partition("=")
        try:
            out[k] = None if v == "none" else float(v)
        except ValueError:
            out[k] = v
    return out


# --------------------------------------------------------------------------
# Plot-ready panel data
# --------------------------------------------------------------------------

FIGURE_PANELS = {
    "1a": "depth", "1b": "state", "1c": "error", "1d": "info",
    "2a": "depth", "2b": "error", "2c": "info", "2d": "depth",
    "3a": "depth", "3b": "state", "3c": "error", "3d": "info_sigma",
}


def figure_columns(result, figure_id: str) -> dict[str, np.ndarray]:
    """Columns behind one figure panel.

    ``result`` is a run result or a mapping label -> run result for the
    comparison panels; labelled runs must share the same time base.
    """
    if figure_id not in FIGURE_PANELS:
        raise ValueError(f"unknown figure id {figure_id!r}; known: {sorted(FIGURE_PANELS)}")
    kind = FIGURE_PANELS[figure_id]
    runs = result if isinstance(result, dict) else {"": result}
    first = next(iter(runs.values()))
    t = first.t
    for label, r in runs.items():
        if len(r.t) != len(t) or not np.array_equal(r.t, t):
            raise ValueError(f"run {label!r} has a different time base")
    sfx = lambda label: f"_{label}" if label else ""
    cols = {"t": t}

    def need_truth(r):
        if r.chi_true is None:
            raise ValueError(f"figure {figure_id} needs ground-truth depth")
        return r.chi_true

    if kind == "depth":
        cols["Z"] = depth(need_truth(first))
        for label, r in runs.items():
            cols["Z_hat" + sfx(label)] = depth(r.chi_hat)
    elif kind == "error":
        for label, r in runs.items():
            cols["Z_err" + sfx(label)] = depth(r.chi_hat) - depth(need_truth(r))
    elif kind == "state":
        src = first.truth if first.truth is not None else first.measured
        cols["x"], cols["y"] = src.s[:, 0], src.s[:, 1]
        for label, r in runs.items():
            cols["x_hat" + sfx(label)] = r.s_hat[:, 0]
            cols["y_hat" + sfx(label)] = r.s_hat[:, 1]
    elif kind == "info":
        cols["omega_info"] = first.measured.omega_info()
    else:
        cols["omega_info"] = first.measured.omega_info()
        cols["sigma1"] = first.sigma1
    return cols


def export_figure_data(result, figure_id: str, path) -> Path:
    return write_columns(path, figure_columns(result, figure_id))
