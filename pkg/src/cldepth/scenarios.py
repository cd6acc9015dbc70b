"""Scenario configuration, the end-to-end run pipeline, Monte Carlo batches and log replay."""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import metrics as mx
from .excitation import AuxiliaryStack, HistoryStack, make_entry, push_measurement, trailing_pe_integral
from .observers import (
    FullOrderGains,
    FullOrderObserver,
    Projector,
    ReducedOrderObserver,
    check_gain_condition_full,
    check_gain_condition_reduced,
    estimate_lipschitz_g,
    ls_series,
)
from .pds import (
    DEFAULT_DT,
    EuclideanPoint,
    NoiseSpec,
    Series,
    StateBounds,
    add_noise,
    differentiate_state,
    draw_state_noise,
    simulate_truth,
)
from .profiles import make_profile

OBSERVERS = ("full", "reduced_integral", "reduced_differential", "ls_baseline")


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    state_snr_db: float | None = None
    vel_noise_var: float = 0.0
    seed: int = 0

    def to_spec(self) -> NoiseSpec:
        return NoiseSpec(self.state_snr_db, self.vel_noise_var, self.seed)


@dataclass(frozen=True)
class GainsConfig:
    H: tuple[float, float] = (10.0, 10.0)
    Gamma: float = 5.0
    K_cl: float = 0.15
    K_bar: float = 0.75

    def full(self) -> FullOrderGains:
        return FullOrderGains(self.H, self.Gamma, self.K_cl)


@dataclass(frozen=True)
class StackConfig:
    history: int = 3      # M - 1
    auxiliary: int = 5    # N
    epsilon: float = 0.1


@dataclass(frozen=True)
class InitConfig:
    s_hat0: tuple[float, float] = (0.0, 0.0)
    chi_hat0: float = 1.0


@dataclass(frozen=True)
class IntrinsicsConfig:
    fx: float = 407.1
    fy: float = 407.1
    cx: float = 323.4
    cy: float = 205.6
    pixel_units: bool = False

    def normalize(self, px, py):
        return (np.asarray(px, float) - self.cx) / self.fx, (np.asarray(py, float) - self.cy) / self.fy


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    m0: tuple[float, float, float] = (0.0, 0.0, 1.0)
    velocity_profile: dict = field(default_factory=lambda: {"kind": "zero"})
    noise: NoiseConfig = NoiseConfig()
    gains: GainsConfig = GainsConfig()
    stacks: StackConfig = StackConfig()
    horizon: float = 50.0
    dt: float = DEFAULT_DT
    observer: str = "full"
    init: InitConfig = InitConfig()
    derivative: str = "central"
    projection: str = "hard"
    chi_lo: float = 0.01
    chi_hi: float = 100.0
    steady_window: float = 20.0
    conv_threshold_pct: float = 5.0
    pe_window: float = 1.0
    intrinsics: IntrinsicsConfig = IntrinsicsConfig()

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ConfigError(f"horizon must be >= dt, got {self.horizon}")
        if self.stacks.history < 1 or self.stacks.auxiliary < 1:
            raise ConfigError("stack sizes must be >= 1")
        if self.stacks.auxiliary < self.stacks.history:
            raise ConfigError("auxiliary stack must be at least as large as the history stack")
        if not self.stacks.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        g = self.gains
        if min(g.H) <= 0 or g.Gamma <= 0 or g.K_cl <= 0 or g.K_bar <= 0:
            raise ConfigError("all gains must be positive")
        if self.observer not in OBSERVERS:
            raise ConfigError(f"unknown observer {self.observer!r}; choose from {OBSERVERS}")
        if self.derivative not in ("central", "backward"):
            raise ConfigError(f"unknown derivative method {self.derivative!r}")
        if self.projection not in ("hard", "soft"):
            raise ConfigError(f"unknown projection mode {self.projection!r}")
        if not 0 < self.chi_lo < self.chi_hi:
            raise ConfigError("need 0 < chi_lo < chi_hi")
        if self.m0[2] <= 0:
            raise ConfigError("initial point must have positive depth")
        if self.pe_window <= 0 or self.steady_window <= 0 or self.conv_threshold_pct <= 0:
            raise ConfigError("windows and thresholds must be positive")

    @property
    def projector(self) -> Projector:
        return Projector(self.chi_lo, self.chi_hi, self.projection)

    def profile(self):
        try:
            return make_profile(self.velocity_profile)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"velocity_profile: {exc}") from None

    # -- serialisation --------------------------------------------------
    def to_dict(self) -> dict:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _build(cls, data, "")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ScenarioConfig":
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config parse error: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(data)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_yaml())
        return path

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_yaml(text)

    def with_overrides(self, overrides) -> "ScenarioConfig":
        """Apply ``key.sub=value`` strings (or (key, value) pairs)."""
        data = self.to_dict()
        for item in overrides:
            key, value = _split_override(item) if isinstance(item, str) else item
            _set_path(data, key, value)
        return ScenarioConfig.from_dict(data)


_SECTIONS = {"noise": NoiseConfig, "gains": GainsConfig, "stacks": StackConfig,
             "init": InitConfig, "intrinsics": IntrinsicsConfig}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _coerce(name, typ, value):
    typ = str(typ)
    try:
        if typ.startswith("tuple"):
            out = tuple(float(v) for v in value)
            if len(out) != typ.count("float"):
                raise ValueError(f"expected {typ.count('float')} numbers")
            return out
        if typ == "float | None":
            return None if value is None else float(value)
        if typ == "float":
            return float(value)
        if typ == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("not an integer")
            return int(value)
        if typ == "bool":
            if not isinstance(value, bool):
                raise ValueError("not a boolean")
            return value
        if typ == "str":
            return str(value)
        if typ == "dict":
            if not isinstance(value, dict):
                raise ValueError("not a mapping")
            return _plain(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r} ({exc})") from None
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"section {prefix.rstrip('.') or '<root>'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {prefix + key!r}")
    kw = {}
    for name, value in data.items():
        if name in _SECTIONS and cls is ScenarioConfig:
            kw[name] = _build(_SECTIONS[name], value, prefix + name + ".")
        else:
            kw[name] = _coerce(prefix + name, known[name].type, value)
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None


_NONE_WORDS = {"off", "none", "null", "~"}


def parse_value(text: str):
    if text.strip().lower() in _NONE_WORDS:
        return None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _split_override(item: str):
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not of the form key=value")
    return key.strip(), parse_value(value)


def _set_path(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for i, p in enumerate(parts[:-1]):
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    leaf = parts[-1]
    # profile parameters are open-ended; everything else must already exist
    if not isinstance(node, dict) or (leaf not in node and parts[0] != "velocity_profile"):
        raise ConfigError(f"unknown config key {key!r}")
    node[leaf] = value


# --------------------------------------------------------------------------
# Built-in scenarios
# --------------------------------------------------------------------------

def scenario_sim1() -> ScenarioConfig:
    return ScenarioConfig(
        name="sim1",
        m0=(2.5, 0.5, 3.0),
        velocity_profile={"kind": "sim1"},
        noise=NoiseConfig(state_snr_db=40.0, vel_noise_var=0.01, seed=0),
        gains=GainsConfig(H=(10.0, 10.0), Gamma=5.0, K_cl=0.15, K_bar=0.75),
        stacks=StackConfig(history=3, auxiliary=5, epsilon=0.1),
        horizon=50.0,
        dt=1.0 / 30.0,
        observer="full",
        init=InitConfig(s_hat0=(10.0, 5.0), chi_hat0=3.0),
    )


def scenario_sim2() -> ScenarioConfig:
    return ScenarioConfig(
        name="sim2",
        m0=(1.0, 1.0, 1.0),
        velocity_profile={"kind": "sim2", "t_start": 31.0, "t_end": 38.0, "scale": 0.1},
        noise=NoiseConfig(state_snr_db=20.0, vel_noise_var=0.01, seed=0),
        gains=GainsConfig(H=(10.0, 10.0), Gamma=5.0, K_cl=0.15, K_bar=2e-3),
        stacks=StackConfig(history=120, auxiliary=150, epsilon=20.0),
        horizon=50.0,
        dt=1.0 / 30.0,
        observer="reduced_integral",
        init=InitConfig(s_hat0=(1.0, 1.0), chi_hat0=0.08),
        pe_window=7.0,
    )


def scenario_replay() -> ScenarioConfig:
    return ScenarioConfig(
        name="replay",
        m0=(0.0, 0.0, 1.0),
        velocity_profile={"kind": "zero"},
        noise=NoiseConfig(),
        gains=GainsConfig(),
        stacks=StackConfig(history=30, auxiliary=60, epsilon=0.03),
        observer="full",
        init=InitConfig(s_hat0=(1.0, 1.0), chi_hat0=2.5),
        intrinsics=IntrinsicsConfig(pixel_units=True),
    )


BUILTIN = {"sim1": scenario_sim1, "sim2": scenario_sim2, "replay": scenario_replay}


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------

@dataclass
class RunResult:
    cfg: ScenarioConfig
    measured: Series
    s_dot_bar: np.ndarray
    chi_hat: np.ndarray
    s_hat: np.ndarray
    sigma1: np.ndarray
    sigma_bar: np.ndarray
    update_flag: np.ndarray
    gain_pass: np.ndarray
    gain_required: np.ndarray
    pe_window_integral: np.ndarray
    chi_bar: np.ndarray
    L_g: float
    truth: Series | None = None
    d_bar: float | None = None
    jumps: list = field(default_factory=list)
    report: mx.MetricsReport | None = None
    diverged: bool = False

    @property
    def t(self) -> np.ndarray:
        return self.measured.t

    @property
    def chi_true(self) -> np.ndarray | None:
        if self.truth is not None:
            return self.truth.chi
        return self.measured.chi

    @property
    def z(self) -> np.ndarray:
        """Inverse-depth estimation error chi - chi_hat (NaN without truth)."""
        c = self.chi_true
        return np.full(len(self.t), np.nan) if c is None else c - self.chi_hat

    def observer_columns(self) -> dict:
        return {"x_hat": self.s_hat[:, 0], "y_hat": self.s_hat[:, 1], "chi_hat": self.chi_hat,
                "z": self.z, "sigma1": self.sigma1, "gain_check": self.gain_pass.astype(int),
                "stack_updated": self.update_flag.astype(int)}

    def diagnostics_columns(self) -> dict:
        return {"t": self.t, "sigma1": self.sigma1, "sigma_bar": self.sigma_bar,
                "update_flag": self.update_flag.astype(int),
                "pe_window_integral": self.pe_window_integral}

    def metrics_dict(self) -> dict:
        r = self.report
        return {"rmse_m": None if r is None else r.rmse_m,
                "mape_pct": None if r is None else r.mape_pct,
                "conv_time_s": None if r is None else r.conv_time_s,
                "n_diverged": int(self.diverged)}

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.measured.t, self.measured.s, self.measured.v, self.measured.omega,
                    self.chi_hat, self.s_hat, self.sigma1, self.sigma_bar, self.update_flag):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def simulate_measurements(cfg: ScenarioConfig) -> tuple[Series, Series]:
    """Ground truth and its corrupted measurement for ``cfg``.

    With state feedback in the profile, the controller sees the noisy
    image point, so the truth is re-simulated with the drawn state noise.
    """
    profile = cfg.profile()
    m0 = EuclideanPoint(*cfg.m0)
    bounds = StateBounds(chi_lo=cfg.chi_lo, chi_hi=cfg.chi_hi)
    truth = simulate_truth(m0, profile, cfg.dt, cfg.horizon, bounds)
    spec = cfg.noise.to_spec()
    rng = np.random.default_rng(spec.seed)
    state_noise = draw_state_noise(truth.s, spec.state_snr_db, rng)
    has_feedback = any(profile.is_feedback(t) for t in truth.t)
    if has_feedback and spec.state_snr_db is not None:
        truth = simulate_truth(m0, profile, cfg.dt, cfg.horizon, bounds, feedback_noise=state_noise)
    measured = add_noise(truth, spec, state_noise=state_noise, rng=rng)
    return truth, measured


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Simulate truth, corrupt it, then run the configured observer."""
    try:
        truth, measured = simulate_measurements(cfg)
    except ValueError as exc:
        raise type(exc)(f"[{cfg.name}] truth simulation failed: {exc}") from exc
    return run_on_measurements(cfg, measured, truth)


def run_on_measurements(cfg: ScenarioConfig, measured: Series, truth: Series | None = None) -> RunResult:
    """Run the configured observer and stacks over a measured series."""
    n = len(measured)
    dt = measured.dt
    sdb = differentiate_state(measured.s, dt, cfg.derivative)
    chi_true = truth.chi if truth is not None else measured.chi
    proj = cfg.projector

    hist = HistoryStack(cfg.stacks.history, cfg.stacks.epsilon)
    aux = AuxiliaryStack(cfg.stacks.auxiliary)
    kind = cfg.observer
    if kind == "full":
        obs = FullOrderObserver(cfg.gains.full(), cfg.init.s_hat0, cfg.init.chi_hat0, proj)
    elif kind in ("reduced_integral", "reduced_differential"):
        obs = ReducedOrderObserver(cfg.gains.K_bar, cfg.init.chi_hat0,
                                   "integral" if kind == "reduced_integral" else "differential", proj)
    else:
        obs = None

    chi_hat = np.empty(n)
    s_hat = np.full((n, 2), np.nan)
    sig1 = np.empty(n)
    sigb = np.empty(n)
    upd = np.zeros(n, dtype=bool)
    chi_bar = np.full(n, np.nan)
    stored_range = None
    seen_version = -1

    try:
        for k in range(n):
            t = float(measured.t[k])
            u = measured.input_at(k)
            s = measured.s[k]
            entry = make_entry(t, s, u.v, u.omega, sdb[k], u.v_dot, k)
            upd[k] = push_measurement(aux, hist, entry)
            sig1[k] = hist.sigma1
            sigb[k] = hist.sigma_bar
            if chi_true is not None:
                if hist.version != seen_version:
                    idx = [e.index for e in hist._entries]
                    stored_range = (chi_true[idx].min(), chi_true[idx].max())
                    seen_version = hist.version
                chi_bar[k] = max(abs(stored_range[0] - chi_true[k]), abs(stored_range[1] - chi_true[k]))
            if kind == "full":
                chi_hat[k] = obs.chi_hat
                s_hat[k] = obs.s_hat
                if k < n - 1:
                    obs.step(s, u, hist, entry, dt)
            elif obs is not None:
                obs.sync(hist, entry, t)
                chi_hat[k] = obs.chi_hat
                if k < n - 1:
                    obs.step(s, u, hist, entry, dt)
    except (ValueError, ArithmeticError) as exc:
        raise type(exc)(f"[{cfg.name}] observer fault at sample {k}: {exc}") from exc

    if obs is None:
        chi_hat = _ls_trace(measured, sdb, cfg.init.chi_hat0, proj)
    diverged = not np.all(np.isfinite(chi_hat))

    info = measured.omega_info()
    pe = trailing_pe_integral(measured.t, info, cfg.pe_window)

    if chi_true is not None:
        chi_box = (float(chi_true.min()), float(chi_true.max()))
    else:
        finite = chi_hat[np.isfinite(chi_hat)]
        chi_box = (float(finite.min()), float(finite.max())) if finite.size else (cfg.chi_lo, cfg.chi_lo)
    box = lambda a: [(float(a[:, i].min()), float(a[:, i].max())) for i in range(3)]
    L_g = estimate_lipschitz_g(measured.s, box(measured.v), box(measured.omega), chi_box, n_random=200)
    if kind == "full":
        checks = [check_gain_condition_full(cfg.gains.K_cl, cfg.gains.Gamma, x, L_g) for x in sig1]
    else:
        checks = [check_gain_condition_reduced(cfg.gains.K_bar, x, L_g) for x in sig1]
    gain_pass = np.array([c.passed for c in checks], dtype=bool)
    gain_req = np.array([c.required for c in checks])

    d_bar = None
    if truth is not None:
        d_bar = float(np.abs(sdb - truth.true_s_dot()).max())

    res = RunResult(cfg=cfg, measured=measured, s_dot_bar=sdb, chi_hat=chi_hat, s_hat=s_hat,
                    sigma1=sig1, sigma_bar=sigb, update_flag=upd, gain_pass=gain_pass,
                    gain_required=gain_req, pe_window_integral=pe, chi_bar=chi_bar, L_g=L_g,
                    truth=truth, d_bar=d_bar, jumps=list(getattr(obs, "jumps", [])),
                    diverged=diverged)
    if chi_true is not None and not diverged:
        res.report = compute_report(res)
    return res


def _ls_trace(measured: Series, sdb, chi0, proj) -> np.ndarray:
    raw = ls_series(measured.s, measured.v, measured.omega, sdb)
    out = np.empty_like(raw)
    last = proj(chi0)
    for k, c in enumerate(raw):
        if math.isfinite(c):
            last = proj(float(c))
        out[k] = last
    return out


def steady_window(cfg: ScenarioConfig, t) -> tuple[float, float]:
    t_end = float(t[-1])
    return (max(float(t[0]), t_end - cfg.steady_window), t_end)


def compute_report(res: RunResult) -> mx.MetricsReport:
    cfg = res.cfg
    z_true = mx.depth(res.chi_true)
    z_est = mx.depth(res.chi_hat)
    w = steady_window(cfg, res.t)
    return mx.MetricsReport(
        rmse_m=mx.rmse(z_true, z_est, res.t, w),
        mape_pct=mx.mape(z_true, z_est, res.t, w),
        conv_time_s=mx.convergence_time(res.t, z_true, z_est, cfg.conv_threshold_pct),
        window=w,
    )


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloSpec:
    n_runs: int = 100
    base_seed: int = 0
    s_hat_std: float = 1.0
    chi_hat_std: float = 0.3
    jobs: int = 1

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.s_hat_std < 0 or self.chi_hat_std < 0:
            raise ConfigError("initial-condition spreads must be non-negative")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def run_config(cfg: ScenarioConfig, mc: MonteCarloSpec, i: int) -> ScenarioConfig:
    """Configuration of run ``i``: its own noise seed and sampled initial estimate."""
    ss = np.random.SeedSequence([mc.base_seed, i])
    noise_ss, init_ss = ss.spawn(2)
    noise_seed = int(noise_ss.generate_state(1)[0])
    rng = np.random.default_rng(init_ss)
    s0 = np.asarray(cfg.init.s_hat0) + mc.s_hat_std * rng.standard_normal(2)
    c0 = cfg.init.chi_hat0 + mc.chi_hat_std * rng.standard_normal()
    c0 = cfg.projector(float(c0))
    return replace(cfg, noise=replace(cfg.noise, seed=noise_seed),
                   init=InitConfig(s_hat0=(float(s0[0]), float(s0[1])), chi_hat0=c0))


@dataclass
class RunSummary:
    index: int
    seed: int
    diverged: bool
    rmse_m: float | None
    mape_pct: float | None
    conv_time_s: float | None
    error: str | None = None
    sq_errors: np.ndarray | None = None
    pct_errors: np.ndarray | None = None


@dataclass
class MonteCarloReport:
    n_runs: int
    n_diverged: int
    rmse_m: float
    mape_pct: float
    conv_median_s: float | None
    conv_none: int
    runs: list[RunSummary]

    def metrics_dict(self) -> dict:
        return {"rmse_m": self.rmse_m, "mape_pct": self.mape_pct,
                "conv_time_s": self.conv_median_s, "n_diverged": self.n_diverged,
                "n_runs": self.n_runs, "n_conv_none": self.conv_none}


def _one_run(args) -> RunSummary:
    cfg, mc, i = args
    rc = run_config(cfg, mc, i)
    try:
        res = run_scenario(rc)
    except (ValueError, ArithmeticError) as exc:
        return RunSummary(i, rc.noise.seed, True, None, None, None, error=str(exc))
    if res.report is None:
        return RunSummary(i, rc.noise.seed, True, None, None, None, error="non-finite estimate")
    z_true = mx.depth(res.chi_true)
    z_est = mx.depth(res.chi_hat)
    m = (res.t >= res.report.window[0] - 1e-9) & (res.t <= res.report.window[1] + 1e-9)
    err = z_est[m] - z_true[m]
    return RunSummary(i, rc.noise.seed, False, res.report.rmse_m, res.report.mape_pct,
                      res.report.conv_time_s, sq_errors=err ** 2,
                      pct_errors=100.0 * np.abs(err) / np.abs(z_true[m]))


def aggregate(runs: list[RunSummary]) -> MonteCarloReport:
    """Pooled RMSE/MAPE over the steady-state samples of all non-diverged runs."""
    runs = sorted(runs, key=lambda r: r.index)
    ok = [r for r in runs if not r.diverged]
    if ok:
        sq = np.concatenate([r.sq_errors for r in ok])
        pct = np.concatenate([r.pct_errors for r in ok])
        rmse_v, mape_v = float(np.sqrt(sq.mean())), float(pct.mean())
    else:
        rmse_v = mape_v = math.nan
    conv = [r.conv_time_s for r in ok if r.conv_time_s is not None]
    return MonteCarloReport(
        n_runs=len(runs), n_diverged=len(runs) - len(ok), rmse_m=rmse_v, mape_pct=mape_v,
        conv_median_s=float(np.median(conv)) if conv else None,
        conv_none=len(ok) - len(conv), runs=runs)


def run_monte_carlo(cfg: ScenarioConfig, mc: MonteCarloSpec) -> MonteCarloReport:
    jobs = [(cfg, mc, i) for i in range(mc.n_runs)]
    if mc.jobs > 1 and mc.n_runs > 1:
        workers = min(mc.jobs, mc.n_runs, os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one_run, jobs, chunksize=max(1, mc.n_runs // (4 * workers))))
    else:
        runs = [_one_run(j) for j in jobs]
    return aggregate(runs)


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------

def load_log(path, cfg: ScenarioConfig) -> Series:
    """Read a measurement log; pixel coordinates are normalised with the configured intrinsics."""
    series = mx.read_series_csv(path)
    if cfg.intrinsics.pixel_units:
        x, y = cfg.intrinsics.normalize(series.s[:, 0], series.s[:, 1])
        series.s = np.column_stack([x, y])
    t = series.t
    if np.any(~np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise mx.LogFormatError(f"{path}: time column must be finite and strictly increasing")
    return series


def replay_log(path, cfg: ScenarioConfig | None = None, overrides=()) -> RunResult:
    cfg = (cfg or scenario_replay()).with_overrides(overrides)
    series = load_log(path, cfg)
    return run_on_measurements(cfg, series, None)
