"""Type-II phase-locked loop around the oscillator: divided/clamped phase
detector, PI loop filter with optional extra poles, and the two controllers
under comparison (bounded-phase-shifter scalar control vs Stuart-Landau +
vector-modulator Cartesian control)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .blocks import NoiseCoeffs, PhaseNoiseInjector
from .core import (ConfigError, SimulationDiverged, TimeSeries, samples_for,
                   spawn_rngs)
from .stuart_landau import SLParams
from .tdo import TdoConfig, _noise_phase, _seed_state, _STREAM_DELAY_SEED, \
    _STREAM_REF_NOISE

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PllConfig:
    """Loop parameters.

    kappa and tau_i are the effective loop values seen at the oscillator
    phase (the detector divides by n_div, so the controller internally runs
    with kappa_set = n_div * kappa and tau_i_set = tau_i / n_div).  The PI
    acts as v = kappa * eps + (1/tau_i) * integral(eps): with the defaults
    and a 25 us round trip this places the closed-loop natural frequency at
    1/(2 pi sqrt(tau_g tau_i)) = 100.7 Hz with damping
    (kappa/2) sqrt(tau_i/tau_g) = 1/sqrt(2).
    """

    n_div: int = 100
    tau_i: float = 0.1
    kappa: float = np.sqrt(5.0) / 100.0
    extra_pole_taus: tuple[float, ...] = (80e-3, 40e-3, 20e-3)
    extra_poles_enabled: tuple[bool, ...] = (False, False, False)
    detector_clamp: float = TWO_PI
    tau_g_design: float = 25e-6
    # detector-output smoothing: boxcar over this many round trips (nulls
    # comb-beat components); 0 disables
    detector_average_round_trips: int = 1
    # lock detector (framed oscillator-level frequency error)
    lock_frame: float = 0.5e-3
    lock_tolerance_hz: float = 40.0
    lock_dwell: float = 5e-3
    loss_tolerance_hz: float = 400.0
    loss_dwell: float = 1e-3

    def __post_init__(self):
        if self.n_div < 1:
            raise ConfigError(f"n_div must be >= 1, got {self.n_div}")
        if self.tau_i <= 0:
            raise ConfigError(f"tau_i must be > 0, got {self.tau_i}")
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        if len(self.extra_poles_enabled) != len(self.extra_pole_taus):
            raise ConfigError("extra_poles_enabled length must match "
                              "extra_pole_taus")

    # -- set values used by the controller on the divided error -------------

    @property
    def kappa_set(self) -> float:
        return self.n_div * self.kappa

    @property
    def tau_i_set(self) -> float:
        return self.tau_i / self.n_div

    # -- derived design quantities ------------------------------------------

    @property
    def tau_f(self) -> float:
        """System time constant sqrt(tau_g tau_i)."""
        return float(np.sqrt(self.tau_g_design * self.tau_i))

    @property
    def natural_frequency_hz(self) -> float:
        return 1.0 / (TWO_PI * self.tau_f)

    @property
    def damping(self) -> float:
        """(kappa/2) sqrt(tau_i / tau_g); 1/sqrt(2) with the defaults."""
        return 0.5 * self.kappa * float(np.sqrt(self.tau_i / self.tau_g_design))

    @property
    def damping_tau_f_form(self) -> float:
        """Same expression with tau_f under the radical, reported alongside
        for comparison (evaluates to about 0.089 with the defaults)."""
        return 0.5 * self.kappa * float(np.sqrt(self.tau_i / self.tau_f))

    def enabled_pole_taus(self) -> tuple[float, ...]:
        return tuple(t for t, on in
                     zip(self.extra_pole_taus, self.extra_poles_enabled) if on)

    def as_dict(self) -> dict:
        return {
            "n_div": self.n_div, "tau_i": self.tau_i, "kappa": self.kappa,
            "extra_pole_taus": list(self.extra_pole_taus),
            "extra_poles_enabled": list(self.extra_poles_enabled),
            "detector_clamp": self.detector_clamp,
            "tau_g_design": self.tau_g_design,
            "detector_average_round_trips": self.detector_average_round_trips,
            "lock_frame": self.lock_frame,
            "lock_tolerance_hz": self.lock_tolerance_hz,
            "lock_dwell": self.lock_dwell,
            "loss_tolerance_hz": self.loss_tolerance_hz,
            "loss_dwell": self.loss_dwell,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PllConfig":
        d = dict(d)
        for key in ("extra_pole_taus", "extra_poles_enabled"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def derived_dict(self) -> dict:
        return {
            "kappa_set": self.kappa_set,
            "tau_i_set": self.tau_i_set,
            "tau_f": self.tau_f,
            "natural_frequency_hz": self.natural_frequency_hz,
            "damping": self.damping,
            "damping_tau_f_form": self.damping_tau_f_form,
        }


@dataclass(frozen=True)
class ReferenceModel:
    """Baseband reference: nominal frequency offset plus a phase-noise
    process at the multiplied (x n_div) level, anchored by default at
    -137 dBc/Hz white floor with a 1 kHz flicker corner."""

    offset_hz: float = 0.0
    noise: NoiseCoeffs = field(
        default_factory=lambda: NoiseCoeffs(b0=4e-14, b1=4e-11))

    def phase(self, n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
        t = np.arange(n) * dt
        phi = TWO_PI * self.offset_hz * t
        if not self.noise.silent:
            phi = phi + PhaseNoiseInjector(self.noise, dt, rng).phase(n)
        return phi

    def as_dict(self) -> dict:
        return {"offset_hz": self.offset_hz, "noise": self.noise.as_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceModel":
        d = dict(d)
        if "noise" in d:
            d["noise"] = NoiseCoeffs(**d["noise"])
        return cls(**d)


@dataclass
class LockReport:
    """Lock acquisition/loss summary for a closed-loop run."""

    lock_time: float | None
    loss_time: float | None
    max_phase_error: float | None = None     # max |N eps| after lock, rad
    winding_count: float | None = None       # net control turns (vector)
    winding_post_lock: float | None = None
    saturation_events: int = 0               # scalar control clip count
    first_saturation_time: float | None = None

    def __post_init__(self):
        if (self.loss_time is not None and self.lock_time is not None
                and self.loss_time <= self.lock_time):
            raise ConfigError("loss_time must exceed lock_time")
        if self.loss_time is not None and self.lock_time is None:
            raise ConfigError("loss_time without lock_time")

    @property
    def locked(self) -> bool:
        return self.lock_time is not None and self.loss_time is None

    def as_dict(self) -> dict:
        return {
            "lock_time": self.lock_time,
            "loss_time": self.loss_time,
            "max_phase_error_rad": self.max_phase_error,
            "winding_count": self.winding_count,
            "winding_post_lock": self.winding_post_lock,
            "saturation_events": self.saturation_events,
            "first_saturation_time": self.first_saturation_time,
        }


def phase_detect(phi_osc: float | np.ndarray, phi_ref: float | np.ndarray,
                 n_div: int, clamp: float = TWO_PI):
    """eps = clamp((phi_osc - phi_ref) / n_div, +-clamp).

    Both phases must be unwrapped by the caller; the division emulates a
    sequential phase detector behind a feedback divider (its +-2 pi range
    then spans +-2 pi N of true oscillator phase).
    """
    return np.clip((np.asarray(phi_osc) - phi_ref) / n_div, -clamp, clamp)


class LoopFilter:
    """PI filter v = kappa eps + (1/tau_i) integral(eps) followed by the
    enabled cascade of one-pole low-pass sections (unity DC gain each).

    The integral state is unbounded.  The rectangle-rule update emits
    v(k dt) = kappa + k dt / tau_i exactly for a unit step at k = 0.
    """

    def __init__(self, kappa: float, tau_i: float, dt: float,
                 pole_taus: tuple[float, ...] = ()):
        if tau_i <= 0:
            raise ConfigError(f"tau_i must be > 0, got {tau_i}")
        self.kappa = kappa
        self.tau_i = tau_i
        self.dt = dt
        self.integral = 0.0
        self._alphas = tuple(float(np.exp(-dt / t)) for t in pole_taus)
        self._pstate = [0.0] * len(self._alphas)

    def step(self, eps: float) -> float:
        v = self.kappa * eps + self.integral
        self.integral += eps * self.dt / self.tau_i
        for k, a in enumerate(self._alphas):
            self._pstate[k] = a * self._pstate[k] + (1.0 - a) * v
            v = self._pstate[k]
        return v


@dataclass
class PllRunResult:
    output: TimeSeries              # oscillator tap
    phase_error: TimeSeries         # averaged detector output eps (rad)
    control: TimeSeries             # scalar: commanded p; vector: SL drive v
    report: LockReport
    control_z: TimeSeries | None = None   # vector: decimated SL state
    winding: TimeSeries | None = None     # vector: decimated cumulative turns
    diagnostics: dict = field(default_factory=dict)


def _detect_lock(eps: np.ndarray, dt: float, cfg: PllConfig,
                 p_cmd: np.ndarray | None = None):
    """Framed lock detection on the averaged detector output.

    A frame counts as locked when the oscillator-level frequency error
    n_div * d(eps)/dt / 2pi stays under lock_tolerance_hz and eps is off the
    detector clamp.  Loss (after lock) when the frequency error exceeds
    loss_tolerance_hz, or, for the scalar controller, when the commanded
    phase stays beyond +-pi for a full dwell.
    """
    m = max(2, samples_for(cfg.lock_frame, dt, "lock_frame"))
    k = len(eps) // m
    if k < 2:
        return None, None
    e = eps[:k * m].reshape(k, m)
    slope = (e[:, -1] - e[:, 0]) / ((m - 1) * dt)
    f_err = np.abs(slope) * cfg.n_div / TWO_PI
    off_clamp = np.abs(e).max(axis=1) < 0.95 * cfg.detector_clamp
    ok = (f_err < cfg.lock_tolerance_hz) & off_clamp

    lock_dwell = max(1, int(round(cfg.lock_dwell / cfg.lock_frame)))
    loss_dwell = max(1, int(round(cfg.loss_dwell / cfg.lock_frame)))

    lock_i = None
    run = 0
    for i in range(k):
        run = run + 1 if ok[i] else 0
        if run >= lock_dwell:
            lock_i = i
            break
    if lock_i is None:
        return None, None
    lock_t = (lock_i + 1) * m * dt

    loss_t = None
    run = 0
    for i in range(lock_i + 1, k):
        run = run + 1 if f_err[i] >= cfg.loss_tolerance_hz else 0
        if run >= loss_dwell:
            loss_t = (i + 1) * m * dt
            break

    if p_cmd is not None:
        sat_dwell = max(1, samples_for(cfg.loss_dwell, dt, "loss_dwell"))
        sat = np.abs(p_cmd) > np.pi
        lock_sample = int(lock_t / dt)
        run = 0
        for i in range(lock_sample, len(sat)):
            run = run + 1 if sat[i] else 0
            if run >= sat_dwell:
                t = (i - run + 1) * dt
                if loss_t is None or t < loss_t:
                    loss_t = t
                break
    return lock_t, loss_t


def _run_pll(mode: int, tdo_cfg: TdoConfig, pll_cfg: PllConfig,
             sl: SLParams, ref: ReferenceModel, drift_rate_hz_per_s: float,
             duration: float, z_decimation: int = 100) -> PllRunResult:
    n = samples_for(duration, tdo_cfg.dt, "duration")
    dt = tdo_cfg.dt
    rngs = spawn_rngs(tdo_cfg.seed, 3)
    buf = np.ascontiguousarray(_seed_state(tdo_cfg, rngs[_STREAM_DELAY_SEED]))
    dphi = _noise_phase(tdo_cfg, n)
    phi_ref = ref.phase(n, dt, rngs[_STREAM_REF_NOISE])

    drift_rate = TWO_PI * tdo_cfg.tau_g * drift_rate_hz_per_s
    avg = pll_cfg.detector_average_round_trips
    avg_len = max(1, avg * samples_for(tdo_cfg.tau_g, dt, "tau_g")) if avg \
        else 1
    alphas = np.array([np.exp(-dt / t) for t in pll_cfg.enabled_pole_taus()])

    eps_out = np.empty(n)
    ctrl_out = np.empty(n)
    env_out = np.empty(n, np.complex128)
    nz = (n + z_decimation - 1) // z_decimation if mode == _kernels.PLL_VECTOR \
        else 1
    zx = np.empty(nz)
    zy = np.empty(nz)
    wind = np.empty(nz)
    a_res = float(np.exp(-dt / tdo_cfg.tau_r))

    status, idx = _kernels.pll_closed_loop(
        mode, n, dt, buf, 0, 0.0 + 0.0j, a_res, tdo_cfg.g0, tdo_cfg.p_sat,
        drift_rate, dphi, phi_ref,
        float(pll_cfg.n_div), pll_cfg.detector_clamp,
        pll_cfg.kappa_set, pll_cfg.tau_i_set, sl.tau, sl.mu,
        avg_len, alphas, z_decimation,
        eps_out, ctrl_out, env_out, zx, zy, wind)
    if status == _kernels.PLL_DIVERGED:
        raise SimulationDiverged(
            f"|x| > 100 at t = {idx * dt:.6g} s; check g0/p_sat")
    if status == _kernels.PLL_RESTORATION_FAILED:
        raise SimulationDiverged(
            f"|z| left (0.5, 1.5) at t = {idx * dt:.6g} s: magnitude "
            "restoration failed; check sl mu/tau")

    p_cmd = ctrl_out if mode == _kernels.PLL_SCALAR else None
    lock_t, loss_t = _detect_lock(eps_out, dt, pll_cfg, p_cmd)

    max_err = None
    if lock_t is not None:
        i0 = int(lock_t / dt)
        i1 = int(loss_t / dt) if loss_t is not None else n
        max_err = float(np.abs(eps_out[i0:i1]).max() * pll_cfg.n_div)

    sat_events = 0
    first_sat = None
    winding_total = None
    winding_post = None
    control_z = None
    winding_ts = None
    if mode == _kernels.PLL_SCALAR:
        sat = np.abs(ctrl_out) > np.pi
        sat_events = int(np.count_nonzero(np.diff(sat.astype(np.int8)) == 1)
                         + (1 if sat[0] else 0))
        if sat.any():
            first_sat = float(np.argmax(sat) * dt)
    else:
        winding_total = float(wind[-1])
        if lock_t is not None:
            i_lock = min(int(lock_t / dt) // z_decimation, len(wind) - 1)
            winding_post = float(wind[-1] - wind[i_lock])
        control_z = TimeSeries(dt * z_decimation, 0.0, zx + 1j * zy)
        winding_ts = TimeSeries(dt * z_decimation, 0.0, wind)

    report = LockReport(
        lock_time=lock_t, loss_time=loss_t, max_phase_error=max_err,
        winding_count=winding_total, winding_post_lock=winding_post,
        saturation_events=sat_events, first_saturation_time=first_sat)
    return PllRunResult(
        output=TimeSeries(dt, 0.0, env_out),
        phase_error=TimeSeries(dt, 0.0, eps_out),
        control=TimeSeries(dt, 0.0, ctrl_out),
        report=report, control_z=control_z, winding=winding_ts,
        diagnostics={"drift_rate_rad_per_s": drift_rate,
                     "detector_average_samples": avg_len})


def run_scalar_pll(tdo_cfg: TdoConfig, pll_cfg: PllConfig,
                   ref: ReferenceModel | None = None,
                   drift_rate_hz_per_s: float = 0.0,
                   duration: float = 0.1) -> PllRunResult:
    """Close the loop through the bounded phase shifter (control saturates at
    +-pi; saturation is recorded, not raised)."""
    needed = {"bounded-ps", "unbounded-ps"}
    if not needed.issubset(tdo_cfg.tuning):
        tdo_cfg = replace(tdo_cfg, tuning=("bounded-ps", "unbounded-ps"))
    ref = ref or ReferenceModel()
    sl = SLParams(tau=1e-3)   # unused by the scalar kernel path
    return _run_pll(_kernels.PLL_SCALAR, tdo_cfg, pll_cfg, sl, ref,
                    drift_rate_hz_per_s, duration)


def run_vector_pll(tdo_cfg: TdoConfig, pll_cfg: PllConfig,
                   sl: SLParams | None = None,
                   ref: ReferenceModel | None = None,
                   drift_rate_hz_per_s: float = 0.0,
                   duration: float = 0.2,
                   z_decimation: int = 100) -> PllRunResult:
    """Close the loop through the SL integrator and vector modulator.

    The SL state carries the (unbounded-phase) integral path of the PI with
    rate eps/tau_i regardless of the SL time constant; the proportional term
    kappa_set * eps is applied as a Cartesian rotation of the modulator
    control, so every physical control stays bounded while the accumulated
    phase is free to wind.
    """
    needed = {"vector-modulator", "unbounded-ps"}
    if not needed.issubset(tdo_cfg.tuning):
        tdo_cfg = replace(tdo_cfg, tuning=("vector-modulator", "unbounded-ps"))
    ref = ref or ReferenceModel()
    sl = sl or SLParams(tau=1e-3)
    return _run_pll(_kernels.PLL_VECTOR, tdo_cfg, pll_cfg, sl, ref,
                    drift_rate_hz_per_s, duration, z_decimation)
