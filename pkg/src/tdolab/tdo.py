"""Time-delay oscillator assembly: a circulating-envelope loop of delay line,
resonator, saturating amplifier, tuning element(s) and phase-noise injector,
plus the swept-tuning and single-FSR-winding measurement runs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .blocks import (BoundedPhaseShifter, NoiseCoeffs, PhaseNoiseInjector,
                     Resonator, SaturatingAmp, UnboundedPhaseShifter,
                     VectorModulator)
from .core import (ConfigError, DelayLine, SimClock, SimulationDiverged,
                   TimeSeries, instantaneous_frequency, samples_for,
                   spawn_rngs)
from .stuart_landau import SLParams

TWO_PI = 2.0 * np.pi

TUNING_ELEMENTS = ("bounded-ps", "unbounded-ps", "vector-modulator")
SEED_MODES = ("noise", "zeros", "tone")

# rng stream indices derived from the run seed
_STREAM_DELAY_SEED = 0
_STREAM_TDO_NOISE = 1
_STREAM_REF_NOISE = 2


@dataclass(frozen=True)
class TdoConfig:
    """Oscillator loop configuration.

    Defaults: 24.9 us delay line + 0.1 us resonator group delay give a 25 us
    round trip, a 40 kHz mode spacing and a 3.18 MHz resonator passband
    (about 80 modes).  dt must divide tau_d and tau_r exactly.
    """

    dt: float = 1e-7
    tau_d: float = 24.9e-6
    tau_r: float = 0.1e-6
    g0: float = 2.0
    p_sat: float = 1.0
    noise: NoiseCoeffs = field(
        default_factory=lambda: NoiseCoeffs(b0=8e-14, b1=8e-11))
    tuning: tuple[str, ...] = ("vector-modulator", "unbounded-ps")
    seed: int = 1
    seed_mode: str = "noise"
    seed_sigma: float = 1e-3
    seed_amplitude: float | None = None   # tone mode; default: amp fixed point

    def __post_init__(self):
        samples_for(self.tau_d, self.dt, "tau_d")
        samples_for(self.tau_r, self.dt, "tau_r")
        for el in self.tuning:
            if el not in TUNING_ELEMENTS:
                raise ConfigError(f"unknown tuning element {el!r}; "
                                  f"choose from {TUNING_ELEMENTS}")
        if self.seed_mode not in SEED_MODES:
            raise ConfigError(f"seed_mode must be one of {SEED_MODES}, "
                              f"got {self.seed_mode!r}")
        if self.g0 <= 1.0:
            raise ConfigError(f"g0 must exceed 1 for oscillation, "
                              f"got {self.g0}")

    @property
    def tau_g(self) -> float:
        """Round-trip group delay, tau_d + tau_r."""
        return self.tau_d + self.tau_r

    @property
    def fsr(self) -> float:
        """Mode spacing 1/tau_g."""
        return 1.0 / self.tau_g

    @property
    def resonator_bandwidth(self) -> float:
        return 1.0 / (np.pi * self.tau_r)

    @property
    def mode_count(self) -> float:
        """Approximate number of modes inside the resonator passband."""
        return self.resonator_bandwidth / self.fsr

    @property
    def delay_samples(self) -> int:
        return samples_for(self.tau_d, self.dt, "tau_d")

    @property
    def fixed_point_amplitude(self) -> float:
        return SaturatingAmp(self.g0, self.p_sat).fixed_point_amplitude

    def as_dict(self) -> dict:
        return {
            "dt": self.dt, "tau_d": self.tau_d, "tau_r": self.tau_r,
            "g0": self.g0, "p_sat": self.p_sat,
            "noise": self.noise.as_dict(),
            "tuning": list(self.tuning), "seed": self.seed,
            "seed_mode": self.seed_mode, "seed_sigma": self.seed_sigma,
            "seed_amplitude": self.seed_amplitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TdoConfig":
        d = dict(d)
        if "noise" in d:
            d["noise"] = NoiseCoeffs(**d["noise"])
        if "tuning" in d:
            d["tuning"] = tuple(d["tuning"])
        return cls(**d)

    def derived_dict(self) -> dict:
        return {
            "tau_g": self.tau_g,
            "fsr_hz": self.fsr,
            "resonator_bandwidth_hz": self.resonator_bandwidth,
            "mode_count": self.mode_count,
            "fixed_point_amplitude": self.fixed_point_amplitude,
        }


def _seed_state(config: TdoConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.delay_samples
    if config.seed_mode == "zeros":
        return np.zeros(n, np.complex128)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) \
        * config.seed_sigma
    if config.seed_mode == "noise":
        return noise
    amp = config.seed_amplitude
    if amp is None:
        amp = config.fixed_point_amplitude
    return amp + noise


class TdoState:
    """Stateful oscillator loop built from a TdoConfig.

    ``step`` advances one sample through pop -> resonator -> amp -> tuning ->
    noise -> push and returns the output tap taken after the amplifier (the
    highest-SNR point); tuning and noise sit between the tap and the push.
    Long runs should use the batch runners (run_free, run_swept, ...), which
    produce the same sequences through a compiled kernel.
    """

    def __init__(self, config: TdoConfig):
        self.config = config
        rngs = spawn_rngs(config.seed, 3)
        self.delay = DelayLine(config.delay_samples,
                               _seed_state(config, rngs[_STREAM_DELAY_SEED]))
        self.resonator = Resonator(config.tau_r, config.dt)
        self.amp = SaturatingAmp(config.g0, config.p_sat)
        self.vm = VectorModulator() if "vector-modulator" in config.tuning \
            else None
        self.bounded_ps = BoundedPhaseShifter() if "bounded-ps" in config.tuning \
            else None
        self.drift_ps = UnboundedPhaseShifter() if "unbounded-ps" in config.tuning \
            else None
        self.injector = PhaseNoiseInjector(config.noise, config.dt,
                                           rngs[_STREAM_TDO_NOISE])
        self.clock = SimClock(config.dt)
        self.output = 0.0 + 0.0j

    def step(self, z: complex | None = None, p: float | None = None,
             dtheta: float | None = None) -> complex:
        """Advance one sample.  Controls: z (vector modulator), p (bounded
        shifter command, rad), dtheta (drift-shifter increment, rad)."""
        if z is not None:
            if self.vm is None:
                raise ConfigError("no vector modulator in the tuning chain")
            self.vm.set_control(z)
        if p is not None:
            if self.bounded_ps is None:
                raise ConfigError("no bounded phase shifter in the tuning chain")
            self.bounded_ps.set_control(p)
        if dtheta is not None:
            if self.drift_ps is None:
                raise ConfigError("no drift shifter in the tuning chain")
            self.drift_ps.advance(dtheta)

        x = self.resonator.step(self._pop_next())
        x = self.amp.step(x)
        tap = x
        for el in self.config.tuning:
            if el == "vector-modulator":
                x = self.vm.step(x)
            elif el == "bounded-ps":
                x = self.bounded_ps.step(x)
            else:
                x = self.drift_ps.step(x)
        x *= self.injector.step()
        if abs(x) > 100.0:
            raise SimulationDiverged(
                f"|x| = {abs(x):.3g} > 100 at t = {self.clock.time:.6g} s; "
                "check g0/p_sat")
        self._push(x)
        self.clock.tick()
        self.output = tap
        return tap

    # delay access kept separate so step() reads as the loop order
    def _pop_next(self) -> complex:
        buf, w = self.delay.raw_state()
        return complex(buf[w])

    def _push(self, x: complex) -> None:
        self.delay.push_pop(x)


@dataclass(frozen=True)
class SweepParams:
    """Sinusoidal drive v = a cos(omega t) fed to the SL integrator that
    steers the vector modulator."""

    a: float = np.pi ** 2 / 10.0
    omega: float = TWO_PI
    sl: SLParams = field(default_factory=lambda: SLParams(tau=1e-3, mu=1.0))

    @property
    def peak_theta(self) -> float:
        """Peak modulator phase a / (tau omega), rad."""
        return self.a / (self.sl.tau * self.omega)

    def peak_excursion_hz(self, tau_g: float) -> float:
        """Predicted peak frequency excursion theta_pk / (2 pi tau_g)."""
        return self.peak_theta / (TWO_PI * tau_g)

    def as_dict(self) -> dict:
        return {"a": self.a, "omega": self.omega,
                "sl_tau": self.sl.tau, "sl_mu": self.sl.mu}


@dataclass
class RunResult:
    """Output trace plus measured summary quantities for a run."""

    output: TimeSeries
    settled_frequency_hz: float | None = None
    settled_amplitude: float | None = None
    diagnostics: dict = field(default_factory=dict)


def _noise_phase(config: TdoConfig, n: int) -> np.ndarray:
    if config.noise.silent:
        return np.empty(0)
    rngs = spawn_rngs(config.seed, 3)
    inj = PhaseNoiseInjector(config.noise, config.dt,
                             rngs[_STREAM_TDO_NOISE])
    return inj.phase(n)


def _open_loop(config: TdoConfig, n: int, mode: int,
               z_static: complex = 1.0 + 0.0j,
               theta_traj: np.ndarray | None = None,
               sweep: SweepParams | None = None,
               drift_rate: float = 0.0) -> np.ndarray:
    rngs = spawn_rngs(config.seed, 3)
    buf = np.ascontiguousarray(_seed_state(config, rngs[_STREAM_DELAY_SEED]))
    dphi = _noise_phase(config, n)
    theta_traj = np.empty(0) if theta_traj is None else \
        np.ascontiguousarray(theta_traj, dtype=np.float64)
    sw = sweep or SweepParams()
    out = np.empty(n, np.complex128)
    a_res = float(np.exp(-config.dt / config.tau_r))
    status, _, _, _ = _kernels.tdo_open_loop(
        n, config.dt, buf, 0, 0.0 + 0.0j, a_res, config.g0, config.p_sat,
        mode, complex(z_static), theta_traj,
        sw.a, sw.omega, sw.sl.tau, sw.sl.mu, 1.0 + 0.0j,
        drift_rate, dphi, out)
    if status >= 0:
        raise SimulationDiverged(
            f"|x| > 100 at t = {status * config.dt:.6g} s; check g0/p_sat")
    return out


def _mean_frequency(u: np.ndarray, dt: float) -> float:
    d = u[1:] * np.conj(u[:-1])
    return float(np.arctan2(d.imag, d.real).mean() / (TWO_PI * dt))


def run_free(config: TdoConfig, duration: float,
             drift_rate: float = 0.0,
             z_static: complex = 1.0 + 0.0j) -> RunResult:
    """Free-running oscillator (optionally under the drift emulator and/or a
    static vector-modulator control).  Reports the settled mode frequency and
    amplitude measured over the last tenth of the run.
    """
    if duration < 100 * config.tau_g:
        raise ConfigError(f"duration must be >= 100 tau_g = "
                          f"{100 * config.tau_g:.6g} s for settling")
    n = samples_for(duration, config.dt, "duration")
    out = _open_loop(config, n, _kernels.TUNE_STATIC, z_static=z_static,
                     drift_rate=drift_rate)
    tail = out[-max(n // 10, 2):]
    result = RunResult(
        output=TimeSeries(config.dt, 0.0, out),
        settled_frequency_hz=_mean_frequency(tail, config.dt),
        settled_amplitude=float(np.abs(tail).mean()),
    )
    return result


def run_swept(config: TdoConfig, sweep: SweepParams | None = None,
              duration: float = 1.0) -> RunResult:
    """Swept oscillator: SL integrator driven by v = a cos(omega t) steers
    the vector modulator, sweeping the oscillation across the comb."""
    if "vector-modulator" not in config.tuning:
        raise ConfigError("run_swept requires vector-modulator tuning")
    sweep = sweep or SweepParams()
    n = samples_for(duration, config.dt, "duration")
    out = _open_loop(config, n, _kernels.TUNE_SL_SWEEP, sweep=sweep)
    result = RunResult(output=TimeSeries(config.dt, 0.0, out))
    result.diagnostics["expected_peak_excursion_hz"] = \
        sweep.peak_excursion_hz(config.tau_g)
    return result


class ModeHopError(RuntimeError):
    """Instantaneous frequency jumped by more than the continuity threshold."""


@dataclass
class TuneResult:
    measured_fsr_hz: float
    frequency_before_hz: float
    frequency_after_hz: float
    max_frame_step_hz: float
    output: TimeSeries


def tune_one_fsr(config: TdoConfig, direction: int = +1, windings: int = 1,
                 wind_time: float | None = None,
                 settle: float = 5e-3, measure: float = 10e-3,
                 frame: float = 0.5e-3,
                 max_step_fraction: float = 0.1) -> TuneResult:
    """Wind the vector-modulator control ``windings`` full turns around the
    unit circle (anti-clockwise for direction=+1) adiabatically and return
    the settled frequency change.

    The winding is spread over >= 2000 round trips per turn.  Instantaneous
    frequency, averaged per ``frame``, must move by less than
    ``max_step_fraction * fsr`` between frames or ModeHopError is raised.
    The delay line is seeded at the amplifier fixed point so the measurement
    starts from a clean single-mode state.
    """
    if "vector-modulator" not in config.tuning:
        raise ConfigError("tune_one_fsr requires vector-modulator tuning")
    if direction not in (+1, -1):
        raise ConfigError("direction must be +1 (anti-clockwise) or -1")
    if wind_time is None:
        wind_time = windings * 2000 * config.tau_g
    if wind_time < windings * 2000 * config.tau_g:
        raise ConfigError("wind_time too fast to be adiabatic: need >= 2000 "
                          "round trips per winding")
    cfg = replace(config, seed_mode="tone")
    n_pre = samples_for(settle + measure, cfg.dt, "settle+measure")
    n_wind = samples_for(wind_time, cfg.dt, "wind_time")
    n_post = samples_for(settle + measure, cfg.dt, "settle+measure")
    n_meas = samples_for(measure, cfg.dt, "measure")
    total = direction * windings * TWO_PI
    theta = np.concatenate([
        np.zeros(n_pre),
        total * np.arange(n_wind) / n_wind,
        np.full(n_post, total),
    ])
    out = _open_loop(cfg, len(theta), _kernels.TUNE_THETA_TRAJ,
                     theta_traj=theta)
    f_before = _mean_frequency(out[n_pre - n_meas:n_pre], cfg.dt)
    f_after = _mean_frequency(out[-n_meas:], cfg.dt)

    ts = TimeSeries(cfg.dt, 0.0, out)
    freq = instantaneous_frequency(ts)
    m = samples_for(frame, cfg.dt, "frame")
    k = len(freq.data) // m
    framed = freq.data[:k * m].reshape(k, m).mean(axis=1)
    max_step = float(np.abs(np.diff(framed)).max())
    if max_step > max_step_fraction * cfg.fsr:
        raise ModeHopError(
            f"frequency stepped {max_step:.1f} Hz between frames "
            f"(> {max_step_fraction * cfg.fsr:.1f} Hz): mode hop")
    return TuneResult(
        measured_fsr_hz=(f_after - f_before) / windings / direction,
        frequency_before_hz=f_before,
        frequency_after_hz=f_after,
        max_frame_step_hz=max_step,
        output=ts,
    )
