"""Signal-processing blocks of the oscillator loop: resonator, saturating
amplifier, phase shifters, vector modulator and power-law phase-noise
injector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import ConfigError


@dataclass
class Resonator:
    """Baseband one-pole equivalent of the RF mode-selection filter.

    y[n] = a y[n-1] + (1 - a) x[n] with a = exp(-dt/tau_r): exact pole
    mapping, unit gain at resonance (DC in the envelope frame).
    """

    tau_r: float
    dt: float
    state: complex = 0.0 + 0.0j

    def __post_init__(self):
        if self.tau_r <= 0:
            raise ConfigError(f"tau_r must be > 0, got {self.tau_r}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        self.a = float(np.exp(-self.dt / self.tau_r))

    @property
    def bandwidth(self) -> float:
        """Full 3 dB bandwidth of the analog prototype, 1/(pi tau_r)."""
        return 1.0 / (np.pi * self.tau_r)

    def step(self, x: complex) -> complex:
        self.state = self.a * self.state + (1.0 - self.a) * x
        return self.state

    def reset(self, state: complex = 0.0 + 0.0j) -> None:
        self.state = state


@dataclass
class SaturatingAmp:
    """Memoryless saturable gain y = x * g0 / sqrt(1 + |x|^2 / p_sat).

    Phase is preserved exactly; |y| is strictly increasing in |x| and bounded
    by g0 sqrt(p_sat).
    """

    g0: float = 2.0
    p_sat: float = 1.0

    def __post_init__(self):
        if self.g0 <= 0:
            raise ConfigError(f"g0 must be > 0, got {self.g0}")
        if self.p_sat <= 0:
            raise ConfigError(f"p_sat must be > 0, got {self.p_sat}")

    @property
    def fixed_point_amplitude(self) -> float:
        """Self-consistent loop amplitude where the saturated gain is 1."""
        if self.g0 <= 1.0:
            return 0.0
        return float(np.sqrt(self.p_sat * (self.g0 ** 2 - 1.0)))

    def step(self, x: complex) -> complex:
        m2 = x.real * x.real + x.imag * x.imag
        return x * (self.g0 / np.sqrt(1.0 + m2 / self.p_sat))


@dataclass
class BoundedPhaseShifter:
    """Unit-magnitude phase shifter with control clamped to [-pi, pi]."""

    control: float = 0.0

    def set_control(self, p: float) -> float:
        """Store the commanded control; returns the clamped value applied."""
        self.control = float(p)
        return self.applied

    @property
    def applied(self) -> float:
        return float(np.clip(self.control, -np.pi, np.pi))

    @property
    def saturated(self) -> bool:
        return abs(self.control) > np.pi

    def step(self, x: complex) -> complex:
        p = self.applied
        return x * complex(np.cos(p), np.sin(p))


@dataclass
class UnboundedPhaseShifter:
    """Phase shifter with an unbounded accumulator; used to emulate delay
    drift through the phase it introduces (the delay length stays fixed)."""

    theta: float = 0.0

    def advance(self, dtheta: float) -> float:
        self.theta += dtheta
        return self.theta

    def step(self, x: complex) -> complex:
        return x * complex(np.cos(self.theta), np.sin(self.theta))


@dataclass
class VectorModulator:
    """Complex multiplier: output = input * z.  No normalisation is applied
    inside the block; whoever drives z owns |z|."""

    z: complex = 1.0 + 0.0j

    def set_control(self, z: complex) -> None:
        self.z = complex(z)

    def step(self, x: complex) -> complex:
        return x * self.z


@dataclass(frozen=True)
class NoiseCoeffs:
    """One-sided phase PSD coefficients: S_phi(f) = b0 + b1/f + b2/f^2 + b3/f^3
    (rad^2/Hz with f in Hz)."""

    b0: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    b3: float = 0.0

    def __post_init__(self):
        for name in ("b0", "b1", "b2", "b3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @property
    def silent(self) -> bool:
        return self.b0 == self.b1 == self.b2 == self.b3 == 0.0

    def as_dict(self) -> dict:
        return {"b0": self.b0, "b1": self.b1, "b2": self.b2, "b3": self.b3}


def _flicker_sos(dt: float, f_lo: float, per_decade: int) -> np.ndarray:
    """First-order pole/zero sections whose cascade approximates a 1/f PSD.

    Poles are spaced 1/per_decade decades apart from f_lo to fs/2 with each
    zero half an interval above its pole, giving an average -10 dB/decade
    PSD slope with small ripple.
    """
    fs = 1.0 / dt
    n_dec = np.log10((fs / 2.0) / f_lo)
    n_sec = int(np.ceil(n_dec * per_decade))
    step = 1.0 / per_decade
    sos = np.zeros((n_sec, 6))
    for k in range(n_sec):
        fp = f_lo * 10.0 ** (k * step)
        fz = min(fp * 10.0 ** (step / 2.0), 0.49 * fs)
        wp = 2.0 / dt * np.tan(np.pi * fp * dt)
        wz = 2.0 / dt * np.tan(np.pi * fz * dt)
        b, a = signal.bilinear([1.0 / wz, 1.0], [1.0 / wp, 1.0], fs=fs)
        sos[k, :2] = b
        sos[k, 3:5] = a
    return sos


def _sos_gain(sos: np.ndarray, f: float, fs: float) -> float:
    z = np.exp(-2j * np.pi * f / fs)
    h = 1.0 + 0.0j
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return abs(h)


class PhaseNoiseInjector:
    """Unit-magnitude multiplier exp(i dphi[n]) with dphi following a
    power-law PSD sum over f^0, f^-1, f^-2, f^-3.

    White and random-walk branches use exact closed-form scalings; the 1/f
    branch filters white noise through a pole/zero cascade (f^-3 adds one
    integration), each calibrated at ``f_ref``.  Streaming and batch access
    draw from the same generator state, so step-by-step and block generation
    produce identical sequences.
    """

    def __init__(self, coeffs: NoiseCoeffs, dt: float,
                 rng: np.random.Generator | int = 0,
                 f_ref: float = 1e3, f_lo: float = 1.0,
                 sections_per_decade: int = 4):
        self.coeffs = coeffs
        self.dt = float(dt)
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {dt}")
        if isinstance(rng, (int, np.integer)):
            rng = np.random.Generator(np.random.PCG64(rng))
        # one child stream per branch so batched and per-sample draws agree
        self._rngs = rng.spawn(4)
        self.f_ref = float(f_ref)

        need_flicker = coeffs.b1 > 0 or coeffs.b3 > 0
        if need_flicker:
            self._sos = _flicker_sos(self.dt, f_lo, sections_per_decade)
            self._zi1 = np.zeros((len(self._sos), 2))
            self._zi3 = np.zeros((len(self._sos), 2))
            h_ref = _sos_gain(self._sos, self.f_ref, 1.0 / self.dt)
        else:
            self._sos = None

        self._c0 = np.sqrt(coeffs.b0 / (2.0 * self.dt)) if coeffs.b0 else 0.0
        self._c1 = (np.sqrt(coeffs.b1 / self.f_ref / (2.0 * self.dt)) / h_ref
                    if coeffs.b1 else 0.0)
        self._c2 = np.sqrt(2.0 * np.pi ** 2 * coeffs.b2 * self.dt) \
            if coeffs.b2 else 0.0
        if coeffs.b3:
            i_ref = 1.0 / (2.0 * np.sin(np.pi * self.f_ref * self.dt))
            self._c3 = (np.sqrt(coeffs.b3 / self.f_ref ** 3 / (2.0 * self.dt))
                        / (h_ref * i_ref))
        else:
            self._c3 = 0.0
        self._acc2 = 0.0   # random-walk accumulator
        self._acc3 = 0.0   # integrated-flicker accumulator

    def phase(self, n: int) -> np.ndarray:
        """Next n samples of the phase process dphi (radians)."""
        out = np.zeros(n)
        c = self.coeffs
        if c.b0:
            out += self._c0 * self._rngs[0].standard_normal(n)
        if c.b1:
            w = self._c1 * self._rngs[1].standard_normal(n)
            y, self._zi1 = signal.sosfilt(self._sos, w, zi=self._zi1)
            out += y
        if c.b2:
            w = self._c2 * self._rngs[2].standard_normal(n)
            y = self._acc2 + np.cumsum(w)
            self._acc2 = y[-1]
            out += y
        if c.b3:
            w = self._c3 * self._rngs[3].standard_normal(n)
            y, self._zi3 = signal.sosfilt(self._sos, w, zi=self._zi3)
            y = self._acc3 + np.cumsum(y)
            self._acc3 = y[-1]
            out += y
        return out

    def multipliers(self, n: int) -> np.ndarray:
        """Next n unit-magnitude multipliers exp(i dphi)."""
        if self.coeffs.silent:
            return np.ones(n, np.complex128)
        return np.exp(1j * self.phase(n))

    def step(self) -> complex:
        return complex(self.multipliers(1)[0])
