"""Foundational types: simulation clock, time series, delay line, phase utilities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# A complex-envelope sample is a plain complex number (unit nominal amplitude).
EnvelopeSample = complex


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending field."""


class SimulationDiverged(RuntimeError):
    """The circulating envelope exceeded the divergence guard (mis-set gain)."""


class PhaseAliasingError(ValueError):
    """A successive phase step reached pi: the signal is aliased at this rate."""


def samples_for(interval: float, dt: float, name: str = "interval") -> int:
    """Convert a time interval to an exact integer number of samples.

    Raises ConfigError when ``interval`` is not an integer multiple of ``dt``
    (fail-fast instead of silent rounding).
    """
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    n = round(interval / dt)
    if not np.isclose(n * dt, interval, rtol=1e-9, atol=0.0):
        raise ConfigError(
            f"{name} = {interval} is not an integer multiple of dt = {dt}"
        )
    return int(n)


@dataclass
class SimClock:
    """Discrete simulation clock: t = n * dt exactly, n counts samples."""

    dt: float
    n: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.n < 0:
            raise ConfigError(f"sample index must be >= 0, got {self.n}")

    @property
    def time(self) -> float:
        return self.n * self.dt

    def tick(self) -> float:
        """Advance one sample; returns the new time."""
        self.n += 1
        return self.time


@dataclass
class TimeSeries:
    """Uniformly sampled real or complex signal."""

    dt: float
    t0: float
    data: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        self.data = np.asarray(self.data)
        if self.data.ndim != 1 or len(self.data) < 1:
            raise ConfigError("data must be a 1-D array with length >= 1")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.data)) * self.dt

    @property
    def duration(self) -> float:
        return len(self.data) * self.dt

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def decimated(self, k: int) -> "TimeSeries":
        """Every k-th sample; dt scales accordingly."""
        if k < 1:
            raise ConfigError(f"decimation factor must be >= 1, got {k}")
        return TimeSeries(self.dt * k, self.t0, self.data[::k].copy())

    def cropped(self, t_start: float) -> "TimeSeries":
        """Drop samples before t_start (absolute time)."""
        i = max(0, int(np.ceil((t_start - self.t0) / self.dt)))
        if i >= len(self.data):
            raise ConfigError("cropped() would leave an empty series")
        return TimeSeries(self.dt, self.t0 + i * self.dt, self.data[i:])

    # -- serialization ------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        """CSV with header ``t,re,im`` (complex) or ``t,value`` (real).

        Values use 17 significant digits so binary64 round-trips exactly.
        """
        t = self.t
        if self.is_complex:
            header = "t,re,im"
            cols = np.column_stack([t, self.data.real, self.data.imag])
        else:
            header = "t,value"
            cols = np.column_stack([t, self.data])
        np.savetxt(path, cols, fmt="%.17g", delimiter=",", header=header,
                   comments="")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TimeSeries":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            raw = np.loadtxt(fh, delimiter=",", ndmin=2)
        t = raw[:, 0]
        dt = t[1] - t[0] if len(t) > 1 else 1.0
        if header[1:3] == ["re", "im"]:
            data = raw[:, 1] + 1j * raw[:, 2]
        else:
            data = raw[:, 1]
        return cls(dt, t[0], data)

    def to_binary(self, path: str | Path) -> None:
        """Raw little-endian float64 (re/im interleaved when complex) plus a
        JSON sidecar ``<path>.json`` recording dt, t0, length and kind."""
        path = Path(path)
        if self.is_complex:
            flat = np.empty(2 * len(self.data))
            flat[0::2] = self.data.real
            flat[1::2] = self.data.imag
            kind = "complex"
        else:
            flat = np.asarray(self.data, dtype=float)
            kind = "real"
        flat.astype("<f8").tofile(path)
        sidecar = {"dt": self.dt, "t0": self.t0, "length": len(self.data),
                   "kind": kind}
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))

    @classmethod
    def from_binary(cls, path: str | Path) -> "TimeSeries":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        flat = np.fromfile(path, dtype="<f8")
        if meta["kind"] == "complex":
            data = flat[0::2] + 1j * flat[1::2]
        else:
            data = flat
        if len(data) != meta["length"]:
            raise ConfigError(f"binary payload length {len(data)} does not "
                              f"match sidecar length {meta['length']}")
        return cls(meta["dt"], meta["t0"], data)


class DelayLine:
    """Fixed-length ring buffer of envelope samples.

    ``push_pop(x)`` returns the sample written exactly ``length`` pushes
    earlier; the initial contents come from the configured seed state.
    """

    def __init__(self, length: int, seed_state: np.ndarray | complex = 0.0):
        if length < 1:
            raise ConfigError(f"delay length must be >= 1, got {length}")
        self.length = int(length)
        self._buf = np.empty(self.length, np.complex128)
        seed_state = np.asarray(seed_state, np.complex128)
        if seed_state.ndim == 0:
            self._buf[:] = seed_state
        else:
            if len(seed_state) != self.length:
                raise ConfigError(
                    f"seed state length {len(seed_state)} != delay length "
                    f"{self.length}")
            self._buf[:] = seed_state
        self._w = 0

    def push_pop(self, x: complex) -> complex:
        """Insert x; return the oldest stored sample."""
        out = self._buf[self._w]
        self._buf[self._w] = x
        self._w += 1
        if self._w == self.length:
            self._w = 0
        return complex(out)

    @property
    def buffer(self) -> np.ndarray:
        """Internal ring, oldest sample first (copy)."""
        return np.roll(self._buf, -self._w).copy()

    def raw_state(self) -> tuple[np.ndarray, int]:
        """Ring storage and write index, for handing to batch kernels."""
        return self._buf, self._w


def unwrap_phase(series: TimeSeries) -> TimeSeries:
    """Continuous phase of a complex series; first sample is the principal arg.

    Raises PhaseAliasingError when any successive (wrapped) phase step reaches
    pi in magnitude, since the true phase increment is then ambiguous.
    """
    if not series.is_complex:
        raise ConfigError("unwrap_phase expects a complex series")
    a = np.angle(series.data)
    d = np.diff(a)
    d = np.mod(d + np.pi, 2.0 * np.pi) - np.pi
    bad = np.flatnonzero(np.abs(d) >= np.pi * (1.0 - 1e-12))
    if bad.size:
        raise PhaseAliasingError(
            f"phase step of |pi| or more at sample {bad[0] + 1} "
            f"({bad.size} total); sample rate too low for this signal")
    out = np.empty(len(a))
    out[0] = a[0]
    np.cumsum(d, out=out[1:])
    out[1:] += a[0]
    return TimeSeries(series.dt, series.t0, out)


def instantaneous_frequency(series: TimeSeries) -> TimeSeries:
    """Per-interval frequency f[n] = arg(u[n+1] conj(u[n])) / (2 pi dt), Hz.

    Output length is input length - 1; timestamps sit at interval centres.
    Anti-clockwise envelope rotation is positive frequency.  Zero-magnitude
    samples are rejected explicitly rather than propagated as NaN.
    """
    if not series.is_complex:
        raise ConfigError("instantaneous_frequency expects a complex series")
    if len(series) < 2:
        raise ConfigError("need at least two samples")
    u = series.data
    zero = np.flatnonzero(u == 0)
    if zero.size:
        raise ValueError(
            f"zero-magnitude sample at index {zero[0]} ({zero.size} total): "
            "instantaneous frequency undefined there")
    d = u[1:] * np.conj(u[:-1])
    f = np.arctan2(d.imag, d.real) / (2.0 * np.pi * series.dt)
    return TimeSeries(series.dt, series.t0 + series.dt / 2.0, f)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent deterministic generators derived from one 64-bit seed."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]
