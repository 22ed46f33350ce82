"""Measurement tooling: spectrogram, ridge tracking and phase-noise spectral
density estimation over simulation traces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .core import ConfigError, TimeSeries, unwrap_phase

TWO_PI = 2.0 * np.pi


@dataclass
class Spectrogram:
    """Magnitude-dB time-frequency grid; frequencies are two-sided, centred
    on 0 (the nominal carrier), ascending over (-fs/2, fs/2]."""

    times: np.ndarray           # frame centres, s
    freqs: np.ndarray           # Hz
    magnitudes_db: np.ndarray   # (n_frames, n_bins)

    def __post_init__(self):
        if self.magnitudes_db.shape != (len(self.times), len(self.freqs)):
            raise ConfigError("grid dimensions must be (#frames, #bins)")

    def to_csv(self, path: str | Path, frame_stride: int = 1,
               bin_stride: int = 1) -> None:
        """Long-form CSV (t, f, dB); stride the grid for manageable files."""
        with open(path, "w") as fh:
            fh.write("t,f,dB\n")
            for i in range(0, len(self.times), frame_stride):
                t = self.times[i]
                row = self.magnitudes_db[i]
                for j in range(0, len(self.freqs), bin_stride):
                    fh.write(f"{t:.17g},{self.freqs[j]:.17g},{row[j]:.17g}\n")

    def to_binary(self, path: str | Path) -> None:
        """Raw little-endian float64 grid (row-major) + JSON sidecar."""
        path = Path(path)
        self.magnitudes_db.astype("<f8").tofile(path)
        sidecar = {
            "n_frames": len(self.times), "n_bins": len(self.freqs),
            "t_first": float(self.times[0]),
            "t_step": float(self.times[1] - self.times[0])
            if len(self.times) > 1 else 0.0,
            "f_first": float(self.freqs[0]),
            "f_step": float(self.freqs[1] - self.freqs[0]),
            "units": "dB",
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))


def stft(series: TimeSeries, window_len: int = 4096,
         hop: int = 1024) -> Spectrogram:
    """Short-time Fourier transform with a periodic Hann window.

    Frames are magnitude-dB, normalised so a unit-amplitude complex tone
    peaks at 0 dB; frame times are window centres.
    """
    if len(series) < window_len:
        raise ConfigError(f"input length {len(series)} shorter than the "
                          f"window ({window_len})")
    if hop < 1:
        raise ConfigError(f"hop must be >= 1, got {hop}")
    x = np.asarray(series.data, np.complex128)
    win = signal.get_window("hann", window_len, fftbins=True)
    n_frames = 1 + (len(x) - window_len) // hop
    idx = (np.arange(window_len)[None, :]
           + hop * np.arange(n_frames)[:, None])
    frames = x[idx] * win[None, :]
    spec = np.fft.fft(frames, axis=1)
    mag = np.abs(spec) / win.sum()
    mag_db = 20.0 * np.log10(mag + 1e-300)

    freqs = np.fft.fftshift(np.fft.fftfreq(window_len, series.dt))
    mag_db = np.fft.fftshift(mag_db, axes=1)
    # move the -fs/2 bin to +fs/2 so freqs span (-fs/2, fs/2] ascending
    freqs = np.roll(freqs, -1)
    freqs[-1] = -freqs[-1]
    mag_db = np.roll(mag_db, -1, axis=1)

    times = series.t0 + (np.arange(n_frames) * hop + window_len / 2.0) \
        * series.dt
    return Spectrogram(times=times, freqs=freqs, magnitudes_db=mag_db)


@dataclass
class RidgeTrack:
    """Per-frame dominant-ridge frequency with an ambiguity flag for frames
    where a competing peak comes within the prominence margin."""

    times: np.ndarray
    frequency_hz: np.ndarray
    ambiguous: np.ndarray      # bool per frame

    @property
    def valid_times(self) -> np.ndarray:
        return self.times[~self.ambiguous]

    @property
    def valid_frequency_hz(self) -> np.ndarray:
        return self.frequency_hz[~self.ambiguous]

    def to_timeseries(self) -> TimeSeries:
        dt = self.times[1] - self.times[0] if len(self.times) > 1 else 1.0
        return TimeSeries(dt, float(self.times[0]), self.frequency_hz)


def ridge_track(spec: Spectrogram, min_prominence_db: float = 10.0,
                guard_bins: int = 3) -> RidgeTrack:
    """Track the dominant spectral ridge frame by frame.

    The per-frame argmax is refined by parabolic interpolation over the dB
    values of the three bins around the peak.  A frame is flagged ambiguous
    (not guessed) when the strongest bin outside a guard region around the
    peak comes within ``min_prominence_db``.
    """
    m = spec.magnitudes_db
    n_frames, n_bins = m.shape
    peak = m.argmax(axis=1)
    rows = np.arange(n_frames)

    # parabolic refinement in dB
    p0 = m[rows, np.clip(peak - 1, 0, n_bins - 1)]
    p1 = m[rows, peak]
    p2 = m[rows, np.clip(peak + 1, 0, n_bins - 1)]
    denom = p0 - 2.0 * p1 + p2
    delta = np.where(np.abs(denom) > 0, 0.5 * (p0 - p2) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    df = spec.freqs[1] - spec.freqs[0]
    freq = spec.freqs[peak] + delta * df

    masked = m.copy()
    for off in range(-guard_bins, guard_bins + 1):
        masked[rows, np.clip(peak + off, 0, n_bins - 1)] = -np.inf
    runner_up = masked.max(axis=1)
    ambiguous = (p1 - runner_up) < min_prominence_db
    return RidgeTrack(times=spec.times.copy(), frequency_hz=freq,
                      ambiguous=ambiguous)


@dataclass
class PhaseNoisePsd:
    """Single-sideband phase noise L(f) = S_phi(f)/2 on a log-spaced offset
    grid (band-averaged from the raw Welch estimate, which is retained)."""

    offsets_hz: np.ndarray
    l_dbc_per_hz: np.ndarray
    raw_freqs_hz: np.ndarray = field(repr=False, default=None)
    raw_s_phi: np.ndarray = field(repr=False, default=None)
    convention: str = "L(f) = S_phi(f)/2, one-sided"

    def level_at(self, f: float) -> float:
        """L at the report point nearest f, dBc/Hz."""
        return float(self.l_dbc_per_hz[np.argmin(np.abs(self.offsets_hz - f))])

    def to_csv(self, path: str | Path) -> None:
        cols = np.column_stack([self.offsets_hz, self.l_dbc_per_hz])
        np.savetxt(path, cols, fmt="%.17g", delimiter=",",
                   header="f_Hz,L_dBc_per_Hz", comments="")


def phase_noise_psd(series: TimeSeries, nominal_removal: bool = True,
                    nperseg: int | None = None,
                    points_per_decade: int = 24,
                    f_min: float | None = None,
                    f_max: float | None = None) -> PhaseNoisePsd:
    """Welch estimate of the phase fluctuation PSD, reported as L(f).

    The phase is unwrapped; when ``nominal_removal`` is set an order-1
    polynomial (mean frequency offset) is removed first.  Hann window, 50%
    overlap, at least 16 segments.  The lowest reported offset must satisfy
    f >= 10/duration.
    """
    n = len(series)
    if nperseg is None:
        # largest power of two giving >= 16 half-overlapped segments
        nperseg = min(1 << 20, 1 << int(np.log2(max(n // 8, 2))))
    if nperseg < 16:
        raise ConfigError("trace too short for a PSD estimate")

    phi = unwrap_phase(series).data
    if nominal_removal:
        x = np.arange(len(phi), dtype=float)
        c = np.polyfit(x, phi, 1)
        phi = phi - np.polyval(c, x)

    fs = 1.0 / series.dt
    f, s_phi = signal.welch(phi, fs=fs, window="hann", nperseg=nperseg,
                            noverlap=nperseg // 2, detrend=False)
    f, s_phi = f[1:], s_phi[1:]

    lo = max(f_min if f_min is not None else f[0], 10.0 / series.duration)
    hi = f_max if f_max is not None else f[-1]
    if lo >= hi:
        raise ConfigError(
            f"trace too short: lowest reportable offset {10.0 / series.duration:.3g} Hz "
            f"is not below f_max {hi:.3g} Hz")

    edges = 10.0 ** np.arange(np.log10(lo), np.log10(hi),
                              1.0 / points_per_decade)
    offs, lev = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        msk = (f >= a) & (f < b)
        if msk.any():
            offs.append(np.sqrt(a * b))
            lev.append(s_phi[msk].mean())
    offs = np.array(offs)
    lev = np.array(lev)
    l_dbc = 10.0 * np.log10(np.maximum(lev / 2.0, 1e-300))
    return PhaseNoisePsd(offsets_hz=offs, l_dbc_per_hz=l_dbc,
                         raw_freqs_hz=f, raw_s_phi=s_phi)
