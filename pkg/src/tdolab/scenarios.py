"""Named scenarios behind the command line: free-run, sweep, scalar-pll,
vector-pll and noise-characterization.  Each run writes traces, figure data
and a JSON manifest with config echo, derived quantities and checksums."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .analysis import phase_noise_psd, ridge_track, stft
from .blocks import NoiseCoeffs
from .core import ConfigError, TimeSeries
from .pll import (PllConfig, ReferenceModel, run_scalar_pll,
                  run_vector_pll)
from .stuart_landau import SLParams
from .tdo import SweepParams, TdoConfig, run_free, run_swept

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class EmitFlags:
    traces: bool = True
    spectrogram: bool = False
    psd: bool = False
    report: bool = True
    trace_decimation: int = 100
    binary_traces: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScenarioConfig:
    """Complete description of one scenario run; (config, seed) pairs are
    bit-reproducible."""

    scenario: str = "free-run"
    tdo: TdoConfig = field(default_factory=TdoConfig)
    pll: PllConfig = field(default_factory=PllConfig)
    ref: ReferenceModel = field(default_factory=ReferenceModel)
    sl: SLParams = field(default_factory=lambda: SLParams(tau=1e-3))
    sweep: SweepParams = field(default_factory=SweepParams)
    drift_rate_hz_per_s: float = 0.0
    duration: float = 0.2
    seed: int = 1
    out_dir: str = "tdolab-out"
    emit: EmitFlags = field(default_factory=EmitFlags)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "tdo": self.tdo.as_dict(),
            "pll": self.pll.as_dict(),
            "ref": self.ref.as_dict(),
            "sl": {"tau": self.sl.tau, "mu": self.sl.mu},
            "sweep": self.sweep.as_dict(),
            "drift_rate_hz_per_s": self.drift_rate_hz_per_s,
            "duration": self.duration,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "emit": self.emit.as_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {"scenario", "tdo", "pll", "ref", "sl", "sweep",
                 "drift_rate_hz_per_s", "duration", "seed", "out_dir", "emit"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        try:
            if "tdo" in d:
                d["tdo"] = TdoConfig.from_dict(d["tdo"])
            if "pll" in d:
                d["pll"] = PllConfig.from_dict(d["pll"])
            if "ref" in d:
                d["ref"] = ReferenceModel.from_dict(d["ref"])
            if "sl" in d:
                d["sl"] = SLParams(**d["sl"])
            if "sweep" in d:
                s = dict(d["sweep"])
                sl = SLParams(tau=s.pop("sl_tau", 1e-3), mu=s.pop("sl_mu", 1.0))
                d["sweep"] = SweepParams(sl=sl, **s)
            if "emit" in d:
                d["emit"] = EmitFlags(**d["emit"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ScenarioConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        return cls.from_dict(payload)


def apply_override(config_dict: dict, dotted: str) -> dict:
    """Apply one ``a.b.c=value`` override onto a config dict (value parsed as
    JSON, falling back to a bare string)."""
    if "=" not in dotted:
        raise ConfigError(f"override {dotted!r} must look like key.path=value")
    key, raw = dotted.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = config_dict
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"override {key!r}: no section {p!r}")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"override {key!r}: unknown field {leaf!r}")
    node[leaf] = value
    return config_dict


# ---------------------------------------------------------------------------
# scenario defaults

_SCENARIOS: dict[str, dict] = {
    "free-run": dict(
        description="free-running oscillator; reports settled mode frequency "
                    "and amplitude (enable drift_rate_hz_per_s to watch the "
                    "natural frequency chirp)",
        defaults=dict(duration=0.2, drift_rate_hz_per_s=0.0),
    ),
    "sweep": dict(
        description="multi-FSR continuous tuning: sinusoidally driven "
                    "integrator winds the vector modulator +-25 turns, "
                    "sweeping the oscillation +-1 MHz with a 1 s period",
        defaults=dict(duration=1.0),
    ),
    "scalar-pll": dict(
        description="bounded-phase-shifter loop under delay drift: locks, "
                    "then loses lock when the shifter saturates at +-pi",
        defaults=dict(duration=0.1, drift_rate_hz_per_s=1e6),
    ),
    "vector-pll": dict(
        description="Cartesian (SL integrator + vector modulator) loop under "
                    "the same drift: holds lock indefinitely while the "
                    "control winds the unit circle",
        defaults=dict(duration=0.2, drift_rate_hz_per_s=1e6),
    ),
    "noise-characterization": dict(
        description="phase-noise spectra of the free oscillator and the "
                    "vector-locked oscillator; the loop suppresses noise "
                    "below its ~100 Hz bandwidth and is transparent above",
        defaults=dict(duration=1.2, drift_rate_hz_per_s=0.0),
    ),
}


def scenario_names() -> tuple[str, ...]:
    return tuple(_SCENARIOS)


def default_config(scenario: str) -> ScenarioConfig:
    if scenario not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; "
                          f"choose from {sorted(_SCENARIOS)}")
    cfg = ScenarioConfig(scenario=scenario, **_SCENARIOS[scenario]["defaults"])
    if scenario == "sweep":
        # clean single-ridge demonstration: warm start, injector silent
        cfg = replace(cfg, tdo=replace(cfg.tdo, seed_mode="tone",
                                       noise=NoiseCoeffs()))
    if scenario in ("scalar-pll", "vector-pll", "noise-characterization"):
        cfg = replace(cfg, tdo=replace(cfg.tdo, seed_mode="tone"))
    if scenario == "noise-characterization":
        cfg = replace(cfg, emit=replace(cfg.emit, psd=True))
    return cfg


def list_scenarios() -> str:
    lines = ["built-in scenarios:"]
    for name, info in _SCENARIOS.items():
        lines.append(f"  {name:24s} {info['description']}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# artifact helpers

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Artifacts:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, dict] = {}

    def add(self, name: str, path: Path) -> None:
        self.files[name] = {"path": path.name, "sha256": _sha256(path)}

    def write_timeseries(self, name: str, ts: TimeSeries,
                         emit: EmitFlags) -> None:
        if emit.binary_traces:
            p = self.out_dir / f"{name}.f64"
            ts.to_binary(p)
            self.add(name, p)
            self.add(name + ".sidecar", Path(str(p) + ".json"))
        else:
            p = self.out_dir / f"{name}.csv"
            k = max(1, emit.trace_decimation)
            ts.decimated(k).to_csv(p)
            self.add(name, p)

    def write_manifest(self, manifest: dict) -> Path:
        p = self.out_dir / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                default=_json_default))
        return p


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def fit_ridge_sinusoid(times: np.ndarray, freq_hz: np.ndarray,
                       period_guess: float = 1.0) -> dict:
    """Least-squares fit of f(t) = A sin(2 pi t / T + phi) + c to a tracked
    ridge; returns amplitude (Hz) and period (s)."""

    def model(t, a, period, phi, c):
        return a * np.sin(TWO_PI * t / period + phi) + c

    a0 = (freq_hz.max() - freq_hz.min()) / 2.0
    popt, _ = curve_fit(model, times, freq_hz,
                        p0=[a0, period_guess, 0.0, 0.0], maxfev=20000)
    a, period = abs(float(popt[0])), abs(float(popt[1]))
    resid = freq_hz - model(times, *popt)
    return {"amplitude_hz": a, "period_s": period,
            "rms_residual_hz": float(np.sqrt(np.mean(resid ** 2)))}


def fit_ridge_slope(times: np.ndarray, freq_hz: np.ndarray) -> dict:
    slope, intercept = np.polyfit(times, freq_hz, 1)
    return {"slope_hz_per_s": float(slope), "intercept_hz": float(intercept)}


# ---------------------------------------------------------------------------
# runners

def _derived(cfg: ScenarioConfig) -> dict:
    pll = replace(cfg.pll, tau_g_design=cfg.tdo.tau_g)
    d = cfg.tdo.derived_dict()
    d.update(pll.derived_dict())
    return d


def _run_free_scenario(cfg: ScenarioConfig, art: _Artifacts) -> dict:
    res = run_free(cfg.tdo, cfg.duration,
                   drift_rate=TWO_PI * cfg.tdo.tau_g * cfg.drift_rate_hz_per_s)
    results = {
        "settled_frequency_hz": res.settled_frequency_hz,
        "settled_amplitude": res.settled_amplitude,
    }
    if cfg.emit.traces:
        art.write_timeseries("output", res.output, cfg.emit)
    if cfg.emit.spectrogram or cfg.drift_rate_hz_per_s:
        sp = stft(res.output)
        if cfg.emit.spectrogram:
            p = art.out_dir / "spectrogram.f64"
            sp.to_binary(p)
            art.add("spectrogram", p)
            art.add("spectrogram.sidecar", Path(str(p) + ".json"))
        if cfg.drift_rate_hz_per_s:
            ridge = ridge_track(sp)
            results["ridge_fit"] = fit_ridge_slope(ridge.valid_times,
                                                   ridge.valid_frequency_hz)
    return results


def _run_sweep_scenario(cfg: ScenarioConfig, art: _Artifacts) -> dict:
    res = run_swept(cfg.tdo, cfg.sweep, cfg.duration)
    if cfg.emit.traces:
        art.write_timeseries("output", res.output, cfg.emit)
    sp = stft(res.output)
    if cfg.emit.spectrogram:
        p = art.out_dir / "spectrogram.f64"
        sp.to_binary(p)
        art.add("spectrogram", p)
        art.add("spectrogram.sidecar", Path(str(p) + ".json"))
    ridge = ridge_track(sp)
    rcsv = art.out_dir / "ridge.csv"
    ridge.to_timeseries().to_csv(rcsv)
    art.add("ridge", rcsv)
    fit = fit_ridge_sinusoid(ridge.valid_times, ridge.valid_frequency_hz,
                             period_guess=TWO_PI / cfg.sweep.omega)
    return {
        "expected_peak_excursion_hz": res.diagnostics[
            "expected_peak_excursion_hz"],
        "ridge_fit": fit,
        "ambiguous_frames": int(ridge.ambiguous.sum()),
    }


def _run_pll_scenario(cfg: ScenarioConfig, art: _Artifacts,
                      vector: bool) -> dict:
    if vector:
        res = run_vector_pll(cfg.tdo, cfg.pll, cfg.sl, cfg.ref,
                             cfg.drift_rate_hz_per_s, cfg.duration)
    else:
        res = run_scalar_pll(cfg.tdo, cfg.pll, cfg.ref,
                             cfg.drift_rate_hz_per_s, cfg.duration)
    if cfg.emit.traces:
        art.write_timeseries("output", res.output, cfg.emit)
        art.write_timeseries("phase_error", res.phase_error, cfg.emit)
        art.write_timeseries("control", res.control, cfg.emit)
        if res.control_z is not None:
            art.write_timeseries("control_z", res.control_z,
                                 replace(cfg.emit, trace_decimation=1))
    return {"lock_report": res.report.as_dict()}


def _run_noise_characterization(cfg: ScenarioConfig, art: _Artifacts) -> dict:
    settle = 0.2
    if cfg.duration <= settle + 0.5:
        raise ConfigError("noise-characterization needs duration > 0.7 s "
                          "(0.2 s settling is discarded)")
    free = run_free(cfg.tdo, cfg.duration)
    locked = run_vector_pll(cfg.tdo, cfg.pll, cfg.sl, cfg.ref,
                            drift_rate_hz_per_s=0.0, duration=cfg.duration)
    psd_free = phase_noise_psd(free.output.cropped(settle), f_max=1e5)
    psd_lock = phase_noise_psd(locked.output.cropped(settle), f_max=1e5)
    if cfg.emit.psd:
        for name, psd in (("psd_free", psd_free), ("psd_locked", psd_lock)):
            p = art.out_dir / f"{name}.csv"
            psd.to_csv(p)
            art.add(name, p)
    fc = psd_free.offsets_hz
    diff = psd_lock.l_dbc_per_hz - psd_free.l_dbc_per_hz
    low = fc <= 100.0
    high = fc >= 2e3
    summary = {
        "free_l_at_10khz_dbc": psd_free.level_at(1e4),
        "suppression_at_10hz_db": float(psd_free.level_at(10.0)
                                        - psd_lock.level_at(10.0)),
        "locked_below_free_upto_100hz": bool(np.all(diff[low] < 0)),
        "max_abs_diff_above_2khz_db": float(np.abs(diff[high]).max()),
        "lock_report": locked.report.as_dict(),
        "convention": psd_free.convention,
    }
    return summary


# ---------------------------------------------------------------------------
# checks (enabled by --check): compare run metrics against the expected
# figure-level behaviours

def _check_free(cfg, results):
    checks = []
    amp = results["settled_amplitude"]
    fp = cfg.tdo.fixed_point_amplitude
    checks.append(("settled amplitude within 5% of amplifier fixed point",
                   abs(amp - fp) <= 0.05 * fp, f"{amp:.4f} vs {fp:.4f}"))
    if cfg.drift_rate_hz_per_s:
        slope = results["ridge_fit"]["slope_hz_per_s"]
        want = cfg.drift_rate_hz_per_s
        checks.append(("ridge slope within 2% of the drift rate",
                       abs(slope - want) <= 0.02 * abs(want),
                       f"{slope:.4g} vs {want:.4g} Hz/s"))
    else:
        f = results["settled_frequency_hz"]
        fsr = cfg.tdo.fsr
        k = round(f / fsr)
        checks.append(("settled frequency within FSR/2 of a comb line",
                       abs(f - k * fsr) <= fsr / 2,
                       f"{f:.1f} Hz vs comb {k}x{fsr:.1f} Hz"))
    return checks


def _check_sweep(cfg, results):
    fit = results["ridge_fit"]
    want_a = results["expected_peak_excursion_hz"]
    want_t = TWO_PI / cfg.sweep.omega
    return [
        ("ridge amplitude within 5% of 1 MHz",
         abs(fit["amplitude_hz"] - 1e6) <= 0.05e6,
         f"{fit['amplitude_hz']:.4g} Hz (model predicts {want_a:.4g})"),
        ("ridge period within 1%",
         abs(fit["period_s"] - want_t) <= 0.01 * want_t,
         f"{fit['period_s']:.4g} s vs {want_t:.4g} s"),
    ]


def _check_scalar(cfg, results):
    rep = results["lock_report"]
    lock, loss = rep["lock_time"], rep["loss_time"]
    sat = rep["first_saturation_time"]
    checks = [
        ("locks at 15 +- 5 ms", lock is not None and 0.010 <= lock <= 0.020,
         f"lock_time={lock}"),
        ("loses lock at 20 +- 5 ms",
         loss is not None and 0.015 <= loss <= 0.025, f"loss_time={loss}"),
        ("loss coincides with shifter saturation at |p| = pi",
         sat is not None and loss is not None and abs(loss - sat) <= 3e-3,
         f"first_saturation={sat}, loss={loss}"),
    ]
    return checks


def _check_vector(cfg, results):
    rep = results["lock_report"]
    lock, loss = rep["lock_time"], rep["loss_time"]
    checks = [
        ("locks at 15 +- 5 ms", lock is not None and 0.010 <= lock <= 0.020,
         f"lock_time={lock}"),
        ("never loses lock", lock is not None and loss is None,
         f"loss_time={loss}"),
    ]
    if lock is not None and cfg.drift_rate_hz_per_s:
        want = -cfg.drift_rate_hz_per_s / cfg.tdo.fsr * (cfg.duration - lock)
        got = rep["winding_post_lock"]
        checks.append(
            ("post-lock winding tracks drift_rate/FSR within 10%",
             got is not None and abs(got - want) <= 0.1 * abs(want),
             f"{got:.3f} vs {want:.3f} turns"))
    return checks


def _check_noise(cfg, results):
    return [
        ("locked PSD >= 10 dB below free at 10 Hz",
         results["suppression_at_10hz_db"] >= 10.0,
         f"{results['suppression_at_10hz_db']:.1f} dB"),
        ("locked PSD below free at every offset <= 100 Hz",
         results["locked_below_free_upto_100hz"], ""),
        ("locked PSD within 3 dB of free at offsets >= 2 kHz",
         results["max_abs_diff_above_2khz_db"] <= 3.0,
         f"max |diff| = {results['max_abs_diff_above_2khz_db']:.2f} dB"),
    ]


_RUNNERS = {
    "free-run": (_run_free_scenario, _check_free),
    "sweep": (_run_sweep_scenario, _check_sweep),
    "scalar-pll": (lambda c, a: _run_pll_scenario(c, a, vector=False),
                   _check_scalar),
    "vector-pll": (lambda c, a: _run_pll_scenario(c, a, vector=True),
                   _check_vector),
    "noise-characterization": (_run_noise_characterization, _check_noise),
}


def run_scenario(cfg: ScenarioConfig, check: bool = False) -> dict:
    """Run one scenario; writes artifacts + manifest into cfg.out_dir and
    returns the manifest dict.  Raises ConfigError / SimulationDiverged on
    the corresponding failures; check failures are reported in the manifest
    under "checks"."""
    if cfg.scenario not in _RUNNERS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; "
                          f"choose from {sorted(_RUNNERS)}")
    cfg = replace(cfg, tdo=replace(cfg.tdo, seed=cfg.seed))
    runner, checker = _RUNNERS[cfg.scenario]
    art = _Artifacts(Path(cfg.out_dir))
    results = runner(cfg, art)
    manifest = {
        "scenario": cfg.scenario,
        "config": cfg.as_dict(),
        "derived": _derived(cfg),
        "results": results,
        "files": art.files,
    }
    if check:
        checks = checker(cfg, results)
        manifest["checks"] = [
            {"name": n, "passed": bool(ok), "detail": detail}
            for n, ok, detail in checks]
        manifest["checks_passed"] = all(c["passed"] for c in manifest["checks"])
    if cfg.emit.report:
        art.write_manifest(manifest)
    return manifest
