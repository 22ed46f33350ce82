"""tdolab: discrete-time complex-envelope simulation of tunable time-delay
oscillators (optoelectronic-oscillator style) under phase-locked-loop
control, with continuous multi-FSR tuning via a Stuart-Landau-driven vector
modulator."""

from .analysis import (PhaseNoisePsd, RidgeTrack, Spectrogram,
                       phase_noise_psd, ridge_track, stft)
from .blocks import (BoundedPhaseShifter, NoiseCoeffs, PhaseNoiseInjector,
                     Resonator, SaturatingAmp, UnboundedPhaseShifter,
                     VectorModulator)
from .core import (ConfigError, DelayLine, EnvelopeSample,
                   PhaseAliasingError, SimClock, SimulationDiverged,
                   TimeSeries, instantaneous_frequency, samples_for,
                   spawn_rngs, unwrap_phase)
from .pll import (LockReport, LoopFilter, PllConfig, PllRunResult,
                  ReferenceModel, phase_detect, run_scalar_pll,
                  run_vector_pll)
from .stuart_landau import (SLParams, SLState, magnitude_oracle,
                            sl_step_complex, sl_step_real, sl_step_rk4,
                            sl_run, winding_number)
from .tdo import (ModeHopError, RunResult, SweepParams, TdoConfig, TdoState,
                  TuneResult, run_free, run_swept, tune_one_fsr)
from .scenarios import (ScenarioConfig, default_config, list_scenarios,
                        run_scenario, scenario_names)

__version__ = "0.1.0"
