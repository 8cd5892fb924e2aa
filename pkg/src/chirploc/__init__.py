"""Phase-difference localization of LoRa end devices, simulated end to end."""

from chirploc.signal import (
    ChirpConfig,
    Spectrogram,
    baseband_phase,
    chirp_duration,
    instantaneous_frequency,
    phase_integral,
    spectrogram,
    synthesize_passband,
)
from chirploc.channel import ChannelConfig, add_noise, attenuation, propagate
from chirploc.receiver import (
    IqTrace,
    ReceiverConfig,
    lowpass_and_decimate,
    mix,
    receive_analytic,
)
from chirploc.phase import (
    AmbiguityError,
    DpsSequence,
    LowMagnitudeError,
    analytic_dps,
    dps,
    smooth_dps,
    wrapped_phase,
)
from chirploc.locator import (
    Gateway,
    LagEstimate,
    LocalizationResult,
    PipelineOptions,
    Scene,
    apply_clock_error,
    cross_correlate,
    multilaterate,
    refine_peak,
    run_pipeline,
)
from chirploc.estimators import DpsTransformer, HyperbolicLocator, LagTransformer

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError",
    "ChannelConfig",
    "ChirpConfig",
    "DpsSequence",
    "DpsTransformer",
    "Gateway",
    "HyperbolicLocator",
    "IqTrace",
    "LagEstimate",
    "LagTransformer",
    "LocalizationResult",
    "LowMagnitudeError",
    "PipelineOptions",
    "ReceiverConfig",
    "Scene",
    "Spectrogram",
    "add_noise",
    "analytic_dps",
    "apply_clock_error",
    "attenuation",
    "baseband_phase",
    "chirp_duration",
    "cross_correlate",
    "dps",
    "instantaneous_frequency",
    "lowpass_and_decimate",
    "mix",
    "multilaterate",
    "phase_integral",
    "propagate",
    "receive_analytic",
    "refine_peak",
    "run_pipeline",
    "smooth_dps",
    "spectrogram",
    "synthesize_passband",
    "wrapped_phase",
]
