"""RSSI and TDOA ranging baselines, and the matched-filter phase sensitivity demo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from chirploc.receiver import IqTrace
from chirploc.signal import TWO_PI, ChirpConfig, baseband_phase, chirp_duration


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss with Gaussian (dB) fluctuation."""

    p0: float = -40.0
    d0: float = 1.0
    n: float = 2.7
    sigma: float = 0.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"path-loss exponent must be positive, got {self.n}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not self.d0 > 0:
            raise ValueError(f"d0 must be positive, got {self.d0}")


def rssi_at(model: PathLossModel, d, rng_seed=None):
    """RSSI in dBm at distance ``d``: ``p0 - 10*n*log10(d/d0)`` plus N(0, sigma)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    mean = model.p0 - 10.0 * model.n * np.log10(d / model.d0)
    if model.sigma > 0:
        rng = np.random.default_rng(rng_seed)
        mean = mean + rng.normal(0.0, model.sigma, size=mean.shape)
    return mean[()] if mean.ndim == 0 else mean


def rssi_range(model: PathLossModel, rssi):
    """Invert the noiseless model: ``d0 * 10**((p0 - rssi) / (10*n))``."""
    rssi = np.asarray(rssi, dtype=float)
    d = model.d0 * 10.0 ** ((model.p0 - rssi) / (10.0 * model.n))
    return d[()] if d.ndim == 0 else d


def tdoa_timestamp(true_arrival, resolution: float = 1e-6):
    """Counter timestamp: arrival time floored to the counter resolution."""
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    t = np.floor(np.asarray(true_arrival, dtype=float) / resolution) * resolution
    return t[()] if t.ndim == 0 else t


def tdoa_difference(arrival_a, arrival_b, resolution: float = 1e-6,
                    v: float = 299_792_458.0):
    """Distance difference ``d_a - d_b`` from two quantized timestamps."""
    return (tdoa_timestamp(arrival_a, resolution) - tdoa_timestamp(arrival_b, resolution)) * v


def chirp_template(cfg: ChirpConfig, f_s: float, theta: float) -> np.ndarray:
    """Ideal I waveform of one chirp at ADC rate ``f_s`` for phase offset ``theta``."""
    n = int(round(chirp_duration(cfg) * f_s))
    t = np.arange(n) / f_s
    return np.cos(TWO_PI * baseband_phase(cfg, t) + theta)


def matched_filter_detect(trace: IqTrace, template_theta: float, cfg: ChirpConfig):
    """Slide a real I-arm chirp template along ``trace.i``.

    The correlation at each offset is normalized by the template norm and the
    norm of the trace segment under it. Returns ``(index, peak)`` for the
    offset with the largest absolute correlation; ``peak`` keeps its sign, so
    a template in antiphase yields a value near -1.
    """
    tmpl = chirp_template(cfg, trace.f_s, template_theta)
    x = trace.i
    if x.size < tmpl.size:
        raise ValueError(f"trace ({x.size} samples) is shorter than the template ({tmpl.size})")
    raw = sps.correlate(x, tmpl, mode="valid", method="fft")
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    energy = csum[tmpl.size:] - csum[:-tmpl.size]
    norm = np.sqrt(np.maximum(energy, 0.0)) * np.linalg.norm(tmpl)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(norm > 1e-300, raw / norm, 0.0)
    idx = int(np.argmax(np.abs(c)))
    return idx, float(np.clip(c[idx], -1.0, 1.0))
