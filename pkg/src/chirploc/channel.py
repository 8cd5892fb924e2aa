"""Free-space propagation with attenuation, delay, frequency bias and AWGN."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from chirploc.signal import ChirpConfig, passband_waveform, sample_times

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelConfig:
    """Propagation and impairment settings.

    ``noise_std`` is white passband noise added before mixing. ``snr_db``,
    when set, overrides it and fixes the post-mixing SNR at every gateway:
    received envelope power ``(alpha*A/2)**2`` over the complex noise power
    across the ADC band, measured before the receiver low-pass.
    """

    v: float = SPEED_OF_LIGHT
    alpha_scale: float = 1.0
    noise_std: float = 0.0
    tx_freq_bias: float = 0.0
    rng_seed: int = 0
    snr_db: Optional[float] = None

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"v must be positive, got {self.v}")
        if not self.alpha_scale > 0:
            raise ValueError(f"alpha_scale must be positive, got {self.alpha_scale}")
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")


def attenuation(chan: ChannelConfig, d: float) -> float:
    """Inverse-square amplitude attenuation ``alpha(d) = c / d**2``."""
    return chan.alpha_scale / (d * d)


def _check_distance(d):
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")


def delayed_times(rate: float, n: int, delay: float, t0: float = 0.0) -> np.ndarray:
    """Emission times ``t0 + k/rate - delay`` for ``k = 0..n-1``.

    When the delay is a whole number of samples the shift is applied to the
    integer sample index, so the result lands exactly on the undelayed grid.
    """
    k = np.arange(n)
    shift = delay * rate
    m = round(shift)
    if abs(shift - m) < 1e-9:
        return t0 + (k - m) / rate
    return t0 + k / rate - delay


def propagate(
    cfg: ChirpConfig,
    chan: ChannelConfig,
    d: float,
    sim_rate: float,
    t_span: float,
    t0: float = 0.0,
) -> np.ndarray:
    """Passband signal observed ``d`` meters from the transmitter.

    The delayed waveform is evaluated in closed form at every sample, so the
    delay need not align with the simulation grid. Samples before the signal
    front arrives are exactly zero.
    """
    _check_distance(d)
    n = sample_times(sim_rate, t_span).size
    u = delayed_times(sim_rate, n, d / chan.v, t0)
    return attenuation(chan, d) * passband_waveform(cfg, u, chan.tx_freq_bias)


def add_noise(samples, noise_std: float, rng_seed=None) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise; deterministic for a given seed."""
    if noise_std < 0:
        raise ValueError(f"noise_std must be non-negative, got {noise_std}")
    x = np.asarray(samples, dtype=float)
    if noise_std == 0:
        return x.copy()
    rng = np.random.default_rng(rng_seed)
    return x + rng.normal(0.0, noise_std, size=x.shape)
