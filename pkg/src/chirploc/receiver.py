"""SDR front end: quadrature mixing, low-pass filtering and ADC decimation.

Two routes produce an :class:`IqTrace`. :func:`receive_analytic` evaluates the
post-filter I/Q closed form directly at the ADC instants and is the default
everywhere. The explicit route, :func:`mix` followed by
:func:`lowpass_and_decimate`, multiplies a simulated passband signal with the
local carriers and filters it; it is only practical at reduced carrier
frequencies and exists to check the closed form.

The post-filter amplitude uses the delayed envelope ``A(t - d/v)``, consistent
with the propagated signal, rather than the undelayed ``A(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal as sps

from chirploc.channel import (
    ChannelConfig,
    _check_distance,
    add_noise,
    attenuation,
    propagate,
)
from chirploc.signal import TWO_PI, ChirpConfig, baseband_phase, envelope


@dataclass(frozen=True)
class ReceiverConfig:
    """Local oscillator, filter and ADC settings of one gateway."""

    fc: float = 868.1e6
    theta_rx: float = 0.0
    f_s: float = 20e6
    lpf_cutoff: float = 125e3
    rx_freq_bias: float = 0.0

    def __post_init__(self):
        if not self.f_s > 0:
            raise ValueError(f"f_s must be positive, got {self.f_s}")
        if not 0 < self.lpf_cutoff < self.fc:
            raise ValueError(
                f"lpf_cutoff must lie in (0, fc={self.fc:g}), got {self.lpf_cutoff:g}"
            )

    @property
    def carrier(self) -> float:
        """Actual local oscillator frequency, including its bias."""
        return self.fc + self.rx_freq_bias


@dataclass(frozen=True, eq=False)
class IqTrace:
    """Baseband I/Q samples at rate ``f_s``; ``t0`` is in the gateway's clock."""

    i: np.ndarray
    q: np.ndarray
    f_s: float
    t0: float = 0.0
    fc: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        i = np.asarray(self.i, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if i.shape != q.shape or i.ndim != 1:
            raise ValueError("i and q must be one-dimensional and of equal length")
        if not self.f_s > 0:
            raise ValueError(f"f_s must be positive, got {self.f_s}")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "q", q)

    def __len__(self):
        return self.i.size

    @property
    def iq(self) -> np.ndarray:
        return self.i + 1j * self.q

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.i, self.q)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.i.size) / self.f_s


def mix(passband, sim_rate: float, rx: ReceiverConfig, t0: float = 0.0):
    """Multiply by the local carriers ``sin`` (I arm) and ``cos`` (Q arm).

    ``t0`` is the gateway-clock time of the first passband sample. The outputs
    still contain the ``2*fc`` image.
    """
    s = np.asarray(passband, dtype=float)
    k = np.arange(s.size)
    cycles = np.mod(rx.carrier * t0 + rx.carrier * k / sim_rate, 1.0)
    arg = TWO_PI * cycles + rx.theta_rx
    return s * np.sin(arg), s * np.cos(arg)


def design_lowpass(cutoff: float, rate: float, transition: Optional[float] = None,
                   atten_db: float = 80.0) -> np.ndarray:
    """Linear-phase Kaiser windowed-sinc low-pass taps (odd length)."""
    nyq = rate / 2
    if not 0 < cutoff < nyq:
        raise ValueError(f"cutoff {cutoff:g} Hz must lie below Nyquist {nyq:g} Hz")
    if transition is None:
        transition = min(0.8 * cutoff, 2 * (nyq - cutoff))
    numtaps, beta = sps.kaiserord(atten_db, transition / nyq)
    numtaps |= 1
    return sps.firwin(numtaps, cutoff, window=("kaiser", beta), fs=rate)


def lowpass_and_decimate(s_i, s_q, sim_rate: float, rx: ReceiverConfig,
                         t0: float = 0.0, taps: Optional[np.ndarray] = None) -> IqTrace:
    """Low-pass both arms and keep every ``sim_rate / f_s``-th sample.

    The filter is applied centered (zero group delay), so decimated sample
    ``k`` still corresponds to time ``t0 + k/f_s``.
    """
    ratio = sim_rate / rx.f_s
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise ValueError(
            f"sim_rate {sim_rate:g} Hz is not an integer multiple of f_s {rx.f_s:g} Hz"
        )
    if taps is None:
        taps = design_lowpass(rx.lpf_cutoff, sim_rate)
    i = sps.oaconvolve(np.asarray(s_i, dtype=float), taps, mode="same")[::m]
    q = sps.oaconvolve(np.asarray(s_q, dtype=float), taps, mode="same")[::m]
    return IqTrace(i=i, q=q, f_s=rx.f_s, t0=t0, fc=rx.fc)


def iq_noise_std(cfg: ChirpConfig, chan: ChannelConfig, rx: ReceiverConfig, d: float,
                 sim_rate: Optional[float] = None) -> float:
    """Per-component std of the mixer-output noise across the ADC band ``[-f_s/2, f_s/2]``.

    This is the noise before the receiver low-pass, so ``chan.snr_db`` is the
    post-mixing SNR ``(alpha*A/2)**2 / (2*sigma**2)`` at the ADC rate. Without
    ``snr_db``, ``chan.noise_std`` is white passband noise at ``sim_rate``
    (default four times the top of the band): mixing halves its power per arm
    and only the ``f_s / sim_rate`` share of it lands in the ADC band.
    """
    if chan.snr_db is not None:
        amp = attenuation(chan, d) * cfg.amplitude / 2
        return amp / math.sqrt(2 * 10 ** (chan.snr_db / 10))
    if chan.noise_std == 0:
        return 0.0
    if sim_rate is None:
        sim_rate = 4 * (cfg.fc + cfg.bw)
    return chan.noise_std * math.sqrt(rx.f_s / (2 * sim_rate))


def bandlimited_noise(n: int, std: float, f_s: float, cutoff: float,
                      rng: np.random.Generator) -> np.ndarray:
    """White complex Gaussian noise (``std`` per component) after an ideal low-pass at ``cutoff``."""
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if cutoff < f_s / 2:
        keep = np.abs(np.fft.fftfreq(n, d=1.0 / f_s)) <= cutoff
        w = np.fft.ifft(np.fft.fft(w) * keep)
    return std * w


def receive_analytic(
    cfg: ChirpConfig,
    chan: ChannelConfig,
    rx: ReceiverConfig,
    d: float,
    t_span: float,
    t0: float = 0.0,
    clock_offset: float = 0.0,
    rng=None,
    sim_rate: Optional[float] = None,
) -> IqTrace:
    """Closed-form I/Q at the ADC instants of a gateway ``d`` meters away.

    ``I = alpha*A/2 * cos(Theta)`` and ``Q = alpha*A/2 * sin(Theta)`` with
    ``Theta = 2*pi*F(t - d/v) - 2*pi*fc_rx*t + theta_tx - theta_rx``. The
    gateway clock runs ``clock_offset`` seconds ahead of true time: its sample
    at local time ``t`` is taken at true time ``t - clock_offset``.

    Noise (when configured) is white across the ADC band, then passed
    through an ideal low-pass at ``rx.lpf_cutoff`` like the signal would be.
    It is drawn from ``rng`` (a Generator or seed; defaults to
    ``chan.rng_seed``).
    """
    _check_distance(d)
    n = int(round(t_span * rx.f_s))
    if n < 2:
        raise ValueError(f"t_span {t_span} s holds fewer than two samples at {rx.f_s:g} Hz")
    delay = d / chan.v
    t_local = t0 + np.arange(n) / rx.f_s
    u = t_local - clock_offset - delay

    lo_offset = rx.carrier - cfg.fc
    const = np.mod(cfg.fc * (clock_offset + delay), 1.0) + np.mod(lo_offset * t0, 1.0)
    cycles = (
        baseband_phase(cfg, u, chan.tx_freq_bias)
        - const
        - np.mod(lo_offset * np.arange(n) / rx.f_s, 1.0)
    )
    theta = cfg.theta_tx - rx.theta_rx
    arg = TWO_PI * np.mod(cycles, 1.0) + theta
    amp = attenuation(chan, d) * envelope(cfg, u) / 2
    i = amp * np.cos(arg)
    q = amp * np.sin(arg)

    std = iq_noise_std(cfg, chan, rx, d, sim_rate)
    if std > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(
            chan.rng_seed if rng is None else rng
        )
        w = bandlimited_noise(n, std, rx.f_s, rx.lpf_cutoff, gen)
        i = i + w.real
        q = q + w.imag
    return IqTrace(i=i, q=q, f_s=rx.f_s, t0=t0, fc=rx.fc)


def receive_passband(
    cfg: ChirpConfig,
    chan: ChannelConfig,
    rx: ReceiverConfig,
    d: float,
    t_span: float,
    sim_rate: float,
    t0: float = 0.0,
    clock_offset: float = 0.0,
    rng=None,
) -> IqTrace:
    """Explicit route: propagate, add passband noise, mix, filter, decimate."""
    s = propagate(cfg, chan, d, sim_rate, t_span, t0=t0 - clock_offset)
    if chan.snr_db is not None:
        sigma = iq_noise_std(cfg, chan, rx, d) * math.sqrt(2 * sim_rate / rx.f_s)
    else:
        sigma = chan.noise_std
    if sigma > 0:
        s = add_noise(s, sigma, chan.rng_seed if rng is None else rng)
    s_i, s_q = mix(s, sim_rate, rx, t0=t0)
    return lowpass_and_decimate(s_i, s_q, sim_rate, rx, t0=t0)
