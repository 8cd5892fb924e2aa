"""LoRa CSS chirp model: timing, instantaneous frequency, phase and synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ChirpConfig:
    """Transmit-side description of a train of preamble chirps.

    Parameters
    ----------
    sf : int
        Spreading factor, 7 to 12.
    bw : float
        Bandwidth in Hz.
    fc : float
        Center frequency in Hz. Must exceed ``bw / 2``.
    theta_tx : float
        Initial phase of the transmitter carrier in radians, in ``[0, 2*pi)``.
    direction : {"up", "down"}
        Sweep direction.
    n_chirps : int
        Number of consecutive chirps. The sweep phase is continuous across
        chirp boundaries.
    amplitude : float
        Envelope value inside the chirp train (rectangular envelope).
    """

    sf: int = 7
    bw: float = 125e3
    fc: float = 868.1e6
    theta_tx: float = 0.0
    direction: Literal["up", "down"] = "up"
    n_chirps: int = 8
    amplitude: float = 1.0

    def __post_init__(self):
        if int(self.sf) != self.sf or not 7 <= self.sf <= 12:
            raise ValueError(f"sf must be an integer in [7, 12], got {self.sf}")
        if not self.bw > 0:
            raise ValueError(f"bw must be positive, got {self.bw}")
        if not self.fc > self.bw / 2:
            raise ValueError(f"fc must exceed bw/2 ({self.bw / 2}), got {self.fc}")
        if not 0.0 <= self.theta_tx < TWO_PI:
            raise ValueError(f"theta_tx must lie in [0, 2*pi), got {self.theta_tx}")
        if self.direction not in ("up", "down"):
            raise ValueError(f"direction must be 'up' or 'down', got {self.direction!r}")
        if int(self.n_chirps) != self.n_chirps or self.n_chirps < 1:
            raise ValueError(f"n_chirps must be a positive integer, got {self.n_chirps}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")

    @property
    def duration(self) -> float:
        return chirp_duration(self)

    @property
    def train_duration(self) -> float:
        """Length of the whole chirp train in seconds."""
        return self.n_chirps * chirp_duration(self)

    @property
    def sweep_sign(self) -> float:
        return 1.0 if self.direction == "up" else -1.0


def chirp_duration(cfg: ChirpConfig) -> float:
    """Return the duration of a single chirp, ``2**sf / bw`` seconds."""
    return (1 << int(cfg.sf)) / cfg.bw


def instantaneous_frequency(cfg: ChirpConfig, t):
    """Instantaneous frequency in Hz at time(s) ``t``; zero outside the train."""
    t = np.asarray(t, dtype=float)
    T = chirp_duration(cfg)
    inside = (t >= 0) & (t < cfg.n_chirps * T)
    tau = np.mod(t, T)
    f = cfg.fc + cfg.sweep_sign * (-cfg.bw / 2 + cfg.bw / T * tau)
    out = np.where(inside, f, 0.0)
    return out[()] if out.ndim == 0 else out


def baseband_phase(cfg: ChirpConfig, t, freq_bias: float = 0.0):
    """Accumulated phase relative to the carrier, ``F(t) - fc*t``, in cycles.

    ``F`` is the antiderivative of the instantaneous frequency (with
    ``freq_bias`` added while the chirp is on). Working relative to the
    carrier keeps magnitudes small, which is what the receiver and DPS code
    need for sub-microradian accuracy at GHz carriers.
    """
    t = np.asarray(t, dtype=float)
    T = chirp_duration(cfg)
    end = cfg.n_chirps * T
    tc = np.clip(t, 0.0, end)
    m = np.floor(tc / T)
    tau = tc - m * T
    # the last chirp ends exactly at m == n_chirps, tau == 0
    s = cfg.sweep_sign
    sweep = s * (-cfg.bw / 2 * tau + cfg.bw / (2 * T) * tau * tau)
    g = sweep + freq_bias * tc - cfg.fc * (t - tc)
    return g[()] if g.ndim == 0 else g


def phase_integral(cfg: ChirpConfig, t, freq_bias: float = 0.0):
    """Closed-form antiderivative ``F(t)`` of the instantaneous frequency, in cycles.

    ``F(0) = 0``; ``F`` is constant before the train starts and after it ends.
    """
    t = np.asarray(t, dtype=float)
    end = cfg.n_chirps * chirp_duration(cfg)
    out = baseband_phase(cfg, t, freq_bias) + cfg.fc * t
    out = np.where(t <= 0, 0.0, out)
    out = np.where(t >= end, (cfg.fc + freq_bias) * end, out)
    return out[()] if out.ndim == 0 else out


def envelope(cfg: ChirpConfig, t):
    """Rectangular amplitude envelope ``A(t)``."""
    t = np.asarray(t, dtype=float)
    return np.where((t >= 0) & (t < cfg.train_duration), cfg.amplitude, 0.0)


def _carrier_cycles(fc: float, t) -> np.ndarray:
    """``fc * t`` reduced modulo one cycle."""
    return np.mod(fc * np.asarray(t, dtype=float), 1.0)


def passband_waveform(cfg: ChirpConfig, u, freq_bias: float = 0.0) -> np.ndarray:
    """Evaluate ``A(u) * sin(2*pi*F(u) + theta_tx)`` at emission times ``u``."""
    u = np.asarray(u, dtype=float)
    cycles = baseband_phase(cfg, u, freq_bias) + _carrier_cycles(cfg.fc, u)
    return envelope(cfg, u) * np.sin(TWO_PI * np.mod(cycles, 1.0) + cfg.theta_tx)


def sample_times(rate: float, t_span: float, t0: float = 0.0) -> np.ndarray:
    n = int(round(t_span * rate))
    if n < 1:
        raise ValueError(f"t_span {t_span} s holds no samples at {rate} Hz")
    return t0 + np.arange(n) / rate


def synthesize_passband(cfg: ChirpConfig, sim_rate: float, t_span: float) -> np.ndarray:
    """Sample the emitted real passband chirp train on ``[0, t_span)``."""
    nyquist = 2.0 * (cfg.fc + cfg.bw / 2)
    if not sim_rate > nyquist:
        raise ValueError(
            f"sim_rate {sim_rate:g} Hz is below the passband Nyquist rate {nyquist:g} Hz"
        )
    return passband_waveform(cfg, sample_times(sim_rate, t_span))


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude STFT, indexed ``magnitudes[time_bin, freq_bin]``."""

    magnitudes: np.ndarray
    time_resolution: float
    freq_resolution: float
    times: np.ndarray
    frequencies: np.ndarray

    def ridge(self) -> np.ndarray:
        """Frequency (Hz) of the strongest bin in every time bin."""
        return self.frequencies[np.argmax(self.magnitudes, axis=1)]


def spectrogram(samples, rate: float, window_len: int, hop: int) -> Spectrogram:
    """Short-time Fourier magnitude with a rectangular window.

    Real input yields the one-sided spectrum, complex input the full
    two-sided spectrum ordered from negative to positive frequency.
    """
    if window_len < 2:
        raise ValueError("window_len must be at least 2")
    if hop < 1:
        raise ValueError("hop must be at least 1")
    x = np.asarray(samples)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    if x.size < window_len:
        raise ValueError(f"input has {x.size} samples, shorter than window_len={window_len}")

    frames = np.lib.stride_tricks.sliding_window_view(x, window_len)[::hop]
    if np.iscomplexobj(x):
        mags = np.abs(np.fft.fftshift(np.fft.fft(frames, axis=1), axes=1))
        freqs = np.fft.fftshift(np.fft.fftfreq(window_len, d=1.0 / rate))
    else:
        mags = np.abs(np.fft.rfft(frames, axis=1))
        freqs = np.fft.rfftfreq(window_len, d=1.0 / rate)
    times = (np.arange(frames.shape[0]) * hop + window_len / 2) / rate
    return Spectrogram(
        magnitudes=mags,
        time_resolution=hop / rate,
        freq_resolution=rate / window_len,
        times=times,
        frequencies=freqs,
    )
