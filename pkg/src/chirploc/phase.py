"""Instantaneous phase and differential phase sampling (DPS).

A DPS sequence holds the differences between consecutive instantaneous
phases, ``delta[i] = Theta[i] - Theta[i+1]``. Every clean element lies in
``[-pi*BW/f_s, pi*BW/f_s]``, so for ``f_s > BW`` each one is the unique
candidate among ``{d - 2*pi, d, d + 2*pi}`` (``d`` the raw atan2 difference)
that falls in ``(-pi, pi)``. The unknown phase constant ``theta_tx - theta_rx``
cancels in every element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from chirploc.receiver import IqTrace
from chirploc.signal import TWO_PI, ChirpConfig, baseband_phase, envelope

DEFAULT_GATE_FRACTION = 0.1


class AmbiguityError(ValueError):
    """The sampling rate does not exceed the bandwidth, so DPS is ambiguous."""


class LowMagnitudeError(ValueError):
    """The I/Q vector is too short for its angle to be meaningful."""


@dataclass(frozen=True, eq=False)
class DpsSequence:
    """Differential phase sequence.

    ``values[i]`` is ``Theta[i] - Theta[i+1]`` in radians and refers to the
    sample pair starting at ``t0 + i/f_s``. ``magnitude[i]`` is the smaller
    envelope of the two samples and ``flags[i]`` marks elements where either
    sample fell below the magnitude gate.
    """

    values: np.ndarray
    f_s: float
    t0: float = 0.0
    magnitude: np.ndarray = None
    flags: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mag = np.ones_like(values) if self.magnitude is None else np.asarray(self.magnitude, dtype=float)
        flags = np.zeros(values.shape, bool) if self.flags is None else np.asarray(self.flags, dtype=bool)
        if values.ndim != 1 or mag.shape != values.shape or flags.shape != values.shape:
            raise ValueError("values, magnitude and flags must be 1-D arrays of equal length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "flags", flags)

    def __len__(self):
        return self.values.size

    @property
    def valid(self) -> np.ndarray:
        return ~self.flags


def _wrap(delta: np.ndarray) -> np.ndarray:
    """Map angles into (-pi, pi]; exact -pi goes to +pi."""
    return math.pi - np.mod(math.pi - np.asarray(delta, dtype=float), TWO_PI)


def gate_threshold(magnitude: np.ndarray, fraction: float = DEFAULT_GATE_FRACTION) -> float:
    """``fraction`` of the median envelope over the samples that carry signal."""
    mag = np.asarray(magnitude, dtype=float)
    if mag.size == 0:
        return 0.0
    top = np.quantile(mag, 0.99)
    if top == 0:
        return 0.0
    return fraction * float(np.median(mag[mag >= 0.5 * top]))


def wrapped_phase(trace: IqTrace, i: int, gate: float = 0.0) -> float:
    """Four-quadrant angle of sample ``i`` in ``(-pi, pi]``.

    Raises :class:`LowMagnitudeError` when the envelope is zero or below
    ``gate``.
    """
    mag = math.hypot(trace.i[i], trace.q[i])
    if mag == 0 or mag < gate:
        raise LowMagnitudeError(f"sample {i} has envelope {mag:.3g} below gate {gate:.3g}")
    return math.atan2(trace.q[i], trace.i[i])


def dps(trace: IqTrace, bw: float, gate_fraction: float = DEFAULT_GATE_FRACTION) -> DpsSequence:
    """Differential phase sequence of an I/Q trace.

    Raises :class:`AmbiguityError` unless ``trace.f_s > bw``.
    """
    if not trace.f_s > bw:
        raise AmbiguityError(
            f"sampling rate {trace.f_s:g} Hz must exceed the chirp bandwidth {bw:g} Hz "
            "for the differential phase to be unambiguous"
        )
    if len(trace) < 2:
        raise ValueError("trace needs at least two samples")
    phi = np.arctan2(trace.q, trace.i)
    values = _wrap(phi[:-1] - phi[1:])
    mag = trace.magnitude
    thr = gate_threshold(mag, gate_fraction)
    low = (mag == 0) | (mag < thr)
    return DpsSequence(
        values=values,
        f_s=trace.f_s,
        t0=trace.t0,
        magnitude=np.minimum(mag[:-1], mag[1:]),
        flags=low[:-1] | low[1:],
    )


def analytic_dps(
    cfg: ChirpConfig,
    d: float,
    v: float,
    f_s: float,
    t0: float,
    n: int,
    freq_bias: float = 0.0,
    lo_offset: float = 0.0,
    clock_offset: float = 0.0,
) -> DpsSequence:
    """Noise-free DPS from the closed-form phase integral.

    ``delta[i] = -2*pi*(F(u[i+1]) - F(u[i])) + 2*pi*fc_rx/f_s`` with
    ``u[i] = t0 + i/f_s - clock_offset - d/v``; ``fc_rx = fc + lo_offset``.
    Elements that touch samples outside the chirp train are flagged and
    wrapped into ``(-pi, pi]``.
    """
    if not f_s > 0:
        raise ValueError(f"f_s must be positive, got {f_s}")
    u = t0 + np.arange(n + 1) / f_s - clock_offset - d / v
    g = baseband_phase(cfg, u, freq_bias)
    values = -TWO_PI * np.diff(g) + TWO_PI * lo_offset / f_s
    env = envelope(cfg, u)
    off = env == 0
    flags = off[:-1] | off[1:]
    values = np.where(flags, _wrap(values), values)
    return DpsSequence(
        values=values,
        f_s=f_s,
        t0=t0,
        magnitude=np.minimum(env[:-1], env[1:]),
        flags=flags,
    )


def smooth_dps(seq: DpsSequence, window: int) -> DpsSequence:
    """Centered moving average of the unflagged elements.

    Flagged elements keep their value and flag and do not contribute to
    their neighbours' averages. Near the ends the window is truncated.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if window > len(seq):
        raise ValueError(f"window {window} is longer than the sequence ({len(seq)})")
    if window == 1:
        return seq
    kernel = np.ones(window)
    valid = seq.valid.astype(float)
    sums = np.convolve(np.where(seq.valid, seq.values, 0.0), kernel, mode="same")
    counts = np.convolve(valid, kernel, mode="same")
    smoothed = np.where(seq.valid, sums / np.maximum(counts, 1.0), seq.values)
    return DpsSequence(
        values=smoothed,
        f_s=seq.f_s,
        t0=seq.t0,
        magnitude=seq.magnitude,
        flags=seq.flags,
        meta=dict(seq.meta),
    )
