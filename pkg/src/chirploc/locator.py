"""Distance differences from DPS cross-correlation, and multilateration.

Sign convention: for gateways A and B, a positive lag ``K`` means A's DPS
sequence lags B's (``a[i] ~ b[i - K]``), and ``d_hat = K * v / f_s``
estimates ``d_A - d_B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from chirploc.channel import ChannelConfig
from chirploc.phase import AmbiguityError, DpsSequence, dps, smooth_dps
from chirploc.receiver import IqTrace, ReceiverConfig, receive_analytic, receive_passband
from chirploc.signal import ChirpConfig

_TIE_TOL = 1e-12


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``where`` names the gateway or pair."""

    def __init__(self, where: str, cause: Exception):
        super().__init__(f"{where}: {cause}")
        self.where = where
        self.cause = cause


@dataclass(frozen=True)
class Gateway:
    id: str
    pos: tuple
    clock_offset: float = 0.0
    theta_rx: float = 0.0
    rx_freq_bias: float = 0.0

    def __post_init__(self):
        pos = tuple(float(p) for p in self.pos)
        if len(pos) == 2:
            pos = pos + (0.0,)
        if len(pos) != 3:
            raise ValueError(f"gateway {self.id!r}: position must have 2 or 3 coordinates")
        object.__setattr__(self, "pos", pos)


@dataclass(frozen=True)
class Scene:
    """Device, gateways and the shared chirp/channel/receiver settings."""

    device_pos: tuple
    gateways: Sequence[Gateway]
    chirp: ChirpConfig = field(default_factory=ChirpConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)

    def __post_init__(self):
        pos = tuple(float(p) for p in self.device_pos)
        if len(pos) == 2:
            pos = pos + (0.0,)
        object.__setattr__(self, "device_pos", pos)
        object.__setattr__(self, "gateways", tuple(self.gateways))
        if len(self.gateways) < 2:
            raise ValueError("a scene needs at least two gateways")
        ids = [g.id for g in self.gateways]
        if len(set(ids)) != len(ids):
            raise ValueError(f"gateway ids must be unique, got {ids}")
        P = self.gateway_positions
        for a, b in combinations(range(len(P)), 2):
            if np.array_equal(P[a], P[b]):
                raise ValueError(f"gateways {ids[a]!r} and {ids[b]!r} share a position")

    @property
    def v(self) -> float:
        return self.channel.v

    @property
    def gateway_positions(self) -> np.ndarray:
        return np.array([g.pos for g in self.gateways], dtype=float)

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.gateway_positions - np.asarray(self.device_pos), axis=1)

    def true_difference(self, a: int, b: int) -> float:
        """True distance difference ``d_a - d_b``."""
        d = self.distances()
        return float(d[a] - d[b])


@dataclass(frozen=True, eq=False)
class LagEstimate:
    k: int
    peak: float
    d_hat: float
    f_s: float
    v: float
    k_refined: Optional[float] = None
    refine_ok: Optional[bool] = None
    lags: Optional[np.ndarray] = field(default=None, repr=False)
    correlation: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    position: Optional[np.ndarray]
    pairwise: dict
    residual_norm: float = float("nan")
    iterations: int = 0
    converged: bool = False
    singular: bool = False
    traces: dict = field(default_factory=dict, repr=False)
    sequences: dict = field(default_factory=dict, repr=False)


def _lag_sums(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return sps.correlate(x, y, mode="full", method="fft")


def correlation_curve(a: DpsSequence, b: DpsSequence, max_lag: int,
                      include_flagged: bool = False):
    """Normalized (Pearson) correlation of ``a[i]`` with ``b[i - k]`` for ``|k| <= max_lag``.

    Each lag uses only the overlapping, unflagged pairs; the mean is removed
    and the norm taken over that same overlap. Lags without a usable overlap
    are NaN. Returns ``(lags, r)``.
    """
    va = np.ones(len(a)) if include_flagged else a.valid.astype(float)
    vb = np.ones(len(b)) if include_flagged else b.valid.astype(float)
    # centring on the global means keeps the running sums well conditioned
    xa = np.where(va > 0, a.values - a.values[va > 0].mean() if va.any() else 0.0, 0.0)
    xb = np.where(vb > 0, b.values - b.values[vb > 0].mean() if vb.any() else 0.0, 0.0)

    all_lags = sps.correlation_lags(len(a), len(b), mode="full")
    sel = np.abs(all_lags) <= max_lag
    lags = all_lags[sel]
    w = _lag_sums(va, vb)[sel]
    sa = _lag_sums(xa, vb)[sel]
    sb = _lag_sums(va, xb)[sel]
    saa = _lag_sums(xa * xa, vb)[sel]
    sbb = _lag_sums(va, xb * xb)[sel]
    sab = _lag_sums(xa, xb)[sel]

    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.rint(w)
        cov = sab - sa * sb / w
        var_a = saa - sa * sa / w
        var_b = sbb - sb * sb / w
        r = cov / np.sqrt(var_a * var_b)
    scale_a = saa.max(initial=0.0) * 1e-12
    scale_b = sbb.max(initial=0.0) * 1e-12
    bad = (w < 2) | (var_a <= scale_a) | (var_b <= scale_b) | ~np.isfinite(r)
    r = np.where(bad, np.nan, np.clip(r, -1.0, 1.0))
    return lags, r


def refine_peak(correlation, index: int):
    """Parabolic interpolation of a correlation peak.

    ``correlation`` is the sampled curve and ``index`` the position of its
    maximum. Returns ``(offset, ok)``: the fractional position of the vertex
    relative to ``index`` and whether the neighbourhood was curved enough to
    fit. Raises ``ValueError`` if the peak sits on the boundary.
    """
    c = np.asarray(correlation, dtype=float)
    if index <= 0 or index >= c.size - 1:
        raise ValueError("peak lies on the search boundary; cannot refine")
    ym, y0, yp = c[index - 1], c[index], c[index + 1]
    denom = ym - 2 * y0 + yp
    if not np.isfinite(denom) or denom >= -1e-15 * max(abs(y0), 1.0):
        return 0.0, False
    delta = 0.5 * (ym - yp) / denom
    if abs(delta) > 1.0:
        return 0.0, False
    return float(delta), True


def cross_correlate(
    a: DpsSequence,
    b: DpsSequence,
    max_lag: int,
    v: float = 299_792_458.0,
    include_flagged: bool = False,
    refine: bool = False,
) -> LagEstimate:
    """Estimate the lag of ``a`` relative to ``b`` and the distance difference.

    ``K`` maximizes the normalized correlation over ``[-max_lag, max_lag]``;
    ties go to the smallest ``|K|``, then to the negative lag. If the two
    sequences start at different gateway-clock times, the start difference
    (an integer number of samples) is added to ``K``.
    """
    if a.f_s != b.f_s:
        raise ValueError(f"sampling rates differ: {a.f_s:g} vs {b.f_s:g} Hz")
    n = min(len(a), len(b))
    if n == 0:
        raise ValueError("empty overlap")
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if n - max_lag < 0.5 * n:
        raise ValueError(
            f"max_lag {max_lag} leaves less than 50% overlap of {n}-sample sequences"
        )
    start = (a.t0 - b.t0) * a.f_s
    start_k = int(round(start))
    if abs(start - start_k) > 1e-6:
        raise ValueError("sequence start times differ by a non-integer number of samples")

    lags, r = correlation_curve(a, b, max_lag, include_flagged)
    if not np.isfinite(r).any():
        raise ValueError("no usable overlap: every lag is empty or fully flagged")
    rmax = np.nanmax(r)
    ties = np.flatnonzero(r >= rmax - _TIE_TOL)
    best = min(ties, key=lambda j: (abs(lags[j]), lags[j]))
    k = int(lags[best]) + start_k
    peak = float(r[best])

    k_refined, ok = None, None
    lag_value = float(k)
    if refine:
        try:
            offset, ok = refine_peak(np.nan_to_num(r, nan=-1.0), int(best))
        except ValueError:
            offset, ok = 0.0, False
        k_refined = k + offset
        lag_value = k_refined
    return LagEstimate(
        k=k,
        peak=peak,
        d_hat=lag_value * v / a.f_s,
        f_s=a.f_s,
        v=v,
        k_refined=k_refined,
        refine_ok=ok,
        lags=lags + start_k,
        correlation=r,
    )


def apply_clock_error(estimate: LagEstimate, delta_t: float, f_s: float, v: float) -> float:
    """Distance difference seen under a gateway sync error: ``(K + dt*f_s) * v / f_s``."""
    k = estimate.k_refined if estimate.k_refined is not None else estimate.k
    return (k + delta_t * f_s) * v / f_s


def _normalize_estimates(estimates) -> list:
    if isinstance(estimates, dict):
        items = [(int(i), int(j), float(d)) for (i, j), d in estimates.items()]
    else:
        items = [(int(i), int(j), float(d)) for i, j, d in estimates]
    if not items:
        raise ValueError("no distance-difference estimates given")
    return items


def tdoa_objective(x, gateways, estimates) -> float:
    """Sum of squared hyperbolic residuals at position ``x``."""
    g = np.asarray(gateways, dtype=float)
    x = np.asarray(x, dtype=float)
    dist = np.linalg.norm(g - x, axis=-1)
    return float(sum((dist[i] - dist[j] - d) ** 2 for i, j, d in _normalize_estimates(estimates)))


def multilaterate(
    gateways,
    estimates,
    initial_guess=None,
    dims: Optional[int] = None,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> LocalizationResult:
    """Hyperbolic least squares by damped Gauss-Newton (Levenberg-Marquardt).

    Minimizes ``sum((|x - g_i| - |x - g_j| - d_ij)**2)`` over the pairs in
    ``estimates`` (a mapping ``{(i, j): d_ij}`` or ``(i, j, d_ij)`` triples,
    indices into ``gateways``). With ``dims=None`` the problem is solved in the
    plane when all gateways share one height, otherwise in 3-D. The initial
    guess defaults to the gateway centroid.
    """
    G = np.asarray(gateways, dtype=float)
    if G.ndim != 2 or G.shape[1] not in (2, 3):
        raise ValueError("gateways must be an (m, 2) or (m, 3) array")
    if G.shape[1] == 2:
        G = np.column_stack([G, np.zeros(len(G))])
    items = _normalize_estimates(estimates)
    if dims is None:
        dims = 2 if np.ptp(G[:, 2]) == 0 else 3
    used = sorted({i for i, _, _ in items} | {j for _, j, _ in items})
    if len(used) < dims + 1:
        raise ValueError(f"{dims}-D multilateration needs at least {dims + 1} gateways, got {len(used)}")

    x0 = G.mean(axis=0) if initial_guess is None else np.array(initial_guess, dtype=float)
    if x0.size == 2:
        x0 = np.append(x0, G[0, 2])
    z_plane = G[0, 2]
    Gd = G[:, :dims]
    ii = np.array([i for i, _, _ in items])
    jj = np.array([j for _, j, _ in items])
    dd = np.array([d for _, _, d in items])

    def residuals(x):
        diff = x - Gd
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        r = dist[ii] - dist[jj] - dd
        unit = diff / np.maximum(dist, 1e-12)[:, None]
        return r, unit[ii] - unit[jj]

    x = x0[:dims].copy()
    r, J = residuals(x)
    cost = float(r @ r)
    lam = 1e-3 * max(float(np.max(np.sum(J * J, axis=0))), 1e-12)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(JtJ), 1e-9 * max(np.trace(JtJ), 1e-12))
        step = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
        x_new = x + step
        r_new, J_new = residuals(x_new)
        cost_new = float(r_new @ r_new)
        if cost_new <= cost:
            x, r, J, cost = x_new, r_new, J_new, cost_new
            lam = max(lam / 3.0, 1e-15)
            if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(x)):
                converged = True
                break
        else:
            lam *= 4.0
            if lam > 1e15:
                break
        if cost == 0.0 or np.linalg.norm(J.T @ r) <= 1e-14 * (1.0 + math.sqrt(cost)):
            converged = True
            break

    JtJ = J.T @ J
    singular = bool(np.linalg.cond(JtJ) > 1e12) if np.all(np.isfinite(JtJ)) else True
    pos = np.append(x, z_plane) if dims == 2 else x
    return LocalizationResult(
        position=pos,
        pairwise={},
        residual_norm=float(math.sqrt(cost)),
        iterations=it,
        converged=converged,
        singular=singular,
    )


@dataclass(frozen=True)
class PipelineOptions:
    """Knobs of :func:`run_pipeline`.

    ``capture_start`` and ``capture_span`` set the common capture window in
    gateway-clock seconds; the default span covers the whole chirp train plus
    the largest propagation delay and clock offset. ``max_lag=None`` derives
    the search range of each pair from its baseline (``|d_A - d_B|`` cannot
    exceed the gateway separation) plus the clock-offset difference.

    Only the chirp boundaries (where the frequency wraps) carry lag
    information: a normalized correlation of two pure ramps is 1 at every
    lag. A short capture window must therefore place the boundary so that
    every overlap the lag search reaches still contains it at both gateways.
    """

    capture_start: float = 0.0
    capture_span: Optional[float] = None
    max_lag: Optional[int] = None
    smoothing_window: int = 1
    refine: bool = False
    include_flagged: bool = False
    gate_fraction: float = 0.1
    receive_path: str = "analytic"
    sim_rate: Optional[float] = None
    multilaterate: bool = True
    initial_guess: Optional[tuple] = None
    rng_seed: Optional[int] = None
    keep_signals: bool = False


def _capture_span(scene: Scene, opts: PipelineOptions) -> float:
    if opts.capture_span is not None:
        return opts.capture_span
    delay = scene.distances().max() / scene.v
    clock = max(abs(g.clock_offset) for g in scene.gateways)
    return scene.chirp.train_duration + delay + clock - opts.capture_start


def _pair_max_lag(scene: Scene, a: int, b: int, f_s: float, n: int, opts: PipelineOptions) -> int:
    if opts.max_lag is not None:
        return int(opts.max_lag)
    P = scene.gateway_positions
    baseline = float(np.linalg.norm(P[a] - P[b]))
    dt = abs(scene.gateways[a].clock_offset - scene.gateways[b].clock_offset)
    lag = int(math.ceil((baseline / scene.v + dt) * f_s)) + 2
    return min(lag, n // 2)


def receive_gateway(scene: Scene, index: int, f_s: float, opts: PipelineOptions, rng) -> IqTrace:
    gw = scene.gateways[index]
    rx = replace(scene.receiver, f_s=f_s, theta_rx=gw.theta_rx, rx_freq_bias=gw.rx_freq_bias)
    d = float(scene.distances()[index])
    span = _capture_span(scene, opts)
    if opts.receive_path == "analytic":
        return receive_analytic(
            scene.chirp, scene.channel, rx, d, span,
            t0=opts.capture_start, clock_offset=gw.clock_offset, rng=rng, sim_rate=opts.sim_rate,
        )
    if opts.receive_path == "passband":
        if opts.sim_rate is None:
            raise ValueError("the passband receive path needs sim_rate")
        return receive_passband(
            scene.chirp, scene.channel, rx, d, span, opts.sim_rate,
            t0=opts.capture_start, clock_offset=gw.clock_offset, rng=rng,
        )
    raise ValueError(f"unknown receive_path {opts.receive_path!r}")


def run_pipeline(scene: Scene, rx_f_s: Optional[float] = None,
                 options: Optional[PipelineOptions] = None) -> LocalizationResult:
    """Receive at every gateway, correlate every pair, then multilaterate.

    Pairs are ``(i, j)`` with ``i < j`` in gateway order and estimate
    ``d_i - d_j``. Multilateration runs when enough gateways are present
    (three in the plane, four in space); otherwise ``position`` is None.
    """
    opts = options or PipelineOptions()
    f_s = scene.receiver.f_s if rx_f_s is None else rx_f_s
    bw = scene.chirp.bw
    if not f_s > bw:
        raise AmbiguityError(
            f"sampling rate {f_s:g} Hz must exceed the chirp bandwidth {bw:g} Hz "
            "for the differential phase to be unambiguous"
        )
    seed = scene.channel.rng_seed if opts.rng_seed is None else opts.rng_seed
    streams = np.random.SeedSequence(seed).spawn(len(scene.gateways))

    traces, seqs = {}, {}
    for idx, gw in enumerate(scene.gateways):
        try:
            trace = receive_gateway(scene, idx, f_s, opts, np.random.default_rng(streams[idx]))
            seq = dps(trace, bw, opts.gate_fraction)
            if opts.smoothing_window > 1:
                seq = smooth_dps(seq, opts.smoothing_window)
        except AmbiguityError:
            raise
        except Exception as exc:
            raise PipelineError(f"gateway {gw.id!r}", exc) from exc
        traces[gw.id] = trace
        seqs[gw.id] = seq

    pairwise = {}
    estimates = {}
    for a, b in combinations(range(len(scene.gateways)), 2):
        ga, gb = scene.gateways[a], scene.gateways[b]
        sa, sb = seqs[ga.id], seqs[gb.id]
        try:
            lag = _pair_max_lag(scene, a, b, f_s, min(len(sa), len(sb)), opts)
            est = cross_correlate(sa, sb, lag, v=scene.v,
                                  include_flagged=opts.include_flagged, refine=opts.refine)
        except Exception as exc:
            raise PipelineError(f"pair ({ga.id!r}, {gb.id!r})", exc) from exc
        pairwise[(ga.id, gb.id)] = est
        estimates[(a, b)] = est.d_hat

    P = scene.gateway_positions
    dims = 2 if np.ptp(P[:, 2]) == 0 else 3
    kept = dict(traces=traces, sequences=seqs) if opts.keep_signals else {}
    if opts.multilaterate and len(scene.gateways) >= dims + 1:
        try:
            fit = multilaterate(P, estimates, initial_guess=opts.initial_guess, dims=dims)
        except Exception as exc:
            raise PipelineError("multilateration", exc) from exc
        return replace(fit, pairwise=pairwise, **kept)
    return LocalizationResult(position=None, pairwise=pairwise, **kept)
