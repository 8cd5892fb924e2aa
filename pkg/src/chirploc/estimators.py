"""scikit-learn style wrappers around the DPS pipeline.

The three estimators chain in :func:`sklearn.pipeline.make_pipeline`::

    I/Q captures --DpsTransformer--> DPS --LagTransformer--> d_hat --HyperbolicLocator--> x

Arrays are batched over events: I/Q input has shape
``(n_events, n_gateways, n_samples)`` (complex) or the same with a trailing
axis of 2 holding ``[I, Q]``.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from chirploc.channel import SPEED_OF_LIGHT
from chirploc.locator import cross_correlate, multilaterate
from chirploc.phase import DpsSequence, dps, smooth_dps
from chirploc.receiver import IqTrace


def _as_iq(X) -> np.ndarray:
    """Validate I/Q input and return it as ``(events, gateways, samples, 2)`` floats."""
    X = np.asarray(X)
    if np.iscomplexobj(X):
        X = np.stack([X.real, X.imag], axis=-1)
    X = check_array(X, allow_nd=True, ensure_min_features=1, ensure_all_finite=True)
    if X.ndim != 4 or X.shape[-1] != 2:
        raise ValueError(
            "expected complex (n_events, n_gateways, n_samples) or real "
            f"(n_events, n_gateways, n_samples, 2) input, got shape {X.shape}"
        )
    return X


def _as_dps(X) -> np.ndarray:
    X = check_array(X, allow_nd=True, ensure_all_finite="allow-nan")
    if X.ndim != 3:
        raise ValueError(f"expected (n_events, n_gateways, n_samples) DPS input, got shape {X.shape}")
    return X


def _default_pairs(n_gateways: int) -> list:
    return list(combinations(range(n_gateways), 2))


class DpsTransformer(TransformerMixin, BaseEstimator):
    """I/Q captures to differential phase sequences.

    Flagged (low-magnitude) samples come out as NaN, so the output has
    ``n_samples - 1`` columns per gateway.
    """

    def __init__(self, f_s=20e6, bw=125e3, gate_fraction=0.1, smoothing_window=1):
        self.f_s = f_s
        self.bw = bw
        self.gate_fraction = gate_fraction
        self.smoothing_window = smoothing_window

    def fit(self, X, y=None):
        X = _as_iq(X)
        self.n_gateways_ = X.shape[1]
        self.n_samples_ = X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_gateways_")
        X = _as_iq(X)
        if X.shape[1] != self.n_gateways_:
            raise ValueError(f"fitted on {self.n_gateways_} gateways, got {X.shape[1]}")
        out = np.empty(X.shape[:2] + (X.shape[2] - 1,))
        for e in range(X.shape[0]):
            for g in range(X.shape[1]):
                trace = IqTrace(i=X[e, g, :, 0], q=X[e, g, :, 1], f_s=self.f_s)
                seq = dps(trace, self.bw, self.gate_fraction)
                if self.smoothing_window > 1:
                    seq = smooth_dps(seq, self.smoothing_window)
                out[e, g] = np.where(seq.flags, np.nan, seq.values)
        return out


class LagTransformer(TransformerMixin, BaseEstimator):
    """DPS sequences to pairwise distance differences ``d_i - d_j`` in meters.

    ``pairs`` lists gateway index pairs ``(i, j)``; by default every pair with
    ``i < j``. NaN entries of the input are treated as flagged samples.
    """

    def __init__(self, f_s=20e6, v=SPEED_OF_LIGHT, max_lag=None, refine=False, pairs=None):
        self.f_s = f_s
        self.v = v
        self.max_lag = max_lag
        self.refine = refine
        self.pairs = pairs

    def fit(self, X, y=None):
        X = _as_dps(X)
        self.n_gateways_ = X.shape[1]
        self.pairs_ = [tuple(p) for p in self.pairs] if self.pairs is not None else _default_pairs(X.shape[1])
        for i, j in self.pairs_:
            if not (0 <= i < X.shape[1] and 0 <= j < X.shape[1]) or i == j:
                raise ValueError(f"invalid gateway pair {(i, j)} for {X.shape[1]} gateways")
        return self

    def transform(self, X):
        check_is_fitted(self, "pairs_")
        X = _as_dps(X)
        n = X.shape[2]
        max_lag = n // 2 if self.max_lag is None else int(self.max_lag)
        out = np.empty((X.shape[0], len(self.pairs_)))
        for e in range(X.shape[0]):
            seqs = []
            for g in range(X.shape[1]):
                flags = np.isnan(X[e, g])
                seqs.append(DpsSequence(values=np.where(flags, 0.0, X[e, g]), f_s=self.f_s, flags=flags))
            for p, (i, j) in enumerate(self.pairs_):
                est = cross_correlate(seqs[i], seqs[j], max_lag, v=self.v, refine=self.refine)
                out[e, p] = est.d_hat
        return out


class HyperbolicLocator(RegressorMixin, BaseEstimator):
    """Distance differences to device positions by hyperbolic least squares.

    ``gateways`` is an ``(m, 2)`` or ``(m, 3)`` array of positions; ``pairs``
    must match the column order of ``X`` (default: every ``i < j`` pair).
    ``predict`` returns ``(n_events, 3)`` positions. Nothing is learned in
    ``fit``; it validates the geometry.
    """

    def __init__(self, gateways=None, pairs=None, initial_guess=None, dims=None, max_iter=200):
        self.gateways = gateways
        self.pairs = pairs
        self.initial_guess = initial_guess
        self.dims = dims
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if self.gateways is None:
            raise ValueError("gateways must be given")
        G = check_array(self.gateways, ensure_min_samples=2)
        if G.shape[1] not in (2, 3):
            raise ValueError("gateways must have 2 or 3 coordinates")
        self.gateways_ = G
        self.pairs_ = [tuple(p) for p in self.pairs] if self.pairs is not None else _default_pairs(len(G))
        X = check_array(X)
        if X.shape[1] != len(self.pairs_):
            raise ValueError(f"X has {X.shape[1]} columns but there are {len(self.pairs_)} pairs")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "gateways_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        out = np.empty((X.shape[0], 3))
        for e, row in enumerate(X):
            est = [(i, j, d) for (i, j), d in zip(self.pairs_, row)]
            res = multilaterate(self.gateways_, est, initial_guess=self.initial_guess,
                                dims=self.dims, max_iter=self.max_iter)
            out[e] = res.position
        return out
