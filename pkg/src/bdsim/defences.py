"""Robust aggregation of client predictions and the ExpGuard meta-aggregator.

Prediction tables are ``(N, S, c)``: clients, public samples, classes. The
per-sample kernels (Weiszfeld, power iteration) come from ``bdsim.kernels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import EmptyInput, ShapeMismatch, TooFewClients

KINDS = ("MEAN", "GM", "CRONUS", "FILTER_SCORE")
SCORE_NORMS = ("range", "max", "none")


@dataclass(frozen=True)
class DefenceSpec:
    """Aggregation rule, optionally wrapped by ExpGuard.

    ``FILTER_SCORE`` only exists as an ExpGuard scoring rule (EGF).
    ``score_norm`` rescales the summed outlier scores before the exponential
    update: ``range`` divides by max - min, ``max`` divides by the maximum,
    ``none`` uses them as summed.
    """

    kind: str = "MEAN"
    expguard: bool = False
    score_norm: str = "range"
    gm_tol: float = 1e-9
    gm_max_iter: int = 500

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown defence kind {self.kind!r}")
        if self.kind == "FILTER_SCORE" and not self.expguard:
            raise ValueError("FILTER_SCORE is only defined as an ExpGuard scoring rule")
        if self.score_norm not in SCORE_NORMS:
            raise ValueError(f"unknown score normalization {self.score_norm!r}")

    @property
    def label(self):
        if self.kind == "FILTER_SCORE":
            return "EGF"
        return f"EXPGUARD+{self.kind}" if self.expguard else self.kind


@dataclass
class AggregatorState:
    """Per-client ExpGuard weights, kept as logs so long runs cannot underflow."""

    log_weights: np.ndarray
    round: int = 0

    @classmethod
    def fresh(cls, n_clients):
        return cls(np.zeros(n_clients), 0)

    @property
    def weights(self):
        """Weights rescaled to sum to the number of clients."""
        lw = self.log_weights - self.log_weights.max()
        w = np.exp(lw)
        return w * (w.shape[0] / w.sum())


class Median(NamedTuple):
    point: np.ndarray
    converged: bool
    iterations: int


class FilterStats(NamedTuple):
    mean: np.ndarray
    direction: np.ndarray
    scores: np.ndarray
    degenerate: bool


def _table(preds):
    P = np.asarray(preds, dtype=np.float64)
    if P.ndim != 3:
        raise ShapeMismatch(f"expected (clients, samples, classes), got shape {P.shape}")
    if P.shape[0] == 0:
        raise EmptyInput("no clients to aggregate")
    return P


def _by_sample(P):
    return np.ascontiguousarray(P.transpose(1, 0, 2))


def mean_agg(preds, weights=None):
    """(Weighted) mean over the client axis; works for ``(N, c)`` and ``(N, S, c)``."""
    P = np.asarray(preds, dtype=np.float64)
    if P.ndim < 2 or P.shape[0] == 0:
        raise EmptyInput("mean needs at least one client")
    if weights is None:
        return P.mean(axis=0)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (P.shape[0],):
        raise ShapeMismatch(f"{w.shape[0]} weights for {P.shape[0]} clients")
    return np.tensordot(w, P, axes=1) / w.sum()


def geometric_median_batch(preds, tol=1e-9, max_iter=500):
    """Per-sample geometric median of an ``(N, S, c)`` table -> ``(S, c)``, converged flags."""
    P = _table(preds)
    med, converged, _ = kernels.geometric_median(_by_sample(P), tol, max_iter)
    return med, converged


def geometric_median(points, tol=1e-9, max_iter=500):
    """Weiszfeld geometric median of a set of probability vectors.

    A non-converged result is still the best iterate (Weiszfeld descends
    monotonically) and is reported with ``converged=False``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptyInput("geometric median needs at least one point")
    med, conv, its = kernels.geometric_median(pts[None], tol, max_iter)
    return Median(med[0], bool(conv[0]), int(its[0]))


def filter_stats_batch(preds, mask=None):
    """Arrays ``mean (S, c)``, ``v (S, c)``, ``s (N, S)``, ``degenerate (S,)``."""
    P = _table(preds)
    if P.shape[0] < 2:
        raise TooFewClients("filter statistics need at least 2 clients")
    m = None if mask is None else np.ascontiguousarray(np.asarray(mask, dtype=bool).T)
    mu, v, s, deg = kernels.filter_stats(_by_sample(P), m)
    return mu, v, s.T, deg


def filter_stats(points):
    """Mean, leading covariance eigenvector and per-client projections at one sample."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise TooFewClients("filter statistics need at least 2 clients")
    mu, v, s, deg = kernels.filter_stats(pts[None])
    return FilterStats(mu[0], v[0], s[0], bool(deg[0]))


def _drop_largest(abs_scores, alive, count):
    """Clear ``count`` alive clients with the largest scores, lowest index first on ties."""
    keyed = np.where(alive, abs_scores, -np.inf)
    order = np.argsort(-keyed, axis=0, kind="stable")[:count]
    out = alive.copy()
    np.put_along_axis(out, order, False, axis=0)
    return out


def cronus_batch(preds, return_survivors=False):
    """Cronus filtering per sample of an ``(N, S, c)`` table -> ``(S, c)``.

    Drops the ceil(N/4) clients with the largest absolute projection on the
    leading eigenvector, recomputes the statistics on the rest, then drops
    again until ceil(N/2) of the original clients remain, and averages them.
    """
    P = _table(preds)
    N, S, _ = P.shape
    if N < 4:
        raise TooFewClients("Cronus needs at least 4 clients")
    first = math.ceil(0.25 * N)
    keep = math.ceil(0.5 * N)
    alive = np.ones((N, S), dtype=bool)
    _, _, s, _ = filter_stats_batch(P, alive)
    alive = _drop_largest(np.abs(s), alive, first)
    if N - first > keep:
        _, _, s, _ = filter_stats_batch(P, alive)
        alive = _drop_largest(np.abs(s), alive, N - first - keep)
    out = np.sum(P * alive[:, :, None], axis=0) / keep
    return (out, alive) if return_survivors else out


def cronus(points):
    pts = np.asarray(points, dtype=np.float64)
    return cronus_batch(pts[:, None, :])[0]


def raw_scores(preds, base, gm_tol=1e-9, gm_max_iter=500):
    """Summed per-client outlier scores over the public samples.

    ``MEAN``/``GM``/``CRONUS`` sum the distance to the robust estimate;
    ``FILTER_SCORE`` sums the absolute projection on the leading eigenvector.
    """
    P = _table(preds)
    if P.shape[0] < 2:
        raise TooFewClients("outlier scores need at least 2 clients")
    if base == "FILTER_SCORE":
        _, _, s, _ = filter_stats_batch(P)
        return np.abs(s).sum(axis=1)
    if base == "MEAN":
        robust = mean_agg(P)
    elif base == "GM":
        robust = geometric_median_batch(P, gm_tol, gm_max_iter)[0]
    elif base == "CRONUS":
        robust = cronus_batch(P)
    else:
        raise ValueError(f"unknown scoring base {base!r}")
    return np.sqrt(np.sum((P - robust[None]) ** 2, axis=2)).sum(axis=1)


def normalize_scores(sigma, mode="range"):
    s = np.asarray(sigma, dtype=np.float64)
    if mode == "none":
        return s.copy()
    if mode == "max":
        top = s.max()
        return s / top if top > 0 else np.zeros_like(s)
    if mode == "range":
        span = s.max() - s.min()
        return (s - s.min()) / span if span > 0 else np.zeros_like(s)
    raise ValueError(f"unknown score normalization {mode!r}")


def expguard_scores(preds, base, score_norm="range", gm_tol=1e-9, gm_max_iter=500):
    return normalize_scores(raw_scores(preds, base, gm_tol, gm_max_iter), score_norm)


def expguard_update(state, sigma):
    """Multiply each weight by exp(-sigma_i); returns a new state."""
    s = np.asarray(sigma, dtype=np.float64)
    if s.shape != state.log_weights.shape:
        raise ShapeMismatch(f"{s.shape[0]} scores for {state.log_weights.shape[0]} clients")
    if np.any(s < 0):
        raise ValueError("outlier scores must be non-negative")
    lw = state.log_weights - s
    lw = lw - lw.max()
    return AggregatorState(lw, state.round + 1)


def expguard_aggregate(preds, state):
    """Weighted mean per sample with the current ExpGuard weights."""
    return mean_agg(_table(preds), state.weights)


def aggregate(preds, spec, state=None):
    """Apply a defence to an ``(N, S, c)`` table.

    Returns ``(labels (S, c), state)``; ``state`` is only used and advanced
    when ExpGuard is on.
    """
    P = _table(preds)
    if spec.expguard:
        if state is None:
            state = AggregatorState.fresh(P.shape[0])
        sigma = expguard_scores(P, spec.kind, spec.score_norm, spec.gm_tol, spec.gm_max_iter)
        state = expguard_update(state, sigma)
        return expguard_aggregate(P, state), state
    if spec.kind == "MEAN":
        return mean_agg(P), state
    if spec.kind == "GM":
        return geometric_median_batch(P, spec.gm_tol, spec.gm_max_iter)[0], state
    if spec.kind == "CRONUS":
        return cronus_batch(P), state
    raise ValueError(f"defence {spec.kind} needs ExpGuard")
