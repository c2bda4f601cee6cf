"""Probability vectors and prediction tables.

A probability vector is stored as a read-only 1-d float64 array; a prediction
set is an ``(N, S, c)`` array holding one probability vector per client and
public sample. Nothing here renormalizes: a vector that is off the simplex is
rejected with the size of the deviation, because quietly fixing it would hide
bugs in attacks and aggregators.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NegativeEntry, ShapeMismatch, SumNotOne

SUM_TOL = 1e-9
MAX_CLASSES = 1000


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def validate(v, tol=SUM_TOL):
    """Return ``v`` as an immutable probability vector or raise.

    Raises NegativeEntry for any entry below zero and SumNotOne when the
    entries do not sum to one within ``tol``.
    """
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] < 2:
        raise DimensionMismatch(f"expected a vector with at least 2 entries, got shape {a.shape}")
    if a.shape[0] > MAX_CLASSES:
        raise DimensionMismatch(f"{a.shape[0]} classes exceeds the supported maximum {MAX_CLASSES}")
    if not np.all(np.isfinite(a)):
        # NaN compares false against every bound, so it has to be caught explicitly
        raise SumNotOne(float(a.sum()), float("inf"))
    neg = np.flatnonzero(a < 0)
    if neg.size:
        raise NegativeEntry(int(neg[0]), float(a[neg[0]]))
    total = float(a.sum())
    if abs(total - 1.0) > tol:
        raise SumNotOne(total, abs(total - 1.0))
    return _frozen(a)


def is_valid(v, tol=SUM_TOL):
    try:
        validate(v, tol)
    except (NegativeEntry, SumNotOne, DimensionMismatch):
        return False
    return True


def count_invalid_rows(table, tol=SUM_TOL):
    """Number of rows (along the last axis) of ``table`` that are not in the simplex."""
    t = np.asarray(table, dtype=np.float64)
    flat = t.reshape(-1, t.shape[-1])
    bad = ~np.all(np.isfinite(flat), axis=1)
    bad |= np.any(flat < 0, axis=1)
    bad |= np.abs(flat.sum(axis=1) - 1.0) > tol
    return int(bad.sum())


def validate_prediction_set(preds, tol=SUM_TOL):
    """Check an ``(N, S, c)`` prediction table cell by cell and return it read-only."""
    p = np.asarray(preds, dtype=np.float64)
    if p.ndim != 3:
        raise ShapeMismatch(f"prediction set must be (clients, samples, classes), got shape {p.shape}")
    if p.shape[0] < 1 or p.shape[1] < 1:
        raise EmptyInput("prediction set has no clients or no samples")
    if p.shape[2] < 2:
        raise DimensionMismatch("prediction set needs at least 2 classes")
    if count_invalid_rows(p, tol):
        flat = p.reshape(-1, p.shape[-1])
        for k, row in enumerate(flat):
            try:
                validate(row, tol)
            except (NegativeEntry, SumNotOne) as exc:
                i, s = divmod(k, p.shape[1])
                exc.args = (f"client {i}, sample {s}: {exc.args[0]}",)
                raise
    return _frozen(p)


def vertex(c, k):
    """One-hot vector of length ``c`` at index ``k``."""
    e = np.zeros(c)
    e[k] = 1.0
    return _frozen(e)


def mix(h, b, alpha):
    """Convex combination ``alpha * b + (1 - alpha) * h``."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    h = np.asarray(h, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if h.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {h.shape} vs {b.shape}")
    return _frozen((1.0 - alpha) * h + alpha * b)


def l2_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def coordwise_median(points):
    """Per-coordinate median of a set of probability vectors.

    The result is deliberately not validated: it can fall outside the simplex,
    which is exactly why it is unsuitable as a prediction aggregator.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptyInput("coordinate-wise median needs at least one point")
    return np.median(pts, axis=0)
