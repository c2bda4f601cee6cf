"""Numpy implementations of the per-sample aggregation kernels.

Both functions work on a stack of ``S`` independent problems, each holding
``N`` client predictions over ``c`` classes, and iterate every problem with
exactly the rule the compiled module uses. Samples freeze individually once
they converge.
"""

import numpy as np


def geometric_median(points, tol=1e-9, max_iter=500, eps=1e-12):
    """Weiszfeld iteration from the mean for each of the S problems.

    Returns ``(medians (S, c), converged (S,) bool, iterations (S,) int)``.
    """
    Y = np.ascontiguousarray(points, dtype=np.float64)
    S, N, c = Y.shape
    y = Y.mean(axis=1)
    converged = np.zeros(S, dtype=bool)
    iters = np.zeros(S, dtype=np.int64)
    active = np.arange(S)
    for _ in range(max_iter):
        if active.size == 0:
            break
        Ya = Y[active]
        ya = y[active]
        d = np.sqrt(np.sum((Ya - ya[:, None, :]) ** 2, axis=2))
        w = 1.0 / np.maximum(d, eps)
        y_new = np.sum(w[:, :, None] * Ya, axis=1) / np.sum(w, axis=1)[:, None]
        step = np.sqrt(np.sum((y_new - ya) ** 2, axis=1))
        y[active] = y_new
        iters[active] += 1
        done = step < tol
        converged[active[done]] = True
        active = active[~done]
    return y, converged, iters


def filter_stats(points, mask=None, tol=1e-10, max_iter=1000):
    """Mean, leading covariance eigenvector and projections for each problem.

    ``mask`` (S, N) selects the participating clients; others get score 0.
    The covariance uses 1/n normalization over the participating clients.
    Power iteration starts from the deviation with the largest norm (lowest
    index on ties), and the returned eigenvector has its largest-magnitude
    entry positive.

    Returns ``(mean (S, c), v (S, c), s (S, N), degenerate (S,) bool)``.
    """
    Y = np.ascontiguousarray(points, dtype=np.float64)
    S, N, c = Y.shape
    m = np.ones((S, N), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    mf = m.astype(np.float64)
    n = mf.sum(axis=1)
    mu = np.sum(Y * mf[:, :, None], axis=1) / n[:, None]
    D = (Y - mu[:, None, :]) * mf[:, :, None]
    cov = np.einsum("sni,snj->sij", D, D) / n[:, None, None]

    norms = np.sum(D * D, axis=2)
    start = np.argmax(norms, axis=1)
    v = D[np.arange(S), start].copy()
    vn = np.sqrt(np.sum(v * v, axis=1))
    degenerate = vn <= 1e-15
    v[~degenerate] /= vn[~degenerate, None]

    active = np.flatnonzero(~degenerate)
    for _ in range(max_iter):
        if active.size == 0:
            break
        u = np.einsum("sij,sj->si", cov[active], v[active])
        un = np.sqrt(np.sum(u * u, axis=1))
        dead = un <= 1e-300
        if np.any(dead):
            degenerate[active[dead]] = True
            active = active[~dead]
            u = u[~dead]
            un = un[~dead]
        u /= un[:, None]
        step = np.sqrt(np.sum((u - v[active]) ** 2, axis=1))
        v[active] = u
        active = active[step >= tol]

    v[degenerate] = 0.0
    v[degenerate, 0] = 1.0
    big = np.argmax(np.abs(v), axis=1)
    flip = v[np.arange(S), big] < 0
    v[flip] *= -1.0
    s = np.einsum("snc,sc->sn", D, v)
    s[degenerate] = 0.0
    return mu, v, s, degenerate
