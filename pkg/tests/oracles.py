"""Independent reference computations used to derive expected test values.

Everything here is written with plain loops and the math module so it shares
no code path with the package under test.
"""

import math

import numpy as np


def naive_forward(flat, sizes, x, activation="tanh"):
    flat = [float(v) for v in flat]
    a = [float(v) for v in x]
    pos = 0
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        W = [[flat[pos + i * fan_out + j] for j in range(fan_out)] for i in range(fan_in)]
        pos += fan_in * fan_out
        b = flat[pos : pos + fan_out]
        pos += fan_out
        z = [sum(a[i] * W[i][j] for i in range(fan_in)) + b[j] for j in range(fan_out)]
        if k < n_layers - 1:
            a = [math.tanh(v) if activation == "tanh" else max(v, 0.0) for v in z]
        else:
            m = max(z)
            e = [math.exp(v - m) for v in z]
            s = sum(e)
            return [v / s for v in e]


def naive_cel(h, y):
    return -sum(yi * math.log(hi) for hi, yi in zip(h, y))


def naive_mse(h, y):
    return 0.5 * sum((hi - yi) ** 2 for hi, yi in zip(h, y))


def central_difference(f, w, step=1e-6):
    w = np.array(w, dtype=np.float64)
    g = np.zeros_like(w)
    for k in range(w.shape[0]):
        wp = w.copy()
        wm = w.copy()
        wp[k] += step
        wm[k] -= step
        g[k] = (f(wp) - f(wm)) / (2 * step)
    return g


def central_difference_jacobian(f, w, step=1e-6):
    """Columns are d f / d w_k for a vector-valued f."""
    w = np.array(w, dtype=np.float64)
    cols = []
    for k in range(w.shape[0]):
        wp = w.copy()
        wm = w.copy()
        wp[k] += step
        wm[k] -= step
        cols.append((np.asarray(f(wp)) - np.asarray(f(wm))) / (2 * step))
    return np.stack(cols, axis=1)


def population_covariance(rows):
    n = len(rows)
    c = len(rows[0])
    mean = [sum(r[j] for r in rows) / n for j in range(c)]
    return [[sum((r[i] - mean[i]) * (r[j] - mean[j]) for r in rows) / n for j in range(c)] for i in range(c)]


def lmax_objective(y_b, y_h, alpha, kind):
    """Server loss of the mixed label against the honest mean."""
    mixed = [(1 - alpha) * h + alpha * b for h, b in zip(y_h, y_b)]
    if kind == "CEL":
        return naive_cel(mixed, y_h)
    return naive_mse(mixed, y_h)


def best_vertex(y_h, alpha, kind):
    c = len(y_h)
    vals = []
    for k in range(c):
        e = [0.0] * c
        e[k] = 1.0
        vals.append(lmax_objective(e, y_h, alpha, kind))
    return max(range(c), key=lambda k: (vals[k], -k)), max(vals)


def simplex_grid(step):
    """All points of the 3-class simplex on a regular grid of the given step."""
    n = int(round(1 / step))
    pts = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            pts.append((i / n, j / n, (n - i - j) / n))
    return np.array(pts)


def sum_distances(points, y):
    return sum(math.dist(p, y) for p in points)


def hull_samples(vertices, count, rng):
    w = rng.dirichlet(np.ones(len(vertices)), size=count)
    return w @ np.asarray(vertices)


def all_vertices(c):
    return [tuple(1.0 if j == k else 0.0 for j in range(c)) for k in range(c)]

