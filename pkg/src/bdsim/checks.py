"""Executable checks of the formal results behind the simulator.

Each check is deterministic for its seed and returns a ``CheckReport`` that
serializes to one JSON line. Smoothness and Jacobian constants are not
available in closed form for an MLP, so the gradient-descent check works with
empirical estimates along the trajectory and says so in its notes.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import attacks, defences, model, simplex
from .errors import NonFiniteLoss

TINY_ARCH = model.Architecture(4, (6,), 3)
VERTEX_TIE = 1e-12
SAMPLE_SLACK = 1e-9


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    measured: float
    bound: float
    instance: str
    notes: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.measured) and math.isfinite(self.bound)):
            raise ValueError("measured and bound must be finite")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def _jac_kind(kind):
    return "logits" if kind == "CEL" else "probabilities"


def _spectral(J):
    return float(np.linalg.norm(J, 2))


def _random_simplex(rng, shape, c):
    return rng.dirichlet(np.ones(c), size=shape)


def check_grad_linearity(arch=TINY_ARCH, seeds=(0,), trials=100):
    """The loss gradient is affine in the target and ||J||-Lipschitz in it.

    Per trial: random params, input and two targets. The affinity residual
    ``g(y1) + g(y2) - 2 g((y1+y2)/2)`` must vanish to 1e-10 and
    ``||g(y1) - g(y2)|| <= ||J|| ||y1 - y2||`` with a 1e-8 relative slack.
    """
    worst_res = 0.0
    worst_ratio = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            w = model.init(arch, int(rng.integers(2**31)))
            x = rng.normal(size=arch.input_dim)
            y1, y2 = _random_simplex(rng, 2, arch.classes)
            for kind in ("CEL", "MSE"):
                g1 = model.grad(w, x, y1, kind)
                g2 = model.grad(w, x, y2, kind)
                gm = model.grad(w, x, (y1 + y2) / 2, kind)
                worst_res = max(worst_res, float(np.linalg.norm(g1 + g2 - 2 * gm)))
                J = model.jacobian(w, x, of=_jac_kind(kind))
                dy = np.linalg.norm(y1 - y2)
                if dy > 0:
                    worst_ratio = max(worst_ratio, float(np.linalg.norm(g1 - g2) / (_spectral(J) * dy)))
    passed = worst_res <= 1e-10 and worst_ratio <= 1 + 1e-8
    return CheckReport(
        "grad_linearity", passed, worst_ratio, 1 + 1e-8,
        f"arch={arch.sizes}, seeds={list(seeds)}, trials={trials}, losses=CEL,MSE",
        f"max affinity residual {worst_res:.3e} (limit 1e-10); measured is max ||dg|| / (||J|| ||dy||)",
    )


def bias_gap(w, X, y_h, y_b, alpha, kind):
    """||grad L(w, Y_H) - grad L(w, Y)|| and the Jacobian constant C = max_i ||J_i||."""
    mixed = (1 - alpha) * y_h + alpha * y_b
    gap = float(np.linalg.norm(model.grad(w, X, y_h, kind) - model.grad(w, X, mixed, kind)))
    C = max(_spectral(model.jacobian(w, x, of=_jac_kind(kind))) for x in X)
    return gap, C


def check_bias_bound(arch=TINY_ARCH, alphas=(0.0, 0.1, 0.3, 0.45), trials=100, batch=4, seed=0):
    """Gradient bias from byzantine labels stays below sqrt(2) * alpha * C.

    Half the trials use the loss-maximizing one-hot as the byzantine label,
    the other half a random one-hot. ``measured`` is the largest ratio of the
    gap to the bound over all instances with alpha > 0.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    zero_ok = True
    per_alpha = max(1, trials // len(alphas))
    for alpha in alphas:
        for k in range(per_alpha):
            w = model.init(arch, int(rng.integers(2**31)))
            X = rng.normal(size=(batch, arch.input_dim))
            y_h = _random_simplex(rng, batch, arch.classes)
            if k % 2 == 0:
                y_b = attacks.lma(y_h)
            else:
                y_b = np.eye(arch.classes)[rng.integers(0, arch.classes, size=batch)]
            for kind in ("CEL", "MSE"):
                gap, C = bias_gap(w, X, y_h, y_b, alpha, kind)
                if alpha == 0:
                    zero_ok &= gap == 0.0
                    continue
                tight = C * alpha * float(np.max(np.linalg.norm(y_b - y_h, axis=1)))
                if gap > tight * (1 + 1e-9):
                    zero_ok = False
                worst = max(worst, gap / (math.sqrt(2) * alpha * C))
    return CheckReport(
        "bias_bound", zero_ok and worst < 1, worst, 1.0,
        f"arch={arch.sizes}, alphas={list(alphas)}, {per_alpha} draws per alpha, batch={batch}, losses=CEL,MSE",
        "measured is max ||dgrad|| / (sqrt(2) alpha C); alpha=0 must give an exactly zero gap",
    )


def _smoothness_probe(loss_grad, w, rng, probes=20, radius=1e-2):
    g0 = loss_grad(w)
    best = 0.0
    for _ in range(probes):
        d = rng.normal(size=w.shape)
        d *= radius / np.linalg.norm(d)
        best = max(best, float(np.linalg.norm(loss_grad(w + d) - g0) / radius))
    return best


def stationarity_run(arch=TINY_ARCH, T=200, alpha=0.45, n=16, seed=0):
    """Full-batch GD on the byzantine-mixed objective; returns the quantities of the bound.

    ``F`` is the distillation loss against the honest labels, ``F~`` the
    loss against the mixed labels that GD actually minimizes.
    """
    rng = np.random.default_rng(seed)
    teacher = model.init(arch, int(rng.integers(2**31)))
    X = rng.normal(size=(n, arch.input_dim))
    y_h = model.forward(teacher, 2.0 * X)
    y_b = attacks.lma(y_h)
    y_mix = (1 - alpha) * y_h + alpha * y_b
    dy = float(np.max(np.linalg.norm(y_b - y_h, axis=1)))
    w0 = model.init(arch, int(rng.integers(2**31)))

    def g_mix(flat):
        return model.grad(model.ModelParams(arch, flat), X, y_mix)

    L_hat = 2.0 * _smoothness_probe(g_mix, w0.flat, rng)
    step = 1.0 / L_hat
    w = w0.flat.copy()
    F0 = model.loss(w0, X, y_mix)
    best_sq = math.inf
    C_hat = 0.0
    prev = None
    for _ in range(T):
        p = model.ModelParams(arch, w)
        g_true = model.grad(p, X, y_h)
        g = g_mix(w)
        best_sq = min(best_sq, float(g_true @ g_true))
        C_hat = max(C_hat, max(_spectral(model.jacobian(p, x)) for x in X) * dy)
        if prev is not None:
            dw = np.linalg.norm(w - prev[0])
            if dw > 0:
                L_hat = max(L_hat, float(np.linalg.norm(g - prev[1]) / dw))
        prev = (w.copy(), g)
        w = w - step * g
        if not np.all(np.isfinite(w)):
            raise NonFiniteLoss("gradient descent diverged")
    return {"min_grad_sq": best_sq, "L_hat": L_hat, "F0": F0, "C_hat": C_hat, "T": T, "alpha": alpha}


def stationarity_bound(run):
    """(sqrt(2 L F~(w0) / T) + alpha C)^2, which is 2 L F(w0)/T when alpha = 0."""
    clean = math.sqrt(2 * run["L_hat"] * run["F0"] / run["T"])
    return (clean + run["alpha"] * run["C_hat"]) ** 2


def check_gd_stationarity(arch=TINY_ARCH, T=200, alpha=0.45, seed=0):
    run = stationarity_run(arch, T, alpha, seed=seed)
    bound = stationarity_bound(run)
    loose = 2 * run["L_hat"] * run["F0"] / T + 2 * alpha**2 * run["C_hat"] ** 2
    return CheckReport(
        "gd_stationarity", run["min_grad_sq"] <= bound, run["min_grad_sq"], bound,
        f"arch={arch.sizes}, T={T}, alpha={alpha}, n=16, seed={seed}",
        f"L_hat={run['L_hat']:.4g} (empirical surrogate, smoothness is not verified), "
        f"C_hat={run['C_hat']:.4g}, F~(w0)={run['F0']:.4g}, slack={bound - run['min_grad_sq']:.4g}, "
        f"2LF/T+2a^2C^2={loose:.4g}",
    )


def _vertex_values(y_h, alpha, loss):
    c = y_h.shape[-1]
    return attacks.lmax_objective(np.eye(c), y_h, alpha, loss)


def check_lma_optimality(classes=(3, 5, 10), alphas=(0.1, 0.3, 0.45), trials=200, samples=10_000, seed=0):
    """The closed-form one-hot beats every vertex and random interior points."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    worst_excess = -math.inf
    count = 0
    for c in classes:
        for alpha in alphas:
            for _ in range(trials):
                y_h = rng.dirichlet(np.ones(c))
                cloud = rng.dirichlet(np.ones(c), size=samples)
                for loss in ("CEL", "MSE"):
                    ours = float(attacks.lmax_objective(attacks.lma(y_h, loss), y_h, alpha, loss))
                    if ours < _vertex_values(y_h, alpha, loss).max() - VERTEX_TIE:
                        mismatches += 1
                    interior = float(attacks.lmax_objective(cloud, y_h, alpha, loss).max())
                    worst_excess = max(worst_excess, interior - ours)
                    count += 1
    return CheckReport(
        "lma_optimality", mismatches == 0 and worst_excess <= SAMPLE_SLACK, worst_excess, SAMPLE_SLACK,
        f"{count} instances: c in {list(classes)}, alpha in {list(alphas)}, CEL and MSE, {samples} interior samples each",
        f"vertex mismatches: {mismatches}; measured is max(sampled - closed form)",
    )


def hull_cloud(vertices, count, rng):
    w = rng.dirichlet(np.ones(len(vertices)), size=count)
    return w @ np.asarray(vertices)


def check_hips_optimality(trials=100, honest=5, classes=5, alpha=0.45, samples=10_000, seed=0):
    """The best honest vertex beats random points of the honest hull (LMA and CPA objectives)."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(trials):
        H = rng.dirichlet(np.ones(classes), size=honest)
        mean = H.mean(axis=0)
        cloud = hull_cloud(H, samples, rng)
        for loss in ("CEL", "MSE"):
            best = float(attacks.lmax_objective(attacks.hips_lma(H, mean, alpha, loss), mean, alpha, loss))
            worst = max(worst, float(attacks.lmax_objective(cloud, mean, alpha, loss).max()) - best)
        C = attacks.build_similarity(rng.dirichlet(np.ones(classes), size=30))
        row = C[np.argmax(mean)]
        ours = float(attacks.hips_cpa(H, mean, C) @ row)
        worst = max(worst, ours - float((cloud @ row).min()))
    return CheckReport(
        "hips_optimality", worst <= SAMPLE_SLACK, worst, SAMPLE_SLACK,
        f"{trials} instances: {honest} honest vertices, c={classes}, alpha={alpha}, {samples} hull samples",
        "measured is the largest amount by which a hull sample beats the chosen vertex (LMA: CEL, MSE; CPA)",
    )


COUNTEREXAMPLE = ((0.7, 0.2, 0.1), (0.8, 0.1, 0.1), (0.0, 0.0, 1.0))


def check_median_counterexample():
    """Coordinate-wise median leaves the simplex; geometric median and mean do not."""
    pts = np.array(COUNTEREXAMPLE)
    med = simplex.coordwise_median(pts)
    total = float(med.sum())
    gm = defences.geometric_median(pts).point
    mean = defences.mean_agg(pts)
    passed = (
        np.array_equal(med, [0.7, 0.1, 0.1])
        and not simplex.is_valid(med)
        and simplex.is_valid(gm)
        and simplex.is_valid(mean)
    )
    return CheckReport(
        "median_counterexample", bool(passed), total, 1.0,
        f"points={[list(p) for p in COUNTEREXAMPLE]}",
        f"coordinate-wise median {med.tolist()} sums to {total:.12g}; mean {mean.tolist()}; GM valid: {simplex.is_valid(gm)}",
    )


CHECKS = {
    "grad_linearity": check_grad_linearity,
    "bias_bound": check_bias_bound,
    "gd_stationarity": check_gd_stationarity,
    "lma_optimality": check_lma_optimality,
    "hips_optimality": check_hips_optimality,
    "median_counterexample": check_median_counterexample,
}


def run_checks(names=None):
    names = list(CHECKS) if names in (None, "all", ["all"]) else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    return [CHECKS[n]() for n in names]
