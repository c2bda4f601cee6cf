"""Byzantine prediction generators.

The byzantine clients see every honest prediction before answering and all
of them send the same vector for a given public sample. Every tie is broken
toward the lowest class or client index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import simplex
from .errors import EmptyInput, ParseError, ShapeMismatch, TooFewSamples
from .model import LOG_FLOOR
from .seeding import derive_seed, sample_hash

KINDS = ("NONE", "RLF", "LMA", "CPA", "HIPS_LMA", "HIPS_CPA", "FEDAVG_GAUSS", "FEDAVG_TAKEOVER")
FD_KINDS = ("NONE", "RLF", "LMA", "CPA", "HIPS_LMA", "HIPS_CPA")
FEDAVG_KINDS = ("NONE", "FEDAVG_GAUSS", "FEDAVG_TAKEOVER")
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class AttackSpec:
    """What the byzantine clients do.

    ``loss`` is set only for the loss-maximization kinds, ``similarity`` only for
    the class-prior kinds (``"model"`` or a matrix file path) and
    ``noise_scale`` only for the Gaussian FedAvg attack.
    """

    kind: str = "NONE"
    loss: str | None = None
    similarity: str | None = None
    noise_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        wants_loss = self.kind in ("LMA", "HIPS_LMA")
        if wants_loss != (self.loss is not None):
            raise ValueError(f"attack {self.kind} {'needs' if wants_loss else 'takes no'} loss kind")
        if self.loss is not None and self.loss not in ("CEL", "MSE"):
            raise ValueError(f"unknown loss kind {self.loss!r}")
        wants_sim = self.kind in ("CPA", "HIPS_CPA")
        if wants_sim != (self.similarity is not None):
            raise ValueError(f"attack {self.kind} {'needs' if wants_sim else 'takes no'} similarity source")
        wants_noise = self.kind == "FEDAVG_GAUSS"
        if wants_noise != (self.noise_scale is not None):
            raise ValueError(f"attack {self.kind} {'needs' if wants_noise else 'takes no'} noise scale")
        if wants_noise and not self.noise_scale > 0:
            raise ValueError("noise scale must be > 0")


def honest_mean(preds):
    """Mean over the leading (client) axis of the honest predictions."""
    p = np.asarray(preds, dtype=np.float64)
    if p.ndim < 2 or p.shape[0] == 0:
        raise EmptyInput("honest mean needs at least one honest client")
    return p.mean(axis=0)


def _one_hot(idx, c):
    idx = np.asarray(idx)
    out = np.zeros(idx.shape + (c,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def rlf_labels(c, seed, indices):
    """Random class per public sample, a pure function of ``(seed, index)``."""
    return (sample_hash(seed, indices) % np.uint64(c)).astype(np.int64)


def rlf(c, seed, index):
    return simplex.vertex(c, int(rlf_labels(c, seed, [index])[0]))


def lma(mean, loss="CEL"):
    """One-hot at the least likely class of the honest mean (optimal for CEL and MSE)."""
    m = np.asarray(mean, dtype=np.float64)
    return _one_hot(np.argmin(m, axis=-1), m.shape[-1])


def lmax_objective(y_b, y_h, alpha, loss):
    """Server loss of the mixed label ``(1-alpha) y_h + alpha y_b`` against ``y_h``.

    ``y_b`` may carry extra leading axes; ``y_h`` broadcasts against it.
    """
    y_b = np.asarray(y_b, dtype=np.float64)
    y_h = np.asarray(y_h, dtype=np.float64)
    mixed = (1.0 - alpha) * y_h + alpha * y_b
    if loss == "CEL":
        return -np.sum(y_h * np.log(np.maximum(mixed, LOG_FLOOR)), axis=-1)
    if loss == "MSE":
        return 0.5 * np.sum((mixed - y_h) ** 2, axis=-1)
    raise ValueError(f"unknown loss kind {loss!r}")


def check_similarity(C):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeMismatch(f"similarity matrix must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("similarity matrix has non-finite entries")
    if np.max(np.abs(C - C.T)) > SYMMETRY_TOL:
        raise ValueError("similarity matrix is not symmetric")
    return C


def build_similarity(preds):
    """Covariance of a reference model's predictions over the public samples (1/S)."""
    Y = np.asarray(preds, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise TooFewSamples("similarity matrix needs predictions on at least 2 samples")
    D = Y - Y.mean(axis=0)
    # second centering pass removes the rounding left in the first mean
    D -= D.mean(axis=0)
    C = D.T @ D / Y.shape[0]
    return (C + C.T) / 2


def cpa(mean, C):
    """One-hot at the class least similar to the honest mean's top class."""
    m = np.asarray(mean, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    top = np.argmax(m, axis=-1)
    return _one_hot(np.argmin(C[top], axis=-1), m.shape[-1])


def hips_hull(preds, tol=1e-12):
    """Candidate vertices of the honest hull: the distinct honest predictions, in client order."""
    P = np.asarray(preds, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise EmptyInput("hull needs at least one honest prediction")
    keep = []
    for p in P:
        if all(np.max(np.abs(p - q)) > tol for q in keep):
            keep.append(p)
    return [simplex.validate(p) for p in keep]


def hips_lma(preds, mean, alpha, loss="CEL"):
    """Honest prediction maximizing the server loss; works per sample on stacked inputs.

    ``preds`` is ``(H, c)`` or ``(H, S, c)``; ``mean`` is ``(c,)`` or ``(S, c)``.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    P = np.asarray(preds, dtype=np.float64)
    vals = lmax_objective(P, mean, alpha, loss)
    best = np.argmax(vals, axis=0)
    return np.take_along_axis(P, best[None, ..., None], axis=0)[0]


def hips_cpa(preds, mean, C):
    """Honest prediction minimizing ``y . C[i]`` with ``i`` the honest mean's top class."""
    P = np.asarray(preds, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    rows = C[np.argmax(mean, axis=-1)]
    vals = np.sum(P * rows, axis=-1)
    best = np.argmin(vals, axis=0)
    return np.take_along_axis(P, best[None, ..., None], axis=0)[0]


def fd_attack(spec, honest, alpha, similarity=None, round_index=0, sample_ids=None):
    """Byzantine prediction per public sample, shape ``(S, c)``.

    ``honest`` is the ``(H, S, c)`` table of honest predictions and ``alpha``
    the byzantine fraction (only used by the HiPS loss maximization).
    """
    H = np.asarray(honest, dtype=np.float64)
    mean = honest_mean(H)
    S, c = mean.shape
    kind = spec.kind
    if kind == "RLF":
        ids = np.arange(S) if sample_ids is None else sample_ids
        return _one_hot(rlf_labels(c, derive_seed(spec.seed, round_index), ids), c)
    if kind == "LMA":
        return lma(mean, spec.loss)
    if kind == "CPA":
        return cpa(mean, similarity)
    if kind == "HIPS_LMA":
        return hips_lma(H, mean, alpha, spec.loss)
    if kind == "HIPS_CPA":
        return hips_cpa(H, mean, similarity)
    if kind == "NONE":
        return mean
    raise ValueError(f"attack {kind} does not apply to federated distillation")


def fedavg_gauss(param_count, scale, seed):
    """I.i.d. normal(0, scale^2) parameter vector."""
    if not scale > 0:
        raise ValueError("noise scale must be > 0")
    return np.random.default_rng(seed).normal(0.0, scale, size=param_count)


def fedavg_takeover(target, others, n_clients):
    """Parameters that make the plain average of all ``n_clients`` equal ``target``."""
    target = np.asarray(target, dtype=np.float64)
    others = np.asarray(others, dtype=np.float64).reshape(-1, target.shape[0])
    if others.shape[0] != n_clients - 1:
        raise ShapeMismatch(f"need the other {n_clients - 1} updates, got {others.shape[0]}")
    return target * n_clients - others.sum(axis=0)


def read_similarity(path):
    """Parse ``c`` on the first line, then ``c`` rows of ``c`` reals."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    if not lines:
        raise ParseError("empty similarity file", 1)
    try:
        c = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"expected class count, got {lines[0]!r}", 1) from None
    if c < 2:
        raise ParseError("class count must be >= 2", 1)
    rows = []
    for k in range(c):
        lineno = k + 2
        if lineno - 1 >= len(lines):
            raise ParseError(f"expected {c} matrix rows, file ends early", lineno)
        parts = lines[lineno - 1].split()
        if len(parts) != c:
            raise ParseError(f"expected {c} values, got {len(parts)}", lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError("non-numeric entry", lineno) from None
    extra = [ln for ln in lines[c + 1 :] if ln.strip()]
    if extra:
        raise ParseError("trailing content after matrix", c + 2)
    try:
        return check_similarity(rows)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_similarity(path, C):
    C = check_similarity(C)
    with open(path, "w") as fh:
        fh.write(f"{C.shape[0]}\n")
        for row in C:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
