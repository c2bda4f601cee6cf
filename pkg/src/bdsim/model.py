"""Small fully connected softmax classifier with hand-written backprop.

Parameters live in one flat float64 vector so that FedAvg can average them
and byzantine clients can overwrite them. Layer ``k`` stores its weight matrix
``(fan_in, fan_out)`` row-major, followed by its bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArchTooLarge, DimensionMismatch, EmptyInput, NonFiniteLoss

LOG_FLOOR = 1e-12
JACOBIAN_PARAM_LIMIT = 10_000
LOSS_KINDS = ("CEL", "MSE")


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[int, ...] = ()
    classes: int = 2
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def sizes(self):
        return (self.input_dim, *self.hidden, self.classes)

    @property
    def param_count(self):
        s = self.sizes
        return sum(s[k] * s[k + 1] + s[k + 1] for k in range(len(s) - 1))


@dataclass(frozen=True)
class ModelParams:
    arch: Architecture
    flat: np.ndarray = field(repr=False)

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).ravel()
        if flat.shape[0] != self.arch.param_count:
            raise DimensionMismatch(
                f"{flat.shape[0]} parameters given, architecture needs {self.arch.param_count}"
            )
        if not np.all(np.isfinite(flat)):
            raise NonFiniteLoss("parameters contain non-finite entries")
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    def layers(self):
        return _unpack(self.arch, self.flat)

    def __eq__(self, other):
        return (
            isinstance(other, ModelParams)
            and self.arch == other.arch
            and np.array_equal(self.flat, other.flat)
        )

    __hash__ = None


@dataclass(frozen=True)
class TrainSchedule:
    """SGD settings. ``decay='global'`` keeps one linear ramp across calls.

    With the global mode, ``budget_epochs`` is the length of the whole ramp
    and ``epoch_offset`` says how much of it earlier calls already used.
    """

    epochs: int
    batch_size: int = 32
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay: str = "own"
    budget_epochs: int | None = None
    epoch_offset: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.decay not in ("own", "global"):
            raise ValueError(f"unknown decay mode {self.decay!r}")
        if self.decay == "global":
            if self.budget_epochs is None or self.budget_epochs < self.epoch_offset + self.epochs:
                raise ValueError("global decay needs budget_epochs >= epoch_offset + epochs")

    def lr_at(self, epoch, step, steps_per_epoch):
        """Learning rate for ``step`` of local ``epoch``; linear from lr down to 0."""
        if self.decay == "own":
            done, total = epoch, self.epochs
        else:
            done, total = self.epoch_offset + epoch, self.budget_epochs
        progress = (done * steps_per_epoch + step) / (total * steps_per_epoch)
        return self.lr * (1.0 - progress)


def _unpack(arch, flat):
    out = []
    pos = 0
    s = arch.sizes
    for k in range(len(s) - 1):
        n_w = s[k] * s[k + 1]
        w = flat[pos : pos + n_w].reshape(s[k], s[k + 1])
        pos += n_w
        b = flat[pos : pos + s[k + 1]]
        pos += s[k + 1]
        out.append((w, b))
    return out


def init(arch, seed):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    s = arch.sizes
    chunks = []
    for k in range(len(s) - 1):
        bound = 1.0 / np.sqrt(s[k])
        chunks.append(rng.uniform(-bound, bound, size=s[k] * s[k + 1]))
        chunks.append(rng.uniform(-bound, bound, size=s[k + 1]))
    return ModelParams(arch, np.concatenate(chunks))


def zeros(arch):
    return ModelParams(arch, np.zeros(arch.param_count))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.arch.input_dim:
        raise DimensionMismatch(f"expected inputs of dimension {params.arch.input_dim}, got shape {x.shape}")
    return X, single


def _forward_cache(params, X):
    acts = [X]
    a = X
    layers = params.layers()
    relu = params.arch.activation == "relu"
    for k, (w, b) in enumerate(layers):
        z = a @ w + b
        if k == len(layers) - 1:
            return acts, z
        a = np.maximum(z, 0.0) if relu else np.tanh(z)
        acts.append(a)
    raise AssertionError("unreachable")


def _backward(params, acts, dlogits):
    """Sum over batch rows of d(loss)/d(params) given d(loss)/d(logits) per row."""
    layers = params.layers()
    relu = params.arch.activation == "relu"
    grads = [None] * len(layers)
    delta = dlogits
    for k in range(len(layers) - 1, -1, -1):
        a_in = acts[k]
        grads[k] = (a_in.T @ delta, delta.sum(axis=0))
        if k:
            delta = delta @ layers[k][0].T
            a = acts[k]
            delta = delta * (a > 0) if relu else delta * (1.0 - a * a)
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def logits(params, x):
    X, single = _as_batch(params, x)
    z = _forward_cache(params, X)[1]
    return z[0] if single else z


def forward(params, x):
    """Softmax class probabilities for one input vector or a batch of rows."""
    X, single = _as_batch(params, x)
    h = softmax(_forward_cache(params, X)[1])
    return h[0] if single else h


def _loss_from_probs(h, y, kind):
    if kind == "CEL":
        return -np.sum(y * np.log(np.maximum(h, LOG_FLOOR)), axis=-1)
    if kind == "MSE":
        return 0.5 * np.sum((h - y) ** 2, axis=-1)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss(params, x, target, kind="CEL"):
    """CEL(target, h) = -sum target*log h, or MSE = 0.5*||h - target||^2; batch mean."""
    X, _ = _as_batch(params, x)
    Y = np.atleast_2d(np.asarray(target, dtype=np.float64))
    h = softmax(_forward_cache(params, X)[1])
    return float(np.mean(_loss_from_probs(h, Y, kind)))


def softmax_jacobian(h):
    """d softmax / d logits for one probability vector: diag(h) - h h^T."""
    return np.diag(h) - np.outer(h, h)


def _dlogits(h, Y, kind):
    r = h - Y
    if kind == "CEL":
        # valid because every target row sums to one
        return r
    if kind == "MSE":
        # J_softmax^T r with J symmetric
        return h * r - h * np.sum(h * r, axis=1, keepdims=True)
    raise ValueError(f"unknown loss kind {kind!r}")


def grad(params, x, target, kind="CEL"):
    """Mean gradient of the loss over the batch, as a flat vector."""
    X, _ = _as_batch(params, x)
    Y = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptyInput("gradient needs a non-empty batch")
    if Y.shape != (X.shape[0], params.arch.classes):
        raise DimensionMismatch(f"targets have shape {Y.shape}, expected {(X.shape[0], params.arch.classes)}")
    acts, z = _forward_cache(params, X)
    h = softmax(z)
    return _backward(params, acts, _dlogits(h, Y, kind)) / X.shape[0]


def jacobian(params, x, of="logits", limit=JACOBIAN_PARAM_LIMIT):
    """Exact ``c x P`` Jacobian of the logits or the probabilities at one input.

    Each row is one reverse pass seeded with the corresponding output direction.
    """
    P = params.arch.param_count
    if P > limit:
        raise ArchTooLarge(f"{P} parameters exceeds the Jacobian limit {limit}")
    X, single = _as_batch(params, x)
    if not single and X.shape[0] != 1:
        raise DimensionMismatch("jacobian takes a single sample")
    acts, z = _forward_cache(params, X)
    c = params.arch.classes
    if of == "logits":
        seeds = np.eye(c)
    elif of == "probabilities":
        seeds = softmax_jacobian(softmax(z)[0])
    else:
        raise ValueError(f"unknown Jacobian target {of!r}")
    return np.stack([_backward(params, acts, seeds[k][None, :]) for k in range(c)])


def accuracy(params, x, labels):
    h = forward(params, np.atleast_2d(x))
    return float(np.mean(np.argmax(h, axis=1) == np.asarray(labels)))


# divergence is detected explicitly below, so the overflow warnings add nothing
@np.errstate(over="ignore", invalid="ignore")
def train(params, x, targets, schedule, seed, kind="CEL", monitor=None):
    """SGD with momentum and weight decay on soft targets; returns new params.

    The shuffle order comes from ``seed`` alone, so the same call twice gives
    bit-identical parameters. With ``monitor``, a function of the params
    called after every epoch, the epoch with the highest score is returned
    instead of the last one (the earliest such epoch on ties).
    """
    X = np.asarray(x, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("cannot train on an empty dataset")
    if Y.shape != (n, params.arch.classes):
        raise DimensionMismatch(f"targets have shape {Y.shape}, expected {(n, params.arch.classes)}")
    rng = np.random.default_rng(seed)
    w = params.flat.copy()
    buf = np.zeros_like(w)
    bs = min(schedule.batch_size, n)
    steps = -(-n // bs)
    arch = params.arch
    best, best_score = None, -np.inf
    for epoch in range(schedule.epochs):
        order = rng.permutation(n)
        for step in range(steps):
            idx = order[step * bs : (step + 1) * bs]
            cur = _Scratch(arch, w)
            acts, z = _forward_cache(cur, X[idx])
            h = softmax(z)
            if not np.all(np.isfinite(z)):
                raise NonFiniteLoss(f"non-finite logits at epoch {epoch}, step {step}")
            g = _backward(cur, acts, _dlogits(h, Y[idx], kind)) / idx.shape[0]
            if schedule.weight_decay:
                g += schedule.weight_decay * w
            buf = schedule.momentum * buf + g
            w -= schedule.lr_at(epoch, step, steps) * buf
        if not np.all(np.isfinite(w)):
            raise NonFiniteLoss(f"parameters diverged in epoch {epoch}")
        if monitor is not None:
            score = monitor(ModelParams(arch, w))
            if score > best_score:
                best, best_score = w.copy(), score
    return ModelParams(arch, w if best is None else best)


class _Scratch:
    """Mutable stand-in for ModelParams inside the training loop (no copies, no checks)."""

    __slots__ = ("arch", "flat")

    def __init__(self, arch, flat):
        self.arch = arch
        self.flat = flat

    def layers(self):
        return _unpack(self.arch, self.flat)
