"""Synthetic Gaussian blobs, seeded splits and a plain-text dataset format.

File format: the first line is ``M d c``; each of the next ``M`` lines holds
``d`` reals followed by an integer label, or ``?`` when the row is unlabeled.
A file is either fully labeled or fully unlabeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyInput, ParseError, PlanInfeasible, ShapeMismatch
from .seeding import derive_seed

FRACTION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features ``(M, d)``, integer labels ``(M,)`` or ``None``, and the class count."""

    features: np.ndarray
    labels: np.ndarray | None
    classes: int

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise EmptyInput("a dataset needs at least one row of features")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if self.classes < 2:
            raise ValueError("class count must be >= 2")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.array(self.labels)
            if y.shape != (X.shape[0],):
                raise ShapeMismatch(f"{y.shape} labels for {X.shape[0]} rows")
            if y.size and (not np.issubdtype(y.dtype, np.integer) and not np.all(y == np.round(y))):
                raise ValueError("labels must be integers")
            y = y.astype(np.int64)
            if np.any(y < 0) or np.any(y >= self.classes):
                raise ValueError(f"labels must lie in [0, {self.classes})")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, index):
        idx = np.asarray(index, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, self.classes)

    def unlabeled(self):
        return Dataset(self.features, None, self.classes)

    def one_hot(self):
        if self.labels is None:
            raise ValueError("dataset is unlabeled")
        return np.eye(self.classes)[self.labels]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.classes != other.classes or self.features.shape != other.features.shape:
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        same_x = np.array_equal(self.features, other.features)
        return same_x and (self.labels is None or np.array_equal(self.labels, other.labels))


def blob_centers(c, d, scale=1.0):
    """Class means: scaled basis vectors when ``c <= d``, otherwise seeded points on a sphere."""
    if c <= d:
        centers = np.zeros((c, d))
        centers[np.arange(c), np.arange(c)] = 1.0
    else:
        rng = np.random.default_rng(derive_seed(c, d))
        centers = rng.normal(size=(c, d))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return scale * centers


def make_blobs(c, d, per_class, spread, seed, scale=1.0):
    """``per_class`` Gaussian samples (std ``spread``) around each class center.

    Rows come class by class; splitting shuffles them.
    """
    if c < 2 or d < 2:
        raise ValueError("blobs need c >= 2 and d >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    rng = np.random.default_rng(seed)
    centers = blob_centers(c, d, scale)
    labels = np.repeat(np.arange(c), per_class)
    X = centers[labels] + spread * rng.normal(size=(labels.shape[0], d))
    return Dataset(X, labels, c)


@dataclass(frozen=True)
class SplitPlan:
    clients: int
    private: float = 0.35
    public: float = 0.35
    validation: float = 0.05
    test: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("need at least one client")
        fr = (self.private, self.public, self.validation, self.test)
        if any(f < 0 for f in fr):
            raise ValueError("split fractions must be non-negative")
        if abs(sum(fr) - 1.0) > FRACTION_TOL:
            raise ValueError(f"split fractions sum to {sum(fr)}, not 1")

    def counts(self, m):
        """Rows per split: public, validation and test are floored, private takes the rest."""
        pub = math.floor(self.public * m + FRACTION_TOL)
        val = math.floor(self.validation * m + FRACTION_TOL)
        test = math.floor(self.test * m + FRACTION_TOL)
        priv = m - pub - val - test
        if priv < self.clients:
            raise PlanInfeasible(f"{priv} private rows cannot cover {self.clients} clients")
        for name, frac, n in (("public", self.public, pub), ("validation", self.validation, val), ("test", self.test, test)):
            if frac > 0 and n == 0:
                raise PlanInfeasible(f"{name} fraction {frac} leaves no rows out of {m}")
        return priv, pub, val, test


class Split(NamedTuple):
    private: list
    public: Dataset
    validation: Dataset | None
    test: Dataset | None


def client_sizes(total, clients):
    """Even division with the remainder going to the lowest client ids."""
    base, rem = divmod(total, clients)
    return [base + (1 if i < rem else 0) for i in range(clients)]


def split(ds, plan):
    """Disjoint seeded partition into per-client private sets, public, validation and test.

    The public split keeps its labels for metrics; the federation only reads
    its features.
    """
    priv, pub, val, test = plan.counts(len(ds))
    order = np.random.default_rng(plan.seed).permutation(len(ds))
    cuts = np.cumsum([priv, pub, val])
    p_idx, pub_idx, val_idx, test_idx = np.split(order, cuts)
    bounds = np.cumsum([0] + client_sizes(priv, plan.clients))
    private = [ds.subset(p_idx[bounds[i] : bounds[i + 1]]) for i in range(plan.clients)]
    return Split(
        private,
        ds.subset(pub_idx),
        ds.subset(val_idx) if val else None,
        ds.subset(test_idx) if test else None,
    )


def write_dataset(path, ds):
    with open(path, "w") as fh:
        fh.write(f"{len(ds)} {ds.dim} {ds.classes}\n")
        for k, row in enumerate(ds.features):
            label = "?" if ds.labels is None else str(int(ds.labels[k]))
            fh.write(" ".join(repr(float(v)) for v in row) + " " + label + "\n")


def read_dataset(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty dataset file", 1)
    head = lines[0].split()
    try:
        m, d, c = (int(v) for v in head)
    except ValueError:
        raise ParseError(f"header must be 'M d c', got {lines[0]!r}", 1) from None
    if m < 1 or d < 1 or c < 2:
        raise ParseError("header needs M >= 1, d >= 1, c >= 2", 1)
    X = np.empty((m, d))
    labels = []
    for k in range(m):
        lineno = k + 2
        if lineno > len(lines):
            raise ParseError(f"expected {m} rows, file ends early", lineno)
        parts = lines[lineno - 1].split()
        if len(parts) != d + 1:
            raise ParseError(f"expected {d} features and a label, got {len(parts)} fields", lineno)
        try:
            X[k] = [float(v) for v in parts[:d]]
        except ValueError:
            raise ParseError("non-numeric feature", lineno) from None
        if not np.all(np.isfinite(X[k])):
            raise ParseError("non-finite feature", lineno)
        tok = parts[d]
        if tok == "?":
            labels.append(None)
            continue
        try:
            y = int(tok)
        except ValueError:
            raise ParseError(f"bad label {tok!r}", lineno) from None
        if not 0 <= y < c:
            raise ParseError(f"label {y} outside [0, {c})", lineno)
        labels.append(y)
        if labels[0] is None:
            raise ParseError("labeled row in an unlabeled file", lineno)
    if labels[0] is not None and None in labels:
        raise ParseError("unlabeled row in a labeled file", labels.index(None) + 2)
    if any(ln.strip() for ln in lines[m + 1 :]):
        raise ParseError("trailing content after the last row", m + 2)
    return Dataset(X, None if labels[0] is None else np.array(labels), c)
