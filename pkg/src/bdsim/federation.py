"""Simulated federation: the distillation (FD) and parameter-averaging (FedAvg) round loops.

Clients ``0 .. H-1`` are honest and the last ``alpha * N`` ids are byzantine
for the whole run. Every random stream is derived from the global seed plus
fixed tags, the client id and the round, so client training can run in any
order or in parallel without changing a single bit of the result.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import attacks, data, defences, model, simplex
from .errors import ConfigInvalid, NonFiniteLoss, ShapeMismatch
from .seeding import derive_seed

# stream tags for derive_seed
_DATA, _SPLIT, _INIT, _CLIENT, _SERVER_INIT, _SERVER_SHUFFLE, _ATTACK, _REFERENCE = range(1, 9)


@dataclass
class ClientState:
    id: int
    role: str
    params: model.ModelParams
    private: data.Dataset
    seed: int


@dataclass(frozen=True)
class RoundRecord:
    round: int
    test_acc: float | None
    val_acc: float | None
    weights: tuple | None
    honest_distance: float | None
    byzantine_share: float | None
    simplex_violations: int
    wall_time: float

    def to_dict(self):
        d = asdict(self)
        if d["weights"] is not None:
            d["weights"] = list(d["weights"])
        return d


@dataclass
class Scenario:
    """Everything a run needs that does not change between rounds."""

    arch: model.Architecture
    parts: data.Split
    clients: list

    @property
    def public_x(self):
        return self.parts.public.features


def thread_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("BDS_THREADS", "").strip()
    return max(1, int(env)) if env else 1


def load_dataset(cfg):
    if cfg.data_path:
        return data.read_dataset(cfg.data_path)
    return data.make_blobs(cfg.classes, cfg.dim, cfg.per_class, cfg.spread, derive_seed(cfg.seed, _DATA), cfg.scale)


def build_scenario(cfg):
    ds = load_dataset(cfg)
    if ds.labels is None:
        raise ConfigInvalid("data.path: the dataset file must be labeled")
    plan = data.SplitPlan(cfg.clients, *cfg.split, seed=derive_seed(cfg.seed, _SPLIT))
    parts = data.split(ds, plan)
    arch = model.Architecture(ds.dim, cfg.hidden, ds.classes, cfg.activation)
    first_byz = cfg.clients - cfg.byzantine
    clients = []
    for i in range(cfg.clients):
        role = "honest" if i < first_byz else "byzantine"
        params = model.init(arch, derive_seed(cfg.seed, _INIT, i))
        clients.append(ClientState(i, role, params, parts.private[i], derive_seed(cfg.seed, _CLIENT, i)))
    return Scenario(arch, parts, clients)


def epochs_per_round(cfg):
    return data.client_sizes(cfg.client_total_epochs, cfg.rounds)


def _client_schedule(cfg, t):
    per = epochs_per_round(cfg)
    s = cfg.client
    return model.TrainSchedule(
        per[t], s.batch_size, s.lr, s.momentum, s.weight_decay,
        decay="global", budget_epochs=cfg.client_total_epochs, epoch_offset=sum(per[:t]),
    )


def _server_schedule(cfg):
    s = cfg.server
    return model.TrainSchedule(cfg.server_epochs, s.batch_size, s.lr, s.momentum, s.weight_decay)


def _train_clients(cfg, clients, t, workers):
    """Local training of the given clients on their private data, in place."""
    sched = _client_schedule(cfg, t)

    def job(c):
        return model.train(c.params, c.private.features, c.private.one_hot(), sched, derive_seed(c.seed, t))

    n = thread_count(workers)
    if n == 1 or len(clients) < 2:
        results = [job(c) for c in clients]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(job, clients))
    for c, p in zip(clients, results):
        c.params = p


def _evaluate(params, parts):
    test = parts.test
    val = parts.validation
    return (
        None if test is None else model.accuracy(params, test.features, test.labels),
        None if val is None else model.accuracy(params, val.features, val.labels),
    )


def _monitor(cfg, parts):
    """Validation accuracy after each server epoch, for best-epoch selection."""
    val = parts.validation
    if not cfg.early_stopping or val is None:
        return None
    return lambda p: model.accuracy(p, val.features, val.labels)


def honest_label_distance(aggregated, honest_mean):
    """Mean over public samples of the l2 distance between the two label tables."""
    a = np.asarray(aggregated, dtype=np.float64)
    b = np.asarray(honest_mean, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"label tables have shapes {a.shape} and {b.shape}")
    return float(np.mean(np.sqrt(np.sum((a - b) ** 2, axis=-1))))


def reference_similarity(cfg, scen):
    """Class-similarity matrix from a centrally trained model's public predictions."""
    pooled_x = np.vstack([c.private.features for c in scen.clients])
    pooled_y = np.vstack([c.private.one_hot() for c in scen.clients])
    ref = model.train(
        model.init(scen.arch, derive_seed(cfg.seed, _REFERENCE)),
        pooled_x, pooled_y, _server_schedule(cfg), derive_seed(cfg.seed, _REFERENCE, 1),
    )
    return attacks.build_similarity(model.forward(ref, scen.public_x))


def _similarity(cfg, scen):
    src = cfg.attack.similarity
    if src is None:
        return None
    C = reference_similarity(cfg, scen) if src == "model" else attacks.read_similarity(src)
    if C.shape[0] != scen.arch.classes:
        raise ConfigInvalid(f"attack.similarity: matrix is {C.shape[0]}x{C.shape[0]}, data has {scen.arch.classes} classes")
    return C


def _attack_spec(cfg):
    return replace(cfg.attack, seed=derive_seed(cfg.seed, _ATTACK, cfg.attack.seed))


def run_fd(cfg, tamper=None, workers=None, return_server=False):
    """Distillation rounds. Returns the list of RoundRecord (and the final server params).

    ``tamper(round, clients)`` is an optional test hook called after the
    predictions are collected; it may overwrite any client's params.
    """
    if cfg.branch != "fd":
        raise ConfigInvalid("branch: run_fd needs branch=fd")
    scen = build_scenario(cfg)
    honest = [c for c in scen.clients if c.role == "honest"]
    byz = [c for c in scen.clients if c.role == "byzantine"]
    # with attack NONE the byzantine clients follow the protocol
    followers = scen.clients if cfg.attack.kind == "NONE" else honest
    C = _similarity(cfg, scen)
    spec = _attack_spec(cfg)
    server = model.init(scen.arch, derive_seed(cfg.seed, _SERVER_INIT))
    state = None
    records = []
    X_pub = scen.public_x
    for t in range(cfg.rounds):
        start = time.perf_counter()
        try:
            if cfg.broadcast:
                for c in scen.clients:
                    c.params = server
            _train_clients(cfg, followers, t, workers)
            rows = np.stack([model.forward(c.params, X_pub) for c in followers])
            H = rows[: len(honest)]
            if cfg.attack.kind != "NONE" and byz:
                fake = attacks.fd_attack(spec, H, cfg.alpha, C, round_index=t)
                rows = np.concatenate([H, np.broadcast_to(fake, (len(byz),) + fake.shape)])
            if tamper is not None:
                tamper(t, scen.clients)
            labels, state = defences.aggregate(rows, cfg.defence, state)
            violations = simplex.count_invalid_rows(labels)
            server = model.train(
                model.init(scen.arch, derive_seed(cfg.seed, _SERVER_INIT, t + 1)),
                X_pub, labels, _server_schedule(cfg), derive_seed(cfg.seed, _SERVER_SHUFFLE, t),
                cfg.server_loss, monitor=_monitor(cfg, scen.parts),
            )
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), round_index=t) from exc
        test_acc, val_acc = _evaluate(server, scen.parts)
        weights = share = None
        if state is not None:
            w = state.weights
            weights = tuple(float(x) for x in w)
            share = float(w[len(honest):].sum() / w.sum())
        records.append(
            RoundRecord(
                t, test_acc, val_acc, weights,
                honest_label_distance(labels, H.mean(axis=0)),
                share, int(violations), time.perf_counter() - start,
            )
        )
    return (records, server) if return_server else records


def average_params(flats):
    """Plain average, summed row by row in client order so cancellations are exact."""
    total = np.zeros_like(flats[0])
    for f in flats:
        total = total + f
    return total / len(flats)


def run_fedavg(cfg, tamper=None, workers=None, return_server=False):
    """Parameter-averaging rounds with Gaussian or takeover byzantine updates."""
    if cfg.branch != "fedavg":
        raise ConfigInvalid("branch: run_fedavg needs branch=fedavg")
    scen = build_scenario(cfg)
    honest = [c for c in scen.clients if c.role == "honest"]
    byz = [c for c in scen.clients if c.role == "byzantine"]
    kind = cfg.attack.kind
    followers = scen.clients if kind == "NONE" else honest
    spec = _attack_spec(cfg)
    server = model.init(scen.arch, derive_seed(cfg.seed, _SERVER_INIT))
    P = scen.arch.param_count
    records = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        try:
            for c in scen.clients:
                c.params = server
            _train_clients(cfg, followers, t, workers)
            flats = [c.params.flat for c in followers]
            if kind == "FEDAVG_GAUSS":
                flats += [attacks.fedavg_gauss(P, spec.noise_scale, derive_seed(spec.seed, t, c.id)) for c in byz]
            elif kind == "FEDAVG_TAKEOVER" and byz:
                target = np.full(P, cfg.attack_target)
                flats += [target] * (len(byz) - 1)
                flats.append(attacks.fedavg_takeover(target, np.array(flats), cfg.clients))
            if tamper is not None:
                tamper(t, scen.clients)
                flats = [c.params.flat for c in followers] + flats[len(followers):]
            avg = average_params(flats)
            if not np.all(np.isfinite(avg)):
                raise NonFiniteLoss("averaged parameters are not finite")
            server = model.ModelParams(scen.arch, avg)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), round_index=t) from exc
        test_acc, val_acc = _evaluate(server, scen.parts)
        records.append(RoundRecord(t, test_acc, val_acc, None, None, None, 0, time.perf_counter() - start))
    return (records, server) if return_server else records


def run(cfg, **kw):
    return run_fd(cfg, **kw) if cfg.branch == "fd" else run_fedavg(cfg, **kw)
