"""Experiment configuration as flat ``key=value`` text with dotted sections.

Blank lines and lines starting with ``#`` are ignored. Every key has a
default (see ``DEFAULTS``), so an empty file is a valid configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

from .attacks import FD_KINDS, FEDAVG_KINDS, AttackSpec
from .defences import DefenceSpec
from .errors import ConfigInvalid

DEFAULTS = {
    "branch": "fd",
    "clients": "20",
    "alpha": "0.45",
    "rounds": "10",
    "seed": "1",
    "seeds": "",
    "broadcast": "true",
    "attack.kind": "LMA",
    "attack.loss": "CEL",
    "attack.similarity": "model",
    "attack.noise_scale": "100",
    "attack.target": "0",
    "attack.seed": "0",
    "defence.kind": "FILTER_SCORE",
    "defence.expguard": "true",
    "defence.score_norm": "range",
    "defence.gm_tol": "1e-9",
    "defence.gm_max_iter": "500",
    "model.hidden": "32",
    "model.activation": "tanh",
    "client.total_epochs": "50",
    "client.batch_size": "32",
    "client.lr": "0.1",
    "client.momentum": "0.9",
    "client.weight_decay": "5e-4",
    "server.epochs": "30",
    "server.batch_size": "32",
    "server.lr": "0.1",
    "server.momentum": "0.9",
    "server.weight_decay": "5e-4",
    "server.loss": "CEL",
    "server.early_stopping": "true",
    "data.path": "",
    "data.classes": "5",
    "data.dim": "20",
    "data.per_class": "1200",
    "data.spread": "1.0",
    "data.scale": "3.0",
    "split.private": "0.35",
    "split.public": "0.35",
    "split.validation": "0.05",
    "split.test": "0.25",
}

# Keys whose values only matter for some attack kinds; dropped from the
# normalized form otherwise so that they cannot change the config hash.
_ATTACK_EXTRAS = {
    "attack.loss": ("LMA", "HIPS_LMA"),
    "attack.similarity": ("CPA", "HIPS_CPA"),
    "attack.noise_scale": ("FEDAVG_GAUSS",),
    "attack.target": ("FEDAVG_TAKEOVER",),
}


@dataclass(frozen=True)
class Schedule:
    batch_size: int
    lr: float
    momentum: float
    weight_decay: float


@dataclass(frozen=True)
class ExperimentConfig:
    branch: str
    clients: int
    alpha: float
    rounds: int
    seed: int
    seeds: tuple
    broadcast: bool
    attack: AttackSpec
    attack_target: float
    defence: DefenceSpec
    hidden: tuple
    activation: str
    client_total_epochs: int
    client: Schedule
    server_epochs: int
    server: Schedule
    server_loss: str
    early_stopping: bool
    data_path: str
    classes: int
    dim: int
    per_class: int
    spread: float
    scale: float
    split: tuple
    raw: tuple = ()

    @property
    def byzantine(self):
        return round(self.alpha * self.clients)

    @property
    def honest(self):
        return self.clients - self.byzantine

    def with_values(self, **updates):
        """A new validated config with some flat keys replaced."""
        values = dict(self.raw)
        values.update({k.replace("__", "."): _text(v) for k, v in updates.items()})
        return from_mapping(values)

    def hash(self):
        return config_hash(dict(self.raw))


def _text(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def _bool(key, s):
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigInvalid(f"{key}: expected a boolean, got {s!r}")


def _int(key, s):
    try:
        return int(s)
    except ValueError:
        raise ConfigInvalid(f"{key}: expected an integer, got {s!r}") from None


def _float(key, s):
    try:
        v = float(s)
    except ValueError:
        raise ConfigInvalid(f"{key}: expected a number, got {s!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigInvalid(f"{key}: must be finite")
    return v


def _ints(key, s):
    return tuple(_int(key, p) for p in s.split(",") if p.strip())


def parse_text(text):
    """``key=value`` lines -> dict; raises ConfigInvalid naming the offending key or line."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigInvalid(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigInvalid(f"unknown config key {key!r} (line {lineno})")
        if key in values:
            raise ConfigInvalid(f"duplicate config key {key!r} (line {lineno})")
        values[key] = value.strip()
    return values


def load(path):
    with open(path) as fh:
        return from_mapping(parse_text(fh.read()))


def normalize(values):
    """Canonical string form of every key, defaults filled in and irrelevant keys dropped."""
    for key in values:
        if key not in DEFAULTS:
            raise ConfigInvalid(f"unknown config key {key!r}")
    merged = {**DEFAULTS, **{k: str(v) for k, v in values.items()}}
    cfg = _build(merged)
    norm = {
        "branch": cfg.branch,
        "clients": str(cfg.clients),
        "alpha": repr(cfg.alpha),
        "rounds": str(cfg.rounds),
        "seed": str(cfg.seed),
        "seeds": ",".join(str(s) for s in cfg.seeds),
        "broadcast": _text(cfg.broadcast),
        "attack.kind": cfg.attack.kind,
        "attack.loss": str(cfg.attack.loss),
        "attack.similarity": str(cfg.attack.similarity),
        "attack.noise_scale": repr(cfg.attack.noise_scale),
        "attack.target": repr(cfg.attack_target),
        "attack.seed": str(cfg.attack.seed),
        "defence.kind": cfg.defence.kind,
        "defence.expguard": _text(cfg.defence.expguard),
        "defence.score_norm": cfg.defence.score_norm,
        "defence.gm_tol": repr(cfg.defence.gm_tol),
        "defence.gm_max_iter": str(cfg.defence.gm_max_iter),
        "model.hidden": ",".join(str(h) for h in cfg.hidden),
        "model.activation": cfg.activation,
        "client.total_epochs": str(cfg.client_total_epochs),
        "server.epochs": str(cfg.server_epochs),
        "server.loss": cfg.server_loss,
        "server.early_stopping": _text(cfg.early_stopping),
        "data.path": cfg.data_path,
    }
    for prefix, sch in (("client", cfg.client), ("server", cfg.server)):
        norm[f"{prefix}.batch_size"] = str(sch.batch_size)
        for name in ("lr", "momentum", "weight_decay"):
            norm[f"{prefix}.{name}"] = repr(getattr(sch, name))
    if not cfg.data_path:
        norm.update(
            {
                "data.classes": str(cfg.classes),
                "data.dim": str(cfg.dim),
                "data.per_class": str(cfg.per_class),
                "data.spread": repr(cfg.spread),
                "data.scale": repr(cfg.scale),
            }
        )
    for name, frac in zip(("private", "public", "validation", "test"), cfg.split):
        norm[f"split.{name}"] = repr(frac)
    for key, kinds in _ATTACK_EXTRAS.items():
        if cfg.attack.kind not in kinds:
            norm.pop(key)
    if not cfg.defence.expguard:
        norm.pop("defence.score_norm")
    return dict(sorted(norm.items()))


def config_hash(values):
    canon = "".join(f"{k}={v}\n" for k, v in normalize(values).items())
    return hashlib.sha256(canon.encode()).hexdigest()


def from_mapping(values):
    norm = normalize(values)
    merged = {**DEFAULTS, **{k: str(v) for k, v in values.items()}}
    cfg = _build(merged)
    return replace(cfg, raw=tuple(norm.items()))


def _build(v):
    branch = v["branch"].strip().lower()
    if branch not in ("fd", "fedavg"):
        raise ConfigInvalid(f"branch: expected fd or fedavg, got {v['branch']!r}")
    clients = _int("clients", v["clients"])
    if clients < 1:
        raise ConfigInvalid("clients: must be >= 1")
    alpha = _float("alpha", v["alpha"])
    if not 0 <= alpha < 0.5:
        raise ConfigInvalid(f"alpha: must lie in [0, 0.5), got {alpha}")
    if abs(alpha * clients - round(alpha * clients)) > 1e-9:
        raise ConfigInvalid(f"alpha: {alpha} x {clients} clients is not a whole number of clients")
    rounds = _int("rounds", v["rounds"])
    if rounds < 1:
        raise ConfigInvalid("rounds: must be >= 1")
    seed = _int("seed", v["seed"])
    seeds = _ints("seeds", v["seeds"])

    kind = v["attack.kind"].strip().upper()
    allowed = FD_KINDS if branch == "fd" else FEDAVG_KINDS
    if kind not in allowed:
        raise ConfigInvalid(f"attack.kind: {kind!r} is not available on branch {branch}")
    loss = v["attack.loss"].strip().upper() if kind in _ATTACK_EXTRAS["attack.loss"] else None
    sim = v["attack.similarity"].strip() if kind in _ATTACK_EXTRAS["attack.similarity"] else None
    noise = _float("attack.noise_scale", v["attack.noise_scale"]) if kind == "FEDAVG_GAUSS" else None
    try:
        attack = AttackSpec(kind, loss=loss, similarity=sim, noise_scale=noise, seed=_int("attack.seed", v["attack.seed"]))
    except ValueError as exc:
        raise ConfigInvalid(f"attack: {exc}") from None
    if sim is not None and not sim:
        raise ConfigInvalid("attack.similarity: give 'model' or a matrix file path")
    target = _float("attack.target", v["attack.target"])

    dkind = v["defence.kind"].strip().upper()
    try:
        defence = DefenceSpec(
            dkind,
            expguard=_bool("defence.expguard", v["defence.expguard"]),
            score_norm=v["defence.score_norm"].strip().lower(),
            gm_tol=_float("defence.gm_tol", v["defence.gm_tol"]),
            gm_max_iter=_int("defence.gm_max_iter", v["defence.gm_max_iter"]),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"defence: {exc}") from None
    if defence.kind in ("CRONUS", "FILTER_SCORE") or defence.expguard:
        need = 4 if defence.kind == "CRONUS" else 2
        if branch == "fd" and clients < need:
            raise ConfigInvalid(f"defence.kind: {defence.label} needs at least {need} clients")

    hidden = _ints("model.hidden", v["model.hidden"])
    if any(h < 1 for h in hidden):
        raise ConfigInvalid("model.hidden: widths must be >= 1")
    activation = v["model.activation"].strip().lower()
    if activation not in ("tanh", "relu"):
        raise ConfigInvalid(f"model.activation: unknown activation {activation!r}")

    def schedule(prefix):
        bs = _int(f"{prefix}.batch_size", v[f"{prefix}.batch_size"])
        lr = _float(f"{prefix}.lr", v[f"{prefix}.lr"])
        mom = _float(f"{prefix}.momentum", v[f"{prefix}.momentum"])
        wd = _float(f"{prefix}.weight_decay", v[f"{prefix}.weight_decay"])
        if bs < 1 or lr <= 0 or not 0 <= mom < 1 or wd < 0:
            raise ConfigInvalid(f"{prefix}: need batch_size >= 1, lr > 0, momentum in [0, 1), weight_decay >= 0")
        return Schedule(bs, lr, mom, wd)

    total = _int("client.total_epochs", v["client.total_epochs"])
    if total < rounds:
        raise ConfigInvalid(f"client.total_epochs: {total} epochs cannot cover {rounds} rounds")
    server_epochs = _int("server.epochs", v["server.epochs"])
    if server_epochs < 1:
        raise ConfigInvalid("server.epochs: must be >= 1")
    server_loss = v["server.loss"].strip().upper()
    if server_loss not in ("CEL", "MSE"):
        raise ConfigInvalid(f"server.loss: unknown loss {server_loss!r}")

    classes = _int("data.classes", v["data.classes"])
    dim = _int("data.dim", v["data.dim"])
    per_class = _int("data.per_class", v["data.per_class"])
    spread = _float("data.spread", v["data.spread"])
    scale = _float("data.scale", v["data.scale"])
    if classes < 2 or dim < 2 or per_class < 1 or spread < 0:
        raise ConfigInvalid("data: need classes >= 2, dim >= 2, per_class >= 1, spread >= 0")
    fr = tuple(_float(f"split.{n}", v[f"split.{n}"]) for n in ("private", "public", "validation", "test"))
    if any(f < 0 for f in fr) or abs(sum(fr) - 1) > 1e-9:
        raise ConfigInvalid(f"split: fractions must be non-negative and sum to 1, got {sum(fr)}")
    if fr[1] == 0 and branch == "fd":
        raise ConfigInvalid("split.public: distillation needs a public split")

    return ExperimentConfig(
        branch=branch,
        clients=clients,
        alpha=alpha,
        rounds=rounds,
        seed=seed,
        seeds=seeds,
        broadcast=_bool("broadcast", v["broadcast"]),
        attack=attack,
        attack_target=target,
        defence=defence,
        hidden=hidden,
        activation=activation,
        client_total_epochs=total,
        client=schedule("client"),
        server_epochs=server_epochs,
        server=schedule("server"),
        server_loss=server_loss,
        early_stopping=_bool("server.early_stopping", v["server.early_stopping"]),
        data_path=v["data.path"].strip(),
        classes=classes,
        dim=dim,
        per_class=per_class,
        spread=spread,
        scale=scale,
        split=fr,
    )


def dumps(cfg):
    """Flat text form of a config; loading it back gives the same hash."""
    return "".join(f"{k}={v}\n" for k, v in cfg.raw)
