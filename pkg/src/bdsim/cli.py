"""Command-line entry point: ``run``, ``sweep`` and ``check``.

Exit codes: ``run`` gives 0 on success, 2 on a configuration error and 3 on
a runtime failure. ``check`` gives 0 when every check passes, 1 otherwise and
2 for unknown names. ``sweep`` gives 2 for an invalid config or axis value
and 3 when at least one run failed (the others still complete).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checks, config, federation
from .errors import BdsError, ConfigInvalid

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SWEEP_AXES = ("alpha", "clients", "rounds")
TSV_HEADER = "axis\tattack\tdefence\tacc_mean\tacc_std\n"


def attack_label(cfg):
    a = cfg.attack
    return f"{a.kind}+{a.loss}" if a.loss else a.kind


def summary(cfg, records):
    last = records[-1]
    return {
        "type": "summary",
        "branch": cfg.branch,
        "attack": attack_label(cfg),
        "defence": cfg.defence.label if cfg.branch == "fd" else "MEAN",
        "alpha": cfg.alpha,
        "clients": cfg.clients,
        "rounds": cfg.rounds,
        "seed": cfg.seed,
        "final_test_acc": last.test_acc,
        "final_val_acc": last.val_acc,
        "config_hash": cfg.hash(),
        "wall_time": sum(r.wall_time for r in records),
    }


def metrics_lines(cfg, records):
    lines = [json.dumps({"type": "round", **r.to_dict()}, sort_keys=True) for r in records]
    lines.append(json.dumps(summary(cfg, records), sort_keys=True))
    return "".join(line + "\n" for line in lines)


def write_metrics(path, cfg, records):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(metrics_lines(cfg, records))


def _err(msg):
    print(f"bdsim: {msg}", file=sys.stderr)


def _read(path):
    try:
        with open(path) as fh:
            return config.parse_text(fh.read())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror}") from None


def _load(path):
    return config.from_mapping(_read(path))


def cmd_run(config_path, out_path):
    try:
        cfg = _load(config_path)
    except ConfigInvalid as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    try:
        records = federation.run(cfg)
        write_metrics(out_path, cfg, records)
    except ConfigInvalid as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except (BdsError, OSError, ArithmeticError) as exc:
        _err(f"run failed: {exc}")
        return EXIT_RUNTIME
    return EXIT_OK


def _parse_axis_value(axis, text):
    if axis == "alpha":
        float(text)
    else:
        int(text)
    return text.strip()


def _sweep_job(raw, seed, path):
    cfg = config.from_mapping({**dict(raw), "seed": str(seed)})
    try:
        records = federation.run(cfg, workers=1)
        write_metrics(path, cfg, records)
        return records[-1].test_acc, None
    except (BdsError, OSError, ArithmeticError) as exc:
        return None, str(exc)


def _fmt(v):
    return "nan" if v is None else repr(float(v))


def cmd_sweep(config_path, axis, values, out_dir, workers=None):
    if axis not in SWEEP_AXES:
        _err(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
        return EXIT_CONFIG
    try:
        mapping = _read(config_path)
        vals = [_parse_axis_value(axis, v) for v in values if v.strip()]
        if not vals:
            raise ConfigInvalid("sweep needs at least one value")
        # validate every point up front so a bad value costs nothing
        cfgs = {v: config.from_mapping({**mapping, axis: v}) for v in vals}
        first = cfgs[vals[0]]
        seeds = first.seeds or (first.seed,)
    except ValueError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for v in vals:
        for s in seeds:
            name = f"{axis}={v}.jsonl" if len(seeds) == 1 else f"{axis}={v}.seed={s}.jsonl"
            jobs.append((v, s, out / name))
    n = federation.thread_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
            futures = [pool.submit(_sweep_job, cfgs[v].raw, s, str(p)) for v, s, p in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_job(cfgs[v].raw, s, str(p)) for v, s, p in jobs]
    failed = False
    rows = []
    for v in vals:
        accs = []
        for (jv, js, _), (acc, err) in zip(jobs, results):
            if jv != v:
                continue
            if err is not None:
                failed = True
                _err(f"run {axis}={v} seed={js} failed: {err}")
            else:
                accs.append(acc)
        cfg = cfgs[v]
        mean = float(np.mean(accs)) if accs else None
        std = float(np.std(accs)) if accs else None
        defence = cfg.defence.label if cfg.branch == "fd" else "MEAN"
        rows.append(f"{v}\t{attack_label(cfg)}\t{defence}\t{_fmt(mean)}\t{_fmt(std)}\n")
    with open(out / "summary.tsv", "w") as fh:
        fh.write(TSV_HEADER + "".join(rows))
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_check(names, out_path):
    wanted = [n.strip() for n in names.split(",") if n.strip()]
    if not wanted or wanted == ["all"]:
        wanted = list(checks.CHECKS)
    unknown = [n for n in wanted if n not in checks.CHECKS]
    if unknown:
        _err(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(checks.CHECKS)}")
        return EXIT_CONFIG
    reports = checks.run_checks(wanted)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: measured {r.measured:.6g}, bound {r.bound:.6g}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="bdsim", description="Byzantine federated distillation simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    s = sub.add_parser("sweep", help="run one experiment per axis value (and per seed)")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True, help="output directory")
    c = sub.add_parser("check", help="run verification checks")
    c.add_argument("--names", default="all", help="comma-separated check names, or all")
    c.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.axis, args.values.split(","), args.out)
    return cmd_check(args.names, args.out)


if __name__ == "__main__":
    sys.exit(main())
