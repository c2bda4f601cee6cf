import json

import pytest

from bdsim import cli

SMALL = "clients=4\nalpha=0.25\nrounds=2\ndata.per_class=100\nclient.total_epochs=10\nserver.epochs=10\n"


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def strip_wall(path):
    out = []
    for line in path.read_text().splitlines():
        d = json.loads(line)
        d.pop("wall_time", None)
        out.append(json.dumps(d, sort_keys=True))
    return out


def test_run_writes_rounds_and_summary(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "m.jsonl"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert [x["type"] for x in lines] == ["round", "round", "summary"]
    s = lines[-1]
    assert s["attack"] == "LMA+CEL" and s["defence"] == "EGF" and len(s["config_hash"]) == 64
    assert s["final_test_acc"] == lines[1]["test_acc"]


def test_run_is_byte_identical_apart_from_wall_time(tmp_path):
    cfg = write(tmp_path, SMALL + "attack.kind=HIPS_LMA\n")
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert cli.main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    assert strip_wall(a) == strip_wall(b)


@pytest.mark.parametrize("text, needle", [("alpha=0.5\n", "alpha"), ("atack.kind=LMA\n", "atack.kind")])
def test_run_config_errors_exit_2(tmp_path, capsys, text, needle):
    cfg = write(tmp_path, text)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 2
    assert needle in capsys.readouterr().err


def test_run_missing_config_exit_2(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope"), "--out", str(tmp_path / "m")]) == 2


def test_run_runtime_failure_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, SMALL + "client.lr=1e100\nclient.weight_decay=1\nclient.momentum=0\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 3
    assert "run failed" in capsys.readouterr().err


def test_run_bad_dataset_file_exit_3(tmp_path):
    (tmp_path / "ds.txt").write_text("2 2 3\n0.1 0.2 1\n")
    cfg = write(tmp_path, SMALL + f"data.path={tmp_path / 'ds.txt'}\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 3


def test_sweep_alpha_table(tmp_path):
    text = SMALL.replace("clients=4", "clients=20") + "attack.kind=RLF\ndefence.kind=MEAN\ndefence.expguard=false\n"
    cfg = write(tmp_path, text)
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(cfg), "--axis", "alpha", "--values", "0,0.1,0.45", "--out", str(out)]) == 0
    files = sorted(p.name for p in out.glob("*.jsonl"))
    assert files == ["alpha=0.1.jsonl", "alpha=0.45.jsonl", "alpha=0.jsonl"]
    rows = (out / "summary.tsv").read_text().splitlines()
    assert rows[0] == "axis\tattack\tdefence\tacc_mean\tacc_std"
    assert [r.split("\t")[0] for r in rows[1:]] == ["0", "0.1", "0.45"]
    assert all(r.split("\t")[4] == "0.0" for r in rows[1:])


def test_sweep_clients_with_seeds(tmp_path, monkeypatch):
    monkeypatch.setenv("BDS_THREADS", "2")
    cfg = write(tmp_path, SMALL.replace("alpha=0.25", "alpha=0") + "attack.kind=NONE\ndefence.kind=MEAN\ndefence.expguard=false\nseeds=1,2\n")
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(cfg), "--axis", "clients", "--values", "4,20", "--out", str(out)]) == 0
    rows = [r.split("\t") for r in (out / "summary.tsv").read_text().splitlines()[1:]]
    assert [r[0] for r in rows] == ["4", "20"]
    assert all(float(r[4]) >= 0 and r[4] != "nan" for r in rows)
    assert len(list(out.glob("*.jsonl"))) == 4


def test_sweep_invalid_value_exit_2(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["sweep", "--config", str(cfg), "--axis", "alpha", "--values", "0,0.5", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["sweep", "--config", str(cfg), "--axis", "seed", "--values", "1", "--out", str(tmp_path / "o")]) == 2


def test_check_commands(tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    assert cli.main(["check", "--names", "median_counterexample", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True
    assert cli.main(["check", "--names", "median_counterexample,nope", "--out", str(out)]) == 2


@pytest.mark.slow
def test_check_all(tmp_path):
    out = tmp_path / "c.jsonl"
    assert cli.main(["check", "--names", "all", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) >= 5


@pytest.mark.slow
def test_default_config_runs(tmp_path):
    cfg = write(tmp_path, "")
    out = tmp_path / "m.jsonl"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 11
