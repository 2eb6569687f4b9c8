import json
import subprocess
import sys

import pytest

from apt_lab.cli import main

CONFIG = """\
label = cli
layout = open_room
width = 4
height = 4
total_steps = 1200
min_buffer = 200
log_interval = 300
epoch_length = 400
reference = buffer
finetune_steps = 500
finetune_min_buffer = 50
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG)
    return path


def run_twice(tmp_path, argv, files):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code = main(argv + ["--out", str(out), "--no-timing"])
        outs.append((code, {f: (out / f).read_bytes() for f in files}))
    assert outs[0] == outs[1]
    return outs[0]


def test_pretrain_and_finetune_are_byte_identical(tmp_path, cfg):
    code, files = run_twice(tmp_path, ["pretrain", "--config", str(cfg), "--seed", "4"],
                            ["metrics.csv", "summary.json", "artifacts/qtable.csv", "artifacts/encoder.ckpt"])
    assert code == 0
    assert b"wall_clock_ms" not in files["metrics.csv"]
    code, files = run_twice(tmp_path, ["finetune", "--config", str(cfg), "--from", str(tmp_path / "a" / "artifacts")],
                            ["metrics.csv", "episodes.csv", "summary.json"])
    assert code == 0
    assert json.loads(files["summary.json"])["pretrained"] is True


def test_decay_compare_bench_are_byte_identical(tmp_path, cfg):
    code, _ = run_twice(tmp_path, ["decay", "--config", str(cfg)], ["decay.csv", "metrics.csv", "summary.json"])
    assert code in (0, 2)
    rnd = tmp_path / "random.cfg"
    rnd.write_text(CONFIG.replace("label = cli", "label = random\nreward_source = none"))
    code, _ = run_twice(tmp_path, ["compare", "--method", str(cfg), "--method", str(rnd), "--seeds", "0,1"],
                        ["per_seed.csv", "aggregate.csv"])
    assert code in (0, 2)
    code, files = run_twice(tmp_path, ["bench-knn", "--sizes", "20,50", "--dims", "2"], ["bench_knn.csv"])
    assert code == 0
    assert len(files["bench_knn.csv"].splitlines()) == 1 + 4


def test_seed_sources(tmp_path, cfg, monkeypatch):
    monkeypatch.setenv("APT_LAB_SEED", "9")
    main(["pretrain", "--config", str(cfg), "--out", str(tmp_path / "env"), "--no-timing"])
    main(["pretrain", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "flag"), "--no-timing"])
    assert (tmp_path / "env" / "metrics.csv").read_bytes() == (tmp_path / "flag" / "metrics.csv").read_bytes()
    assert json.loads((tmp_path / "env" / "summary.json").read_text())["seed"] == 9
    cfg.write_text(CONFIG + "seed = 2\n")
    main(["pretrain", "--config", str(cfg), "--out", str(tmp_path / "cfg"), "--no-timing"])
    assert json.loads((tmp_path / "cfg" / "summary.json").read_text())["seed"] == 2


def test_validate_config(cfg, tmp_path, capsys):
    assert main(["validate-config", "--config", str(cfg)]) == 0
    assert "total_steps = 1200" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 3\n")
    assert main(["validate-config", "--config", str(bad)]) == 1
    assert main(["validate-config", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["validate-config"]) == 1


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["pretrain", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_failed_decay_check_exits_2(tmp_path, cfg):
    # batch-mode rewards do not vanish, so a tiny threshold must fail
    cfg.write_text(CONFIG.replace("reference = buffer", "reference = batch") + "decay_threshold = 0.001\n")
    assert main(["decay", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2


def test_console_script_runs(tmp_path, cfg):
    proc = subprocess.run([sys.executable, "-m", "apt_lab.cli", "validate-config", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "label = cli" in proc.stdout
