import json

import pytest

from mfgabsorb.cli import main


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_example_config(capsys):
    assert main(["toy", "--example-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["experiment"] == "toy"


def test_flat_distance(tmp_path, capsys):
    path = _write(tmp_path, {"experiment": "flat-distance", "m1": {"atoms": [[0.2, 1.0]]},
                             "m2": {"atoms": [[0.7, 1.0]]}})
    assert main(["flat-distance", "--config", path]) == 0
    assert capsys.readouterr().out.strip() == "flat_distance = 0.5"


def test_seventeen_digits(tmp_path, capsys):
    path = _write(tmp_path, {"experiment": "flat-distance", "m1": {"atoms": [[0.1, 0.3]]},
                             "m2": {"zero": 1}})
    main(["flat-distance", "--config", path])
    assert capsys.readouterr().out.strip() == "flat_distance = 0.29999999999999999"


def test_precondition_exit_code(tmp_path):
    path = _write(tmp_path, {"experiment": "toy", "grid": {"n_space": 2, "n_time": 5}})
    assert main(["toy", "--config", path]) == 2
    assert main(["toy", "--config", str(tmp_path / "missing.json")]) == 2
    path = _write(tmp_path, {"experiment": "flat-distance", "m1": {"atoms": [[0.0, 1.0]]},
                             "m2": {"zero": 1}})
    assert main(["flat-distance", "--config", path]) == 2


def test_convergence_exit_code(tmp_path):
    path = _write(tmp_path, {"experiment": "mfg", "grid": {"n_space": 21, "n_time": 41, "T": 0.1},
                             "max_iter": 1, "tolerances": {"mfg": 1e-15}})
    assert main(["solve-mfg", "--config", path, "--out", str(tmp_path / "o")]) == 3


def test_toy_and_literal_flag(tmp_path, capsys):
    path = _write(tmp_path, {"experiment": "toy", "grid": {"n_space": 51, "n_time": 101,
                                                           "T": 0.2}})
    assert main(["toy", "--config", path, "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    err = float(out.split("terminal_check_error = ")[1].split()[0])
    assert err <= 1e-6
    assert main(["toy", "--config", path, "--out", str(tmp_path / "b"), "--bk-literal"]) == 0
    out = capsys.readouterr().out
    assert float(out.split("terminal_check_error = ")[1].split()[0]) > 0.1
    for name in ("bk.csv", "U.csv", "U_t0.svg"):
        assert (tmp_path / "a" / name).exists()


@pytest.mark.parametrize("cmd,kind,extra", [
    ("solve-mfg", "mfg", {}),
    ("simulate", "simulate", {"N": 20, "dt_particles": 1e-3}),
    ("nash2", "nash2", {"grid": {"n_space": 9, "n_time": 21, "T": 0.1}}),
])
def test_subcommands_run(tmp_path, capsys, cmd, kind, extra):
    cfg = {"experiment": kind, "grid": {"n_space": 21, "n_time": 41, "T": 0.1}}
    cfg.update(extra)
    path = _write(tmp_path, cfg)
    assert main([cmd, "--config", path, "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert capsys.readouterr().out


def test_wrong_experiment_kind(tmp_path):
    path = _write(tmp_path, {"experiment": "toy"})
    assert main(["nash2", "--config", path]) == 2
