import json

import numpy as np
import pytest

from lieprop.cli import main
from lieprop.harness import (
    ExperimentConfig,
    ExperimentError,
    MethodResult,
    emit_results,
    read_errors_csv,
    reference_from_dump,
    run_experiment,
    time_methods,
    write_errors_csv,
)
from lieprop.sim import write_dump

SMALL = dict(T=0.05, n_samples=64, base_seed=3, checkpoint_stride=10)


def test_config_defaults_and_roundtrip():
    cfg = ExperimentConfig()
    assert cfg.methods == ("UKF-LA", "EMD0", "EMD2", "UTD")
    assert cfg.grid.n_steps == 1000
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert ExperimentConfig(methods="emd2,utd").methods == ("EMD2", "UTD")


@pytest.mark.parametrize(
    "bad",
    [
        {"trajectory": 3},
        {"dt": 0.0},
        {"n_samples": 0},
        {"methods": "EMD2,FOO"},
        {"methods": ""},
        {"inertia_diag": (1.0, 2.0)},
        {"inertia_diag": (1.0, -2.0, 1.0)},
        {"T": 1.0005},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        cfg = ExperimentConfig(**bad)
        cfg.model  # noqa: B018 -- model/grid construction validates the rest


def test_config_unknown_key():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"trajectroy": 1})


def test_errors_csv_roundtrip_is_exact(tmp_path, rng):
    res = MethodResult(np.linspace(0, 1, 11), rng.random(11), rng.random(11) * 1e-9, rng.random(11), 0.0)
    path = tmp_path / "e.csv"
    write_errors_csv(path, res)
    back = read_errors_csv(path)
    assert path.read_text().splitlines()[0] == "t,e_R,e_l,e_Sigma"
    for key, col in (("t", res.times), ("e_R", res.e_R), ("e_l", res.e_l), ("e_Sigma", res.e_Sigma)):
        assert np.array_equal(back[key], col)


def test_errors_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_errors_csv(path)


def test_outputs_are_reproducible(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        table = run_experiment(ExperimentConfig(**SMALL, output_dir="results"))
        emit_results(table, out)
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert "e_R.svg" in names and "errors_EMD2.csv" in names and "config.json" in names
    for name in names:
        if name == "timings.csv":  # wall-clock seconds are not reproducible
            continue
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_noiseless_ensemble_matches_emd0():
    cfg = ExperimentConfig(T=0.2, n_samples=4, b=0.0, methods=("EMD0",))
    table = run_experiment(cfg)
    res = table.methods["EMD0"]
    assert max(res.e_R.max(), res.e_l.max(), res.e_Sigma.max()) < 1e-4


def test_reference_from_dump_checks_shape(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    path = tmp_path / "ens.bin"
    write_dump(path, np.broadcast_to(np.eye(3), (3, 2, 3, 3)), np.zeros((3, 2, 3)))
    with pytest.raises(ExperimentError):
        reference_from_dump(cfg, path)


def test_time_methods_reports_all():
    cfg = ExperimentConfig(T=0.01, methods=("EMD2", "EMD0"))
    t = time_methods(cfg, repeats=2)
    assert set(t) == {"EMD2", "EMD0"} and all(v > 0 for v in t.values())


def write_cfg(tmp_path, **extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**SMALL, **extra}))
    return path


def test_cli_simulate_then_propagate(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == 0
    assert (out / "ensemble.bin").exists() and (out / "ensemble_stats.npz").exists()
    assert main(["propagate", "--out", str(out), "--methods", "EMD2,EMD0"]) == 0
    text = capsys.readouterr().out
    assert "EMD2" in text and "EMD0" in text
    errs = read_errors_csv(out / "errors_EMD2.csv")
    assert len(errs["t"]) == 6


def test_cli_compare_and_bench(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg), "--out", str(out), "--no-plots", "--traj", "2"]) == 0
    assert not (out / "e_R.svg").exists()
    assert json.loads((out / "config.json").read_text())["trajectory"] == 2
    assert main(["bench", "--config", str(cfg), "--out", str(out), "--repeats", "1", "--methods", "EMD2"]) == 0
    assert (out / "timings.csv").read_text().startswith("method,seconds\nEMD2,")


def test_cli_invalid_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"trajectory": 5}))
    assert main(["compare", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_cli_missing_dump(tmp_path):
    assert main(["propagate", "--config", str(write_cfg(tmp_path)), "--out", str(tmp_path / "x")]) == 1
