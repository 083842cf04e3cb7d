import json
import math

import numpy as np
import pytest

from spinbath.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from spinbath.eigensolver import load_spectrum
from spinbath.observables import LN2
from spinbath.runner import (
    CSV_HEADER,
    ConfigError,
    RunConfig,
    RunManifest,
    StageError,
    read_csv,
    run_experiment,
    summarize,
    summary_row,
    write_csv,
)

SMALL = dict(n_s=5, n_eig=6, t_max=10.0, dt_out=0.5, lambdas=(0.0, 2.0, 8.0))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    cfg = RunConfig.paper(out_dir=str(out), **SMALL)
    return cfg, run_experiment(cfg)


def test_paper_preset():
    cfg = RunConfig.paper()
    assert (cfg.n_s, cfg.n_eig, cfg.kT, cfg.lambda0) == (12, 20, 0.02, 1.0)
    assert cfg.lambdas == (0, 1, 2, 4, 8)
    assert (cfg.omega0, cfg.beta, cfg.omega_d) == (0.8288, 0.01, 1.0)


@pytest.mark.parametrize(
    "bad",
    [
        dict(lambdas=()),
        dict(lambdas=(1.0, 1.0)),
        dict(t_max=0.0),
        dict(t_max=1.0, dt_out=0.3),
        dict(kT=0.0),
        dict(n_eig=0),
        dict(n_s=2, n_eig=5),
        dict(freq_mode="cosine"),
        dict(threads=0),
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        RunConfig.paper(**bad)


def test_frequency_modes(tmp_path):
    assert RunConfig.paper(freq_mode="random:5").frequencies().tolist() == RunConfig.paper(
        freq_mode="random:5"
    ).frequencies().tolist()
    path = tmp_path / "w.txt"
    path.write_text("\n".join(str(0.05 * (k + 1)) for k in range(12)))
    np.testing.assert_allclose(RunConfig.paper(freq_mode=f"file:{path}").frequencies(), 0.05 * np.arange(1, 13))
    with pytest.raises(ConfigError):
        RunConfig.paper(freq_mode=f"file:{tmp_path / 'missing.txt'}").frequencies()


def test_outputs_present(small_run):
    cfg, manifest = small_run
    out = cfg.out_dir
    assert manifest.status == "complete"
    for lam in cfg.lambdas:
        data = read_csv(f"{out}/sweep_lambda_{lam:g}.csv")
        assert len(data["t"]) == 21
        assert abs(data["S"][0]) <= 1e-10
        spec, header = load_spectrum(f"{out}/spectrum_lambda_{lam:g}.dat")
        assert spec.n_eig >= cfg.n_eig and header["lambda"] == lam
    iso = read_csv(f"{out}/isolated.csv")
    assert np.all(iso["S"] == 0)
    with open(f"{out}/sweep_lambda_0.csv") as fh:
        assert fh.readline().strip() == ",".join(CSV_HEADER)
    assert "sweep_lambda_8.csv" in open(f"{out}/plot.gp").read()


def test_rows_obey_state_invariants(small_run):
    cfg, _ = small_run
    for lam in cfg.lambdas:
        d = read_csv(f"{cfg.out_dir}/sweep_lambda_{lam:g}.csv")
        bloch = d["X"] ** 2 + d["Y"] ** 2 + d["Z"] ** 2
        assert np.all(bloch <= 1 + 1e-9)
        assert np.all((d["S"] >= 0) & (d["S"] <= LN2 + 1e-9))


def test_manifest_contents_and_round_trip(small_run, tmp_path):
    cfg, manifest = small_run
    loaded = RunManifest.load(f"{cfg.out_dir}/manifest.json")
    assert loaded.config == cfg.to_dict()
    assert loaded.frequencies == cfg.frequencies().tolist()
    assert loaded.software["spinbath"]
    info = loaded.lambdas["8"]
    for key in ("n_eig_effective", "weight_truncation", "energies", "weights"):
        assert key in info
    assert info["integration"]["max_norm_drift"] <= 1e-8
    # Re-running from the embedded config reproduces the physics.
    again = run_experiment(RunConfig.from_dict(loaded.config).replace(out_dir=str(tmp_path)))
    for tag, entry in loaded.lambdas.items():
        assert again.lambdas[tag]["energies"] == entry["energies"]
        assert again.lambdas[tag]["weights"] == entry["weights"]
    for name in ("sweep_lambda_0.csv", "sweep_lambda_8.csv", "isolated.csv"):
        assert (tmp_path / name).read_bytes() == open(f"{cfg.out_dir}/{name}", "rb").read()


def test_parallel_matches_serial(small_run, tmp_path):
    cfg, _ = small_run
    run_experiment(cfg.replace(out_dir=str(tmp_path), threads=3))
    for lam in cfg.lambdas:
        name = f"sweep_lambda_{lam:g}.csv"
        assert (tmp_path / name).read_bytes() == open(f"{cfg.out_dir}/{name}", "rb").read()


def test_summary(small_run):
    cfg, manifest = small_run
    rows = summarize(cfg.out_dir)
    assert [r["lambda"] for r in rows] == list(cfg.lambdas)
    assert rows == manifest.summary
    s_bar = [r["S_late_mean"] for r in rows]
    assert s_bar == sorted(s_bar, reverse=True)
    assert rows[-1]["rms_dX"] < rows[0]["rms_dX"]


def test_summary_of_identical_trajectories_is_zero():
    t = np.linspace(0, 1, 11)
    iso = {"t": t, "S": 0 * t, "X": np.sin(t), "Y": np.cos(t), "Z": t}
    row = summary_row(0.0, iso, iso)
    assert row["rms_dX"] == row["rms_dY"] == row["rms_dZ"] == row["max_abs_dZ"] == 0.0


def test_summary_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        summarize(tmp_path)
    write_csv(tmp_path / "isolated.csv", [(0.0, 0.0, 0.0, 0.0, 1.0)])
    with pytest.raises(FileNotFoundError):
        summarize(tmp_path, lambdas=[1.0])


def test_csv_round_trip_is_exact(tmp_path):
    rows = [(0.1, 1 / 3, -2e-17, math.pi, -0.0 + 0.0)]
    write_csv(tmp_path / "a.csv", rows)
    back = read_csv(tmp_path / "a.csv")
    assert [back[k][0] for k in CSV_HEADER] == list(rows[0])


def test_stage_failure_marks_manifest_incomplete(tmp_path, monkeypatch):
    import spinbath.runner as runner

    def boom(*a, **k):
        raise FloatingPointError("synthetic")

    monkeypatch.setattr(runner, "evolve_rk8", boom)
    cfg = RunConfig.paper(out_dir=str(tmp_path), **SMALL)
    with pytest.raises(StageError) as info:
        run_experiment(cfg)
    assert "propagation" in info.value.stage
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["status"] == "incomplete" and "propagation" in m["failed_stage"]


def test_cli_success(tmp_path, capsys):
    code = main(["--ns", "4", "--neig", "3", "--tmax", "2", "--dt-out", "0.5", "--lambdas", "0,8", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.glob("*.csv")) == [
        "isolated.csv",
        "summary.csv",
        "sweep_lambda_0.csv",
        "sweep_lambda_8.csv",
    ]
    assert "lambda=8" in capsys.readouterr().out
    assert main(["--summarize", str(tmp_path)]) == EXIT_OK


def test_cli_from_manifest(tmp_path):
    first = tmp_path / "a"
    assert main(["--ns", "3", "--neig", "2", "--tmax", "1", "--lambdas", "1", "--out", str(first)]) == EXIT_OK
    second = tmp_path / "b"
    assert main(["--from-manifest", str(first / "manifest.json"), "--out", str(second)]) == EXIT_OK
    assert (first / "sweep_lambda_1.csv").read_bytes() == (second / "sweep_lambda_1.csv").read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["--lambdas", ""],
        ["--lambdas", "a,b"],
        ["--tmax", "1", "--dt-out", "0.3"],
        ["--preset", "other"],
        ["--freq-mode", "file:/nonexistent/w.txt"],
        ["--ns", "3", "--neig", "9"],
    ],
)
def test_cli_config_errors(argv, tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        raise SystemExit(main(argv + ["--out", str(tmp_path)]))
    assert info.value.code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_numerical_failure(tmp_path, monkeypatch, capsys):
    import spinbath.runner as runner

    def boom(*a, **k):
        raise FloatingPointError("synthetic")

    monkeypatch.setattr(runner, "lowest_eigenpairs", boom)
    code = main(["--ns", "3", "--neig", "2", "--tmax", "1", "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC
    assert "bath_spectrum" in capsys.readouterr().err
