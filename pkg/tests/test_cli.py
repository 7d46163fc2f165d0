import json
import subprocess
import sys

import numpy as np
import pytest

from hetqnd import cli
from hetqnd.ensemble import EnsembleConfig, run_trajectory
from hetqnd.measurement import InterferometerParams

SIM_ARGS = ["simulate", "--atoms", "16", "--phi", "1e-2", "--R", "0.5",
            "--photons", "400", "--trajectories", "3", "--seed", "5",
            "--stride", "100"]


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest:")
    header = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:]]
    return header, rows


class TestSimulate:
    def test_writes_expected_files(self, tmp_path):
        out = tmp_path / "run"
        assert cli.main(SIM_ARGS + ["--out", str(out)]) == 0
        for name in ("trajectories.csv", "ensemble.csv", "histogram.csv",
                     "manifest.json"):
            assert (out / name).exists()
        header, rows = read_csv(out / "trajectories.csv")
        assert header == ["trajectory_id", "step", "mean_jz", "var_jz"]
        assert len(rows) == 3 * 5  # 3 trajectories x 5 logged steps
        header, rows = read_csv(out / "ensemble.csv")
        assert header == ["step", "mean_var_jz", "analytic_var_jz",
                          "lower_bound", "upper_bound"]
        assert len(rows) == 5
        header, rows = read_csv(out / "histogram.csv")
        assert header == ["n_bin", "count", "born_probability"]
        assert len(rows) == 17
        assert sum(int(r[1]) for r in rows) == 3

    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "run"
        cli.main(SIM_ARGS + ["--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert manifest["seed"] == 5
        assert manifest["config"]["atoms"] == 16
        assert set(manifest["outputs"]) == {"trajectories.csv", "ensemble.csv",
                                            "histogram.csv"}
        assert manifest["version"]

    def test_rerun_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cli.main(SIM_ARGS + ["--out", str(out1)])
        cli.main(SIM_ARGS + ["--out", str(out2)])
        for name in ("trajectories.csv", "ensemble.csv", "histogram.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_csv_roundtrip_precision(self, tmp_path):
        out = tmp_path / "run"
        cli.main(SIM_ARGS + ["--out", str(out)])
        _, rows = read_csv(out / "trajectories.csv")
        config = EnsembleConfig(n_atoms=16, n_photons=400, n_trajectories=3,
                                params=InterferometerParams(0.5, 0.5, 1e-2),
                                seed=5, record_stride=100)
        traj = run_trajectory(config, 0)
        parsed = [float(r[2]) for r in rows if r[0] == "0"]
        assert parsed == [float(x) for x in traj.mean_jz]

    def test_single_trajectory_no_photons(self, tmp_path):
        out = tmp_path / "run"
        code = cli.main(["simulate", "--photons", "0", "--trajectories", "1",
                         "--atoms", "4", "--seed", "1", "--out", str(out)])
        assert code == 0
        _, rows = read_csv(out / "trajectories.csv")
        assert len(rows) == 1
        assert rows[0][1] == "0"

    def test_scientific_notation_photons(self, tmp_path):
        out = tmp_path / "run"
        code = cli.main(["simulate", "--photons", "1e3", "--trajectories", "1",
                         "--atoms", "4", "--seed", "1", "--out", str(out)])
        assert code == 0

    def test_config_file_and_flag_precedence(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text(
            "atoms = 12\nphotons = 200\ntrajectories = 2\nseed = 9\n"
            "phi = 1e-2\nstride = 100\n")
        out = tmp_path / "run"
        code = cli.main(["simulate", "--config", str(config), "--atoms", "8",
                         "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["atoms"] == 8       # flag wins
        assert manifest["config"]["photons"] == 200   # file value
        assert manifest["config"]["seed"] == 9

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("atomz = 12\n")
        assert cli.main(["simulate", "--config", str(config)]) == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_invalid_splitter_exits_2(self, capsys):
        assert cli.main(["simulate", "--R", "1.5", "--photons", "10",
                         "--trajectories", "1"]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_simulation_failure_exits_3(self, tmp_path, monkeypatch, capsys):
        def boom(config, workers=None):
            raise RuntimeError("kernel exploded")

        monkeypatch.setattr(cli, "run_ensemble", boom)
        code = cli.main(SIM_ARGS + ["--out", str(tmp_path / "x")])
        assert code == 3
        assert "simulation failed" in capsys.readouterr().err


class TestAnalytic:
    def test_default_sweep(self, tmp_path):
        out = tmp_path / "ana"
        assert cli.main(["analytic", "--points", "40", "--out", str(out)]) == 0
        header, rows = read_csv(out / "analytic.csv")
        assert header == ["N_p", "xi2", "kappa2", "var_short", "lower_bound"]
        assert len(rows) == 40
        n_p = np.array([float(r[0]) for r in rows])
        assert np.all(np.diff(np.log(n_p)) > 0)  # log-spaced grid
        xi2 = np.array([float(r[1]) for r in rows])
        kappa2 = np.array([float(r[2]) for r in rows])
        np.testing.assert_allclose(xi2, 1.0 / (1.0 + kappa2), rtol=1e-12)

    def test_empty_sweep_header_only(self, tmp_path):
        out = tmp_path / "ana"
        assert cli.main(["analytic", "--points", "0", "--out", str(out)]) == 0
        _, rows = read_csv(out / "analytic.csv")
        assert rows == []

    def test_bad_range_exits_2(self, capsys):
        assert cli.main(["analytic", "--np-min", "10", "--np-max", "1"]) == 2


class TestBudget:
    def test_default_rb87_report(self, tmp_path, capsys):
        out = tmp_path / "bud"
        assert cli.main(["budget", "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        for key in ("balanced_probe_freq_hz", "mu", "rho0", "eta_optimum",
                    "xi2_optimum", "n_photons_at_optimum"):
            assert key in stdout
        report = json.loads((out / "budget.json").read_text())
        assert report["manifest"] == "manifest.json"
        assert report["balance_residual"] < 1e-9
        assert 0.0 < report["eta_optimum"] < 1.0

    def test_missing_species_exits_2(self, tmp_path, capsys):
        assert cli.main(["budget", "--species",
                         str(tmp_path / "nope.species")]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_malformed_species_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.species"
        bad.write_text("name = x\nI = one\n")
        assert cli.main(["budget", "--species", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "species file error" in err and ":2:" in err

    def test_no_root_exits_4(self, capsys):
        assert cli.main(["budget", "--window", "3.8432e14", "3.8434e14"]) == 4
        assert "no balanced detuning" in capsys.readouterr().err


class TestVerify:
    def test_list(self, capsys):
        assert cli.main(["verify", "--list"]) == 0
        out = capsys.readouterr().out
        for name in ("product_form_equivalence", "subprocess_m2_reduction",
                     "gaussian_limit_kl", "born_rule_chi2"):
            assert name in out

    def test_fast_checks_pass(self, tmp_path, capsys):
        code = cli.main(["verify", "--check", "product_form_equivalence",
                         "--check", "subprocess_m2_reduction",
                         "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 2
        doc = json.loads((tmp_path / "verify.json").read_text())
        assert doc["all_passed"] is True

    def test_broken_tolerance_exits_1(self, capsys):
        code = cli.main(["verify", "--check", "product_form_equivalence",
                         "--equiv-tol", "1e-18"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "hetqnd.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "hetqnd" in out.stdout
