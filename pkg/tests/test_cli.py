import json
import subprocess
import sys

import numpy as np
import pytest

from purifylab.cli import main


def run_cli(args):
    return main(args)


def body_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [ln for ln in fh.read().splitlines() if not ln.startswith("#")]


class TestValidate:
    def test_default_suite_passes(self, tmp_path):
        out = tmp_path / "report.csv"
        code = run_cli([
            "validate", "--di", "2", "--do", "2", "--de", "2",
            "--n", "2000", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        lines = body_lines(out)
        assert lines[0] == "check,expected,observed,tolerance,status"
        assert all(ln.endswith("pass") for ln in lines[1:])

    def test_dep_zero_variance_check(self, tmp_path):
        out = tmp_path / "dep.csv"
        code = run_cli([
            "validate", "--di", "2", "--do", "2", "--de", "3", "--n", "100",
            "--seed", "1", "--check", "dep-constant", "--out", str(out),
        ])
        assert code == 0

    def test_second_moment_check(self, tmp_path):
        out = tmp_path / "sm.csv"
        code = run_cli([
            "validate", "--di", "2", "--do", "2", "--de", "2", "--n", "50000",
            "--seed", "3", "--check", "second-moment", "--out", str(out),
        ])
        assert code == 0

    def test_json_format(self, tmp_path):
        out = tmp_path / "report.json"
        code = run_cli([
            "validate", "--di", "2", "--do", "2", "--de", "2", "--n", "500",
            "--seed", "7", "--format", "json", "--out", str(out),
        ])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["config"]["command"] == "validate"
        assert all(row["status"] == "pass" for row in data["rows"])

    def test_usage_error_exit_2(self):
        assert run_cli(["validate", "--de", "zebra"]) == 2
        assert run_cli(["no-such-command"]) == 2


class TestSweep:
    def test_row_count_and_closed_forms(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run_cli([
            "sweep", "--di", "2", "--do", "2", "--de", "1..4", "--n", "300",
            "--seed", "5", "--strategies", "dep,avg-ue", "--out", str(out),
        ])
        assert code == 0
        lines = body_lines(out)
        assert len(lines) == 1 + 4 * 2
        for ln in lines[1:]:
            fields = ln.split(",")
            if fields[1] == "dep":
                d_e = int(fields[0])
                assert abs(float(fields[2]) - (4 - 2 / (2 * d_e))) < 1e-9
                assert float(fields[2]) == pytest.approx(float(fields[4]))

    def test_avg_ue_zero_at_trivial_env(self, tmp_path):
        out = tmp_path / "sweep1.csv"
        run_cli([
            "sweep", "--di", "2", "--do", "2", "--de", "1", "--n", "100",
            "--seed", "5", "--strategies", "avg-ue", "--out", str(out),
        ])
        row = body_lines(out)[1].split(",")
        assert float(row[2]) < 1e-10

    def test_plot_written(self, tmp_path):
        out = tmp_path / "sweep.csv"
        run_cli([
            "sweep", "--di", "2", "--do", "2", "--de", "1..2", "--n", "100",
            "--seed", "5", "--strategies", "dep", "--out", str(out), "--plot",
        ])
        svg = out.with_suffix(".csv.svg")
        assert svg.exists()
        assert svg.read_text().startswith("<svg")

    def test_bad_range_exit_2(self):
        assert run_cli(["sweep", "--de", "5..2"]) == 2


class TestWorkerReproducibility:
    def test_byte_identical_bodies(self, tmp_path):
        base = [
            "sweep", "--di", "2", "--do", "2", "--de", "1..2", "--n", "1200",
            "--seed", "9", "--strategies", "pure:omega,append:optimal,avg-ue",
        ]
        out1 = tmp_path / "w1.csv"
        out8 = tmp_path / "w8.csv"
        assert run_cli(base + ["--workers", "1", "--out", str(out1)]) == 0
        assert run_cli(base + ["--workers", "8", "--out", str(out8)]) == 0
        assert body_lines(out1) == body_lines(out8)


class TestSpectrum:
    def test_columns_and_atom(self, tmp_path):
        out = tmp_path / "spec.csv"
        code = run_cli([
            "spectrum", "--di", "2", "--do", "2", "--de", "2", "--seed", "3",
            "--draws", "60", "--bins", "16", "--out", str(out),
        ])
        assert code == 0
        lines = body_lines(out)
        assert lines[0] == "bin_center,count,empirical_density,mp_density,atom_weight"
        # c = 2 here, so the atom carries weight 1 - 1/2.
        atom = float(lines[1].split(",")[4])
        assert atom == pytest.approx(0.5)

    def test_isometric_spectrum_single_spike(self, tmp_path):
        out = tmp_path / "spec1.csv"
        run_cli([
            "spectrum", "--di", "2", "--do", "2", "--de", "1", "--seed", "3",
            "--draws", "30", "--bins", "10", "--out", str(out),
        ])
        lines = body_lines(out)
        counts = np.array([int(ln.split(",")[1]) for ln in lines[1:]])
        centers = np.array([float(ln.split(",")[0]) for ln in lines[1:]])
        # All mass in the single bin containing d_o * d_i = 4.
        assert counts.sum() == 30 * 4
        hot = counts > 0
        # isometric Choi spectrum: non-zero eigenvalues all equal d_i,
        # scaled by d_o -> 4; zero eigenvalues land in the first bin.
        assert set(np.round(centers[hot] / 4).astype(int)) <= {0, 1}

    def test_min_bins(self):
        assert run_cli(["spectrum", "--bins", "5"]) == 2

    def test_balanced_case_tracks_mp_reference(self, tmp_path):
        out = tmp_path / "spec16.csv"
        code = run_cli([
            "spectrum", "--di", "4", "--do", "4", "--de", "16", "--seed", "8",
            "--draws", "200", "--bins", "40", "--out", str(out),
        ])
        assert code == 0
        with open(out, encoding="utf-8") as fh:
            header = [ln for ln in fh.read().splitlines() if ln.startswith("# ks=")]
        ks = float(header[0].split("=")[1])
        assert ks < 0.08


class TestTomoScaling:
    def test_csv_and_footer(self, tmp_path):
        out = tmp_path / "tomo.csv"
        code = run_cli([
            "tomo-scaling", "--di", "1", "--do", "2", "--de", "2", "--n", "15",
            "--seed", "6", "--k", "32,128,512", "--out", str(out),
        ])
        assert code == 0
        lines = body_lines(out)
        assert lines[0] == "k,mean,stderr"
        assert lines[-1].startswith("slope,")
        slope = float(lines[-1].split(",")[1])
        assert -1.6 < slope < -0.4

    def test_k_range_validation(self):
        assert run_cli(["tomo-scaling", "--k", "64,128"]) == 2
        assert run_cli(["tomo-scaling", "--k", "64,128,256"]) == 2  # < 16x span


class TestConfigAndEnv:
    def test_config_file_defaults_and_flag_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("di=2\ndo=2\nde=3\nn=100\nseed=17\nstrategies=dep\n")
        out = tmp_path / "out.csv"
        code = run_cli(["sweep", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        row = body_lines(out)[1].split(",")
        assert row[0] == "3" and row[6] == "17"
        # A flag overrides the file.
        out2 = tmp_path / "out2.csv"
        run_cli(["sweep", "--config", str(cfg), "--de", "2", "--out", str(out2)])
        assert body_lines(out2)[1].split(",")[0] == "2"

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PURIFYLAB_SEED", "4242")
        out = tmp_path / "out.csv"
        run_cli(["sweep", "--di", "2", "--do", "2", "--de", "1", "--n", "100",
                 "--strategies", "dep", "--out", str(out)])
        assert body_lines(out)[1].split(",")[6] == "4242"


class TestFixturesCommand:
    def test_bundled_fixtures_pass(self, capsys):
        assert run_cli(["fixtures"]) == 0
        assert "fixtures passed" in capsys.readouterr().out

    def test_parse_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli(["fixtures", str(bad)]) == 2


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "purifylab.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
