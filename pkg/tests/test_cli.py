import json
from pathlib import Path

import numpy as np
import pytest

from csspeaks.cli import main


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(path: Path, **kv):
    path.write_text(json.dumps(kv))
    return str(path)


class TestGroundStateCmd:
    def test_creates_cache_and_passes(self, workdir, capsys):
        code, out, _ = run_cli(capsys, "ground-state", "--out", "o",
                               "--cache", "c")
        assert code == 0
        assert "profile cached" in out
        assert "slope = -1.0" in out
        assert (workdir / "c").glob("*.csv")
        payload = json.loads((workdir / "o" / "ground_state.json").read_text())
        assert payload["passed"] is True
        assert -1.02 <= payload["slope"] <= -0.98

    def test_cache_hit_identical_output(self, workdir, capsys):
        code1, out1, _ = run_cli(capsys, "ground-state", "--out", "o",
                                 "--cache", "c")
        first = (workdir / "o" / "ground_state.json").read_bytes()
        code2, out2, _ = run_cli(capsys, "ground-state", "--out", "o",
                                 "--cache", "c")
        second = (workdir / "o" / "ground_state.json").read_bytes()
        assert code1 == code2 == 0
        assert "cache hit" in out2
        assert first == second
        assert out2.replace("cache hit", "cached") == \
            out1.replace("cached:", "cached") or first == second

    def test_bad_exponent_exit_2(self, workdir, capsys, tmp_path):
        cfg = write_config(tmp_path / "bad.json", p=1.5)
        code, _, err = run_cli(capsys, "ground-state", "--config", cfg)
        assert code == 2
        assert "p must exceed 2" in err


class TestVerifyCmd:
    def test_default_passes(self, workdir, capsys):
        code, out, _ = run_cli(capsys, "verify", "--out", "o", "--cache", "c")
        assert code == 0
        assert "all budgets met" in out
        csv = (workdir / "o" / "verify.csv").read_text()
        assert csv.startswith("# config=")

    def test_coarse_grid_budget_exceeded(self, workdir, capsys, tmp_path):
        cfg = write_config(tmp_path / "coarse.json",
                           grid={"half_width": 8.0, "n": 16})
        code, out, _ = run_cli(capsys, "verify", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 1
        assert "budget exceeded" in out

    def test_constant_potential_guard(self, workdir, capsys, tmp_path):
        cfg = write_config(tmp_path / "const.json",
                           potential={"family": "constant", "value": 1.0})
        code, out, _ = run_cli(capsys, "verify", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 0
        assert "(V2) guard" in out


class TestGaugeCheckCmd:
    def test_emits_fields_and_sidecar(self, workdir, capsys, tmp_path):
        cfg = write_config(tmp_path / "g.json", epsilon=[0.2])
        code, out, _ = run_cli(capsys, "gauge-check", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 0
        sidecar = json.loads((workdir / "o" / "gauge_eps0.2.json").read_text())
        assert "source_norm" in sidecar and "residuals" in sidecar
        assert (workdir / "o" / "gauge_eps0.2_a0.f2d").exists()
        assert (workdir / "o" / "gauge_eps0.2_a1.f2d").exists()


class TestSolveCmd:
    def test_infeasible_k_exit_3(self, workdir, capsys, tmp_path):
        cfg = write_config(tmp_path / "k5.json", k=5, epsilon=0.4)
        code, _, err = run_cli(capsys, "solve", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 3
        assert "D_k empty" in err

    def test_single_peak_solution(self, workdir, capsys, tmp_path):
        cfg = write_config(
            tmp_path / "s.json",
            epsilon=[0.1], k=1,
            grid={"half_width": 10.0, "n": 128},
            search={"budget": 25, "initial_step": 0.5, "min_step": 0.05,
                    "init_scale": 2.0},
        )
        code, out, _ = run_cli(capsys, "solve", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 0
        assert "interior: True, positive: True" in out
        payload = json.loads((workdir / "o" / "solve.json").read_text())
        assert payload["interior"] and payload["positive"]
        assert np.hypot(*payload["argmax"][0]) <= 2 * 0.1 * (20.0 / 128)
        assert (workdir / "o" / "solution_u.f2d").exists()
        assert (workdir / "o" / "solution_a0.f2d").exists()

    def test_deterministic_outputs(self, workdir, capsys, tmp_path):
        cfg = write_config(
            tmp_path / "s.json",
            epsilon=[0.2], k=1,
            grid={"half_width": 10.0, "n": 128},
            search={"budget": 12, "initial_step": 0.5, "min_step": 0.1,
                    "init_scale": 2.0},
        )
        run_cli(capsys, "solve", "--config", cfg, "--out", "o1", "--cache", "c")
        run_cli(capsys, "solve", "--config", cfg, "--out", "o2", "--cache", "c")
        for name in ("solve.json", "landscape_candidates.csv",
                     "solution_u.f2d"):
            a = (workdir / "o1" / name).read_bytes()
            b = (workdir / "o2" / name).read_bytes()
            assert a == b


class TestSweepCmd:
    def test_degenerate_potential_message(self, workdir, capsys, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            potential={"family": "constant", "value": 1.0},
            epsilon=[0.4, 0.2], k=1,
            grid={"half_width": 10.0, "n": 128},
            search={"budget": 10, "initial_step": 0.5, "min_step": 0.1,
                    "init_scale": 2.0},
        )
        code, out, _ = run_cli(capsys, "sweep", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 0
        assert "no concentration signal" in out
        payload = json.loads((workdir / "o" / "sweep.json").read_text())
        assert payload["degenerate"] is True

    def test_single_peak_sweep(self, workdir, capsys, tmp_path):
        cfg = write_config(
            tmp_path / "s.json",
            epsilon=[0.4, 0.2, 0.1], k=1,
            grid={"half_width": 10.0, "n": 128},
            search={"budget": 15, "initial_step": 0.5, "min_step": 0.1,
                    "init_scale": 2.0},
        )
        code, out, _ = run_cli(capsys, "sweep", "--config", cfg,
                               "--out", "o", "--cache", "c")
        assert code == 0
        assert "distances monotone: True" in out
        csv = (workdir / "o" / "sweep.csv").read_text()
        assert csv.startswith("# config=")
        assert len(csv.strip().splitlines()) == 2 + 3  # header rows + entries
