import configparser

import numpy as np
import pytest

from herl import cli


def run_cli(*argv):
    return cli.main(list(argv))


class TestListPresets:
    def test_table_values(self, capsys):
        assert run_cli("list-presets") == 0
        out = capsys.readouterr().out
        lines = {ln.split()[0]: ln for ln in out.splitlines()[1:]}
        td0 = lines["paper-td0"].split()
        assert td0[1] == "8192" and td0[2] == "219"
        assert float(td0[3]) == pytest.approx(8 / np.sqrt(2 * np.pi),
                                              abs=1e-4)
        z = lines["paper-z"].split()
        assert z[1] == "16384" and z[2] == "441"
        desk = lines["desk"].split()
        assert desk[1] == "4096"
        assert int(desk[4]) >= 5  # depth budget documented and sufficient


class TestValidation:
    def test_z_on_small_chain_rejected(self, capsys):
        code = run_cli("run", "--algo", "z", "--backend", "encrypted",
                       "--preset", "paper-td0")
        assert code == 2
        assert "depth" in capsys.readouterr().err

    def test_negative_eps_rejected(self, capsys):
        code = run_cli("run", "--algo", "vi-sync-noisy", "--eps", "-0.5")
        assert code == 2

    def test_bad_gamma_rejected(self, capsys):
        code = run_cli("run", "--algo", "vi-sync-noisy", "--gamma", "1.5")
        assert code == 2


class TestViRun:
    def test_sync_noisy_report_and_artifacts(self, tmp_path, capsys):
        out = tmp_path / "vi"
        code = run_cli("run", "--algo", "vi-sync-noisy", "--eps", "0.01",
                       "--gamma", "0.9", "--iters", "300", "--seed", "3",
                       "--out", str(out))
        assert code == 0
        text = capsys.readouterr().out
        assert "bound=0.1" in text and "PASS" in text
        for name in ("report.txt", "trajectory.csv", "values.csv",
                     "manifest.ini"):
            assert (out / name).exists()

    def test_async_round_robin_report(self, tmp_path, capsys):
        out = tmp_path / "via"
        code = run_cli("run", "--algo", "vi-async-noisy", "--eps", "0.01",
                       "--gamma", "0.9", "--iters", "3600", "--seed", "4",
                       "--out", str(out))
        assert code == 0
        assert "M=36" in capsys.readouterr().out


class TestLearningRun:
    def test_exact_run_artifacts(self, tmp_path):
        out = tmp_path / "learn"
        code = run_cli("run", "--algo", "td0", "--backend", "exact",
                       "--episodes", "60", "--seed", "5", "--out", str(out))
        assert code == 0
        values = (out / "values.csv").read_text().splitlines()
        assert len(values) == 37
        manifest = configparser.ConfigParser()
        manifest.read(out / "manifest.ini")
        assert manifest["run"]["algo"] == "td0"
        assert manifest["run"]["seed"] == "5"
        assert "version" in manifest["run"]

    def test_rerun_from_manifest_reproduces_artifacts(self, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert run_cli("run", "--algo", "td0", "--backend", "noise", "--eps",
                       "1e-5", "--episodes", "80", "--seed", "6", "--out",
                       str(out1)) == 0
        assert run_cli("run", "--config", str(out1 / "manifest.ini"),
                       "--out", str(out2)) == 0
        for name in ("values.csv", "error_trace.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_encrypted_run_writes_trace(self, tmp_path):
        out = tmp_path / "enc"
        code = run_cli("run", "--algo", "td0", "--backend", "encrypted",
                       "--preset", "desk", "--episodes", "50",
                       "--max-updates", "40", "--seed", "8", "--out",
                       str(out))
        assert code == 0
        lines = (out / "error_trace.csv").read_text().splitlines()
        assert len(lines) == 41  # header + one row per update

    def test_out_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HERL_OUT", str(tmp_path / "root"))
        assert run_cli("run", "--algo", "td0", "--backend", "exact",
                       "--episodes", "10", "--seed", "9") == 0
        assert (tmp_path / "root" / "td0-exact-s9" / "values.csv").exists()

    def test_same_seed_byte_identical(self, tmp_path):
        outs = []
        for sub in ("r1", "r2"):
            out = tmp_path / sub
            assert run_cli("run", "--algo", "sarsa", "--backend", "exact",
                           "--episodes", "50", "--seed", "7", "--out",
                           str(out)) == 0
            outs.append(out)
        assert (outs[0] / "values.csv").read_bytes() == \
            (outs[1] / "values.csv").read_bytes()


class TestBench:
    def test_exact_backend_zero_crypto_phases(self, capsys):
        assert run_cli("bench", "--backend", "exact", "--updates", "100") == 0
        out = capsys.readouterr().out
        for phase in ("encode", "encrypt", "evaluate", "decrypt"):
            line = next(ln for ln in out.splitlines()
                        if ln.strip().startswith(phase))
            assert float(line.split()[1]) == 0.0

    def test_kernel_bench_runs(self, capsys):
        assert run_cli("kernel-bench") == 0
        out = capsys.readouterr().out
        assert "ntt_forward" in out and "python" in out

    def test_encrypted_update_under_one_second(self, capsys):
        assert run_cli("bench", "--backend", "encrypted", "--preset", "desk",
                       "--updates", "100") == 0
        out = capsys.readouterr().out
        total = 0.0
        for phase in ("encode", "encrypt", "evaluate", "decrypt"):
            line = next(ln for ln in out.splitlines()
                        if ln.strip().startswith(phase))
            total += float(line.split()[1])
        assert total < 1000.0  # ms per update
