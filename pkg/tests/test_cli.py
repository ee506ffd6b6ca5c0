import subprocess
import sys

import numpy as np
import pytest

from covlab.cli import cli_main
from covlab.ensemble import load_matrix, save_matrix
from covlab.harness import manifest_path_for, parse_records
from covlab.matcore import SymmetricMatrix


def run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "covlab", *args], capture_output=True, text=True
    )


@pytest.fixture
def identity_files(tmp_path):
    p1 = tmp_path / "i1.txt"
    p2 = tmp_path / "i2.txt"
    save_matrix(p1, SymmetricMatrix.identity(4))
    save_matrix(p2, SymmetricMatrix.identity(4))
    return str(p1), str(p2)


class TestChi2Command:
    def test_identity_pair_prints_one(self, identity_files, capsys):
        rc = cli_main(["chi2", *identity_files])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "1.0"

    def test_taylor_mode(self, tmp_path, capsys):
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        save_matrix(p1, SymmetricMatrix.zeros(4))
        save_matrix(p2, SymmetricMatrix.zeros(4))
        rc = cli_main(["chi2", "--taylor", str(p1), str(p2)])
        assert rc == 0
        first, bound = capsys.readouterr().out.split()
        assert float(first) == 1.0
        assert float(bound) == 0.0625

    def test_non_pd_input_exits_one(self, tmp_path, capsys):
        p1 = tmp_path / "bad.txt"
        p2 = tmp_path / "i.txt"
        save_matrix(p1, SymmetricMatrix.diagonal([1.0, -1.0]))
        save_matrix(p2, SymmetricMatrix.identity(2))
        rc = cli_main(["chi2", str(p1), str(p2)])
        assert rc == 1

    def test_divergent_input_exits_one(self, tmp_path):
        p1 = tmp_path / "big.txt"
        p2 = tmp_path / "i.txt"
        save_matrix(p1, SymmetricMatrix.diagonal([2.5, 1.0]))
        save_matrix(p2, SymmetricMatrix.identity(2))
        rc = cli_main(["chi2", str(p1), str(p2)])
        assert rc == 1

    def test_writes_record_and_manifest(self, identity_files, tmp_path, capsys):
        out = tmp_path / "chi2.csv"
        rc = cli_main(["chi2", *identity_files, "--out", str(out), "--seed", "3"])
        assert rc == 0
        records = parse_records(out, "csv")
        assert records[0].metrics["chi2_exact"] == 1.0
        assert manifest_path_for(out).exists()


class TestUsageErrors:
    def test_unknown_subcommand(self):
        assert cli_main(["frobnicate"]) == 2

    def test_missing_out(self):
        assert cli_main(["indist", "--dim", "8", "--trials", "2"]) == 2

    def test_bad_samples_list(self, tmp_path):
        rc = cli_main([
            "indist", "--dim", "8", "--trials", "2", "--samples", "1,x",
            "--out", str(tmp_path / "r.csv"),
        ])
        assert rc == 2


class TestGenEnsemble:
    def test_emits_matrices_and_stats(self, tmp_path, capsys):
        out = tmp_path / "bank"
        rc = cli_main([
            "gen-ensemble", "--dim", "16", "--trials", "3", "--seed", "5",
            "--out", str(out),
        ])
        assert rc == 0
        for i in range(3):
            m = load_matrix(out / f"a_{i:04d}.txt")
            assert np.all(np.diag(m.data) == 0.0)
        stats = parse_records(out / "stats.csv", "csv")
        assert len(stats) == 3
        assert manifest_path_for(out / "stats.csv").exists()


class TestDeterminism:
    def test_indist_byte_identical_across_workers(self, tmp_path):
        outs = []
        for tag, workers in (("a", "1"), ("b", "2"), ("c", "1")):
            out = tmp_path / f"{tag}.csv"
            rc = cli_main([
                "indist", "--dim", "16", "--epsilon", "0.3333333333333333",
                "--trials", "12", "--samples", "0,8,64", "--seed", "11",
                "--workers", workers, "--out", str(out),
            ])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_concentration_byte_identical(self, tmp_path):
        blobs = []
        for tag in ("x", "y"):
            out = tmp_path / f"{tag}.csv"
            rc = cli_main([
                "concentration", "--dim", "16", "--trials", "25", "--seed", "9",
                "--out", str(out),
            ])
            assert rc == 0
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_changes_output(self, tmp_path):
        blobs = []
        for seed in ("1", "2"):
            out = tmp_path / f"s{seed}.csv"
            rc = cli_main([
                "concentration", "--dim", "16", "--trials", "10", "--seed", seed,
                "--out", str(out),
            ])
            assert rc == 0
            blobs.append(out.read_bytes())
        assert blobs[0] != blobs[1]

    def test_env_seed_honored_and_overridden(self, tmp_path, monkeypatch):
        from covlab.cli import SEED_ENV_VAR

        out1 = tmp_path / "env.csv"
        out2 = tmp_path / "flag.csv"
        out3 = tmp_path / "explicit.csv"
        monkeypatch.setenv(SEED_ENV_VAR, "21")
        assert cli_main(["concentration", "--dim", "16", "--trials", "8",
                         "--out", str(out1)]) == 0
        assert cli_main(["concentration", "--dim", "16", "--trials", "8",
                         "--seed", "22", "--out", str(out2)]) == 0
        monkeypatch.delenv(SEED_ENV_VAR)
        assert cli_main(["concentration", "--dim", "16", "--trials", "8",
                         "--seed", "21", "--out", str(out3)]) == 0
        assert out1.read_bytes() == out3.read_bytes()
        assert out1.read_bytes() != out2.read_bytes()


class TestPowerCommand:
    def test_power_summary_row(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        rc = cli_main([
            "power", "--data", "null", "--tester", "frob", "--dim", "8",
            "--samples", "400", "--trials", "6", "--seed", "4", "--out", str(out),
        ])
        assert rc == 0
        rec = parse_records(out, "csv")[0]
        assert rec.metrics["trials"] == 6.0
        assert 0.0 <= rec.metrics["reject_rate"] <= 1.0


class TestSelfcheck:
    def test_selfcheck_passes(self, capsys):
        rc = cli_main(["selfcheck", "--seed", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "FAIL" not in out
        assert out.count("PASS") >= 8


class TestSubprocessEntry:
    def test_module_invocation(self, identity_files):
        proc = run_cli(["chi2", *identity_files])
        assert proc.returncode == 0
        assert proc.stdout.strip() == "1.0"

    def test_usage_error_exit_code(self):
        proc = run_cli(["chi2"])
        assert proc.returncode == 2

    def test_console_script(self, identity_files):
        import shutil

        exe = shutil.which("covlab")
        if exe is None:
            pytest.skip("console script not installed")
        proc = subprocess.run([exe, "chi2", *identity_files], capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.strip() == "1.0"
