import subprocess
import sys

import pytest

CONFIG_TEXT = """\
N = 4
M = 2,2
sigma2_dbm = -35
d_m = 50,50
epsilon = 1e-4
inner_cap = 200
outer_cap = 8
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "system.cfg"
    path.write_text(CONFIG_TEXT)
    return str(path)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "snsmimo.cli", *args],
        capture_output=True,
        text=True,
        timeout=600,
    )


class TestCli:
    def test_sweep_success(self, config_path, tmp_path):
        out = str(tmp_path / "rows.csv")
        proc = run_cli(
            "sweep",
            "--config", config_path,
            "--pt-dbm", "0,10",
            "--schemes", "bd,dpc",
            "--trials", "2",
            "--ci", "100",
            "--seed", "1",
            "--out", out,
        )
        assert proc.returncode == 0, proc.stderr
        lines = open(out).read().splitlines()
        assert lines[0].startswith("pt_dbm,scheme,")
        assert len(lines) == 5

    def test_converge_success(self, config_path, tmp_path):
        out = str(tmp_path / "trace.csv")
        proc = run_cli(
            "converge",
            "--config", config_path,
            "--pt-dbm", "10",
            "--realizations", "2",
            "--out", out,
        )
        assert proc.returncode == 0, proc.stderr
        assert open(out).read().startswith("iteration,")

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("N = 4\nM = 2,2\nsigma2_dbm = -35\nd_m = 50,50\nbogus = 1\n")
        proc = run_cli(
            "sweep", "--config", str(bad), "--trials", "1", "--out", str(tmp_path / "o.csv")
        )
        assert proc.returncode == 2
        assert "configuration error" in proc.stderr

    def test_missing_config_exit_code(self, tmp_path):
        proc = run_cli(
            "sweep", "--config", "/nope.cfg", "--trials", "1", "--out", str(tmp_path / "o.csv")
        )
        assert proc.returncode == 2

    def test_usage_error_exit_code(self):
        proc = run_cli("sweep")
        assert proc.returncode == 2

    def test_reruns_are_byte_identical(self, config_path, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = str(tmp_path / name)
            proc = run_cli(
                "sweep",
                "--config", config_path,
                "--pt-dbm", "10",
                "--schemes", "bd",
                "--trials", "3",
                "--ci", "100",
                "--seed", "7",
                "--out", out,
            )
            assert proc.returncode == 0
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]
