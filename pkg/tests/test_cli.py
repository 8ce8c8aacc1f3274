import io
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import special

from cylfbm.cli import SEED_ENV, run
from cylfbm.io import read_sampled, read_table


@pytest.fixture
def files(tmp_path):
    (tmp_path / "step.csv").write_text("start,end,x_0\n0,0.5,1\n0.5,1,-2\n")
    (tmp_path / "one.csv").write_text("t,v_0\n" + "".join(f"{t},1\n" for t in np.linspace(0, 1, 257)))
    (tmp_path / "emb.cfg").write_text("# diagonal embedding\nkind = diagonal\nweights = q_k = k^-1\nN = 8\n"
                                      "hurst = 0.3\nseed = 4\npaths = 20000\nn = 16\n")
    (tmp_path / "sheet.cfg").write_text("kind = sheet\nweights = 1, 2, 0.5\nsets = 0:0.5, 0.5:1, 0.25:0.75\n"
                                        "N = 3\nm = 9\nhurst = 0.7\n")
    (tmp_path / "psi.cfg").write_text("kind = diagonal_semigroup\nlambdas = lambda_k = k^2\nweights = q_k = k^-1\n"
                                      "N = 3\nn = 16\n")
    return tmp_path


def invoke(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestUsage:
    def test_heat_check_exists(self, capsys):
        code, out, _ = invoke(capsys, "heat", "check", "--hurst", "0.3", "--dim", "1", "--modes", "512")
        assert code == 0 and out.startswith("verdict=exists")

    def test_heat_check_diverges_is_not_an_error(self, capsys):
        code, out, _ = invoke(capsys, "heat", "check", "--hurst", "0.2", "--dim", "1", "--modes", "512")
        assert code == 0 and out.startswith("verdict=diverges")

    @pytest.mark.parametrize("argv", [
        ["heat", "check", "--dim", "1", "--modes", "512"],
        ["heat", "check", "--hurst", "0.3", "--dim", "1", "--modes", "512", "--bogus"],
        ["heat", "check", "--hurst", "1.3", "--dim", "1", "--modes", "8"],
        ["fbm", "sample", "--hurst", "0.3", "--paths", "0"],
        ["frac", "integral", "--in", "missing.csv", "--alpha", "0.5"],
        ["nonsense"],
        [],
        ["validate", "all", "--tol", "nosuch=1"],
        ["heat", "check", "--hurst", "0.3", "--dim", "1", "--modes", "8", "--tol", "z"],
    ])
    def test_usage_errors(self, capsys, argv):
        code, _, err = invoke(capsys, *argv)
        assert code == 2 and err

    def test_help(self, capsys):
        code, out, _ = invoke(capsys, "--help")
        assert code == 0 and "heat" in out


class TestSeeds:
    def sample(self, capsys, *extra):
        code, out, _ = invoke(capsys, "fbm", "sample", "--hurst", "0.3", "--paths", "3", "--n", "8", *extra)
        assert code == 0
        return out

    def test_deterministic_bytes(self, capsys):
        assert self.sample(capsys, "--seed", "5") == self.sample(capsys, "--seed", "5")
        assert self.sample(capsys, "--seed", "5") != self.sample(capsys, "--seed", "6")

    def test_environment_fallback(self, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "5")
        from_env = self.sample(capsys)
        assert from_env == self.sample(capsys, "--seed", "5")
        assert self.sample(capsys, "--seed", "6") != from_env

    def test_default_seed_is_zero(self, capsys, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        assert self.sample(capsys) == self.sample(capsys, "--seed", "0")

    @pytest.mark.parametrize("bad", ["abc", "-3"])
    def test_bad_environment(self, capsys, monkeypatch, bad):
        monkeypatch.setenv(SEED_ENV, bad)
        code, _, err = invoke(capsys, "fbm", "sample", "--hurst", "0.3", "--paths", "2")
        assert code == 2 and SEED_ENV in err

    def test_config_seed_between_flag_and_environment(self, capsys, monkeypatch, files):
        monkeypatch.setenv(SEED_ENV, "99")
        a = invoke(capsys, "cyl", "apply", "--config", str(files / "emb.cfg"), "--paths", "500")[1]
        b = invoke(capsys, "cyl", "apply", "--config", str(files / "emb.cfg"), "--paths", "500", "--seed", "4")[1]
        c = invoke(capsys, "cyl", "apply", "--config", str(files / "emb.cfg"), "--paths", "500", "--seed", "99")[1]
        assert a == b != c


class TestVerbs:
    def test_fbm_sample_file(self, capsys, files):
        out = files / "paths.csv"
        assert invoke(capsys, "fbm", "sample", "--hurst", "0.7", "--paths", "4", "--n", "16", "--T", "2",
                      "--out", str(out))[0] == 0
        header, data = read_table(out)
        assert header == ["t"] + [f"path_{p}" for p in range(4)]
        np.testing.assert_allclose(data[:, 0], np.linspace(0, 2, 17))
        assert np.all(data[0, 1:] == 0)

    def test_frac_integral_of_one(self, capsys, files):
        code, out, _ = invoke(capsys, "frac", "integral", "--alpha", "0.5", "--in", str(files / "one.csv"))
        assert code == 0
        f = read_sampled(io.StringIO(out))
        t = f.grid.nodes
        ref = (1 - t) ** 0.5 / special.gamma(1.5)
        np.testing.assert_allclose(f.values[:, 0], ref, atol=1e-6)

    def test_frac_kstar_and_derivative_run(self, capsys, files):
        assert invoke(capsys, "frac", "kstar", "--hurst", "0.3", "--in", str(files / "one.csv"))[0] == 0
        assert invoke(capsys, "frac", "derivative", "--alpha", "0.3", "--in", str(files / "one.csv"))[0] == 0

    @pytest.mark.parametrize("H", ["0.3", "0.75"])
    def test_wiener(self, capsys, files, H):
        code, out, _ = invoke(capsys, "wiener", "--integrand", str(files / "step.csv"), "--hurst", H,
                              "--paths", "20000", "--seed", "3")
        summary = json.loads(out)
        assert code == 0 and abs(summary["z_score"]) <= 4
        assert summary["var"] == pytest.approx(summary["exact_var"], rel=0.05)

    def test_cyl_apply(self, capsys, files):
        code, out, _ = invoke(capsys, "cyl", "apply", "--config", str(files / "emb.cfg"))
        assert code == 0 and "verdict=pass" in out

    def test_cyl_genuine(self, capsys, files):
        code, out, _ = invoke(capsys, "cyl", "genuine", "--config", str(files / "emb.cfg"), "--tail-rule", "2")
        assert code == 0 and "verdict=genuine" in out

    def test_cyl_sheet(self, capsys, files):
        code, out, _ = invoke(capsys, "cyl", "apply", "--config", str(files / "sheet.cfg"), "--paths", "20000")
        assert code == 0, out

    def test_integrate(self, capsys, files):
        cov = files / "cov.csv"
        code, out, _ = invoke(capsys, "integrate", "--psi-spec", str(files / "psi.cfg"), "--hurst", "0.3",
                              "--paths", "20000", "--cov-out", str(cov))
        assert code == 0, out
        assert "hs_test verdict=" in out and "integrate.covariance" in out
        header, data = read_table(cov)
        # upper triangle, one cell per row
        assert header == ["row", "col", "empirical", "exact"] and data.shape == (6, 4)
        assert np.all(data[:, 0] <= data[:, 1])

    def test_heat_simulate(self, capsys, files):
        argv = ["heat", "simulate", "--hurst", "0.3", "--dim", "1", "--modes", "2", "--paths", "2", "--n", "4",
                "--seed", "1"]
        code, out, _ = invoke(capsys, *argv)
        assert code == 0
        assert out.splitlines()[0] == "t,mode_0_path_0,mode_0_path_1,mode_1_path_0,mode_1_path_1"
        assert out == invoke(capsys, *argv)[1]

    @pytest.mark.parametrize("H,lines", [("0.3", 3), ("0.75", 1)])
    def test_heat_bounds(self, capsys, H, lines):
        code, out, _ = invoke(capsys, "heat", "bounds", "--hurst", H, "--lambda", "10")
        checks = [l for l in out.splitlines() if l.startswith("CHECK")]
        assert code == 0 and len(checks) == lines and all("verdict=pass" in l for l in checks)

    def test_validate_subset(self, capsys):
        code, out, _ = invoke(capsys, "validate", "all", "--quick", "--criteria", "2,5", "--seed", "1")
        lines = out.splitlines()
        assert code == 0 and lines[-1].startswith("SUMMARY") and "failed=0" in lines[-1]
        names = [l.split()[1] for l in lines[:-1]]
        assert names == sorted(names) and {n[:3] for n in names} == {"c02", "c05"}

    def test_tolerance_override_can_fail_a_check(self, capsys):
        code, out, _ = invoke(capsys, "validate", "all", "--criteria", "2", "--tol", "kernel_rel=1e-30")
        assert code == 1 and "verdict=fail" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cylfbm", "heat", "check", "--hurst", "0.3", "--dim", "1",
                           "--modes", "64"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verdict=" in proc.stdout
