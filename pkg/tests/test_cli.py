import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ifsmeasure.cantor import cantor_cdf
from ifsmeasure.cli import main, residual_grid
from ifsmeasure.distributions import CantorUniform, Exponential
from ifsmeasure.ifs import AffineMap, Ifsp, TheoremMap, load_ifsp, save_ifsp


def read_csv(path):
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return comments, rows[0], rows[1:]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestBuild:
    def test_exponential(self, tmp_path, capsys):
        out = tmp_path / "exp.json"
        code, _, _ = run(capsys, "build", "--dist", "exp:1", "--n", "2", "--out", str(out))
        assert code == 0
        ifsp = load_ifsp(out)
        assert ifsp.n == 2 and all(isinstance(m, TheoremMap) for m in ifsp.maps)
        assert ifsp.dist == Exponential(1.0)

    def test_stdout(self, capsys):
        code, out, _ = run(capsys, "build", "--dist", "triangular", "--n", "3")
        assert code == 0 and json.loads(out)["n"] == 3

    def test_cantor_theorem_system_verifies(self, tmp_path, capsys):
        out = tmp_path / "cantor.json"
        assert run(capsys, "build", "--dist", "cantor", "--n", "2", "--out", str(out))[0] == 0
        code, text, _ = run(capsys, "verify", "--ifs", str(out), "--grid", "729")
        assert code == 0 and json.loads(text)["invariance"]["max_residual"] <= 1e-9

    def test_empirical(self, tmp_path, samples_csv, capsys):
        out = tmp_path / "emp.json"
        code, _, _ = run(capsys, "build", "--dist", f"empirical:{samples_csv}", "--n", "4", "--out", str(out))
        assert code == 0 and load_ifsp(out).n == 4

    @pytest.mark.parametrize("argv", [["--dist", "gauss"], ["--dist", "exp:-1"], ["--dist", "uniform", "--n", "1"],
                                      ["--dist", "empirical:/no/such/file.csv"]])
    def test_bad_input_is_usage_error(self, argv, capsys):
        code, _, err = run(capsys, "build", *argv)
        assert code == 2 and "error" in err


class TestSimulate:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "tri.csv"
        code, text, _ = run(capsys, "simulate", "--ifs", "builtin:triangular", "--steps", "2000",
                            "--seed", "0x2a", "--bins", "20", "--out", str(out))
        assert code == 0
        comments, header, rows = read_csv(out)
        assert header == ["step", "index", "state"] and len(rows) == 2001
        assert any(c == "# seed=42" for c in comments)
        assert rows[0] == ["0", "0", "0.0"]  # default start: left end of the support
        _, hheader, hrows = read_csv(tmp_path / "tri.hist.csv")
        assert hheader == ["bin_lo", "bin_hi", "count", "frequency"] and len(hrows) == 20
        assert sum(int(r[2]) for r in hrows) == 2000
        report = json.loads(text)
        assert report["ks"]["n"] == 2000 and report["steps"] == 2000

    def test_ks_tolerance_sets_exit_code(self, tmp_path, capsys):
        args = ["simulate", "--ifs", "builtin:cantor", "--steps", "3000", "--out", str(tmp_path / "c.csv")]
        assert run(capsys, *args, "--ks-tol", "0.5")[0] == 0
        assert run(capsys, *args, "--ks-tol", "1e-9")[0] == 1

    def test_csv_to_stdout_sends_report_to_stderr(self, capsys):
        code, out, err = run(capsys, "simulate", "--dist", "uniform", "--steps", "5")
        assert code == 0
        assert out.startswith("# ifsmeasure") and json.loads(err)["steps"] == 5

    def test_non_finite_state_is_numeric_error(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        save_ifsp(Ifsp((AffineMap(1e300, 0.0), AffineMap(1e300, 1.0)), (0.5, 0.5)), path)
        code, _, err = run(capsys, "simulate", "--ifs", str(path), "--x0", "1", "--steps", "5",
                           "--out", str(tmp_path / "t.csv"))
        assert code == 3 and "numeric" in err

    def test_missing_system(self, capsys):
        assert run(capsys, "simulate", "--steps", "5")[0] == 2
        assert run(capsys, "simulate", "--ifs", "/no/such.json")[0] == 2

    def test_argparse_usage_errors_exit_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--steps", "many"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    @pytest.mark.parametrize("flag, value", [("--steps", "-1"), ("--bins", "0"), ("--alpha", "1.5"), ("--n", "1")])
    def test_range_checks(self, flag, value, capsys):
        assert run(capsys, "simulate", "--dist", "uniform", flag, value)[0] == 2

    def test_bad_seed_is_rejected_by_the_parser(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--dist", "uniform", "--seed", "-3"])
        assert exc.value.code == 2


class TestBackward:
    def test_samples_and_report(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        code, text, _ = run(capsys, "backward", "--dist", "exp:1", "--count", "2000", "--seed", "7", "--out", str(out))
        assert code == 0
        comments, header, rows = read_csv(out)
        assert header == ["stream_index", "value"] and len(rows) == 2000
        assert "# depth=64" in comments
        report = json.loads(text)
        assert report["ks"]["pass"] and report["ks"]["n"] == 2000

    def test_wrong_reference_fails(self, tmp_path, capsys):
        code, _, _ = run(capsys, "backward", "--ifs", "builtin:triangular", "--dist", "uniform", "--count", "2000",
                         "--depth", "30", "--out", str(tmp_path / "b.csv"))
        assert code == 1

    def test_single_sample_skips_ks(self, tmp_path, capsys):
        code, text, _ = run(capsys, "backward", "--dist", "cantor", "--count", "1", "--out", str(tmp_path / "b.csv"))
        assert code == 0 and "ks" not in json.loads(text)


class TestVerify:
    @pytest.mark.parametrize("system, grid", [("builtin:cantor", "729"), ("builtin:triangular", "101")])
    def test_builtin_examples_pass(self, system, grid, capsys):
        code, text, _ = run(capsys, "verify", "--ifs", system, "--grid", grid)
        doc = json.loads(text)
        assert code == 0 and doc["pass"] and doc["invariance"]["max_residual"] <= 1e-9

    def test_uniform_theorem_passes(self, capsys):
        code, text, _ = run(capsys, "verify", "--dist", "uniform", "--grid", "101", "--tol", "1e-10")
        assert code == 0

    def test_mismatched_law_fails(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        code, _, _ = run(capsys, "verify", "--ifs", "builtin:triangular", "--dist", "uniform", "--grid", "50",
                         "--out", str(out))
        assert code == 1
        assert len(json.loads(out.read_text())["invariance"]["residuals"]) == 50

    def test_residual_grid_avoids_cantor_gap_endpoints(self):
        g = residual_grid(CantorUniform(), 729)
        assert g[0] == pytest.approx(0.5 / 729) and len(g) == 729
        # every point sits half a cell away from the level-6 triadic endpoints
        assert np.allclose(np.abs(g * 729 - np.round(g * 729)), 0.5)


class TestStaircase:
    def test_cantor(self, tmp_path, capsys):
        out = tmp_path / "stairs.csv"
        code, _, _ = run(capsys, "staircase", "--dist", "cantor", "--points", "2188", "--out", str(out))
        assert code == 0
        _, header, rows = read_csv(out)
        assert header == ["x", "F"] and len(rows) == 2188
        xs = np.array([float(r[0]) for r in rows])
        fs = np.array([float(r[1]) for r in rows])
        assert xs[0] == 0.0 and xs[-1] == 1.0
        assert (np.diff(fs) >= 0).all()
        assert all(f == cantor_cdf(x) for x, f in zip(xs[::97], fs[::97]))

    def test_unbounded_law_uses_quantile_range(self, tmp_path, capsys):
        out = tmp_path / "exp.csv"
        assert run(capsys, "staircase", "--dist", "exp:1", "--points", "11", "--out", str(out))[0] == 0
        _, _, rows = read_csv(out)
        assert float(rows[-1][1]) == pytest.approx(0.999)


def test_mixture_demo_writes_the_figure_layout(tmp_path, capsys):
    out = tmp_path / "mix"
    code, text, _ = run(capsys, "mixture-demo", "--steps", "3000", "--bins", "12", "--out", str(out))
    assert code in (0, 1)
    for stem in ("upper_mean1", "upper_mean2", "lower_g", "lower_h"):
        _, header, rows = read_csv(out / f"{stem}.hist.csv")
        assert header == ["bin_lo", "bin_hi", "count", "frequency"] and len(rows) == 12
    doc = json.loads((out / "report.json").read_text())
    assert doc == json.loads(text)
    assert set(doc) >= {"upper_ks", "self_test", "g_vs_h", "pass"}


def test_reruns_are_byte_identical(tmp_path, capsys):
    def once(tag):
        d = tmp_path / tag
        run(capsys, "simulate", "--dist", "exp:0.5", "--n", "3", "--steps", "500", "--seed", "9", "--out", str(d / "s.csv"),
            "--report", str(d / "s.json"))
        run(capsys, "backward", "--dist", "triangular", "--count", "300", "--seed", "9", "--out", str(d / "b.csv"),
            "--report", str(d / "b.json"))
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    a, b = once("x"), once("y")
    assert a.keys() == b.keys() and len(a) == 5
    for name in a:
        # the configured output path is part of each header; strip it before comparing
        strip = lambda data: data.replace(b"/x/", b"/").replace(b"/y/", b"/")
        assert strip(a[name]) == strip(b[name]), name


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ifsmeasure", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "mixture-demo" in res.stdout
