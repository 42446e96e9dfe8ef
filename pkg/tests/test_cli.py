import csv
import io
import json
import subprocess
import sys

import pytest

from choquard.checks import literal_verdict
from choquard.cli import EXIT_DIVERGED, EXIT_INVALID, EXIT_IO, EXIT_MAX_ITER, EXIT_OK, main


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def _json_tail(text):
    return json.loads(text[text.index("{"):])


@pytest.mark.parametrize("args, line", [
    ((3, 1, 0.2, 0.5), "Nonexistence"),
    ((3, 1, 3.5, 0.9), "RemovableOnly"),
    ((3, 1, 1.5, 0.5), "ExistenceWithDirac (regime 1.6, decay exponent 4)"),
])
def test_classify(args, line):
    code, out = run("classify", *args)
    assert code == EXIT_OK
    assert out.splitlines()[0].startswith(line)
    data = _json_tail(out)
    assert set(data["flags"]) >= {"nonexist_q", "regime_16", "existence_hypotheses"}
    assert "margins" in data


def test_classify_invalid():
    assert run("classify", 3, 5, 1, 0.5)[0] == EXIT_INVALID


def test_tau_seq():
    code, out = run("tau-seq", 10, 0.5, 0.05, 0.9)
    data = json.loads(out)
    assert code == EXIT_OK and data["j0"] == 3
    assert data["divergence_value"] == pytest.approx(0.34375)


def test_phase_diagram_rows_and_partition():
    code, out = run("phase-diagram", 3, 1, "--p-range", 0, 4, "--q-range", 0, 1, "--resolution", 200, 100)
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 20000
    for row in rows:
        assert row["verdict"] == literal_verdict(3, 1.0, float(row["p"]), float(row["q"]))
    assert run("phase-diagram", 3, 1, "--p-range", 0, 4, "--q-range", 0, 1, "--resolution", 200, 100)[1] == out


def test_phase_diagram_errors(tmp_path):
    assert run("phase-diagram", 3, 1, "--resolution", 8, 100)[0] == EXIT_INVALID
    assert run("phase-diagram", 3, 1, "-o", tmp_path / "missing" / "x.csv")[0] == EXIT_IO
    code, _ = run("phase-diagram", 3, 2, "--resolution", 16, 16, "-o", tmp_path / "pd.csv")
    assert code == EXIT_OK and (tmp_path / "pd.csv").read_text().count("\n") == 257


@pytest.fixture(scope="module")
def solve_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    code, out = run("solve", "--N", 3, "--alpha", 2, "--p", 2, "--q", 0.5, "--k", 0.5, "--output-dir", d)
    return code, out, d


def test_solve_writes_report(solve_dir):
    code, out, d = solve_dir
    assert code == EXIT_OK
    report = json.loads((d / "report.json").read_text())
    assert report["solve"]["verdict"] == "Converged"
    assert report["verification"]["pass_flags"]["origin_coefficient"]
    lines = (d / "profile.csv").read_text().splitlines()
    assert lines[0] == "r,value" and len(lines) == 2049


def test_solve_is_bit_identical(solve_dir, tmp_path):
    _, _, d = solve_dir
    code, _ = run("solve", "--N", 3, "--alpha", 2, "--p", 2, "--q", 0.5, "--k", 0.5, "--output-dir", tmp_path)
    assert code == EXIT_OK
    a = json.loads((d / "report.json").read_text())
    b = json.loads((tmp_path / "report.json").read_text())
    a["config"].pop("output_dir"), b["config"].pop("output_dir")
    assert a == b
    assert (d / "profile.csv").read_bytes() == (tmp_path / "profile.csv").read_bytes()


def test_solve_large_mass_fails(tmp_path):
    code, _ = run("solve", "--N", 3, "--alpha", 2, "--p", 2, "--q", 0.5, "--k", 20, "--n", 512,
                  "--output-dir", tmp_path)
    assert code in (EXIT_DIVERGED, EXIT_MAX_ITER)
    assert json.loads((tmp_path / "report.json").read_text())["solve"]["verdict"] != "Converged"


def test_solve_zero_mass(tmp_path):
    code, _ = run("solve", "--N", 3, "--alpha", 2, "--p", 2, "--q", 0.5, "--k", 0, "--n", 512,
                  "--output-dir", tmp_path)
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["verification"]["pass_flags"] == {"origin_bounded": True}


def test_solve_region_mismatch(tmp_path):
    assert run("solve", "--N", 3, "--alpha", 1, "--p", 0.2, "--q", 0.5, "--output-dir", tmp_path)[0] == EXIT_INVALID


def test_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 3, "alpha": 2, "p": 2, "q": 0.5, "k": 0.3, "n": 512,
                               "output_dir": str(tmp_path / "out")}))
    code, out = run("solve", "--config", cfg, "--k", 0.2)
    assert code == EXIT_OK
    assert json.loads((tmp_path / "out" / "report.json").read_text())["config"]["k"] == 0.2
    cfg.write_text(json.dumps({"N": 3, "colour": "red"}))
    assert run("solve", "--config", cfg)[0] == EXIT_INVALID
    assert run("solve", "--config", tmp_path / "nope.json")[0] == EXIT_IO
    cfg.write_text(json.dumps({"n": 4}))
    assert run("solve", "--config", cfg)[0] == EXIT_INVALID


def test_sweep_merged_in_order(tmp_path):
    code, out = run("solve", "--N", 3, "--alpha", 2, "--p", 2, "--q", 0.5, "--n", 512, "--k", 0.4, 0.1, 0.2,
                    "--jobs", 2, "--output-dir", tmp_path)
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [s["k"] for s in summary] == [0.4, 0.1, 0.2]
    assert all((tmp_path / f"run_{i:03d}" / "report.json").exists() for i in range(3))


def test_kstar():
    code, out = run("kstar", 3, 2, 2, 0.5, "--n", 512)
    data = json.loads(out)
    assert code == EXIT_OK and not data["open_above"]
    assert data["k_hi"] / data["k_lo"] <= 1.5


def test_kstar_outside_region():
    assert run("kstar", 3, 1, 0.2, 0.5)[0] == EXIT_INVALID


def test_probe_nonexistence():
    code, out = run("probe-nonexistence", 3, 1, 0.2, 0.5, "--n", 512)
    data = json.loads(out)
    assert code == EXIT_OK and data["certified"] and data["j0"] == 0
    assert run("probe-nonexistence", 3, 1, 1.5, 0.5)[0] == EXIT_INVALID


def test_verify_exponents_deterministic():
    code, out = run("verify", "exponents", 42)
    assert code == EXIT_OK and "FAIL" not in out
    assert run("verify", "exponents", 42)[1] == out


def test_verify_riesz_includes_slope():
    code, out = run("verify", "riesz", 42)
    assert code == EXIT_OK and "asymptotic_error_slope" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "choquard", "classify", "3", "1", "1.5", "0.5"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("ExistenceWithDirac (regime 1.6, decay exponent 4)")


def test_help_lists_defaults():
    proc = subprocess.run([sys.executable, "-m", "choquard", "solve", "--help"], capture_output=True, text=True)
    assert "choquard-out" in proc.stdout and "--jobs" in proc.stdout
