import json
import subprocess
import sys

import pytest

from nplectic.catalog import builtin_config
from nplectic.cli import SuiteSpec, UsageError, main, run


def perturbed_torus(tmp_path):
    cfg = builtin_config("E4_torus4")
    cfg["momentum"][0]["coeffs"]["|0"][0] = "x1 + 0.1*x0"
    path = tmp_path / "torus_perturbed.json"
    path.write_text(json.dumps(cfg))
    return path


def test_pass_exit_code(capsys):
    assert main(["--model", "E4_torus4", "--suite", "hms", "--points", "50"]) == 0
    out = capsys.readouterr().out
    assert "HMS_0_2" in out and "HMS_1_1" in out and out.rstrip().endswith("VERDICT: pass")


def test_cartan_with_seed(capsys):
    assert main(["--model", "E4_torus4", "--suite", "cartan", "--seed", "7", "--points", "50"]) == 0
    assert "seed=7" in capsys.readouterr().out


def test_perturbed_momentum_fails(tmp_path, capsys):
    path = perturbed_torus(tmp_path)
    assert main(["--model", str(path), "--suite", "hms", "--points", "50"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main(["--model", "nope", "--suite", "hms"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["--model", "E4_torus4", "--suite", "nope"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["--suite", "hms"])
    assert exc.value.code == 2
    assert main(["--model", "E4_torus4", "--suite", "hms", "--points", "0"]) == 2


def test_invalid_model_file_is_evaluation_error(tmp_path, capsys):
    cfg = builtin_config("E1_symplectic")
    del cfg["bundle"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(cfg))
    assert main(["--model", str(path), "--suite", "hms"]) == 3
    assert "bundle" in capsys.readouterr().err


def test_json_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["--model", "E1_symplectic", "--suite", "all", "--points", "30", "--format", "json",
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["verdict"] == "pass" and doc["schema"] == 1
    check = doc["reports"][0]["checks"][0]
    assert set(check) >= {"id", "anchor", "max_residual", "threshold", "verdict", "samples", "seed"}


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["--model", "E1_symplectic", "--suite", "cartan", "--points", "20", "--format", "json", "--out", str(a)])
    main(["--model", "E1_symplectic", "--suite", "cartan", "--points", "20", "--seed", "1", "--format", "json",
          "--out", str(b)])
    assert a.read_bytes() != b.read_bytes()


def test_run_api(tmp_path):
    reports, code = run(SuiteSpec("E4_torus4", "hms", points=20))
    assert code == 0 and reports[0].suite == "hms"
    reports, code = run(SuiteSpec(str(perturbed_torus(tmp_path)), "hms", points=20))
    assert code == 1
    with pytest.raises(UsageError):
        run(SuiteSpec("E4_torus4", "bogus"))


def test_notes_for_inapplicable_suites(capsys):
    assert main(["--model", "E5_curvature", "--suite", "reduction", "--points", "10"]) == 0
    assert "note:" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nplectic", "--model", "E4_torus4", "--suite", "hms",
                           "--points", "20"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "VERDICT: pass" in proc.stdout
