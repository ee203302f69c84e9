import json
import subprocess
import sys
from pathlib import Path

import pytest

from starklap.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from starklap.io import ConfigError, parse_config, reference_config

SMALL = """
[grid]
bounds = -10 20; -10 10
h = 0.5
[sweep]
gammas = 1 0.5
[source]
center = 2 0
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_missing_h_names_the_key():
    with pytest.raises(ConfigError, match="grid.h"):
        parse_config("[grid]\nbounds = -10 20; -10 10\n")


def test_unknown_key_and_section():
    with pytest.raises(ConfigError, match="grid.spacing"):
        parse_config("[grid]\nh = 0.5\nspacing = 1\n")
    with pytest.raises(ConfigError, match="solver"):
        parse_config("[grid]\nh = 0.5\n[solver]\ntol = 1\n")


def test_bad_values():
    with pytest.raises(ConfigError):
        parse_config("[grid]\nh = 0.5\nstencil_order = 3\n")
    with pytest.raises(ConfigError):
        parse_config("[grid]\nh = 0.5\nd = 3\n")


def test_reference_lists_every_section():
    text = reference_config()
    for section in ("[grid]", "[potential]", "[source]", "[sweep]", "[phase]", "[run]"):
        assert section in text


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[grid]\nbounds = -10 20; -10 10\n")
    assert main(["solve", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "grid.h" in capsys.readouterr().err


def test_missing_file_is_config_error(tmp_path):
    assert main(["solve", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_solve_passes_and_writes_manifest(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", _write(tmp_path, SMALL), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "solve"
    assert manifest["status"]["passed"] is True
    import hashlib

    for entry in manifest["files"]:
        data = (out / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
    assert {e["path"] for e in manifest["files"]} == {"shells.csv", "summary.json"}


def test_numerical_failure_exit_code(tmp_path):
    out = tmp_path / "o"
    cfg = _write(tmp_path, SMALL + "[run]\nsolver_tol = 1e-30\n")
    assert main(["solve", cfg, "--out", str(out)]) == EXIT_NUMERIC
    failure = json.loads((out / "failure.json").read_text())
    assert failure["failure"] == "SolverError"
    assert (out / "manifest.json").exists()


def test_check_failure_exit_code(tmp_path):
    # one refinement level cannot give a reliable order
    cfg = _write(tmp_path, "[grid]\nbounds = 2 30; -12 12\nh = 0.4\n[potential]\nfamily = mixed\n"
                 "[run]\nm = 2\nhs = 0.4\nn_fields = 1\nfield_region = 8 -8 24 8\nfield_radius = 5\n")
    assert main(["commutator-check", cfg, "--out", str(tmp_path / "o")]) == EXIT_CHECK


def test_seed_override_recorded(tmp_path):
    out = tmp_path / "o"
    assert main(["geometry-check", "--config", _write(tmp_path, "[grid]\nh = 0.5\n[run]\nn_points = 50\n"), "--out", str(out), "--seed", "7"]) == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["seed"] == 7


def _artifacts(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".json") and p.name != "manifest.json"}


@pytest.mark.parametrize("command", ["lap-sweep", "radiation-sweep", "besov-norms"])
def test_deterministic_artifacts(tmp_path, command):
    cfg = _write(tmp_path, SMALL + "[run]\nbeta = 0.25\nseed = 3\n")
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code = main([command, cfg, "--out", str(out)])
        assert code in (EXIT_OK, EXIT_CHECK)
        runs.append(_artifacts(out))
    assert runs[0].keys() == runs[1].keys() and runs[0]
    for name in runs[0]:
        assert runs[0][name] == runs[1][name], name


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "starklap.cli", "config-reference"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "grid" in proc.stdout
