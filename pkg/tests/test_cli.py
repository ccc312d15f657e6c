import json

import pytest

from dgeit.cli import main

SMALL = """
[run]
mode = reconstruct
[mesh]
nx = 8
ny = 8
[noise]
epsilon = 0.01
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_reconstruct_artifacts(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["--config", cfg, "--out", str(tmp_path / "o"), "--seed", "4", "--threads", "1"]) == 0
    out = tmp_path / "o"
    for name in ("iterations.csv", "sigma.csv", "measurements.csv", "manifest.ini", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stop_reason"] == "discrepancy"
    assert {"height", "misfit", "iterations", "wall_time_s"} <= set(summary)
    manifest = (out / "manifest.ini").read_text()
    assert "seed = 4" in manifest and "alpha = 1e-8" in manifest
    assert len((out / "sigma.csv").read_text().splitlines()) == 1 + 64


def test_eoc_mode(tmp_path):
    cfg = _write(tmp_path, "[run]\nmode = eoc\n[mesh]\nmeshes = 4, 8\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "e")]) == 0
    lines = (tmp_path / "e" / "eoc.csv").read_text().splitlines()
    assert lines[0] == "mesh,n_cells,err_u,order_u,err_flux,order_flux" and len(lines) == 3


def test_forward_zero(tmp_path):
    cfg = _write(tmp_path, "[run]\nmode = forward\n[mesh]\nnx = 4\nny = 4\n"
                           "[problem]\nmeasurement = zero\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "f")]) == 0
    rows = (tmp_path / "f" / "boundary_flux.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",0,0") for r in rows)
    vals = (tmp_path / "f" / "solution.csv").read_text().splitlines()[1:]
    assert all(r.split(",")[-1] == "0" for r in vals)


@pytest.mark.parametrize("text,needle", [
    ("[inverse]\nalpha = abc\n", ":2: [inverse] alpha"),
    ("[bogus]\nx = 1\n", "unknown section"),
    ("[run]\nmode = fly\n", "expected one of"),
    ("[mesh]\nnx = 0\n", "must be >= 1"),
    ("[inverse\n", "run.ini"),
])
def test_config_errors(tmp_path, capsys, text, needle):
    assert main(["--config", _write(tmp_path, text), "--out", str(tmp_path / "x")]) == 2
    assert needle in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + "[inverse]\nsigma0 = -1\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "s")]) == 1
    assert "CoefficientRangeError" in capsys.readouterr().err
