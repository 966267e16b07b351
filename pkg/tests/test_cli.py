import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from wulff_lab import cli
from wulff_lab.mesh import load_mesh
from wulff_lab.solver import load_solution_csv, save_solution_csv

TORSION = {"problem": {"p": 2.0}, "mesh": {"h": 0.04}}


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(tmp_path, command, data, *extra, out="out"):
    cfg = write_config(tmp_path, data)
    return cli.main([command, "--config", cfg, "--out", str(tmp_path / out), *extra])


# ---------------------------------------------------------------------------
# configuration errors: exit 2


def test_unknown_key_rejected(tmp_path, capsys):
    data = {"problem": {"p": 2.0, "norm": {"kind": "euclidean", "radius": 1}}}
    assert run(tmp_path, "solve", data) == 2
    assert "radius" in capsys.readouterr().err


def test_unknown_top_level_key_rejected(tmp_path):
    assert run(tmp_path, "geom", {"problem": {"p": 2.0}, "extras": {}}) == 2


def test_failed_condition_certificate_blocks_solve(tmp_path, capsys):
    data = {"problem": {"p": 1.5, "condition": "b",
                        "f": {"kind": "step", "a": 2.0, "b": 1.0, "s": 0.1, "phi": 0.3}},
            "mesh": {"h": 0.04}}
    assert run(tmp_path, "solve", data) == 2
    assert capsys.readouterr().err.startswith("error:")
    assert not (tmp_path / "out" / "solution.csv").exists()


@pytest.mark.parametrize("block", [
    {"problem": {"p": 0.5}},
    {"problem": {"p": 2.0, "cone": {"kind": "sector", "theta1": 0.0, "theta2": 4.0}}},
    {"problem": {"p": 2.0}, "mesh": {"h": 0.5}},
    {"problem": {"p": 2.0}, "diagnostics": {"n_levels": 4}},
    {"problem": {"p": 2.0}, "diagnostics": {"seed": -1}},
    {"problem": {"p": 2.0}, "output": {"formats": ["pdf"]}},
    {"problem": {"p": 2.0}, "solver": {"max_iter": 0}},
])
def test_invalid_values_rejected(tmp_path, block):
    assert run(tmp_path, "solve", block) == 2


def test_bad_json_and_missing_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["geom", "--config", str(path)]) == 2
    assert cli.main(["geom", "--config", str(tmp_path / "missing.json")]) == 2


def test_bad_seed_override(tmp_path):
    assert run(tmp_path, "geom", TORSION, "--seed", "abc") == 2
    assert run(tmp_path, "geom", TORSION, "--seed", str(2**64)) == 2


# ---------------------------------------------------------------------------
# geom


@pytest.mark.parametrize("cone, expected", [
    ({"kind": "full"}, 2 * np.sqrt(np.pi)),
    ({"kind": "sector", "theta1": 0.0, "theta2": np.pi / 2}, np.sqrt(np.pi)),
])
def test_geom_constants(tmp_path, capsys, cone, expected):
    data = {"problem": {"p": 2.0, "cone": cone}, "diagnostics": {"n_random_sets": 10}}
    assert run(tmp_path, "geom", data) == 0
    report = json.loads((tmp_path / "out" / "geom.json").read_text())
    # measured on the Wulff polygon
    assert report["constant"] == pytest.approx(expected, rel=1e-6)
    assert report["violations"] == []
    assert report["worst_margin"] >= 0.0
    assert "optimal constant" in capsys.readouterr().out
    header = (tmp_path / "out" / "geom_sets.csv").read_text().splitlines()[0]
    assert header == "index,quotient,margin,deviation,center_x,center_y,radius"


def test_geom_violation_exit_code(tmp_path, monkeypatch, capsys):
    real = cli.isoperimetric_suite

    def broken(*args, **kwargs):
        suite = real(*args, **kwargs)
        suite.reports[0] = replace(suite.reports[0], margin=-1.0)
        return suite

    monkeypatch.setattr(cli, "isoperimetric_suite", broken)
    assert run(tmp_path, "geom", {"problem": {"p": 2.0}, "diagnostics": {"n_random_sets": 3}}) == 3
    assert "violated" in capsys.readouterr().err


def test_geom_is_deterministic_and_seeded(tmp_path):
    data = {"problem": {"p": 2.0, "norm": {"kind": "smoothed-q", "q": 3.0, "delta": 0.05}},
            "diagnostics": {"n_random_sets": 8}}
    assert run(tmp_path, "geom", data, out="a") == 0
    assert run(tmp_path, "geom", data, out="b") == 0
    assert run(tmp_path, "geom", data, "--seed", "7", out="c") == 0
    a = (tmp_path / "a" / "geom_sets.csv").read_bytes()
    assert a == (tmp_path / "b" / "geom_sets.csv").read_bytes()
    assert a != (tmp_path / "c" / "geom_sets.csv").read_bytes()
    assert json.loads((tmp_path / "c" / "geom.json").read_text())["seed"] == 7


# ---------------------------------------------------------------------------
# solve


def test_solve_torsion(tmp_path, capsys):
    assert run(tmp_path, "solve", TORSION) == 0
    out = capsys.readouterr().out
    M = float(out.split("M = ")[1].split()[0])
    assert M == pytest.approx(0.25, abs=5e-3)
    info = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert info["converged"] and info["min_u"] >= 0.0
    assert info["M"] == M
    d = tmp_path / "out"
    mesh = load_mesh(d, 0.04)
    assert load_solution_csv(d / "solution.csv", mesh).M == M


def test_solve_step_source(tmp_path):
    data = {"problem": {"p": 2.0, "f": {"kind": "step", "a": 2.0, "b": 1.0, "s": 0.2}},
            "mesh": {"h": 0.04}}
    assert run(tmp_path, "solve", data) == 0
    info = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert info["converged"] and info["min_u"] >= 0.0
    # f >= 1 everywhere and f = 2 near the boundary: the maximum sits between the two torsions
    assert 0.25 < info["M"] < 0.5


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    # p = 2 with the Euclidean norm converges in one preconditioned step; p = 3 does not
    data = {"problem": {"p": 3.0}, "mesh": {"h": 0.04}, "solver": {"max_iter": 1}}
    assert run(tmp_path, "solve", data) == 4
    assert capsys.readouterr().err.startswith("solver:")
    # the last iterate is still written for inspection
    assert (tmp_path / "out" / "solution.csv").exists()
    assert json.loads((tmp_path / "out" / "solve.json").read_text())["converged"] is False


def test_solve_output_is_finite_json(tmp_path):
    assert run(tmp_path, "solve", TORSION) == 0
    text = (tmp_path / "out" / "solve.json").read_text()
    for bad in ("NaN", "Infinity"):
        assert bad not in text
    json.loads(text)


# ---------------------------------------------------------------------------
# verify


def test_verify_torsion_passes_and_is_reproducible(tmp_path, capsys):
    # the default tolerances are calibrated for h = 0.02
    data = {"problem": {"p": 2.0}}
    assert run(tmp_path, "verify", data, out="a") == 0
    assert "holder_worst" in capsys.readouterr().out
    assert run(tmp_path, "verify", data, out="b") == 0
    for name in ("levels.csv", "summary.json", "solution.csv", "contours.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["passed"] and summary["failures"] == []


def test_verify_quadrant_anisotropic(tmp_path):
    data = {"problem": {"p": 2.0, "norm": {"kind": "ellipse", "A": [[4.0, 0.0], [0.0, 1.0]]},
                        "cone": {"kind": "sector", "theta1": 0.0, "theta2": np.pi / 2}},
            "mesh": {"h": 0.04}}
    assert run(tmp_path, "verify", data) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["center_free_max_dist"] <= 0.08


def test_verify_loaded_perturbed_solution_fails(tmp_path, capsys):
    assert run(tmp_path, "solve", TORSION, out="sol") == 0
    d = tmp_path / "sol"
    mesh = load_mesh(d, 0.04)
    sol = load_solution_csv(d / "solution.csv", mesh)
    V = mesh.vertices
    bump = np.exp(-((V[:, 0] - 0.4) ** 2 + V[:, 1] ** 2) / 0.25**2) * (1 - np.sum(V**2, axis=1))
    sol.u = sol.u + 0.05 * bump
    save_solution_csv(d / "solution.csv", sol)
    capsys.readouterr()
    assert run(tmp_path, "verify", TORSION, "--solution", str(d), out="check") == 5
    assert "holder_worst" in capsys.readouterr().err


def test_verify_rejects_mismatched_solution(tmp_path):
    assert run(tmp_path, "solve", TORSION, out="sol") == 0
    (tmp_path / "sol" / "solution.csv").write_text("x,y,u\n0,0,1\n")
    assert run(tmp_path, "verify", TORSION, "--solution", str(tmp_path / "sol")) == 2


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"problem": {"p": 2.0}, "diagnostics": {"n_random_sets": 2}})
    proc = subprocess.run([sys.executable, "-m", "wulff_lab.cli", "geom", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "optimal constant" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "wulff_lab.cli", "bogus"], capture_output=True,
                          text=True)
    assert proc.returncode == 2
