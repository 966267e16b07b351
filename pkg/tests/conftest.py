import sys
from functools import lru_cache

import numpy as np
import pytest

from wulff_lab.cones import ConeSpec, WeightSpec
from wulff_lab.diagnostics import distribution_table, summarize
from wulff_lab.finsler import NormSpec
from wulff_lab.mesh import generate_mesh
from wulff_lab.solver import ProblemSpec, SourceSpec, solve

EUCLID = NormSpec.euclidean()
ELLIPSE = NormSpec.ellipse([[4.0, 0.0], [0.0, 1.0]])
SMOOTH = NormSpec.smoothed_q(3.0, 0.05)
SMOOTH4 = NormSpec.smoothed_q(4.0, 0.2)

H_ACC = 0.02


def _radial_p(p):
    def exact(x):
        r = np.hypot(x[:, 0], x[:, 1])
        return (p - 1.0) / p * 0.5 ** (1.0 / (p - 1.0)) * (1.0 - r ** (p / (p - 1.0)))
    return exact


def _ellipse_exact(x):
    # u = (1 - H0(x)^2) / 4 with H0(x)^2 = x^T A^{-1} x
    return (1.0 - (x[:, 0] ** 2 / 4.0 + x[:, 1] ** 2)) / 4.0


def _weighted_exact(x):
    # D = 4, p = 2: u = (1 - r^2) / (2 D)
    return (1.0 - np.sum(x**2, axis=1)) / 8.0


# name -> (problem, exact solution or None)
PROBLEMS = {
    "torsion": (ProblemSpec(2.0, EUCLID, WeightSpec.constant(), ConeSpec.full()), _radial_p(2.0)),
    "radial_p3": (ProblemSpec(3.0, EUCLID, WeightSpec.constant(), ConeSpec.full()),
                  _radial_p(3.0)),
    "ellipse": (ProblemSpec(2.0, ELLIPSE, WeightSpec.constant(), ConeSpec.full()), _ellipse_exact),
    "cond_b_p15": (ProblemSpec(1.5, EUCLID, WeightSpec.constant(), ConeSpec.full(),
                               f=SourceSpec.constant(1.0, phi=1.0 / 6.0), condition="b"),
                   _radial_p(1.5)),
    "weighted_D4": (ProblemSpec(2.0, EUCLID, WeightSpec.monomial(1, 1), ConeSpec.quadrant(),
                                f=SourceSpec.constant(1.0, phi=0.5), condition="b"),
                    _weighted_exact),
    "quadrant_ellipse": (ProblemSpec(2.0, ELLIPSE, WeightSpec.constant(), ConeSpec.quadrant()),
                         _ellipse_exact),
    "half_smoothed": (ProblemSpec(2.0, SMOOTH4, WeightSpec.constant(), ConeSpec.half()), None),
}

ACCEPTANCE_SOLVES = list(PROBLEMS)


@lru_cache(maxsize=None)
def solved(name, h=H_ACC):
    problem, _ = PROBLEMS[name]
    mesh = generate_mesh(problem.cone, problem.H, problem.R, h)
    return problem, mesh, solve(problem, mesh)


@lru_cache(maxsize=None)
def diagnosed(name):
    problem, mesh, sol = solved(name)
    table = distribution_table(problem, sol)
    return table, summarize(problem, sol, table)


@pytest.fixture
def solved_problem():
    return solved


@pytest.fixture
def diagnosed_problem():
    return diagnosed


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
