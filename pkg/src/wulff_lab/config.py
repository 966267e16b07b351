"""JSON run configuration with strict key checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .cones import FULL, HALF, SECTOR, ConeSpec, GeometryError, WeightSpec
from .diagnostics import DEFAULT_TOLERANCES
from .finsler import ELLIPSE, EUCLIDEAN, SMOOTHED_Q, NormSpec
from .solver import ConditionError, ProblemSpec, SolverConfig, SourceSpec

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    pass


def _check_keys(block: Any, name: str, allowed: set, required: tuple = ()) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{name} must be a JSON object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    missing = [k for k in required if k not in block]
    if missing:
        raise ConfigError(f"missing key(s) in {name}: {', '.join(missing)}")
    return block


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    return float(value)


def parse_norm(d) -> NormSpec:
    kind = _check_keys(d, "problem.norm", {"kind", "A", "q", "delta"}, ("kind",))["kind"]
    if kind == EUCLIDEAN:
        _check_keys(d, "problem.norm", {"kind"})
        return NormSpec.euclidean()
    if kind == ELLIPSE:
        _check_keys(d, "problem.norm", {"kind", "A"}, ("A",))
        return NormSpec.ellipse(d["A"])
    if kind == SMOOTHED_Q:
        _check_keys(d, "problem.norm", {"kind", "q", "delta"}, ("q", "delta"))
        return NormSpec.smoothed_q(_number(d["q"], "q"), _number(d["delta"], "delta"))
    raise ConfigError(f"unknown norm kind {kind!r}")


def parse_weight(d) -> WeightSpec:
    kind = _check_keys(d, "problem.weight", {"kind", "a", "b"}, ("kind",))["kind"]
    if kind == "constant":
        _check_keys(d, "problem.weight", {"kind"})
        return WeightSpec.constant()
    if kind == "monomial":
        return WeightSpec.monomial(_number(d.get("a", 0.0), "a"), _number(d.get("b", 0.0), "b"))
    raise ConfigError(f"unknown weight kind {kind!r}")


def parse_cone(d) -> ConeSpec:
    kind = _check_keys(d, "problem.cone", {"kind", "normal_angle", "theta1", "theta2"},
                       ("kind",))["kind"]
    if kind == FULL:
        _check_keys(d, "problem.cone", {"kind"})
        return ConeSpec.full()
    if kind == HALF:
        _check_keys(d, "problem.cone", {"kind", "normal_angle"})
        return ConeSpec.half(_number(d.get("normal_angle", 1.5707963267948966), "normal_angle"))
    if kind == SECTOR:
        _check_keys(d, "problem.cone", {"kind", "theta1", "theta2"}, ("theta1", "theta2"))
        return ConeSpec.sector(_number(d["theta1"], "theta1"), _number(d["theta2"], "theta2"))
    raise ConfigError(f"unknown cone kind {kind!r}")


def parse_source(d) -> SourceSpec:
    kind = _check_keys(d, "problem.f", {"kind", "c0", "q", "a", "b", "s", "phi"}, ("kind",))["kind"]
    phi = d.get("phi")
    if phi is not None and not isinstance(phi, (int, float, list)):
        raise ConfigError("phi must be a number or a list of [u, phi] pairs")
    if kind == "constant":
        _check_keys(d, "problem.f", {"kind", "c0", "phi"})
        return SourceSpec.constant(_number(d.get("c0", 1.0), "c0"), phi=phi)
    if kind == "power":
        _check_keys(d, "problem.f", {"kind", "q", "phi"}, ("q",))
        return SourceSpec.power(_number(d["q"], "q"), phi=phi)
    if kind == "step":
        _check_keys(d, "problem.f", {"kind", "a", "b", "s", "phi"}, ("a", "b", "s"))
        return SourceSpec.step(_number(d["a"], "a"), _number(d["b"], "b"), _number(d["s"], "s"),
                               phi=phi)
    raise ConfigError(f"unknown source kind {kind!r}")


@dataclass
class MeshConfig:
    h: float = 0.02
    grading: bool = True


@dataclass
class DiagnosticsConfig:
    n_levels: int = 32
    seed: int = 42
    n_random_sets: int = 50
    amplitude: float = 0.3
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))


@dataclass
class OutputConfig:
    directory: str = "wulff_out"
    formats: tuple = ("csv", "json", "svg")


@dataclass
class RunConfig:
    problem: ProblemSpec
    mesh: MeshConfig
    solver: SolverConfig
    diagnostics: DiagnosticsConfig
    output: OutputConfig
    source: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "mesh": {"h": self.mesh.h, "grading": self.mesh.grading},
            "solver": {"tol": self.solver.tol, "max_iter": self.solver.max_iter,
                       "eps_schedule": list(self.solver.eps_schedule)},
            "diagnostics": {"n_levels": self.diagnostics.n_levels, "seed": self.diagnostics.seed,
                            "n_random_sets": self.diagnostics.n_random_sets,
                            "amplitude": self.diagnostics.amplitude,
                            "tolerances": dict(self.diagnostics.tolerances)},
            "output": {"directory": self.output.directory, "formats": list(self.output.formats)},
        }


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded JSON document.

    Raises
    ------
    ConfigError
        On unknown or missing keys, wrong types, or specs that fail validation
        (including a failed condition-(b) certificate).
    """
    _check_keys(data, "config", {"problem", "mesh", "solver", "diagnostics", "output"},
                ("problem",))
    pb = _check_keys(data["problem"], "problem",
                     {"p", "norm", "weight", "cone", "R", "f", "condition"}, ("p",))
    try:
        norm = parse_norm(pb.get("norm", {"kind": EUCLIDEAN}))
        weight = parse_weight(pb.get("weight", {"kind": "constant"}))
        cone = parse_cone(pb.get("cone", {"kind": FULL}))
        source = parse_source(pb.get("f", {"kind": "constant"}))
        problem = ProblemSpec(_number(pb["p"], "p"), norm, weight, cone,
                              _number(pb.get("R", 1.0), "R"), source, pb.get("condition"))
    except ConfigError:
        raise
    except (ValueError, TypeError, GeometryError, ConditionError) as exc:
        raise ConfigError(str(exc)) from exc

    mb = _check_keys(data.get("mesh", {}), "mesh", {"h", "grading"})
    mesh = MeshConfig(_number(mb.get("h", 0.02), "mesh.h"), bool(mb.get("grading", True)))
    if not 0.0 < mesh.h <= problem.R / 4.0:
        raise ConfigError("mesh.h must satisfy 0 < h <= R/4")

    sb = _check_keys(data.get("solver", {}), "solver", {"tol", "max_iter", "eps_schedule"})
    sched = sb.get("eps_schedule", [1e-1, 1e-2, 1e-3, 1e-4])
    if not isinstance(sched, list) or not sched:
        raise ConfigError("solver.eps_schedule must be a nonempty list")
    sched = tuple(_number(e, "eps_schedule entry") for e in sched)
    if any(e <= 0.0 for e in sched):
        raise ConfigError("solver.eps_schedule entries must be positive")
    max_iter = sb.get("max_iter", 500)
    if isinstance(max_iter, bool) or not isinstance(max_iter, int) or max_iter < 1:
        raise ConfigError("solver.max_iter must be a positive integer")
    solver = SolverConfig(tol=_number(sb.get("tol", 1e-8), "solver.tol"), max_iter=max_iter,
                          eps_schedule=sched)
    if not solver.tol > 0.0:
        raise ConfigError("solver.tol must be positive")

    db = _check_keys(data.get("diagnostics", {}), "diagnostics",
                     {"n_levels", "seed", "n_random_sets", "amplitude", "tolerances"})
    tol = dict(DEFAULT_TOLERANCES)
    user_tol = _check_keys(db.get("tolerances", {}), "diagnostics.tolerances",
                           set(DEFAULT_TOLERANCES))
    tol.update({k: _number(v, f"tolerances.{k}") for k, v in user_tol.items()})
    diag = DiagnosticsConfig(int(db.get("n_levels", 32)), parse_seed(db.get("seed", 42)),
                             int(db.get("n_random_sets", 50)),
                             _number(db.get("amplitude", 0.3), "amplitude"), tol)
    if diag.n_levels < 10:
        raise ConfigError("diagnostics.n_levels must be at least 10")
    if diag.n_random_sets < 0 or not 0.0 <= diag.amplitude < 1.0:
        raise ConfigError("need n_random_sets >= 0 and 0 <= amplitude < 1")

    ob = _check_keys(data.get("output", {}), "output", {"directory", "formats"})
    formats = tuple(ob.get("formats", ["csv", "json", "svg"]))
    bad = sorted(set(formats) - {"csv", "json", "svg"})
    if bad:
        raise ConfigError(f"unknown output format(s): {', '.join(bad)}")
    out = OutputConfig(str(ob.get("directory", "wulff_out")), formats)
    return RunConfig(problem, mesh, solver, diag, out)


def parse_seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= MAX_SEED:
        raise ConfigError("seed must be an integer in [0, 2^64 - 1]")
    return int(value)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    cfg = parse_config(data)
    cfg.source = str(path)
    return cfg
