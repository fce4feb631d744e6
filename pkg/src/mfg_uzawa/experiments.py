"""Configuration-driven experiment runner.

Configs are flat ``key = value`` text with ``#`` comments.  A run builds the
problem, executes the solver and writes u.csv, m.csv, trace.csv, optional
PGM heatmaps and a report.json manifest, all with stable formatting so that
identical configs produce byte-identical outputs.
"""

from __future__ import annotations

import ast
import json
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .costs import RunningCost
from .grid import EllipticOperator, Field, JumpOperator, TorusGrid
from .mfg import IterationTrace, MFGProblem, MFGSolution, UzawaConfig, run

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "ParseError",
    "ValidationError",
    "parse_config",
    "emit_config",
    "run_experiment",
    "write_field_csv",
    "write_trace_csv",
    "write_heatmap_pgm",
    "preset_dir",
    "list_presets",
]

log = logging.getLogger("mfg_uzawa")

F0_PRESETS = {
    "stop_imp": "cos(2*pi*x) + 2*cos(2*pi*(y - x)) + cos(6*pi*x)",
    "continuous": "cos(2*pi*x) + cos(2*pi*y) + cos(4*pi*x)",
}


class ParseError(ValueError):
    def __init__(self, message, line=None, key=None):
        super().__init__(message)
        self.line = line
        self.key = key


class ValidationError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    d: int
    nu: float
    lam: float = 1.0
    delta: float = 0.5
    rho_value: float = 1.0
    f0_preset: Optional[str] = None
    f0_expr: Optional[str] = None
    k0: Optional[float] = None
    xi_offset: Optional[tuple] = None  # grid-cell units, rounded per component
    max_outer: int = 500
    tol_outer: float = 1e-6
    tol_inner: Optional[float] = None
    max_inner: int = 500000
    emit_heatmaps: bool = False
    stencil_scaling: str = "h2"
    projection: str = "dual"
    seed: int = 0
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("stopping", "impulse", "continuous"):
            raise ValidationError(f"kind must be stopping|impulse|continuous, got {self.kind!r}")
        if self.d < 2:
            raise ValidationError(f"d must be >= 2, got {self.d}")
        if self.nu < 0:
            raise ValidationError(f"nu must be >= 0, got {self.nu}")
        if self.lam <= 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.delta <= 0:
            raise ValidationError(f"delta must be > 0, got {self.delta}")
        if self.rho_value < 0:
            raise ValidationError(f"rho must be >= 0, got {self.rho_value}")
        if self.max_outer < 0:
            raise ValidationError(f"max_outer must be >= 0, got {self.max_outer}")
        if self.tol_outer <= 0:
            raise ValidationError(f"tol_outer must be > 0, got {self.tol_outer}")
        if self.stencil_scaling not in ("h", "h2"):
            raise ValidationError(f"stencil_scaling must be h|h2, got {self.stencil_scaling!r}")
        if self.projection not in ("dual", "active_set"):
            raise ValidationError(
                f"projection must be dual|active_set, got {self.projection!r}"
            )
        if self.f0_preset is not None and self.f0_preset not in F0_PRESETS:
            raise ValidationError(
                f"unknown f0_preset {self.f0_preset!r}; choose from {sorted(F0_PRESETS)}"
            )
        if self.f0_preset is not None and self.f0_expr is not None:
            raise ValidationError("give f0_preset or f0_expr, not both")
        if self.kind == "impulse":
            if self.k0 is None or self.k0 <= 0:
                raise ValidationError("impulse kind needs k0 > 0")
            if self.xi_offset is None:
                raise ValidationError("impulse kind needs xi_offset")
        else:
            if self.k0 is not None or self.xi_offset is not None:
                raise ValidationError(f"k0/xi_offset only apply to the impulse kind")

    def rounded_offset(self) -> Optional[tuple]:
        """Integer grid offset: round(xi) per component, modulo d."""
        if self.xi_offset is None:
            return None
        return tuple(int(round(c)) % self.d for c in self.xi_offset)


# --- f0 expressions ----------------------------------------------------------

_ALLOWED_CALLS = {"cos": np.cos, "sin": np.sin}
_ALLOWED_NAMES = {"pi": math.pi}


def _eval_expr_node(node, env):
    if isinstance(node, ast.Expression):
        return _eval_expr_node(node.body, env)
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
        left = _eval_expr_node(node.left, env)
        right = _eval_expr_node(node.right, env)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        return left * right
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        val = _eval_expr_node(node.operand, env)
        return val if isinstance(node.op, ast.UAdd) else -val
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id in _ALLOWED_CALLS and len(node.args) == 1 and not node.keywords:
            return _ALLOWED_CALLS[node.func.id](_eval_expr_node(node.args[0], env))
        raise ValidationError(f"disallowed call {ast.dump(node.func)} in f0 expression")
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _ALLOWED_NAMES:
            return _ALLOWED_NAMES[node.id]
        raise ValidationError(f"unknown name {node.id!r} in f0 expression")
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    raise ValidationError(f"disallowed syntax in f0 expression: {ast.dump(node)}")


def eval_f0_expression(expr: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate an f0 expression over {cos, sin, +, -, *, constants, pi, x, y}."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"invalid f0 expression {expr!r}: {exc}") from exc
    return np.broadcast_to(_eval_expr_node(tree, {"x": x, "y": y}), x.shape).astype(float)


def _build_f0(config: ExperimentConfig, grid: TorusGrid) -> Field:
    expr = config.f0_expr
    if config.f0_preset is not None:
        expr = F0_PRESETS[config.f0_preset]
    if expr is None:
        return Field.zeros(grid)
    x, y = grid.nodes()
    return Field(grid, eval_f0_expression(expr, x, y))


# --- parsing / emission ------------------------------------------------------

_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}

_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}
_KEY_TO_FIELD = {
    "kind": "kind",
    "d": "d",
    "nu": "nu",
    "lambda": "lam",
    "delta": "delta",
    "rho": "rho_value",
    "f0_preset": "f0_preset",
    "f0_expr": "f0_expr",
    "k0": "k0",
    "xi_offset": "xi_offset",
    "max_outer": "max_outer",
    "tol_outer": "tol_outer",
    "tol_inner": "tol_inner",
    "max_inner": "max_inner",
    "emit_heatmaps": "emit_heatmaps",
    "stencil_scaling": "stencil_scaling",
    "projection": "projection",
    "seed": "seed",
    "output_dir": "output_dir",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def _convert(key, raw, lineno):
    name = _KEY_TO_FIELD[key]
    try:
        if name in ("kind", "f0_preset", "f0_expr", "stencil_scaling", "projection", "output_dir"):
            return raw
        if name in ("d", "max_outer", "max_inner", "seed"):
            return int(raw)
        if name == "emit_heatmaps":
            word = raw.strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_WORDS[word]
        if name == "xi_offset":
            parts = [p for p in raw.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ValueError("xi_offset needs two components")
            return (float(parts[0]), float(parts[1]))
        return float(raw)
    except ValueError as exc:
        raise ParseError(
            f"line {lineno}: bad value for {key!r}: {exc}", line=lineno, key=key
        ) from exc


def parse_config(text: str) -> ExperimentConfig:
    """Parse the key = value format; unknown keys and malformed lines are
    ParseError, violated invariants are ValidationError."""
    values = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value'", line=lineno)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _KEY_TO_FIELD:
            raise ParseError(f"line {lineno}: unknown key {key!r}", line=lineno, key=key)
        if key in values:
            raise ParseError(f"line {lineno}: duplicate key {key!r}", line=lineno, key=key)
        values[_KEY_TO_FIELD[key]] = _convert(key, raw, lineno)
    if "kind" not in values:
        raise ValidationError("missing required key: kind")
    for required in ("d", "nu"):
        if required not in values:
            raise ValidationError(f"missing required key: {required}")
    return ExperimentConfig(**values)


def _format_value(name, value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(c)) for c in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config: ExperimentConfig) -> str:
    """Canonical text form; parse(emit(config)) == config."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {_format_value(f.name, value)}")
    return "\n".join(lines) + "\n"


# --- output writers ----------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_field_csv(field_: Field, path) -> None:
    """CSV with header i,j,x,y,value; row order i outer, j inner; 17
    significant digits."""
    grid = field_.grid
    h = grid.h
    lines = ["i,j,x,y,value"]
    vals = field_.values
    for i in range(1, grid.d + 1):
        for j in range(1, grid.d + 1):
            lines.append(
                f"{i},{j},{_fmt((i - 1) * h)},{_fmt((j - 1) * h)},{_fmt(vals[i - 1, j - 1])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_trace_csv(trace: IterationTrace, path) -> None:
    """CSV with header iter,dm,comp_res,feas_res,fp_res,delta_n; fp_res is
    empty for the non-continuous kinds."""
    lines = ["iter,dm,comp_res,feas_res,fp_res,delta_n"]
    for row in trace.rows:
        dm = _fmt(row.dm) if np.isfinite(row.dm) else "inf"
        fp = "" if row.fp_res is None else _fmt(row.fp_res)
        lines.append(
            f"{row.n},{dm},{_fmt(row.comp_res)},{_fmt(row.feas_res)},{fp},{_fmt(row.delta_n)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_heatmap_pgm(field_: Field, path) -> None:
    """ASCII PGM (P2), linear min-max normalization to 0..255; a constant
    field maps to mid-gray 127.  Row r is the line y = r*h (j = r+1)."""
    vals = field_.values
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        pixels = np.rint((vals - lo) / (hi - lo) * 255).astype(int)
    else:
        pixels = np.full(vals.shape, 127, dtype=int)
    d = field_.grid.d
    lines = ["P2", f"{d} {d}", "255"]
    for j in range(d):
        lines.append(" ".join(str(pixels[i, j]) for i in range(d)))
    Path(path).write_text("\n".join(lines) + "\n")


# --- runner ------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    config_echo: dict
    converged: bool
    iterations: int
    final_residuals: dict
    wall_time: float
    manifest: tuple

    def to_json(self) -> str:
        payload = {
            "config": self.config_echo,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residuals": self.final_residuals,
            "wall_time_seconds": self.wall_time,
            "manifest": list(self.manifest),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def build_problem(config: ExperimentConfig) -> MFGProblem:
    grid = TorusGrid(config.d)
    op = EllipticOperator(
        nu=config.nu, lam=config.lam, grid=grid, scaling=config.stencil_scaling
    )
    cost = RunningCost(f0=_build_f0(config, grid), scaling=config.stencil_scaling)
    rho = Field.full(grid, config.rho_value)
    if config.kind == "stopping":
        return MFGProblem.stopping(op, cost, rho)
    if config.kind == "impulse":
        jump = JumpOperator(k0=config.k0, offsets=(config.rounded_offset(),))
        return MFGProblem.impulse(op, cost, rho, jump)
    return MFGProblem.continuous(op, cost, rho)


def solver_config(config: ExperimentConfig) -> UzawaConfig:
    return UzawaConfig(
        delta=config.delta,
        max_outer=config.max_outer,
        tol_outer=config.tol_outer,
        tol_inner=config.tol_inner,
        max_inner=config.max_inner,
        projection_method=config.projection,
    )


def _config_echo(config: ExperimentConfig) -> dict:
    echo = {}
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = list(value)
        echo[_FIELD_TO_KEY[f.name]] = value
    if config.kind == "impulse":
        echo["xi_offset_rounded"] = list(config.rounded_offset())
    return echo


def run_experiment(config: ExperimentConfig, out_dir=None) -> RunReport:
    """Build the problem, run the solver and write the output files.

    On a solver error the partial outputs written so far are preserved and
    the error propagates.
    """
    out = Path(out_dir if out_dir is not None else (config.output_dir or "."))
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(config)
    cfg = solver_config(config)
    if config.kind == "impulse":
        log.info(
            "xi_offset %s rounded to grid offset %s", config.xi_offset, config.rounded_offset()
        )
    log.info("running %s experiment at d=%d", config.kind, config.d)
    start = time.perf_counter()
    solution = run(problem, cfg)
    wall = time.perf_counter() - start
    for warning in solution.trace.warnings:
        log.warning("%s", warning)
    manifest = []
    write_field_csv(solution.u, out / "u.csv")
    manifest.append("u.csv")
    write_field_csv(solution.m, out / "m.csv")
    manifest.append("m.csv")
    write_trace_csv(solution.trace, out / "trace.csv")
    manifest.append("trace.csv")
    if config.emit_heatmaps:
        write_heatmap_pgm(solution.u, out / "u.pgm")
        manifest.append("u.pgm")
        write_heatmap_pgm(solution.m, out / "m.pgm")
        manifest.append("m.pgm")
    manifest.append("report.json")
    last = solution.trace.rows[-1] if solution.trace.rows else None
    report = RunReport(
        config_echo=_config_echo(config),
        converged=solution.converged,
        iterations=len(solution.trace.rows),
        final_residuals={
            "dm": (None if last is None or not np.isfinite(last.dm) else last.dm),
            "complementarity": None if last is None else last.comp_res,
            "feasibility": None if last is None else last.feas_res,
            "fokker_planck": None if last is None else last.fp_res,
        },
        wall_time=wall,
        manifest=tuple(manifest),
    )
    (out / "report.json").write_text(report.to_json())
    log.info(
        "%s: converged=%s after %d iterations (%.2fs)",
        config.kind,
        report.converged,
        report.iterations,
        wall,
    )
    return report


def preset_dir() -> Path:
    return Path(__file__).resolve().parent / "presets"


def list_presets() -> list[tuple[str, Path]]:
    return sorted((p.stem, p) for p in preset_dir().glob("*.cfg"))
