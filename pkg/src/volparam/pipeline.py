"""End-to-end pipeline: discretize -> choose center -> boundary conditions ->
solve -> trace -> atlas -> artifacts, with per-stage timing and a JSON report.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mapper, mesh_io, tracer
from .errors import ConfigError, IoError, StageError, VolparamError
from .grid import (GridConfig, VoxelGrid, apply_boundary_conditions,
                   choose_center, discretize, set_center, FLAG_CENTER,
                   FLAG_INTERIOR)
from .solver import SolverConfig, solve
from .tracer import TracerConfig

_ARTIFACTS = {"field": "field.txt", "atlas_csv": "atlas.csv",
              "atlas_svg": "atlas.svg", "mapped_sphere": "mapped_sphere.off",
              "streamlines": "streamlines.jsonl", "report": "report.json"}


@dataclass
class PipelineConfig:
    input: str = ""
    fmt: str | None = None
    output_dir: str = "out"
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    tracer: TracerConfig = field(default_factory=TracerConfig)
    knn_k: int = 8
    phi_weight: float = math.pi ** 2
    max_param_distance: float = 0.75
    center: tuple[float, float, float] | None = None
    threads: int = 1
    roundtrip_samples: int = 0
    roundtrip_seed: int = 0
    dump_streamlines: str = "streamlines.jsonl"

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


# config file keys -> (section, attribute, parser)
def _parse_center(s: str):
    parts = [float(x) for x in s.replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError(f"expected three coordinates, got {s!r}")
    return tuple(parts)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_scheme(s: str) -> tuple[str, float | None]:
    if s.startswith("sor:"):
        return "sor", float(s.split(":", 1)[1])
    return s, None


_KEYS = {
    "input": ("", "input", str),
    "format": ("", "fmt", str),
    "output_dir": ("", "output_dir", str),
    "resolution": ("grid", "resolution", int),
    "padding": ("grid", "padding", int),
    "epsilon": ("grid", "epsilon", float),
    "guard_layers": ("grid", "guard_layers", int),
    "random_init": ("grid", "random_init", _parse_bool),
    "init_seed": ("grid", "init_seed", int),
    "zeta": ("solver", "zeta", float),
    "max_iters": ("solver", "max_iterations", int),
    "omega": ("solver", "omega", float),
    "eta": ("tracer", "eta", float),
    "rk_abs_tol": ("tracer", "rk_abs_tol", float),
    "rk_rel_tol": ("tracer", "rk_rel_tol", float),
    "h_min": ("tracer", "h_min", float),
    "h_max": ("tracer", "h_max", float),
    "terminal_phi": ("tracer", "terminal_phi", float),
    "max_steps": ("tracer", "max_steps", int),
    "fail_fraction": ("tracer", "fail_fraction", float),
    "scheme": ("solver", "scheme", str),  # accepts jacobi|gauss-seidel|sor:w
    "knn_k": ("", "knn_k", int),
    "phi_weight": ("", "phi_weight", float),
    "max_param_distance": ("", "max_param_distance", float),
    "center": ("", "center", _parse_center),
    "threads": ("", "threads", int),
    "roundtrip_samples": ("", "roundtrip_samples", int),
    "roundtrip_seed": ("", "roundtrip_seed", int),
    "dump_streamlines": ("", "dump_streamlines", str),
}


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from a key=value file plus overrides.

    The file is flat text: one `key = value` per line, '#' comments. Override
    values (already-typed, e.g. from CLI flags) win over file values.
    """
    values: dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for ln, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _KEYS:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            section, attr, parse = _KEYS[key]
            try:
                values[key] = parse(val)
            except ValueError as e:
                raise ConfigError(f"{path}:{ln}: bad value for {key}: {e}") \
                    from e
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    grid_kw, solver_kw, tracer_kw, top_kw = {}, {}, {}, {}
    scheme = values.pop("scheme", None)
    for key, val in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        section, attr, _ = _KEYS[key]
        {"grid": grid_kw, "solver": solver_kw, "tracer": tracer_kw,
         "": top_kw}[section][attr] = val
    if scheme is not None:
        name, omega = _parse_scheme(str(scheme))
        solver_kw["scheme"] = name
        if omega is not None:
            solver_kw["omega"] = omega
    try:
        return PipelineConfig(grid=GridConfig(**grid_kw),
                              solver=SolverConfig(**solver_kw),
                              tracer=TracerConfig(**tracer_kw), **top_kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e


class _Stages:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, name: str, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except VolparamError as e:
            raise StageError(name, e) from e
        self.timings[name] = time.perf_counter() - t0
        return out


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute the full parameterization and write every artifact.

    Returns the report dict (also written as report.json). Stage failures
    raise StageError with the stage name attached.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = _Stages()
    report: dict = {"input": str(cfg.input), "output_dir": str(out_dir)}

    if not cfg.input:
        raise StageError("load", IoError("no input mesh configured"))
    mesh = stages.run("load", mesh_io.load_mesh, cfg.input, cfg.fmt)
    report["mesh"] = {"vertices": mesh.n_vertices,
                      "triangles": mesh.n_triangles}

    grid = stages.run("discretize", discretize, mesh, cfg.grid)
    if cfg.center is not None:
        center_idx = stages.run("choose_center", set_center, grid, cfg.center)
    else:
        center_idx = stages.run("choose_center", choose_center, grid)
    stages.run("boundary_conditions", apply_boundary_conditions, grid,
               cfg.grid)
    report["grid"] = {
        "dims": list(grid.dims), "h": grid.h,
        "origin": [float(x) for x in grid.origin],
        "interior_nodes": int((grid.flags == FLAG_INTERIOR).sum()),
        "boundary_nodes": int((grid.flags == 1).sum()),
        "center_index": list(center_idx),
        "center_position": [float(x) for x in grid.center_position()],
    }

    _, solve_report = stages.run("solve", solve, grid, cfg.solver)
    report["solve"] = dict(solve_report.to_dict(), scheme=cfg.solver.scheme)

    lines = stages.run("trace", tracer.trace_all, grid, mesh, cfg.tracer,
                       threads=cfg.threads)
    terms: dict[str, int] = {}
    for line in lines:
        key = line.termination.value if line is not None else "failed"
        terms[key] = terms.get(key, 0) + 1
    report["trace"] = {"seeds": len(lines), "terminations": terms}

    center_pos = grid.center_position()
    atlas = stages.run("atlas", mapper.build_atlas, mesh, lines, center_pos,
                       fail_fraction=cfg.tracer.fail_fraction)
    report["atlas"] = atlas.diagnostics()

    def write_artifacts():
        mesh_io.write_field(grid, out_dir / _ARTIFACTS["field"])
        mapper.write_atlas_csv(atlas, out_dir / _ARTIFACTS["atlas_csv"])
        mapper.write_atlas_svg(atlas.entries, out_dir / _ARTIFACTS["atlas_svg"])
        mapper.write_mapped_sphere(mesh, atlas,
                                   out_dir / _ARTIFACTS["mapped_sphere"])
        tracer.dump_streamlines(lines, out_dir / cfg.dump_streamlines)

    stages.run("write_artifacts", write_artifacts)

    if cfg.roundtrip_samples > 0:
        def roundtrip():
            ctx = mapper.build_mapping(
                lines, center_pos, k=cfg.knn_k, phi_weight=cfg.phi_weight,
                max_param_distance=cfg.max_param_distance)
            pts = sample_interior_points(grid, cfg.roundtrip_samples,
                                         seed=cfg.roundtrip_seed)
            errs = []
            for p in pts:
                q = mapper.inverse_map(ctx, mapper.parameterize_point(
                    grid, ctx, p))
                errs.append(float(np.linalg.norm(q - p)))
            return {"samples": len(pts),
                    "max_error": max(errs) if errs else None,
                    "mean_error": float(np.mean(errs)) if errs else None,
                    "grid_h": grid.h}
        report["roundtrip"] = stages.run("roundtrip", roundtrip)

    report["stage_seconds"] = {k: round(v, 4)
                               for k, v in stages.timings.items()}
    report["artifacts"] = {k: str(out_dir / v) for k, v in _ARTIFACTS.items()}
    report["artifacts"]["streamlines"] = str(out_dir / cfg.dump_streamlines)
    report["status"] = "ok"
    (out_dir / _ARTIFACTS["report"]).write_text(json.dumps(report, indent=2)
                                                + "\n")
    return report


def sample_interior_points(grid: VoxelGrid, n: int, seed: int = 0
                           ) -> np.ndarray:
    """Random points strictly inside the domain: uniformly chosen cells whose
    eight corners are all interior (or center) nodes, uniform within a cell."""
    solid = (grid.flags == FLAG_INTERIOR) | (grid.flags == FLAG_CENTER)
    cell_inside = (solid[:-1, :-1, :-1] & solid[1:, :-1, :-1]
                   & solid[:-1, 1:, :-1] & solid[1:, 1:, :-1]
                   & solid[:-1, :-1, 1:] & solid[1:, :-1, 1:]
                   & solid[:-1, 1:, 1:] & solid[1:, 1:, 1:])
    cells = np.argwhere(cell_inside)
    if len(cells) == 0:
        raise VolparamError("no fully interior cells to sample from")
    rng = np.random.default_rng(seed)
    pick = cells[rng.integers(0, len(cells), size=n)]
    frac = rng.uniform(0.0, 1.0, size=(n, 3))
    return grid.origin + grid.h * (pick + frac)


def write_report_error(cfg: PipelineConfig, err: StageError) -> None:
    """Persist a failure report so the failing stage is recorded on disk."""
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / _ARTIFACTS["report"]).write_text(json.dumps(
            {"status": "failed", "stage": err.stage,
             "error": str(err.cause)}, indent=2) + "\n")
    except OSError:
        pass
