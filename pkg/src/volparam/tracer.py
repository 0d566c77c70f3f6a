"""Streamline integration down the potential gradient.

Each streamline solves dX/dt = -eta * grad(phi) from a boundary seed with an
embedded Runge-Kutta-Fehlberg 4(5) pair and PI step-size control. A step is
accepted only if the error estimate passes AND the sampled potential strictly
decreases; otherwise the step shrinks, and a trace that cannot make progress
at the minimum step stalls instead of wandering. Integration stops when the
potential reaches terminal_phi (with the crossing refined by bisection so the
endpoint lands just below it) or when the path enters the center node's cell.

All seeds of a batch are advanced in lockstep with vectorized arithmetic;
per-line results are identical to tracing each seed alone because every
operation is elementwise in the line dimension.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (BatchError, IoError, OutOfDomain, StalledError,
                     StepLimitError)
from .grid import VoxelGrid
from .mesh_io import SurfaceMesh
from .sampler import locate_cells, sample_gradient_many, sample_phi_many

_GRAD_FLOOR = 1e-12

# Fehlberg 4(5) tableau
_A = ((),
      (1 / 4,),
      (3 / 32, 9 / 32),
      (1932 / 2197, -7200 / 2197, 7296 / 2197),
      (439 / 216, -8.0, 3680 / 513, -845 / 4104),
      (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40))
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)


class Termination(Enum):
    REACHED_TERMINAL_PHI = "reached_terminal_phi"
    REACHED_CENTER_CELL = "reached_center_cell"
    STALLED = "stalled"
    STEP_LIMIT = "step_limit"


@dataclass
class TracerConfig:
    eta: float = 1.0
    rk_abs_tol: float = 1e-6
    rk_rel_tol: float = 1e-6
    h_min: float = 1e-4   # step-displacement bounds, in grid spacings
    h_max: float = 2.0
    terminal_phi: float = 0.1
    center_stop_cells: float = 4.0
    center_stop_frac: float = 0.5
    max_steps: int = 100_000
    fail_fraction: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.terminal_phi < 1.0):
            raise ValueError("terminal_phi must be in (0, 1)")
        if not (0.0 < self.h_min < self.h_max):
            raise ValueError("need 0 < h_min < h_max")
        if self.rk_abs_tol <= 0 or self.rk_rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.center_stop_cells < 1.0:
            raise ValueError("center_stop_cells must be >= 1")
        if not (0.0 <= self.center_stop_frac < 1.0):
            raise ValueError("center_stop_frac must be in [0, 1)")

    def stop_radius_cells(self, center_depth_cells: float) -> float:
        """Guard-ball radius around the center, in grid spacings.

        Scales with the center's distance to the boundary so the endpoint
        shell stays out of the lattice-dominated sink zone, with a floor of
        center_stop_cells for shallow domains.
        """
        return max(self.center_stop_cells,
                   self.center_stop_frac * center_depth_cells)


@dataclass
class Streamline:
    """Polyline from a boundary seed toward the shape center.

    phis is strictly decreasing; points[0] is the seed position.
    """

    seed_vertex: int
    points: np.ndarray   # (n, 3)
    phis: np.ndarray     # (n,)
    termination: Termination

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    def reached_center_region(self) -> bool:
        return self.termination in (Termination.REACHED_TERMINAL_PHI,
                                    Termination.REACHED_CENTER_CELL)


def _propose(grid: VoxelGrid, X: np.ndarray, dt: np.ndarray, eta: float,
             k1: np.ndarray):
    """One RKF45 proposal per row. Returns (x5, scaled-error basis, ok)."""
    ks = [k1]
    ok = np.ones(len(X), dtype=bool)
    for s in range(1, 6):
        xs = X + dt[:, None] * sum(a * k for a, k in zip(_A[s], ks))
        g, gok = sample_gradient_many(grid, xs)
        ok &= gok
        ks.append(-eta * g)
    x4 = X + dt[:, None] * sum(b * k for b, k in zip(_B4, ks))
    x5 = X + dt[:, None] * sum(b * k for b, k in zip(_B5, ks))
    return x5, x5 - x4, ok


def _error_norm(err: np.ndarray, x: np.ndarray, cfg: TracerConfig) -> np.ndarray:
    scale = cfg.rk_abs_tol + cfg.rk_rel_tol * np.abs(x)
    return np.sqrt(np.mean((err / scale) ** 2, axis=1))


def _one_sided_gradient(grid: VoxelGrid, point: np.ndarray) -> np.ndarray | None:
    """Gradient estimate from grid-node differences near a point whose own
    cell touches undefined nodes. Uses the nearest defined corner and one-
    sided differences where a neighbour is missing."""
    idx, _, _ = locate_cells(grid, point[None])
    i0, j0, k0 = idx[0]
    defined = grid.defined_mask()
    corners = [(i0 + a, j0 + b, k0 + c)
               for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    corners = [c for c in corners if defined[c]]
    if not corners:
        return None
    pos = grid.origin + grid.h * np.asarray(corners, dtype=np.float64)
    node = corners[int(np.argmin(((pos - point) ** 2).sum(axis=1)))]
    g = np.zeros(3)
    nx, ny, nz = grid.dims
    for ax in range(3):
        lo = list(node)
        hi = list(node)
        lo[ax] -= 1
        hi[ax] += 1
        has_lo = lo[ax] >= 0 and defined[tuple(lo)]
        has_hi = hi[ax] < grid.dims[ax] and defined[tuple(hi)]
        if has_lo and has_hi:
            g[ax] = (grid.phi[tuple(hi)] - grid.phi[tuple(lo)]) / (2 * grid.h)
        elif has_hi:
            g[ax] = (grid.phi[tuple(hi)] - grid.phi[node]) / grid.h
        elif has_lo:
            g[ax] = (grid.phi[node] - grid.phi[tuple(lo)]) / grid.h
    if np.linalg.norm(g) < _GRAD_FLOOR:
        return None
    return g


def _refine_terminal(grid: VoxelGrid, cfg: TracerConfig, x_from: np.ndarray,
                     k1: np.ndarray, dt_hi: float, x_hi: np.ndarray,
                     phi_hi: float) -> tuple[np.ndarray, float]:
    """Bisect the step length so the endpoint potential lands in
    [terminal_phi - delta, terminal_phi]."""
    target = cfg.terminal_phi
    delta = max(cfg.rk_abs_tol, 1e-12)
    lo = 0.0
    for _ in range(80):
        if phi_hi >= target - delta:
            break
        mid = 0.5 * (lo + dt_hi)
        x_mid, _, ok = _propose(grid, x_from[None], np.array([mid]), cfg.eta,
                                k1[None])
        if not ok[0]:
            dt_hi = mid  # invalid proposals lie past the valid region
            continue
        phi_mid, pok = sample_phi_many(grid, x_mid)
        if not pok[0]:
            dt_hi = mid
            continue
        if phi_mid[0] <= target:
            dt_hi, x_hi, phi_hi = mid, x_mid[0], float(phi_mid[0])
        else:
            lo = mid
    return x_hi, phi_hi


def _in_center_cell(grid: VoxelGrid, pts: np.ndarray, radius_cells: float
                    ) -> np.ndarray:
    """True inside the guard ball of radius_cells grid spacings around the
    center node.

    Within a few cells of a one-node sink the discrete field is lattice-
    dominated (the trilinear gradient turns toward a cell diagonal at the
    sink corner), so a trace that enters this ball is as close to the center
    as the grid can meaningfully take it.
    """
    if grid.center_index is None:
        return np.zeros(len(np.atleast_2d(pts)), dtype=bool)
    c = grid.origin + grid.h * np.asarray(grid.center_index)
    d2 = ((np.atleast_2d(pts) - c) ** 2).sum(axis=1)
    return d2 <= (radius_cells * grid.h) ** 2


def _trace_batch(grid: VoxelGrid, seeds: np.ndarray, cfg: TracerConfig,
                 seed_vertices) -> list[tuple[Streamline | None, Exception | None]]:
    m = len(seeds)
    hg = grid.h
    stop_cells = cfg.stop_radius_cells(grid.center_depth_cells)
    X = np.array(seeds, dtype=np.float64)
    points: list[list[np.ndarray]] = [[] for _ in range(m)]
    phis: list[list[float]] = [[] for _ in range(m)]
    results: list[tuple[Streamline | None, Exception | None]] = [(None, None)] * m
    active = np.ones(m, dtype=bool)
    term: list[Termination | None] = [None] * m
    errs: list[Exception | None] = [None] * m

    def finish(i, termination, error=None):
        active[i] = False
        term[i] = termination
        errs[i] = error

    # seed the lines, nudging inward when the seed cell touches undefined nodes
    phi0, ok0 = sample_phi_many(grid, X)
    for i in range(m):
        points[i].append(np.array(seeds[i], dtype=np.float64))
        if ok0[i]:
            phis[i].append(float(phi0[i]))
            continue
        g = _one_sided_gradient(grid, X[i])
        moved = None
        if g is not None:
            moved = X[i] - 0.25 * hg * g / np.linalg.norm(g)
            pm, pok = sample_phi_many(grid, moved[None])
        if g is None or not pok[0]:
            finish(i, None, OutOfDomain(
                f"seed {seeds[i].tolist()} lies outside the defined field"))
            points[i] = []
            continue
        X[i] = moved
        phis[i].append(float(pm[0]) + 0.25 * hg * float(np.linalg.norm(g)))

    phi_cur = np.array([p[0] if p else np.nan for p in phis])
    dt = np.full(m, np.nan)
    err_prev = np.ones(m)
    steps = np.zeros(m, dtype=np.int64)
    first = True

    def stall(i, why):
        # a trace that can descend no further but already sits against the
        # center node has arrived as far as the discrete field allows
        if _in_center_cell(grid, X[i][None], stop_cells)[0]:
            finish(i, Termination.REACHED_CENTER_CELL)
        else:
            finish(i, Termination.STALLED,
                   StalledError(why, position=X[i].copy()))

    while active.any():
        a = np.nonzero(active)[0]
        Xa = X[a]
        g1, ok1 = sample_gradient_many(grid, Xa)
        k1 = -cfg.eta * g1
        speed = np.linalg.norm(k1, axis=1)

        # stalls at the current position
        bad = ~ok1 | (speed < _GRAD_FLOOR)
        if bad.any():
            for ii in np.nonzero(bad)[0]:
                stall(a[ii], "field undefined at the current position"
                      if not ok1[ii] else
                      f"gradient magnitude {speed[ii]:.3e} below "
                      f"{_GRAD_FLOOR:g} before terminal potential")
            good = ~bad
            a, Xa, k1, speed = a[good], Xa[good], k1[good], speed[good]
            if a.size == 0:
                continue

        dt_lo = cfg.h_min * hg / speed
        dt_hi = cfg.h_max * hg / speed
        if first:
            dt[a] = 0.5 * hg / speed
            first = False
        dta = np.clip(dt[a], dt_lo, dt_hi)

        x5, err, okp = _propose(grid, Xa, dta, cfg.eta, k1)
        E = _error_norm(err, x5, cfg)
        phi_new, phok = sample_phi_many(grid, x5)

        fail_domain = ~okp | ~phok
        fail_err = E > 1.0
        fail_mono = phi_new >= phi_cur[a]
        accepted = ~(fail_domain | fail_err | fail_mono)

        # rejected lines: shrink, or stall when already at the step floor
        rej = np.nonzero(~accepted)[0]
        if rej.size:
            at_floor = dta[rej] <= dt_lo[rej] * (1.0 + 1e-9)
            shrink = np.where(fail_domain[rej] | fail_mono[rej], 0.5,
                              np.maximum(0.1, 0.9 * np.maximum(
                                  E[rej], 1e-300) ** -0.2))
            dt[a[rej]] = dta[rej] * shrink
            for ii in rej[at_floor]:
                stall(a[ii], "no acceptable step above the minimum step "
                      f"size (potential {phi_cur[a[ii]]:.4f})")

        acc = np.nonzero(accepted)[0]
        if acc.size:
            hit = acc[phi_new[acc] <= cfg.terminal_phi]
            for ii in hit:
                i = a[ii]
                x_fin, phi_fin = _refine_terminal(
                    grid, cfg, Xa[ii], k1[ii], float(dta[ii]),
                    x5[ii], float(phi_new[ii]))
                points[i].append(x_fin)
                phis[i].append(phi_fin)
                finish(i, Termination.REACHED_TERMINAL_PHI)
            go = acc[phi_new[acc] > cfg.terminal_phi]
            ig = a[go]
            X[ig] = x5[go]
            phi_cur[ig] = phi_new[go]
            steps[ig] += 1
            # PI control; the memory term is clipped so that a smooth
            # stretch (tiny previous error) cannot throttle recovery after
            # a cell-face-induced shrink
            fac = 0.9 * np.maximum(E[go], 1e-300) ** -0.14 \
                * np.clip(err_prev[ig], 0.3, 1.0) ** 0.08
            dt[ig] = dta[go] * np.clip(fac, 0.2, 5.0)
            err_prev[ig] = np.maximum(E[go], 1e-10)
            in_center = _in_center_cell(grid, x5[go], stop_cells)
            for jj, ii in enumerate(go):
                i = a[ii]
                points[i].append(x5[ii].copy())
                phis[i].append(float(phi_new[ii]))
                if in_center[jj]:
                    finish(i, Termination.REACHED_CENTER_CELL)
                elif steps[i] >= cfg.max_steps:
                    finish(i, Termination.STEP_LIMIT, StepLimitError(
                        f"step budget {cfg.max_steps} exhausted at "
                        f"potential {phi_cur[i]:.4f}"))

    for i in range(m):
        if errs[i] is not None and term[i] is None:
            results[i] = (None, errs[i])
            continue
        line = Streamline(
            seed_vertex=int(seed_vertices[i]),
            points=np.asarray(points[i]),
            phis=np.asarray(phis[i]),
            termination=term[i])
        err = errs[i]
        if err is not None and hasattr(err, "streamline"):
            err.streamline = line
        results[i] = (line, err)
    return results


def trace(grid: VoxelGrid, seed, cfg: TracerConfig | None = None,
          seed_vertex: int = -1) -> Streamline:
    """Trace one streamline from a boundary seed; raises on stall/step-limit
    (with the partial line attached) or OutOfDomain for an unusable seed."""
    if cfg is None:
        cfg = TracerConfig()
    seed = np.asarray(seed, dtype=np.float64)
    (line, err), = _trace_batch(grid, seed[None], cfg, [seed_vertex])
    if err is not None:
        raise err
    return line


def trace_all(grid: VoxelGrid, mesh: SurfaceMesh,
              cfg: TracerConfig | None = None, threads: int = 1
              ) -> list[Streamline | None]:
    """Trace one streamline per mesh vertex, in vertex order.

    Per-seed failures are collected, not fatal: stalled/step-limited lines
    appear with their partial geometry, seeds that could not start at all
    appear as None. Raises BatchError when more than fail_fraction of the
    seeds fail.
    """
    if cfg is None:
        cfg = TracerConfig()
    seeds = mesh.vertices
    ids = np.arange(len(seeds))
    if threads > 1 and len(seeds) > 1:
        chunks = np.array_split(ids, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda c: _trace_batch(grid, seeds[c], cfg, c),
                [c for c in chunks if len(c)]))
        results = [r for part in parts for r in part]
    else:
        results = _trace_batch(grid, seeds, cfg, ids)

    failures = {int(i): err for i, (line, err) in zip(ids, results)
                if err is not None}
    if len(failures) > cfg.fail_fraction * len(seeds):
        raise BatchError(
            f"{len(failures)} of {len(seeds)} seeds failed "
            f"(> {cfg.fail_fraction:.0%})", failures=failures)
    return [line for line, _ in results]


def dump_streamlines(lines, path) -> None:
    """Write one JSON record per streamline: seed_vertex, termination and the
    [x, y, z, phi] sample rows."""
    path = Path(path)
    rows = []
    for i, line in enumerate(lines):
        if line is None:
            rows.append(json.dumps({"seed_vertex": i, "termination": "failed",
                                    "points": []}))
            continue
        pts = [[float(x), float(y), float(z), float(p)]
               for (x, y, z), p in zip(line.points, line.phis)]
        rows.append(json.dumps({"seed_vertex": int(line.seed_vertex),
                                "termination": line.termination.value,
                                "points": pts}))
    try:
        path.write_text("\n".join(rows) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_streamlines(path) -> list[Streamline | None]:
    """Read a streamline dump back (inverse of dump_streamlines)."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"streamline dump not found: {path}")
    lines: list[Streamline | None] = []
    for row in path.read_text().splitlines():
        if not row.strip():
            continue
        rec = json.loads(row)
        if rec["termination"] == "failed" or not rec["points"]:
            lines.append(None)
            continue
        arr = np.asarray(rec["points"], dtype=np.float64)
        lines.append(Streamline(seed_vertex=int(rec["seed_vertex"]),
                                points=arr[:, :3], phis=arr[:, 3],
                                termination=Termination(rec["termination"])))
    return lines
