"""Explicit leapfrog integrator for c(x) v_tt - lap(v) = s(x, t).

Scheme
------
Second-order in time and space on a uniform node grid:

    v[n+1] = 2 v[n] - v[n-1] + (dt^2 / c) * (lap_h v[n] + s[n])

with the 7-point Laplacian and boundary nodes held at exactly zero. The
zero-Dirichlet wall is legitimate only when the box is padded so that no
boundary reflection can re-enter the region of interest within the time
horizon; required_padding computes the minimal whole-node extension per
face from the source and readout geometry. An optional sponge layer is
available to trade that guarantee for memory, and is flagged approximate.

Stability
---------
The fastest signal speed is 1 / sqrt(c0), so the step bound is

    dt = sigma * h * sqrt(c0) / sqrt(3),   0 < sigma <= 1.

Determinism
-----------
The node update is data-parallel over disjoint slabs of the x range. Each
slab evaluates the same elementwise expression over its own rows, reading
only levels n and n-1, so whole-run results are bitwise independent of the
slab count. Anything that would reassociate sums across slab boundaries is
off limits in this loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, InstabilityError
from .medium import Box3, Grid3, Medium

SQRT3 = math.sqrt(3.0)


def cfl_dt(h: float, c0: float, sigma: float) -> float:
    """Stable time step for spacing h, coefficient lower bound c0, safety sigma."""
    if not (h > 0 and math.isfinite(h)):
        raise ConfigError(f"step bound needs h > 0, got {h}")
    if not (c0 > 0 and math.isfinite(c0)):
        raise ConfigError(f"step bound needs c0 > 0, got {c0}")
    if not (0.0 < sigma <= 1.0):
        raise ConfigError(f"safety factor must lie in (0, 1], got {sigma}")
    return sigma * h * math.sqrt(c0) / SQRT3


# ---------------------------------------------------------------------------
# Causal padding


def pad_deficit(d_src: float, d_roi: float, T: float, c0: float) -> float:
    """Shortfall of the reflection path against the horizon, in length units.

    A reflected signal must travel at least d_src + d_roi; it covers at most
    T / sqrt(c0) within the horizon. Positive deficit means the box needs
    padding.
    """
    return T / math.sqrt(c0) - (d_src + d_roi)


def _face_pad_nodes(deficit: float, h: float) -> int:
    if deficit < 0.0:
        return 0
    p = int(deficit // (2.0 * h)) + 1
    while 2.0 * p * h <= deficit:
        p += 1
    return p


def _box_face_distance(box: Box3, grid_box: Box3, axis: int, side: int) -> float:
    if side == 0:
        return max(0.0, box.lo[axis] - grid_box.lo[axis])
    return max(0.0, grid_box.hi[axis] - box.hi[axis])


def required_padding(src_boxes, roi_box: Box3, T: float, c0: float,
                     grid: Grid3):
    """Minimal whole-node padding per face so reflections stay out of roi_box.

    src_boxes is an iterable of Box3 (or None entries, which are ignored)
    covering everything that radiates. Returns ((x_lo, x_hi), (y_lo, y_hi),
    (z_lo, z_hi)) node counts.
    """
    if not (c0 > 0):
        raise ConfigError(f"padding rule needs c0 > 0, got {c0}")
    if T < 0:
        raise ConfigError(f"padding rule needs T >= 0, got {T}")
    boxes = [b for b in src_boxes if b is not None]
    gbox = grid.box()
    pads = []
    for axis in range(3):
        face_pads = []
        for side in (0, 1):
            if T == 0 or not boxes:
                face_pads.append(0)
                continue
            d_src = min(_box_face_distance(b, gbox, axis, side) for b in boxes)
            d_roi = _box_face_distance(roi_box, gbox, axis, side)
            face_pads.append(_face_pad_nodes(pad_deficit(d_src, d_roi, T, c0), grid.h))
        pads.append(tuple(face_pads))
    return tuple(pads)


# ---------------------------------------------------------------------------
# Update kernel


def _partition_ranges(lo: int, hi: int, parts: int):
    """Contiguous split of range(lo, hi) into at most `parts` nonempty slabs."""
    n = hi - lo
    parts = max(1, min(parts, n))
    bounds = [lo + (n * p) // parts for p in range(parts + 1)]
    return [(bounds[p], bounds[p + 1]) for p in range(parts)]


def _update_interior(v_new: NDArray, v_prev: NDArray, v: NDArray,
                     coef: NDArray, inv_h2: float,
                     source: NDArray | None, partitions: int) -> None:
    """Write the next interior level. Boundary entries of v_new are untouched.

    Each slab owns a disjoint x range of the interior and evaluates the same
    elementwise expression, so results do not depend on the slab count.
    """
    nx = v.shape[0]
    for a, b in _partition_ranges(1, nx - 1, partitions):
        core = v[a:b, 1:-1, 1:-1]
        acc = ((v[a + 1:b + 1, 1:-1, 1:-1] + v[a - 1:b - 1, 1:-1, 1:-1])
               + (v[a:b, :-2, 1:-1] + v[a:b, 2:, 1:-1])
               + (v[a:b, 1:-1, :-2] + v[a:b, 1:-1, 2:])
               - 6.0 * core)
        acc *= inv_h2
        if source is not None:
            acc += source[a:b, 1:-1, 1:-1]
        v_new[a:b, 1:-1, 1:-1] = ((2.0 * core - v_prev[a:b, 1:-1, 1:-1])
                                  + coef[a:b, 1:-1, 1:-1] * acc)


def _check_finite(v_new: NDArray, step_index: int) -> float:
    m = float(np.abs(v_new).max())
    if not math.isfinite(m):
        bad = np.argwhere(~np.isfinite(v_new))[0]
        raise InstabilityError(step_index, tuple(int(i) for i in bad))
    return m


@dataclass
class WaveState:
    """Two consecutive time levels of the field."""

    grid: Grid3
    v_prev: NDArray[np.float64]
    v_curr: NDArray[np.float64]
    n: int
    dt: float

    @staticmethod
    def zero(grid: Grid3, dt: float) -> "WaveState":
        return WaveState(grid, np.zeros(grid.shape), np.zeros(grid.shape), 0, dt)


def step(state: WaveState, medium: Medium, source: NDArray | None = None,
         *, partitions: int = 1, enforce_cfl: bool = True) -> WaveState:
    """One leapfrog step; source is the field s sampled at t = n * dt."""
    if medium.grid != state.grid:
        raise ConfigError("state and medium live on different grids")
    if source is not None and np.shape(source) != state.grid.shape:
        raise ConfigError(
            f"source shape {np.shape(source)} does not match grid {state.grid.shape}"
        )
    if enforce_cfl and state.dt > cfl_dt(state.grid.h, medium.c0, 1.0) * (1 + 1e-12):
        raise ConfigError(
            f"dt = {state.dt} violates the stability bound "
            f"{cfl_dt(state.grid.h, medium.c0, 1.0)}"
        )
    coef = state.dt ** 2 / medium.c
    v_new = np.zeros(state.grid.shape)
    _update_interior(v_new, state.v_prev, state.v_curr, coef,
                     1.0 / state.grid.h ** 2, source, partitions)
    _check_finite(v_new, state.n + 1)
    return WaveState(state.grid, state.v_curr, v_new, state.n + 1, state.dt)


# ---------------------------------------------------------------------------
# Whole runs


@dataclass
class RunDiagnostics:
    max_abs: NDArray[np.float64]  # per recorded step, over the full run grid


def _sponge_mask(grid: Grid3, width: int, strength: float = 0.02) -> NDArray:
    """Multiplicative decay profile, quadratic in depth inside the layer."""
    ramp = []
    for n in grid.shape:
        d = np.minimum(np.arange(n), np.arange(n)[::-1]).astype(np.float64)
        ramp.append(np.where(d < width, strength * ((width - d) / width) ** 2, 0.0))
    total = ramp[0][:, None, None] + ramp[1][None, :, None] + ramp[2][None, None, :]
    return np.exp(-total)


def run_leapfrog(medium: Medium, source, nt: int, dt: float, *,
                 record_box: Box3 | None = None,
                 partitions: int = 1,
                 initial: tuple[NDArray, NDArray] | None = None,
                 sponge_width: int = 0,
                 enforce_cfl: bool = True):
    """Integrate nt steps from zero (or given) data, recording every level.

    source is None, or a callable source(step_index, t) returning the full
    sampled field for that step; ScatterSource.field_at fits via a lambda.
    Returns (frames, record_grid, diagnostics) where frames has shape
    (nt + 1, *record_grid.shape).
    """
    grid = medium.grid
    if nt < 0:
        raise ConfigError(f"step count must be nonnegative, got {nt}")
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError(f"dt must be positive, got {dt}")
    if enforce_cfl and dt > cfl_dt(grid.h, medium.c0, 1.0) * (1 + 1e-12):
        raise ConfigError(
            f"dt = {dt} violates the stability bound {cfl_dt(grid.h, medium.c0, 1.0)}"
        )
    if partitions < 1:
        raise ConfigError(f"partition count must be >= 1, got {partitions}")

    if record_box is None:
        record_grid, rec = grid, (slice(None), slice(None), slice(None))
    else:
        record_grid, rec = grid.subgrid(record_box)

    # With zero data the pair (v_prev, v) stands for levels (-1, 0); with
    # explicit initial data it stands for levels (0, 1). Boundary shells are
    # forced to zero either way, which is the wall the padding rule assumes.
    v_prev = np.zeros(grid.shape)
    v = np.zeros(grid.shape)
    start = 0
    if initial is not None:
        v0, v1 = initial
        if np.shape(v0) != grid.shape or np.shape(v1) != grid.shape:
            raise ConfigError("initial levels must match the grid shape")
        if nt < 1:
            raise ConfigError("runs from explicit initial data need nt >= 1")
        v_prev[1:-1, 1:-1, 1:-1] = np.asarray(v0)[1:-1, 1:-1, 1:-1]
        v[1:-1, 1:-1, 1:-1] = np.asarray(v1)[1:-1, 1:-1, 1:-1]
        start = 1

    coef = dt ** 2 / medium.c
    inv_h2 = 1.0 / grid.h ** 2
    sponge = _sponge_mask(grid, sponge_width) if sponge_width > 0 else None

    frames = np.empty((nt + 1,) + record_grid.shape)
    diag = np.empty(nt + 1)
    if start == 0:
        frames[0] = v[rec]
        diag[0] = 0.0
    else:
        frames[0] = v_prev[rec]
        diag[0] = float(np.abs(v_prev).max())
        frames[1] = v[rec]
        diag[1] = float(np.abs(v).max())

    v_new = np.zeros(grid.shape)
    for n in range(start, nt):
        src = None
        if source is not None:
            src = source(n, n * dt)
            if src is not None and np.shape(src) != grid.shape:
                raise ConfigError(
                    f"source returned shape {np.shape(src)}, grid is {grid.shape}"
                )
        _update_interior(v_new, v_prev, v, coef, inv_h2, src, partitions)
        if sponge is not None:
            v_new *= sponge
            v *= sponge
        diag[n + 1] = _check_finite(v_new, n + 1)
        frames[n + 1] = v_new[rec]
        v_prev, v, v_new = v, v_new, v_prev

    return frames, record_grid, RunDiagnostics(max_abs=diag)


# ---------------------------------------------------------------------------
# Discrete operator application


def apply_operator(v_minus: NDArray, v_center: NDArray, v_plus: NDArray,
                   medium: Medium, dt: float) -> NDArray[np.float64]:
    """c * D2_t v - lap_h v at interior nodes, from three consecutive levels.

    The same centered stencils as the integrator, so residuals live in the
    scheme's own calculus. Returns shape (nx-2, ny-2, nz-2).
    """
    shape = medium.grid.shape
    for name, arr in (("v_minus", v_minus), ("v_center", v_center), ("v_plus", v_plus)):
        if np.shape(arr) != shape:
            raise ConfigError(f"{name} shape {np.shape(arr)} does not match grid {shape}")
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError(f"dt must be positive, got {dt}")
    h2 = medium.grid.h ** 2
    c_i = medium.c[1:-1, 1:-1, 1:-1]
    d2t = (v_plus[1:-1, 1:-1, 1:-1] - 2.0 * v_center[1:-1, 1:-1, 1:-1]
           + v_minus[1:-1, 1:-1, 1:-1]) / dt ** 2
    lap = ((v_center[2:, 1:-1, 1:-1] + v_center[:-2, 1:-1, 1:-1])
           + (v_center[1:-1, 2:, 1:-1] + v_center[1:-1, :-2, 1:-1])
           + (v_center[1:-1, 1:-1, 2:] + v_center[1:-1, 1:-1, :-2])
           - 6.0 * v_center[1:-1, 1:-1, 1:-1]) / h2
    return c_i * d2t - lap
