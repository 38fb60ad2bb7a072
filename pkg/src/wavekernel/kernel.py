"""Scattered-kernel solves and the on-disk kernel bank.

For one source point xi the scattered correction solves the same wave
equation as everything else, driven by the closed-form scattering source
(ramps.ScatterSource). The full kernel is that correction plus the
order-4 ramp tail, added analytically at assembly time rather than stored.

Solves happen once at time shift zero; downstream convolutions re-index
the stored frames instead of re-solving, which is exact because the source
depends on time only through t minus the shift.

The bank keys entries by medium content hash (directory) and source-point
cell index (file name). A lookup only counts as a hit when the stored
fingerprint, source point, step, and record grid all match the request and
the stored horizon covers it; a shorter stored horizon triggers a fresh
solve that overwrites the entry, while mismatched parameters raise instead
of silently recomputing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import skf
from .errors import ConfigError, StaleBankError, ValidationError
from .fdtd import cfl_dt, required_padding, run_leapfrog
from .medium import Box3, Grid3, Medium, pad_medium, point_box, point_to_box_distance
from .ramps import ScatterSource, tail_frames


@dataclass(frozen=True)
class SolveConfig:
    """Shared controls for kernel and direct solves."""

    T: float
    sigma: float = 0.9
    record_box: Box3 | None = None  # None records the full base grid
    extra_frames: int = 1  # frames past the horizon (second time differences need one)
    partitions: int = 1
    r_floor: float | None = None  # regularization radius for off-center source points
    sponge_width: int = 0

    def __post_init__(self):
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ConfigError(f"horizon T must be nonnegative, got {self.T}")
        if self.extra_frames < 0:
            raise ConfigError(f"extra_frames must be nonnegative, got {self.extra_frames}")
        if self.partitions < 1:
            raise ConfigError(f"partitions must be >= 1, got {self.partitions}")


def step_count(T: float, dt: float) -> int:
    """Smallest nt with nt * dt covering T (exact multiples stay exact)."""
    return max(0, int(math.ceil(T / dt - 1e-12)))


@dataclass(frozen=True)
class KernelTrace:
    """Stored scattered-field snapshots for one source point.

    frames[n] is the scattered correction at t = n * dt on the record grid.
    t_on is the distance from xi to the coefficient support: the source
    cannot reach any active node earlier, so every frame at or before t_on
    is exactly zero.
    """

    xi: tuple[float, float, float]
    grid: Grid3
    dt: float
    frames: NDArray[np.float64] = field(repr=False)
    fingerprint: bytes
    t_on: float
    max_abs_pre_onset: float = math.nan  # diagnostic; nan when loaded from disk

    @property
    def nt(self) -> int:
        return self.frames.shape[0] - 1

    def times(self) -> NDArray[np.float64]:
        return self.dt * np.arange(self.nt + 1)

    def assembled(self) -> NDArray[np.float64]:
        """Scattered frames plus the analytic order-4 tail, same shape."""
        return self.frames + tail_frames(self.grid, self.xi, self.times())


def solve_scattered(medium: Medium, xi, config: SolveConfig, *,
                    check_onset: bool = True) -> KernelTrace:
    """Solve the scattered-kernel problem for one source point.

    The grid is padded per the causal rule so the zero-Dirichlet wall cannot
    contaminate the recorded region within the stored horizon, then frames
    are restricted back to the record box.
    """
    grid = medium.grid
    xi = tuple(float(v) for v in xi)
    if not grid.box().contains_point(xi):
        raise ConfigError(f"source point {xi} lies outside the grid")
    if config.r_floor is None and grid.cell_index_of(xi) is None:
        # off-center points may sit arbitrarily close to nodes of the padded
        # grid where the 1/r tail is evaluated downstream
        if medium.omega_box is not None and medium.omega_box.point_distance(xi) <= 0.0:
            raise ConfigError(
                f"source point {xi} lies inside the coefficient support and is "
                "not at a cell center; pass a regularization radius (r_floor)"
            )

    dt = cfl_dt(grid.h, medium.c0, config.sigma)
    nt = step_count(config.T, dt) + config.extra_frames
    record_box = config.record_box if config.record_box is not None else grid.box()
    horizon = nt * dt
    pads = required_padding([medium.omega_box, point_box(xi)], record_box,
                            horizon, medium.c0, grid)
    padded, _ = pad_medium(medium, pads)
    source = ScatterSource(padded, xi, r_floor=config.r_floor)
    frames, record_grid, diag = run_leapfrog(
        padded, (lambda n, t: source.field_at(t)) if not source.is_zero else None,
        nt, dt,
        record_box=record_box, partitions=config.partitions,
        sponge_width=config.sponge_width)

    t_on = point_to_box_distance(xi, medium.omega_box)
    pre = [m for n, m in enumerate(diag.max_abs) if n * dt <= t_on]
    max_pre = max(pre) if pre else 0.0
    if check_onset and max_pre != 0.0:
        raise ValidationError(
            f"causality violated: field reached {max_pre} before onset time {t_on}"
        )
    return KernelTrace(xi=xi, grid=record_grid, dt=dt, frames=frames,
                       fingerprint=medium.fingerprint(), t_on=t_on,
                       max_abs_pre_onset=max_pre)


def assemble_at(trace: KernelTrace, x, t: float) -> float:
    """Assembled kernel value at one point and time.

    Off-node positions use trilinear interpolation on the record grid and
    off-frame times linear interpolation, both second order.
    """
    g = trace.grid
    if not g.box().contains_point(x, tol=1e-9 * g.h):
        raise ConfigError(f"query point {tuple(x)} outside the recorded region")
    if not (-1e-12 <= t <= trace.nt * trace.dt * (1 + 1e-12)):
        raise ConfigError(f"query time {t} outside the stored horizon")
    ft = min(max(t / trace.dt, 0.0), trace.nt)
    n0 = min(int(ft), trace.nt - 1) if trace.nt > 0 else 0
    wt = ft - n0
    corners, weights = _trilinear(g, np.asarray([x], dtype=np.float64))
    val = 0.0
    for n, w_t in ((n0, 1.0 - wt), (n0 + 1, wt)):
        if w_t == 0.0 or n > trace.nt:
            continue
        fr = trace.frames[n]
        val += w_t * float((fr.reshape(-1)[corners[0]] * weights[0]).sum())
    from .ramps import eval_tail
    return val + float(eval_tail(trace.xi, 0.0, np.asarray(x, dtype=np.float64), t))


def _trilinear(grid: Grid3, points: NDArray):
    """Flat corner indices and weights for each point, shapes (P, 8)."""
    shape = grid.shape
    idx = np.empty((points.shape[0], 8), dtype=np.int64)
    wts = np.empty((points.shape[0], 8))
    frac = (points - np.asarray(grid.origin)) / grid.h
    base = np.floor(frac + 1e-12).astype(np.int64)
    for a in range(3):
        hi = shape[a] - 2
        base[:, a] = np.clip(base[:, a], 0, max(hi, 0))
    rem = frac - base
    if np.any(rem < -1e-6) or np.any(rem > 1 + 1e-6):
        bad = points[np.argwhere((rem < -1e-6) | (rem > 1 + 1e-6))[0][0]]
        raise ConfigError(f"query point {tuple(bad)} outside the recorded region")
    rem = np.clip(rem, 0.0, 1.0)
    # snap near-node points so node queries are exact, not approximately so
    rem[np.abs(rem) < 1e-9] = 0.0
    rem[np.abs(rem - 1.0) < 1e-9] = 1.0
    corner = 0
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                ii = base[:, 0] + dx
                jj = base[:, 1] + dy
                kk = base[:, 2] + dz
                idx[:, corner] = (ii * shape[1] + jj) * shape[2] + kk
                wx = np.where(dx == 1, rem[:, 0], 1.0 - rem[:, 0])
                wy = np.where(dy == 1, rem[:, 1], 1.0 - rem[:, 1])
                wz = np.where(dz == 1, rem[:, 2], 1.0 - rem[:, 2])
                wts[:, corner] = wx * wy * wz
                corner += 1
    return idx, wts


# ---------------------------------------------------------------------------
# Kernel bank


class KernelBank:
    """Directory of solved traces keyed by medium hash and source point."""

    def __init__(self, root):
        self.root = Path(root)

    def medium_dir(self, medium: Medium) -> Path:
        return self.root / medium.fingerprint_hex()[:16]

    def entry_path(self, medium: Medium, xi) -> Path:
        cell = medium.grid.cell_index_of(xi)
        if cell is not None:
            name = f"xi_{cell[0]}_{cell[1]}_{cell[2]}.skf"
        else:
            import hashlib
            import struct
            digest = hashlib.sha256(struct.pack("<3d", *(float(v) for v in xi))).hexdigest()
            name = f"xi_{digest[:16]}.skf"
        return self.medium_dir(medium) / name

    def get_or_solve(self, medium: Medium, xi, config: SolveConfig,
                     *, refresh: bool = False) -> tuple[KernelTrace, bool]:
        """Return (trace, from_disk). Solves and stores on a miss."""
        path = self.entry_path(medium, xi)
        dt = cfl_dt(medium.grid.h, medium.c0, config.sigma)
        nt_needed = step_count(config.T, dt) + config.extra_frames
        record_box = config.record_box if config.record_box is not None else medium.grid.box()
        record_grid, _ = medium.grid.subgrid(record_box)

        if path.exists() and not refresh:
            grid, nt, stored_dt, stored_xi, fingerprint = skf.read_frame_set_header(path)
            self._check_entry(path, medium, xi, dt, record_grid, stored_xi,
                              stored_dt, grid, fingerprint)
            if nt >= nt_needed:
                record = skf.read_frame_set(path)  # verifies the checksum
                if record.fingerprint != medium.fingerprint():
                    raise StaleBankError(
                        f"bank entry {path} was solved against a different medium"
                    )
                t_on = point_to_box_distance(record.xi, medium.omega_box)
                return KernelTrace(xi=record.xi, grid=record.grid, dt=record.dt,
                                   frames=record.frames, fingerprint=record.fingerprint,
                                   t_on=t_on), True
            # stored horizon too short for this request: extend by re-solving

        trace = solve_scattered(medium, xi, config)
        skf.write_frame_set(
            skf.FrameSetRecord(grid=trace.grid, dt=trace.dt, xi=trace.xi,
                               fingerprint=trace.fingerprint, frames=trace.frames),
            path)
        return trace, False

    @staticmethod
    def _check_entry(path, medium, xi, dt, record_grid, stored_xi, stored_dt,
                     stored_grid, fingerprint):
        if fingerprint != medium.fingerprint():
            raise StaleBankError(
                f"bank entry {path} was solved against a different medium; "
                "use a fresh bank directory or refresh the entry"
            )
        if any(abs(a - b) > 1e-12 for a, b in zip(stored_xi, (float(v) for v in xi))):
            raise StaleBankError(
                f"bank entry {path} stores source point {stored_xi}, requested {tuple(xi)}"
            )
        if stored_dt != dt:
            raise StaleBankError(
                f"bank entry {path} was solved with dt = {stored_dt}, request needs {dt}; "
                "use a fresh bank directory or refresh the entry"
            )
        if stored_grid != record_grid:
            raise StaleBankError(
                f"bank entry {path} records grid {stored_grid.shape} at "
                f"{stored_grid.origin}, request needs {record_grid.shape} at "
                f"{record_grid.origin}; use a fresh bank directory or refresh the entry"
            )
