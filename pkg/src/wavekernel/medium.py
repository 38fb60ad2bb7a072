"""Uniform grids, axis-aligned boxes, and sampled wave-speed coefficient fields.

The medium is a scalar coefficient c sampled at the nodes of a uniform
Cartesian grid. Every valid medium keeps c within positive bounds and equal
to 1 outside a compact interior box. The solvers rely on both facts (the
time step bound uses the lower bound, causal padding uses the compact
support), so construction enforces them rather than trusting callers.

Conventions: arrays are indexed ``[i, j, k]`` for the (x, y, z) axes, node
``(i, j, k)`` sits at ``origin + h * (i, j, k)``, and file or hashing
operations serialize values in x-fastest order regardless of the in-memory
layout.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError

_COORD_TOL = 1e-9


def _as_vec3(value, name: str) -> tuple[float, float, float]:
    try:
        x, y, z = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a 3-vector, got {value!r}") from exc
    if not all(math.isfinite(v) for v in (x, y, z)):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    return (x, y, z)


@dataclass(frozen=True)
class Box3:
    """Closed axis-aligned box [lo, hi] in physical coordinates."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vec3(self.lo, "box lo"))
        object.__setattr__(self, "hi", _as_vec3(self.hi, "box hi"))
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ConfigError(f"box has lo > hi: {self.lo} vs {self.hi}")

    @property
    def sides(self) -> tuple[float, float, float]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        sx, sy, sz = self.sides
        return sx * sy * sz

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(0.5 * (l + h) for l, h in zip(self.lo, self.hi))

    def contains_point(self, p, tol: float = 0.0) -> bool:
        return all(l - tol <= v <= h + tol for v, l, h in zip(p, self.lo, self.hi))

    def contains_box(self, other: "Box3", tol: float = 0.0) -> bool:
        return all(sl - tol <= ol and oh <= sh + tol
                   for sl, sh, ol, oh in zip(self.lo, self.hi, other.lo, other.hi))

    def point_distance(self, p) -> float:
        """Euclidean distance from a point to the box (0 inside)."""
        d2 = 0.0
        for v, l, h in zip(p, self.lo, self.hi):
            if v < l:
                d2 += (l - v) ** 2
            elif v > h:
                d2 += (v - h) ** 2
        return math.sqrt(d2)

    def expanded(self, margin: float) -> "Box3":
        return Box3(tuple(l - margin for l in self.lo), tuple(h + margin for h in self.hi))


def point_box(p) -> Box3:
    """Degenerate box holding a single point."""
    q = _as_vec3(p, "point")
    return Box3(q, q)


def point_to_box_distance(p, box: Box3 | None) -> float:
    """Distance from p to box; an absent box is infinitely far away."""
    if box is None:
        return math.inf
    return box.point_distance(p)


@dataclass(frozen=True)
class Grid3:
    """Uniform node grid: node (i, j, k) sits at origin + h * (i, j, k)."""

    nx: int
    ny: int
    nz: int
    h: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny), ("nz", self.nz)):
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
                raise ConfigError(f"{name} must be an integer, got {n!r}")
            if n < 3:
                raise ConfigError(f"{name} must be >= 3 (stencils need interior nodes), got {n}")
        if not (isinstance(self.h, (int, float)) and math.isfinite(self.h) and self.h > 0):
            raise ConfigError(f"grid spacing h must be a positive finite number, got {self.h!r}")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "nz", int(self.nz))
        object.__setattr__(self, "origin", _as_vec3(self.origin, "grid origin"))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny * self.nz

    def axis(self, a: int) -> NDArray[np.float64]:
        n = self.shape[a]
        return self.origin[a] + self.h * np.arange(n, dtype=np.float64)

    def axes(self) -> tuple[NDArray, NDArray, NDArray]:
        return self.axis(0), self.axis(1), self.axis(2)

    def node_coord(self, i: int, j: int, k: int) -> tuple[float, float, float]:
        if not (0 <= i < self.nx and 0 <= j < self.ny and 0 <= k < self.nz):
            raise ConfigError(f"node index {(i, j, k)} outside grid {self.shape}")
        ox, oy, oz = self.origin
        return (ox + self.h * i, oy + self.h * j, oz + self.h * k)

    def node_index(self, p) -> tuple[int, int, int]:
        """Inverse of node_coord; rejects points that are not grid nodes."""
        idx = []
        for a, v in enumerate(p):
            f = (v - self.origin[a]) / self.h
            i = int(round(f))
            if abs(f - i) > _COORD_TOL * max(1.0, abs(f)) + _COORD_TOL:
                raise ConfigError(f"point {tuple(p)} is not on a grid node (axis {a})")
            idx.append(i)
        i, j, k = idx
        if not (0 <= i < self.nx and 0 <= j < self.ny and 0 <= k < self.nz):
            raise ConfigError(f"point {tuple(p)} lies outside the grid")
        return (i, j, k)

    def cell_center(self, ci: int, cj: int, ck: int) -> tuple[float, float, float]:
        if not (0 <= ci < self.nx - 1 and 0 <= cj < self.ny - 1 and 0 <= ck < self.nz - 1):
            raise ConfigError(f"cell index {(ci, cj, ck)} outside grid cells")
        ox, oy, oz = self.origin
        return (ox + self.h * (ci + 0.5), oy + self.h * (cj + 0.5), oz + self.h * (ck + 0.5))

    def cell_index_of(self, p) -> tuple[int, int, int] | None:
        """Cell indices if p is a cell center (within tolerance), else None."""
        idx = []
        for a, v in enumerate(p):
            f = (v - self.origin[a]) / self.h - 0.5
            i = int(round(f))
            if abs(f - i) > 1e-6:
                return None
            idx.append(i)
        ci, cj, ck = idx
        if not (0 <= ci < self.nx - 1 and 0 <= cj < self.ny - 1 and 0 <= ck < self.nz - 1):
            return None
        return (ci, cj, ck)

    def box(self) -> Box3:
        ox, oy, oz = self.origin
        return Box3(self.origin,
                    (ox + self.h * (self.nx - 1),
                     oy + self.h * (self.ny - 1),
                     oz + self.h * (self.nz - 1)))

    def node_span(self, box: Box3) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
        """Inclusive index ranges of nodes inside box (clamped to the grid)."""
        spans = []
        for a in range(3):
            lo = (box.lo[a] - self.origin[a]) / self.h
            hi = (box.hi[a] - self.origin[a]) / self.h
            i0 = max(0, int(math.ceil(lo - 1e-9)))
            i1 = min(self.shape[a] - 1, int(math.floor(hi + 1e-9)))
            if i0 > i1:
                raise ConfigError(f"box {box} contains no grid nodes along axis {a}")
            spans.append((i0, i1))
        return tuple(spans)

    def subgrid(self, box: Box3) -> tuple["Grid3", tuple[slice, slice, slice]]:
        """Grid over the nodes inside box, plus the index slices into this grid."""
        (i0, i1), (j0, j1), (k0, k1) = self.node_span(box)
        ox, oy, oz = self.origin
        g = Grid3(i1 - i0 + 1, j1 - j0 + 1, k1 - k0 + 1, self.h,
                  (ox + self.h * i0, oy + self.h * j0, oz + self.h * k0))
        return g, (slice(i0, i1 + 1), slice(j0, j1 + 1), slice(k0, k1 + 1))

    def radius_field(self, p) -> NDArray[np.float64]:
        """Distance |x - p| at every node, shape (nx, ny, nz)."""
        xs, ys, zs = self.axes()
        dx2 = (xs - p[0])[:, None, None] ** 2
        dy2 = (ys - p[1])[None, :, None] ** 2
        dz2 = (zs - p[2])[None, None, :] ** 2
        return np.sqrt(dx2 + dy2 + dz2)


# ---------------------------------------------------------------------------
# Coefficient profiles


def _bump_shape(s2: NDArray) -> NDArray:
    """(1 - s^2)^2 for s < 1, else 0. Continuously differentiable at the edge."""
    inside = s2 < 1.0
    out = np.zeros_like(s2)
    t = 1.0 - s2[inside]
    out[inside] = t * t
    return out


@dataclass(frozen=True)
class RadialBump:
    """One compactly supported C^1 perturbation of the background coefficient."""

    center: tuple[float, float, float]
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center, "bump center"))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ConfigError(f"bump radius must be positive, got {self.radius!r}")
        if not math.isfinite(self.amplitude):
            raise ConfigError("bump amplitude must be finite")
        if self.amplitude <= -1.0:
            raise ConfigError(
                f"bump amplitude {self.amplitude} would drive the coefficient to "
                f"{1.0 + self.amplitude} <= 0"
            )

    def support_box(self) -> Box3:
        return Box3(tuple(c - self.radius for c in self.center),
                    tuple(c + self.radius for c in self.center))

    def field(self, grid: Grid3) -> NDArray[np.float64]:
        r2 = grid.radius_field(self.center) ** 2
        return self.amplitude * _bump_shape(r2 / self.radius**2)


@dataclass(frozen=True)
class MediumProfile:
    """Coefficient description: a constant background 1 plus zero or more bumps."""

    bumps: tuple[RadialBump, ...] = ()

    @staticmethod
    def constant() -> "MediumProfile":
        return MediumProfile(())

    @staticmethod
    def single_bump(center, radius: float, amplitude: float) -> "MediumProfile":
        return MediumProfile((RadialBump(center, radius, amplitude),))

    def field(self, grid: Grid3) -> NDArray[np.float64]:
        c = np.ones(grid.shape, dtype=np.float64)
        for b in self.bumps:
            c += b.field(grid)
        return c


@dataclass(frozen=True)
class Medium:
    """Coefficient samples plus the facts the solvers depend on.

    omega_box is the tight bounding box of nodes where c differs from 1,
    or None when the medium is identically 1.
    """

    grid: Grid3
    c: NDArray[np.float64] = field(repr=False)
    c0: float
    c1: float
    omega_box: Box3 | None

    @property
    def is_identity(self) -> bool:
        return self.omega_box is None

    def fingerprint(self) -> bytes:
        g = self.grid
        hsh = hashlib.sha256()
        hsh.update(struct.pack("<3I", g.nx, g.ny, g.nz))
        hsh.update(struct.pack("<4d", g.h, *g.origin))
        hsh.update(self.c.tobytes(order="F"))
        return hsh.digest()

    def fingerprint_hex(self) -> str:
        return self.fingerprint().hex()

    def restrict(self, box: Box3) -> "Medium":
        """Medium over the nodes inside box (bounds and support recomputed)."""
        sub, slices = self.grid.subgrid(box)
        return medium_from_samples(sub, np.ascontiguousarray(self.c[slices]))


def _tight_support_box(grid: Grid3, c: NDArray) -> tuple[Box3 | None, tuple | None]:
    mask = np.abs(c - 1.0) > 0.0
    if not mask.any():
        return None, None
    idx = np.argwhere(mask)
    lo_idx = idx.min(axis=0)
    hi_idx = idx.max(axis=0)
    lo = tuple(grid.origin[a] + grid.h * int(lo_idx[a]) for a in range(3))
    hi = tuple(grid.origin[a] + grid.h * int(hi_idx[a]) for a in range(3))
    return Box3(lo, hi), (tuple(int(v) for v in lo_idx), tuple(int(v) for v in hi_idx))


def medium_from_samples(grid: Grid3, c: NDArray, *, require_margin: bool = False) -> Medium:
    """Wrap a sampled coefficient array, recomputing bounds and support."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != grid.shape:
        raise ConfigError(f"coefficient shape {c.shape} does not match grid {grid.shape}")
    if not np.isfinite(c).all():
        bad = np.argwhere(~np.isfinite(c))[0]
        raise ConfigError(f"coefficient has a non-finite value at node {tuple(int(v) for v in bad)}")
    c0 = float(c.min())
    c1 = float(c.max())
    if c0 <= 0.0:
        bad = np.argwhere(c <= 0.0)[0]
        raise ConfigError(
            f"coefficient must stay positive; min {c0} at node {tuple(int(v) for v in bad)}"
        )
    box, idx_box = _tight_support_box(grid, c)
    if require_margin and idx_box is not None:
        lo_idx, hi_idx = idx_box
        for a in range(3):
            if lo_idx[a] < 2 or hi_idx[a] > grid.shape[a] - 3:
                raise ConfigError(
                    "coefficient support touches the boundary margin "
                    f"(axis {a}: nodes {lo_idx[a]}..{hi_idx[a]} of {grid.shape[a]}, "
                    "need 2 untouched nodes on each side)"
                )
    return Medium(grid=grid, c=c, c0=c0, c1=c1, omega_box=box)


def build_medium(profile: MediumProfile, grid: Grid3) -> Medium:
    """Sample a profile on a grid and validate the result.

    Rejects profiles whose support reaches into the 2-node boundary margin
    and any coefficient that is not strictly positive.
    """
    interior = Box3(
        tuple(grid.origin[a] + 2 * grid.h for a in range(3)),
        tuple(grid.origin[a] + grid.h * (grid.shape[a] - 3) for a in range(3)),
    )
    for b in profile.bumps:
        if not interior.contains_box(b.support_box(), tol=1e-12):
            raise ConfigError(
                f"bump at {b.center} with radius {b.radius} reaches the boundary margin; "
                "enlarge the grid or shrink the bump"
            )
    c = profile.field(grid)
    return medium_from_samples(grid, c, require_margin=True)


def pad_medium(medium: Medium, pads) -> tuple[Medium, tuple[int, int, int]]:
    """Extend the grid by whole nodes per face, filling the new nodes with c = 1.

    pads is ((x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi)) in node counts.
    Returns the padded medium and the node offset of the original origin.
    """
    (px0, px1), (py0, py1), (pz0, pz1) = [(int(a), int(b)) for a, b in pads]
    if min(px0, px1, py0, py1, pz0, pz1) < 0:
        raise ConfigError(f"pad counts must be nonnegative, got {pads}")
    g = medium.grid
    ox, oy, oz = g.origin
    big = Grid3(g.nx + px0 + px1, g.ny + py0 + py1, g.nz + pz0 + pz1, g.h,
                (ox - g.h * px0, oy - g.h * py0, oz - g.h * pz0))
    c = np.ones(big.shape, dtype=np.float64)
    c[px0:px0 + g.nx, py0:py0 + g.ny, pz0:pz0 + g.nz] = medium.c
    return medium_from_samples(big, c), (px0, py0, pz0)
