"""Closed-form kernel ingredients.

The ramp family is the chain of time antiderivatives of the free-space
impulse response of the wave operator, indexed by order k:

    order k >= 1 at radius r and elapsed time z:
        max(z - r, 0)^(k-1) / ((k-1)! * 4 pi r)

Order 1 is the sharp spherical front (nonzero strictly behind the cone),
order 4 is the smooth tail added to solved scattered fields during kernel
assembly. Order 0 is a distribution and has no pointwise value.

The scattering source couples the ramp of order 2 to the medium contrast:

    -(c(x) - 1) * max(z - r, 0) / (4 pi r)

It vanishes identically wherever c = 1, so the contrast mask is applied
before any division by r; the 1/r factor is only ever evaluated at nodes
inside the contrast support.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

from .errors import DistributionError, SingularityError
from .medium import Medium

FOUR_PI = 4.0 * math.pi
_FACTORIALS = (1.0, 1.0, 2.0, 6.0)  # (k-1)! for k = 1..4


def _safe_radius(r: NDArray, r_floor: float | None) -> NDArray:
    if r_floor is not None:
        if r_floor <= 0:
            raise SingularityError(f"regularization radius must be positive, got {r_floor}")
        return np.maximum(r, r_floor)
    if np.any(r == 0.0):
        raise SingularityError(
            "evaluation at the source point itself (r = 0); offset the source "
            "to a cell center or pass a regularization radius"
        )
    return r


def ramp_value(k: int, r, z, *, r_floor: float | None = None):
    """Ramp kernel of order k at radius r and elapsed time z (arrays broadcast)."""
    if k == 0:
        raise DistributionError(
            "order-0 kernel is an impulse distribution with no pointwise value"
        )
    if not 1 <= k <= 4:
        raise DistributionError(f"ramp order must be in 1..4, got {k}")
    r = np.asarray(r, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    rs = _safe_radius(r, r_floor)
    u = z - r
    if k == 1:
        # sharp front: support strictly behind the cone
        val = np.where(u > 0.0, 1.0, 0.0) / (FOUR_PI * rs)
    else:
        val = np.maximum(u, 0.0) ** (k - 1) / (_FACTORIALS[k - 1] * FOUR_PI * rs)
    return val if val.ndim else float(val)


def eval_ramp(k: int, xi, tau: float, x, t, *, r_floor: float | None = None):
    """Ramp kernel of order k centered at (xi, tau), evaluated at (x, t).

    x may be a single point or an array of shape (..., 3); t broadcasts.
    """
    x = np.asarray(x, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    r = np.linalg.norm(x - xi, axis=-1)
    z = np.asarray(t, dtype=np.float64) - tau
    return ramp_value(k, r, z, r_floor=r_floor)


def eval_tail(xi, tau: float, x, t, *, r_floor: float | None = None):
    """Order-4 ramp: the closed-form tail used in kernel assembly."""
    return eval_ramp(4, xi, tau, x, t, r_floor=r_floor)


def tail_frames(grid, xi, times, *, tau: float = 0.0,
                r_floor: float | None = None) -> NDArray[np.float64]:
    """Order-4 ramp sampled on all grid nodes for each time, shape (nt, nx, ny, nz)."""
    r = grid.radius_field(xi)
    rs = _safe_radius(r, r_floor)
    times = np.asarray(times, dtype=np.float64)
    u = (times - tau)[:, None, None, None] - r[None, :, :, :]
    return np.maximum(u, 0.0) ** 3 / (6.0 * FOUR_PI * rs)[None, :, :, :]


def source_value(c, r, z, *, r_floor: float | None = None):
    """Scattering source from coefficient value(s) c at radius r, elapsed time z.

    Exactly zero wherever c = 1; the division by r happens only on the
    contrast support.
    """
    c = np.asarray(c, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    c, r, z = np.broadcast_arrays(c, r, z)
    out = np.zeros(c.shape, dtype=np.float64)
    mask = c != 1.0
    if mask.any():
        rs = _safe_radius(r[mask], r_floor)
        out[mask] = -(c[mask] - 1.0) * np.maximum(z[mask] - r[mask], 0.0) / (FOUR_PI * rs)
    return out if out.ndim else float(out)


class ScatterSource:
    """Per-step source fields for the kernel problem on a fixed medium.

    Precomputes the contrast support and the static -(c-1)/(4 pi r) factor
    once; each step only evaluates the time ramp on those nodes.
    """

    def __init__(self, medium: Medium, xi, tau: float = 0.0,
                 *, r_floor: float | None = None):
        self.grid = medium.grid
        self.xi = tuple(float(v) for v in xi)
        self.tau = float(tau)
        mask = medium.c != 1.0
        self.idx = np.nonzero(mask)
        if self.idx[0].size:
            r = medium.grid.radius_field(self.xi)[mask]
            rs = _safe_radius(r, r_floor)
            self.r = r
            self.coeff = -(medium.c[mask] - 1.0) / (FOUR_PI * rs)
        else:
            self.r = np.zeros(0)
            self.coeff = np.zeros(0)

    @property
    def is_zero(self) -> bool:
        return self.coeff.size == 0

    def field_at(self, t: float, out: NDArray | None = None) -> NDArray[np.float64]:
        if out is None:
            out = np.zeros(self.grid.shape, dtype=np.float64)
        else:
            out.fill(0.0)
        if self.coeff.size:
            out[self.idx] = self.coeff * np.maximum(t - self.tau - self.r, 0.0)
        return out
