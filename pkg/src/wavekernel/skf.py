"""SKF1 binary field files.

One little-endian container for both payload kinds::

    magic    4s   = b"SKF1"
    version  u32  = 1
    nx ny nz u32
    h        f64
    origin   3*f64
    kind     u32  (0 = medium samples, 1 = kernel frame set)

Kind 0 payload: nx*ny*nz f64 node values, x-fastest.

Kind 1 payload::

    nt          u32   (frames stored = nt + 1, steps 0..nt)
    dt          f64
    xi          3*f64
    fingerprint 32s   (medium content hash the frames were solved against)
    offsets     (nt+1)*u64  absolute byte offset of each frame
    frames      (nt+1) blocks of nx*ny*nz f64, x-fastest
    checksum    32s   sha256 of every preceding byte

The per-frame offset table allows reading a single frame without loading the
set; full reads verify the trailing checksum. Writes go through a temporary
file in the same directory followed by an atomic rename.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import ChecksumError, FormatError
from .medium import Grid3, Medium, medium_from_samples

MAGIC = b"SKF1"
VERSION = 1
KIND_MEDIUM = 0
KIND_FRAMES = 1

_HEADER_FMT = "<4sI3Id3dI"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_FRAMES_SUB_FMT = "<Id3d32s"
_FRAMES_SUB_SIZE = struct.calcsize(_FRAMES_SUB_FMT)


@dataclass(frozen=True)
class FrameSetRecord:
    """A stack of field snapshots on one grid, as stored in a kind-1 file."""

    grid: Grid3
    dt: float
    xi: tuple[float, float, float]
    fingerprint: bytes
    frames: NDArray[np.float64]  # shape (nt + 1, nx, ny, nz)

    @property
    def nt(self) -> int:
        return self.frames.shape[0] - 1


def _require(buf: bytes, need: int, path: Path, what: str) -> None:
    if len(buf) < need:
        raise FormatError(
            f"truncated file {path}: expected at least {need} bytes for {what}, got {len(buf)}"
        )


def _pack_header(grid: Grid3, kind: int) -> bytes:
    return struct.pack(_HEADER_FMT, MAGIC, VERSION, grid.nx, grid.ny, grid.nz,
                       grid.h, *grid.origin, kind)


def _parse_header(buf: bytes, path: Path) -> tuple[Grid3, int]:
    _require(buf, _HEADER_SIZE, path, "header")
    magic, version, nx, ny, nz, h, ox, oy, oz, kind = struct.unpack_from(_HEADER_FMT, buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}, expected {VERSION}")
    if kind not in (KIND_MEDIUM, KIND_FRAMES):
        raise FormatError(f"{path}: unknown payload kind {kind}")
    return Grid3(nx, ny, nz, h, (ox, oy, oz)), kind


def _atomic_write(path: Path, chunks) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        with open(tmp, "wb") as f:
            for chunk in chunks:
                f.write(chunk)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            try:
                tmp.unlink()
            except OSError:
                pass


def _field_bytes(arr: NDArray) -> bytes:
    # x-fastest on disk regardless of the in-memory layout
    return np.asarray(arr, dtype="<f8").tobytes(order="F")


def _field_from_bytes(buf, shape) -> NDArray[np.float64]:
    flat = np.frombuffer(buf, dtype="<f8")
    return np.ascontiguousarray(flat.reshape(shape, order="F"))


# ---------------------------------------------------------------------------
# Kind 0: medium samples


def save_medium(medium: Medium, path) -> None:
    if not np.isfinite(medium.c).all():
        raise FormatError("refusing to write a medium with non-finite values")
    _atomic_write(Path(path), [_pack_header(medium.grid, KIND_MEDIUM), _field_bytes(medium.c)])


def load_medium(path) -> Medium:
    path = Path(path)
    buf = path.read_bytes()
    grid, kind = _parse_header(buf, path)
    if kind != KIND_MEDIUM:
        raise FormatError(f"{path}: expected a medium file (kind 0), found kind {kind}")
    need = _HEADER_SIZE + grid.n_nodes * 8
    if len(buf) != need:
        raise FormatError(
            f"truncated or oversized file {path}: expected {need} bytes "
            f"({grid.n_nodes} node values), got {len(buf)}"
        )
    c = _field_from_bytes(buf[_HEADER_SIZE:need], grid.shape)
    if not np.isfinite(c).all():
        # locate in x-fastest order so the report matches the file layout
        flat = np.frombuffer(buf[_HEADER_SIZE:need], dtype="<f8")
        pos = int(np.flatnonzero(~np.isfinite(flat))[0])
        i = pos % grid.nx
        j = (pos // grid.nx) % grid.ny
        k = pos // (grid.nx * grid.ny)
        raise FormatError(f"{path}: non-finite node value at node ({i}, {j}, {k})")
    return medium_from_samples(grid, c)


# ---------------------------------------------------------------------------
# Kind 1: kernel frame sets


def write_frame_set(record: FrameSetRecord, path) -> None:
    frames = np.asarray(record.frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[1:] != record.grid.shape:
        raise FormatError(
            f"frame stack shape {frames.shape} does not match grid {record.grid.shape}"
        )
    if not np.isfinite(frames).all():
        raise FormatError("refusing to write non-finite frames")
    if len(record.fingerprint) != 32:
        raise FormatError("fingerprint must be 32 bytes")
    nt = frames.shape[0] - 1
    frame_bytes = record.grid.n_nodes * 8
    header = _pack_header(record.grid, KIND_FRAMES)
    sub = struct.pack(_FRAMES_SUB_FMT, nt, record.dt, *record.xi, record.fingerprint)
    data_start = len(header) + len(sub) + (nt + 1) * 8
    offsets = struct.pack(f"<{nt + 1}Q",
                          *(data_start + i * frame_bytes for i in range(nt + 1)))

    def chunks():
        hasher = hashlib.sha256()
        for piece in (header, sub, offsets):
            hasher.update(piece)
            yield piece
        for i in range(nt + 1):
            piece = _field_bytes(frames[i])
            hasher.update(piece)
            yield piece
        yield hasher.digest()

    _atomic_write(Path(path), chunks())


def _parse_frames_subheader(buf: bytes, path: Path):
    _require(buf, _HEADER_SIZE + _FRAMES_SUB_SIZE, path, "frame-set header")
    nt, dt, xx, xy, xz, fingerprint = struct.unpack_from(_FRAMES_SUB_FMT, buf, _HEADER_SIZE)
    off_start = _HEADER_SIZE + _FRAMES_SUB_SIZE
    off_end = off_start + (nt + 1) * 8
    _require(buf, off_end, path, "frame offset table")
    offsets = struct.unpack_from(f"<{nt + 1}Q", buf, off_start)
    return nt, dt, (xx, xy, xz), fingerprint, offsets


def read_frame_set(path, *, verify: bool = True) -> FrameSetRecord:
    path = Path(path)
    buf = path.read_bytes()
    grid, kind = _parse_header(buf, path)
    if kind != KIND_FRAMES:
        raise FormatError(f"{path}: expected a frame-set file (kind 1), found kind {kind}")
    nt, dt, xi, fingerprint, offsets = _parse_frames_subheader(buf, path)
    frame_bytes = grid.n_nodes * 8
    need = offsets[-1] + frame_bytes + 32
    if len(buf) != need:
        raise FormatError(
            f"truncated or oversized file {path}: expected {need} bytes "
            f"({nt + 1} frames of {frame_bytes} bytes plus checksum), got {len(buf)}"
        )
    if verify:
        digest = hashlib.sha256(buf[:-32]).digest()
        if digest != buf[-32:]:
            raise ChecksumError(f"{path}: stored checksum does not match contents")
    frames = np.empty((nt + 1,) + grid.shape, dtype=np.float64)
    for i, off in enumerate(offsets):
        if off + frame_bytes > len(buf) - 32:
            raise FormatError(f"{path}: frame {i} offset {off} runs past the payload")
        frames[i] = _field_from_bytes(buf[off:off + frame_bytes], grid.shape)
    if not np.isfinite(frames).all():
        bad = np.argwhere(~np.isfinite(frames))[0]
        raise FormatError(
            f"{path}: non-finite value in frame {int(bad[0])} at node "
            f"({int(bad[1])}, {int(bad[2])}, {int(bad[3])})"
        )
    return FrameSetRecord(grid=grid, dt=dt, xi=xi, fingerprint=fingerprint, frames=frames)


def read_frame_set_header(path):
    """Header fields of a kind-1 file without loading the frames.

    Returns (grid, nt, dt, xi, fingerprint). No checksum verification.
    """
    path = Path(path)
    with open(path, "rb") as f:
        buf = f.read(_HEADER_SIZE + _FRAMES_SUB_SIZE)
    grid, kind = _parse_header(buf, path)
    if kind != KIND_FRAMES:
        raise FormatError(f"{path}: expected a frame-set file (kind 1), found kind {kind}")
    _require(buf, _HEADER_SIZE + _FRAMES_SUB_SIZE, path, "frame-set header")
    nt, dt, xx, xy, xz, fingerprint = struct.unpack_from(_FRAMES_SUB_FMT, buf, _HEADER_SIZE)
    return grid, nt, dt, (xx, xy, xz), fingerprint


def read_frame(path, n: int) -> NDArray[np.float64]:
    """One frame by index, using the offset table. Skips checksum verification."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(_HEADER_SIZE + _FRAMES_SUB_SIZE)
        grid, kind = _parse_header(head, path)
        if kind != KIND_FRAMES:
            raise FormatError(f"{path}: expected a frame-set file (kind 1), found kind {kind}")
        nt = struct.unpack_from("<I", head, _HEADER_SIZE)[0]
        if not 0 <= n <= nt:
            raise FormatError(f"{path}: frame {n} out of range 0..{nt}")
        f.seek(_HEADER_SIZE + _FRAMES_SUB_SIZE + n * 8)
        off = struct.unpack("<Q", f.read(8))[0]
        f.seek(off)
        frame_bytes = grid.n_nodes * 8
        buf = f.read(frame_bytes)
        if len(buf) != frame_bytes:
            raise FormatError(
                f"truncated file {path}: expected {frame_bytes} bytes for frame {n}, "
                f"got {len(buf)}"
            )
    return _field_from_bytes(buf, grid.shape)
