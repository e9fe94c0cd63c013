"""Binary radar file formats and atomic file writing.

RDF1 (frames)::

    b"RDF1" u32 K  u32 L  u32 frame_count  f32 frame_rate
    frames in order; each frame chirp-major (l outer, k inner), each sample
    two f32 (re, im)

RDM1 / TDS1 (one real grid)::

    b"RDM1" | b"TDS1"  u32 rows  u32 cols  f32 payload row-major

All little-endian.  A sequence of range-Doppler maps is stored as RDM1 records
written back to back.  A sidecar ``<file>.meta`` holds ``key=value`` lines.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError, TruncatedFileError

RDF_MAGIC = b"RDF1"
RDM_MAGIC = b"RDM1"
TDS_MAGIC = b"TDS1"


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _need(data: bytes, pos: int, n: int, what: str):
    if pos + n > len(data):
        raise TruncatedFileError(f"{what}: file ends at byte {len(data)}, expected at least {pos + n}")


def encode_frames(frames: np.ndarray, frame_rate: float) -> bytes:
    """``frames`` has shape ``(n, K, L)`` complex."""
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise InvalidInputError(f"frames must have shape (n, K, L), got {frames.shape}")
    n, K, L = frames.shape
    header = RDF_MAGIC + struct.pack("<IIIf", K, L, n, frame_rate)
    # chirp-major: transpose to (n, L, K) so k runs fastest
    body = np.empty((n, L, K, 2), dtype="<f4")
    t = frames.transpose(0, 2, 1)
    body[..., 0] = t.real
    body[..., 1] = t.imag
    return header + body.tobytes()


def decode_frames(data: bytes) -> tuple[np.ndarray, float]:
    if data[:4] != RDF_MAGIC:
        if len(data) < 4:
            raise TruncatedFileError("RDF1: file shorter than magic bytes")
        raise FormatError("not an RDF1 frame file (bad magic bytes)")
    _need(data, 4, 16, "RDF1 header")
    K, L, n, rate = struct.unpack_from("<IIIf", data, 4)
    if K < 2 or L < 2:
        raise FormatError(f"RDF1 header declares invalid frame size {K}x{L}")
    size = n * L * K * 2 * 4
    _need(data, 20, size, "RDF1 payload")
    if len(data) != 20 + size:
        raise FormatError(f"RDF1: {len(data) - 20 - size} trailing bytes")
    body = np.frombuffer(data, dtype="<f4", count=n * L * K * 2, offset=20).reshape(n, L, K, 2)
    frames = (body[..., 0] + 1j * body[..., 1]).astype(np.complex64).transpose(0, 2, 1)
    return np.ascontiguousarray(frames), float(rate)


def encode_grid(grid: np.ndarray, magic: bytes) -> bytes:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise InvalidInputError(f"grid must be 2-D, got shape {grid.shape}")
    return magic + struct.pack("<II", *grid.shape) + np.ascontiguousarray(grid, dtype="<f4").tobytes()


def decode_grids(data: bytes, magic: bytes) -> list[np.ndarray]:
    """All back-to-back records of one grid type."""
    out, pos = [], 0
    name = magic.decode()
    if not data:
        raise TruncatedFileError(f"{name}: empty file")
    while pos < len(data):
        _need(data, pos, 4, f"{name} magic")
        if data[pos:pos + 4] != magic:
            raise FormatError(f"not a {name} record at byte {pos} (bad magic bytes)")
        _need(data, pos + 4, 8, f"{name} header")
        rows, cols = struct.unpack_from("<II", data, pos + 4)
        pos += 12
        _need(data, pos, rows * cols * 4, f"{name} payload")
        grid = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos).reshape(rows, cols)
        out.append(grid.astype(np.float64))
        pos += rows * cols * 4
    return out


def write_frames(path, frames: np.ndarray, frame_rate: float) -> None:
    atomic_write(path, encode_frames(frames, frame_rate))


def read_frames(path) -> tuple[np.ndarray, float]:
    return decode_frames(Path(path).read_bytes())


def write_rdms(path, rdms) -> None:
    atomic_write(path, b"".join(encode_grid(np.asarray(r), RDM_MAGIC) for r in rdms))


def read_rdms(path) -> list[np.ndarray]:
    return decode_grids(Path(path).read_bytes(), RDM_MAGIC)


def write_tds(path, columns: np.ndarray) -> None:
    atomic_write(path, encode_grid(columns, TDS_MAGIC))


def read_tds(path) -> np.ndarray:
    grids = decode_grids(Path(path).read_bytes(), TDS_MAGIC)
    if len(grids) != 1:
        raise FormatError(f"TDS1 file must hold exactly one grid, found {len(grids)}")
    return grids[0]


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_meta(path, meta: dict) -> None:
    lines = [f"{k}={_fmt(v)}" for k, v in meta.items()]
    atomic_write(meta_path(path), "\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_meta(path) -> dict[str, str]:
    p = meta_path(path)
    if not p.exists():
        return {}
    out = {}
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{p}: malformed metadata line {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
