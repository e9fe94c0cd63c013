"""MDCK checkpoint format.

Layout (little-endian)::

    b"MDCK"  u32 version  u32 entry_count
    per entry: u16 name_len, name (utf-8), u8 rank, u32 dims[rank], f32 payload

Networks are stored one entry per parameter, named
``<prefix>/<index>.<kind>/<param>``, plus a ``<prefix>/<index>.<kind>/.hyper``
vector holding the layer's numeric hyperparameters, so the topology can be
rebuilt from the file alone.  Values are stored as float32 and loaded into
float64 arrays: parameters already representable in float32 round-trip
bit-exactly, anything else is rounded once on the first save.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, InvalidInputError, TruncatedFileError, VersionError
from ..fileio import atomic_write
from .layers import layer_class
from .network import Network

MAGIC = b"MDCK"
VERSION = 1
_ENTRY = re.compile(r"^(?P<idx>\d+)\.(?P<kind>[^/]+)/(?P<param>[^/]+)$")


def encode(entries: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise InvalidInputError(f"entry {name!r} cannot be represented in MDCK")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"checkpoint truncated at byte {len(self.data)} (needed {self.pos + n})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < 4 or data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise TruncatedFileError("checkpoint shorter than its magic bytes")
        raise FormatError("not an MDCK checkpoint (bad magic bytes)")
    r = _Reader(data)
    r.take(4)
    version, count = r.unpack("<II")
    if version != VERSION:
        raise VersionError(f"unsupported MDCK version {version} (expected {VERSION})")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        try:
            name = r.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("entry name is not valid utf-8") from exc
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        size = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
        if name in entries:
            raise FormatError(f"duplicate entry {name!r}")
        entries[name] = arr
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after the last entry")
    return entries


def save_entries(entries: dict[str, np.ndarray], path) -> None:
    atomic_write(path, encode(entries))


def load_entries(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def network_entries(net: Network, prefix: str | None = None) -> dict[str, np.ndarray]:
    prefix = net.name if prefix is None else prefix
    out = {}
    for i, layer in enumerate(net.layers):
        base = f"{prefix}/{i:02d}.{layer.kind}"
        out[f"{base}/.hyper"] = np.asarray(layer.hyper(), dtype=np.float64)
        for k, v in layer.params.items():
            out[f"{base}/{k}"] = v
    return out


def network_from_entries(entries: dict[str, np.ndarray], prefix: str, input_shape=None) -> Network:
    """Rebuild a network stored under ``prefix``; unknown kinds raise ``UnsupportedLayerError``."""
    layers: dict[int, tuple[str, dict]] = {}
    head = prefix + "/"
    for name, arr in entries.items():
        if not name.startswith(head):
            continue
        m = _ENTRY.match(name[len(head):])
        if m is None:
            raise FormatError(f"malformed network entry name {name!r}")
        idx, kind = int(m["idx"]), m["kind"]
        prev = layers.setdefault(idx, (kind, {}))
        if prev[0] != kind:
            raise FormatError(f"layer {idx} of {prefix!r} has conflicting kinds")
        prev[1][m["param"]] = arr
    if not layers:
        raise FormatError(f"no network stored under {prefix!r}")
    if sorted(layers) != list(range(len(layers))):
        raise FormatError(f"layer indices of {prefix!r} are not contiguous")
    built = []
    for idx in range(len(layers)):
        kind, params = layers[idx]
        cls = layer_class(kind)
        hyper = [float(h) for h in params.pop(".hyper", np.zeros(0))]
        params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        try:
            built.append(cls.build(hyper, params))
        except (KeyError, ValueError, IndexError) as exc:
            raise FormatError(f"layer {idx} ({kind}) of {prefix!r} cannot be rebuilt: {exc}") from exc
    return Network(built, input_shape, name=prefix)


def save_checkpoint(net: Network, path, extra: dict[str, np.ndarray] | None = None) -> None:
    entries = network_entries(net)
    entries.update(extra or {})
    save_entries(entries, path)


def load_checkpoint(path, prefix: str = "net") -> Network:
    return network_from_entries(load_entries(path), prefix)
