"""Binary snapshot files.

Layout (little-endian)::

    8 bytes   magic b"HMHDSNP1"
    int64     N
    float64   L
    float64   n (cut-off radius)
    16 bytes  normalization tag, ASCII, NUL padded ("unitary-dft-v1")
    int64     number of vector fields F (2 for a (u, B) state)
    int64     number of retained modes K
    float64   time
    body      F * 3 * K complex values as interleaved (re, im) float64,
              field-major, then component, then mode in lattice order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import NORMALIZATION_TAG, ModeLattice, SpectralField, State, make_lattice

MAGIC = b"HMHDSNP1"
_HEADER = struct.Struct("<8sqdd16sqqd")


class SnapshotError(ValueError):
    pass


def encode(lattice: ModeLattice, coeffs: np.ndarray, time: float = 0.0) -> bytes:
    c = np.asarray(coeffs, dtype=np.complex128)
    if c.ndim == 2:
        c = c[None]
    if c.shape[1:] != (3, lattice.mode_count):
        raise SnapshotError(f"coefficient shape {c.shape} does not match the lattice")
    head = _HEADER.pack(MAGIC, lattice.N, lattice.L, lattice.n, NORMALIZATION_TAG.encode("ascii"),
                        c.shape[0], lattice.mode_count, float(time))
    return head + np.ascontiguousarray(c).astype("<c16").tobytes()


def decode(data: bytes) -> tuple[ModeLattice, np.ndarray, float]:
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated header")
    magic, N, L, n, tag, F, K, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError("not a snapshot file")
    if tag.rstrip(b"\0").decode("ascii") != NORMALIZATION_TAG:
        raise SnapshotError(f"unsupported normalization tag {tag!r}")
    lat = make_lattice(N, L, n)
    if lat.mode_count != K:
        raise SnapshotError("mode count does not match the lattice")
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if body.size != F * 3 * K:
        raise SnapshotError("body size does not match the header")
    return lat, body.reshape(F, 3, K).astype(np.complex128), t


def write_state(path: str | Path, X: State, time: float = 0.0) -> None:
    Path(path).write_bytes(encode(X.lattice, X.as_array(), time))


def write_field(path: str | Path, f: SpectralField, time: float = 0.0) -> None:
    Path(path).write_bytes(encode(f.lattice, f.coeffs, time))


def read(path: str | Path) -> tuple[State | SpectralField, float]:
    lat, c, t = decode(Path(path).read_bytes())
    if c.shape[0] == 2:
        return State.from_array(lat, c), t
    if c.shape[0] == 1:
        return SpectralField(lat, c[0]), t
    raise SnapshotError(f"unexpected field count {c.shape[0]}")
