"""Reader/writer for the AKF4 binary field format.

Layout (little endian)::

    bytes 0-3   magic b"AKF4"
    u32         version (= 1)
    u32         n
    u32         component_count
    u32         reserved (= 0)
    [u32        rank tag]            differential forms only
    float64     component_count * n**4 values, components outermost,
                then i1 slowest ... i4 fastest

Plain fields (scalars, endomorphism fields with 16 components, ...) omit the
rank tag.  Forms carry it because rank 1 and rank 3 share component_count 4.
The reader tells the two header sizes apart from the file length.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"AKF4"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_RANK = struct.Struct("<I")
FORM_COMPONENTS = {0: 1, 1: 4, 2: 6, 3: 4, 4: 1}


def write_field(path, data, rank=None):
    """Write ``data`` of shape ``(C, n, n, n, n)`` or ``(n, n, n, n)``."""
    data = np.asarray(data, dtype="<f8")
    if data.ndim == 4:
        data = data[None]
    if data.ndim != 5 or len(set(data.shape[1:])) != 1:
        raise FormatError(f"cannot serialise array of shape {data.shape}")
    count, n = data.shape[0], data.shape[1]
    if rank is not None and FORM_COMPONENTS.get(rank) != count:
        raise FormatError(f"rank {rank} forms have {FORM_COMPONENTS.get(rank)} components, got {count}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, count, 0))
        if rank is not None:
            fh.write(_RANK.pack(rank))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_field(path):
    """Return ``(data, rank)``; ``rank`` is None for untagged fields."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file too short for an AKF4 header")
    magic, version, n, count, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if reserved != 0:
        raise FormatError("reserved header word must be zero")
    payload = 8 * count * n ** 4
    rank = None
    offset = _HEADER.size
    if len(raw) == offset + _RANK.size + payload:
        (rank,) = _RANK.unpack_from(raw, offset)
        offset += _RANK.size
        if FORM_COMPONENTS.get(rank) != count:
            raise FormatError(f"rank tag {rank} inconsistent with {count} components")
    elif len(raw) != offset + payload:
        raise FormatError("file length does not match header")
    data = np.frombuffer(raw, dtype="<f8", count=count * n ** 4, offset=offset)
    return data.reshape((count,) + (n,) * 4).astype(float), rank


def write_form(path, form):
    write_field(path, form.comps, rank=form.rank)


def read_form(path):
    from .forms import Form

    data, rank = read_field(path)
    if rank is None:
        if data.shape[0] == 6:
            rank = 2
        elif data.shape[0] == 1:
            rank = 0
        else:
            raise FormatError("untagged file is ambiguous as a differential form")
    return Form(rank, data)
