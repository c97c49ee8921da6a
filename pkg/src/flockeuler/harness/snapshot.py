"""Binary snapshots: one JSON header line, then float64 little-endian fields in row-major order."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..dynamics import FluidState
from ..fields import TorusGrid

VERSION = 1
_DTYPE = np.dtype("<f8")


class SnapshotError(ValueError):
    pass


class MalformedHeaderError(SnapshotError):
    pass


class DimensionMismatchError(SnapshotError):
    pass


class TruncatedPayloadError(SnapshotError):
    pass


def field_names(dim: int) -> list[str]:
    return ["rho"] + [f"m{i + 1}" for i in range(dim)]


def encode_snapshot(state: FluidState) -> bytes:
    g = state.grid
    # json writes floats with repr (shortest round-trip); the header pins 17 digits instead
    header = ('{"version":%d,"dim":%d,"m":%d,"time":%s,"fields":%s}'
              % (VERSION, g.dim, g.m, format(state.time, ".17g"), json.dumps(field_names(g.dim), separators=(",", ":"))))
    payload = [np.ascontiguousarray(state.rho, dtype=_DTYPE).tobytes()]
    payload += [np.ascontiguousarray(c, dtype=_DTYPE).tobytes() for c in state.momentum]
    return header.encode("ascii") + b"\n" + b"".join(payload)


def decode_snapshot(data: bytes, expect_dim: Optional[int] = None) -> FluidState:
    nl = data.find(b"\n")
    if nl < 0:
        raise MalformedHeaderError("no header line")
    try:
        header = json.loads(data[:nl].decode("ascii"))
        version, dim, m, time, fields = (header[k] for k in ("version", "dim", "m", "time", "fields"))
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise MalformedHeaderError(f"bad snapshot header: {exc}") from None
    if version != VERSION:
        raise MalformedHeaderError(f"unsupported snapshot version {version!r}")
    if not (isinstance(dim, int) and isinstance(m, int) and isinstance(time, (int, float))):
        raise MalformedHeaderError("dim and m must be integers and time a number")
    if fields != field_names(dim):
        raise MalformedHeaderError(f"unexpected field list {fields!r}")
    if expect_dim is not None and dim != expect_dim:
        raise DimensionMismatchError(f"snapshot has dim={dim}, run expects dim={expect_dim}")
    try:
        grid = TorusGrid(dim, m)
    except ValueError as exc:
        raise MalformedHeaderError(str(exc)) from None
    payload = data[nl + 1:]
    need = len(fields) * grid.size * _DTYPE.itemsize
    if len(payload) != need:
        raise TruncatedPayloadError(f"payload holds {len(payload)} bytes, header implies {need}")
    arr = np.frombuffer(payload, dtype=_DTYPE).astype(float).reshape((len(fields),) + grid.shape)
    return FluidState(grid, float(time), arr[0].copy(), arr[1:].copy())


def persist_snapshot(state: FluidState, path) -> None:
    Path(path).write_bytes(encode_snapshot(state))


def load_snapshot(path, expect_dim: Optional[int] = None, expect_grid: Optional[TorusGrid] = None) -> FluidState:
    state = decode_snapshot(Path(path).read_bytes(), expect_dim if expect_grid is None else expect_grid.dim)
    if expect_grid is not None and state.grid != expect_grid:
        raise DimensionMismatchError(f"snapshot grid M={state.grid.m} differs from run grid M={expect_grid.m}")
    return state
