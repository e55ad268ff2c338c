"""Binary checkpoints of a :class:`SimulationState`.

Layout (all little-endian)::

    4 bytes   magic b"OLDB"
    int64     version (1)
    int64     d
    int64     N
    float64   L, mu, mu1, mu2, a, b, t
    complex128 coefficients: u components then packed tau components,
              each an N^d lattice in row-major (C) order

Round trips are bit exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid_spectral import Grid, SymTensorField, VectorField
from .oldroyd_dynamics import SimulationState
from .params import ModelParams

MAGIC = b"OLDB"
VERSION = 1
_HEAD = struct.Struct("<4sqqq7d")


def dumps(state: SimulationState) -> bytes:
    g, p = state.grid, state.params
    head = _HEAD.pack(MAGIC, VERSION, g.d, g.N, g.L, p.mu, p.mu1, p.mu2, p.a, p.b, state.t)
    body = np.concatenate([state.u.coeffs, state.tau.coeffs]).astype("<c16", copy=False)
    return head + np.ascontiguousarray(body).tobytes()


def loads(data: bytes) -> SimulationState:
    if len(data) < _HEAD.size:
        raise ValueError("checkpoint truncated (header)")
    magic, version, d, N, L, mu, mu1, mu2, a, b, t = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    g = Grid(int(d), int(N), L)
    nu, nt = d, d * (d + 1) // 2
    count = (nu + nt) * N**d
    body = np.frombuffer(data, dtype="<c16", count=-1, offset=_HEAD.size)
    if body.size != count:
        raise ValueError(f"checkpoint body has {body.size} coefficients, expected {count}")
    arr = body.astype(complex).reshape((nu + nt,) + g.shape)
    params = ModelParams(mu, mu1, mu2, a, b)
    return SimulationState(VectorField(g, arr[:nu].copy()), SymTensorField(g, arr[nu:].copy()), t, params)


def save(state: SimulationState, path) -> None:
    Path(path).write_bytes(dumps(state))


def load(path) -> SimulationState:
    return loads(Path(path).read_bytes())
