"""Trajectory container files and the lossless CSV export.

Binary layout (little endian): header ``magic "KDTRJ1", N u64, d u8, M u64,
dt f64, has_pairings u8, seed u64`` followed by M frames of d*N float64
state vectors, then, if present, M frames of N uint32 pairing indices.  The
pairing stored with the final frame was drawn but never used to step.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dynamics import TrajectoryDataset

__all__ = ["write_trajectory", "read_trajectory", "export_csv"]

MAGIC = b"KDTRJ1"
_HEADER = struct.Struct("<6sQBQdBQ")


def write_trajectory(path, data: TrajectoryDataset):
    path = Path(path)
    has_pairings = data.pairings is not None
    header = _HEADER.pack(MAGIC, data.n_agents, data.dim, data.n_frames,
                          data.dt, int(has_pairings), data.seed & (2 ** 64 - 1))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data.snapshots, dtype="<f8").tobytes())
        if has_pairings:
            fh.write(np.ascontiguousarray(data.pairings, dtype="<u4").tobytes())


def read_trajectory(path) -> TrajectoryDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated trajectory header")
    magic, n, d, m, dt, has_pairings, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a trajectory container (bad magic)")
    offset = _HEADER.size
    n_state = m * n * d
    snapshots = np.frombuffer(raw, dtype="<f8", count=n_state, offset=offset)
    snapshots = snapshots.reshape(m, n * d).astype(float)
    offset += n_state * 8
    pairings = None
    if has_pairings:
        pairings = np.frombuffer(raw, dtype="<u4", count=m * n, offset=offset)
        pairings = pairings.reshape(m, n).astype(np.int64)
        offset += m * n * 4
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after trajectory payload")
    return TrajectoryDataset(
        times=dt * np.arange(m), snapshots=snapshots, n_agents=n, dim=d,
        dt=dt, seed=seed, scheme="binary" if has_pairings else "unknown",
        pairings=pairings,
    )


def export_csv(path, data: TrajectoryDataset):
    """One row per agent per snapshot: n, t, i, x_1..x_d (full float precision)."""
    path = Path(path)
    d = data.dim
    cols = ",".join(f"x_{c + 1}" for c in range(d))
    with open(path, "w") as fh:
        fh.write(f"n,t,i,{cols}\n")
        for n in range(data.n_frames):
            t = repr(float(data.times[n]))
            frame = data.snapshots[n].reshape(data.n_agents, d)
            for i in range(data.n_agents):
                vals = ",".join(repr(float(v)) for v in frame[i])
                fh.write(f"{n},{t},{i},{vals}\n")
