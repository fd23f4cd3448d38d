"""Binary checkpoints, CSV time series and JSON-lines reports.

Checkpoint layout (documented contract, all little-endian):

    bytes 0..3    magic ``CBF1``
    bytes 4..15   three uint32: spatial dimension d, modes per axis n,
                  scalar count m
    next m*8      m float64 scalars (slot 0 is the simulation time when
                  written by the steppers)
    rest          float64 pairs (re, im), one pair per velocity component
                  per wavevector, components innermost, wavevectors in
                  lexicographic order -n/2 <= k_i < n/2 (axis 0 slowest)

Float formatting in CSV uses ``repr`` (shortest round-trip), so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spectral import SpectralField, TorusGrid

MAGIC = b"CBF1"


def _shifted_layout(field: SpectralField) -> np.ndarray:
    """(n, .., n, d) complex array in ascending-wavevector order."""
    axes = field.grid.spatial_axes
    shifted = np.fft.fftshift(field.coeffs, axes=axes)
    return np.moveaxis(shifted, 0, -1)


def write_checkpoint(
    path: str | Path, field: SpectralField, scalars: Sequence[float] = ()
) -> None:
    grid = field.grid
    data = _shifted_layout(field)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", grid.d, grid.n, len(scalars)))
        if scalars:
            fh.write(struct.pack(f"<{len(scalars)}d", *scalars))
        fh.write(np.ascontiguousarray(data, dtype="<c16").tobytes())


def read_checkpoint(
    path: str | Path, dealias_fraction: float = 2.0 / 3.0
) -> tuple[SpectralField, list[float]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic {raw[:4]!r}")
    d, n, m = struct.unpack("<III", raw[4:16])
    offset = 16
    scalars = list(struct.unpack(f"<{m}d", raw[offset : offset + 8 * m])) if m else []
    offset += 8 * m
    count = d * n**d
    data = np.frombuffer(raw, dtype="<c16", count=count, offset=offset)
    grid = TorusGrid(d=d, n=n, dealias_fraction=dealias_fraction)
    layout = data.reshape((n,) * d + (d,))
    coeffs = np.fft.ifftshift(np.moveaxis(layout, -1, 0), axes=grid.spatial_axes)
    return SpectralField(grid, coeffs.astype(complex)), scalars


def format_float(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(path: str | Path, traj) -> None:
    """Times plus the scalar series of a trajectory."""
    r = traj.params.r
    rows = []
    header = [
        "t",
        "h_norm",
        "v_norm",
        "enstrophy",
        "lr_norm",
        "control_norm",
        "stokes_norm",
        "ledger_residual",
    ]
    for i, t in enumerate(traj.times):
        rep = traj.norm_series[i]
        rows.append(
            [
                t,
                rep.h_norm,
                rep.v_norm,
                rep.enstrophy,
                rep.lp_norms.get(r + 1.0, 0.0),
                traj.control_series[i],
                traj.stokes_series[i],
                traj.ledgers[i].step_residual,
            ]
        )
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def write_trajectory_jsonl(path: str | Path, traj) -> None:
    """One JSON document per sample with the same scalars as the CSV."""
    r = traj.params.r
    rows = []
    for i, t in enumerate(traj.times):
        rep = traj.norm_series[i]
        rows.append(
            {
                "t": float(t),
                "h_norm": rep.h_norm,
                "v_norm": rep.v_norm,
                "enstrophy": rep.enstrophy,
                "lr_norm": rep.lp_norms.get(r + 1.0, 0.0),
                "control_norm": float(traj.control_series[i]),
                "stokes_norm": float(traj.stokes_series[i]),
                "ledger_residual": traj.ledgers[i].step_residual,
            }
        )
    write_jsonl(path, rows)


def write_jsonl(path: str | Path, records: Iterable) -> None:
    """One JSON document per line; dict records are key-sorted."""
    with open(path, "w") as fh:
        for rec in records:
            if hasattr(rec, "to_json"):
                fh.write(rec.to_json() + "\n")
            else:
                fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)!r}")
