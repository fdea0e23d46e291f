"""
On-disk artifacts of a run: binary field dumps and the diagnostics CSV.

Field dump layout (little-endian):
    8 bytes  magic b"PPFLOW1\\0"
    u32 n, u32 p, u32 K, u32 count, f64 t
    count float64 values in grid order with x_1 varying fastest
"""
import csv
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from errors import ArgumentError
from torusflow import Diagnostics

logger = logging.getLogger(__name__)

MAGIC = b"PPFLOW1\0"
HEADER = struct.Struct('<8sIIIId')
CSV_COLUMNS = ('t', 'residual_sup', 'osc_phi_t', 'mean_phi_t', 'min_cone_margin', 'sup_grad', 'dt')

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class FieldDump:
    n: int
    p: int
    K: int
    t: float
    values: np.ndarray


def write_field(path: PathLike, values, n: int, p: int, K: int, t: float) -> Path:
    """
    Write one scalar field. Collapsed grid axes are stored at their single
    sample, so count is the number of stored points.
    """
    payload = np.asarray(values, dtype='<f8').ravel(order='F')
    path = Path(path)
    with path.open('wb') as handle:
        handle.write(HEADER.pack(MAGIC, n, p, K, payload.size, float(t)))
        handle.write(payload.tobytes())
    logger.debug("wrote %d values to %s", payload.size, path)
    return path


def read_field(path: PathLike, shape: Optional[Tuple[int, ...]] = None) -> FieldDump:
    """
    Read a field dump; with ``shape`` the values are reshaped in x_1-fastest order.

    Raises:
        ArgumentError: Wrong magic, truncated payload or mismatching shape
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise ArgumentError(f"{path} is too short for a field dump header")
    magic, n, p, K, count, t = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ArgumentError(f"{path} is not a field dump (magic {magic!r})")
    values = np.frombuffer(data, dtype='<f8', offset=HEADER.size)
    if values.size != count:
        raise ArgumentError(f"{path} holds {values.size} values, header says {count}")
    values = values.astype(float)
    if shape is not None:
        if int(np.prod(shape)) != count:
            raise ArgumentError(f"cannot reshape {count} values to {shape}")
        values = values.reshape(shape, order='F')
    return FieldDump(n=n, p=p, K=K, t=t, values=values)


def write_diagnostics_csv(path: PathLike, diagnostics: Diagnostics) -> Path:
    """One row per recorded time; floats are written with repr so reruns compare byte for byte."""
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in diagnostics.rows:
            writer.writerow([repr(float(getattr(row, name))) for name in CSV_COLUMNS])
    return path


def read_diagnostics_csv(path: PathLike) -> List[Dict[str, float]]:
    """
    Raises:
        ArgumentError: If the header differs from the diagnostics columns
    """
    with Path(path).open(newline='') as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader, ()))
        if header != CSV_COLUMNS:
            raise ArgumentError(f"unexpected diagnostics header {header}")
        return [dict(zip(CSV_COLUMNS, (float(value) for value in row))) for row in reader]
