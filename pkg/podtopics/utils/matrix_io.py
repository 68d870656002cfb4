"""Matrix dump formats: sparse triplet text and dense little-endian binary."""
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

from podtopics.exceptions import DataError

# Two little-endian uint64 dimensions precede the row-major float64 payload
HEADER_DTYPE = np.dtype("<u8")
VALUE_DTYPE = np.dtype("<f8")


def write_triplets(matrix: sp.spmatrix, path: Union[str, Path]) -> None:
    """
    Write every stored entry as a `row col value` line.

    Entries are ordered by row then column; values use repr precision so an
    oracle comparison can be exact.

    Args:
        matrix: Sparse matrix to dump
        path: Destination text file
    """
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {float(coo.data[i])!r}\n")


def read_triplets(path: Union[str, Path]) -> sp.csr_matrix:
    """Read a matrix written by `write_triplets`."""
    rows, cols, vals = [], [], []
    shape = None
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                shape = (int(parts[2]), int(parts[3]))
                continue
            if len(parts) != 3:
                raise DataError("expected 'row col value'", path=str(path), line_number=line_number)
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def write_dense_binary(array: np.ndarray, path: Union[str, Path]) -> None:
    """
    Write a 2-D array as its dimensions followed by little-endian float64 data.

    Args:
        array: Dense 2-D matrix
        path: Destination file
    """
    array = np.ascontiguousarray(array, dtype=VALUE_DTYPE)
    if array.ndim != 2:
        raise ValueError("only 2-D arrays can be dumped")
    with open(path, "wb") as fh:
        fh.write(np.asarray(array.shape, dtype=HEADER_DTYPE).tobytes())
        fh.write(array.tobytes(order="C"))


def read_dense_binary(path: Union[str, Path]) -> np.ndarray:
    """Read a matrix written by `write_dense_binary`."""
    raw = Path(path).read_bytes()
    header_size = 2 * HEADER_DTYPE.itemsize
    if len(raw) < header_size:
        raise DataError("truncated matrix header", path=str(path))
    n_rows, n_cols = np.frombuffer(raw[:header_size], dtype=HEADER_DTYPE)
    payload = np.frombuffer(raw[header_size:], dtype=VALUE_DTYPE)
    if payload.size != int(n_rows) * int(n_cols):
        raise DataError(f"payload holds {payload.size} values, header declares {n_rows}x{n_cols}", path=str(path))
    return payload.reshape(int(n_rows), int(n_cols)).astype(np.float64)
