"""Dense tensor algebra on column-major (mode-0-fastest) arrays.

Dense tensors are plain :class:`numpy.ndarray` objects whose shape is the
tensor shape ``(n_0, ..., n_{d-1})``.  Every linearization in the package is
column-major: the mode-0 index varies fastest.  Modes are 0-based here; the
user-facing config and CLI use 1-based mode labels.

This layer is deliberately simple.  It is the brute-force oracle that the
hierarchical Tucker code is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def linearize(idx: Sequence[int], shape: Sequence[int]) -> int:
    """Column-major offset of the multi-index ``idx`` in a tensor of ``shape``."""
    if len(idx) != len(shape):
        raise IndexError(f"multi-index of length {len(idx)} for a {len(shape)}-mode tensor")
    offset = 0
    stride = 1
    for i, n in zip(idx, shape):
        if not 0 <= i < n:
            raise IndexError(f"index {tuple(idx)} out of bounds for shape {tuple(shape)}")
        offset += int(i) * stride
        stride *= int(n)
    return offset


def delinearize(offset: int, shape: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`linearize`."""
    total = int(np.prod(shape, dtype=np.int64))
    if not 0 <= offset < total:
        raise IndexError(f"offset {offset} out of bounds for shape {tuple(shape)}")
    idx = []
    for n in shape:
        idx.append(offset % n)
        offset //= n
    return tuple(idx)


def vectorize(A: np.ndarray) -> np.ndarray:
    """Flat column-major data of ``A``."""
    return np.asarray(A).ravel(order="F")


def from_vector(data: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    data = np.asarray(data)
    if data.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError(f"{data.size} entries cannot fill shape {tuple(shape)}")
    return data.reshape(tuple(shape), order="F")


@dataclass(frozen=True)
class Matricization:
    """``matrix[r, c] = A[i]`` with ``r``/``c`` the column-major offsets of
    the row-mode / column-mode components of ``i``."""

    row_modes: tuple[int, ...]
    col_modes: tuple[int, ...]
    shape: tuple[int, ...]
    matrix: np.ndarray


def _check_modes(rows: Sequence[int], d: int) -> tuple[int, ...]:
    rows = tuple(int(m) for m in rows)
    if not rows:
        raise ValueError("row mode set must be nonempty")
    if len(set(rows)) != len(rows):
        raise ValueError(f"duplicate modes in {rows}")
    if any(not 0 <= m < d for m in rows):
        raise ValueError(f"modes {rows} out of range for a {d}-mode tensor")
    return tuple(sorted(rows))


def matricize(A: np.ndarray, rows: Sequence[int]) -> Matricization:
    """Mode-``rows`` matricization; ``rows`` is sorted ascending and the
    column modes are the ascending complement."""
    A = np.asarray(A)
    rows = _check_modes(rows, A.ndim)
    cols = tuple(m for m in range(A.ndim) if m not in rows)
    nrow = int(np.prod([A.shape[m] for m in rows], dtype=np.int64))
    mat = np.transpose(A, rows + cols).reshape((nrow, -1), order="F")
    return Matricization(rows, cols, tuple(A.shape), mat)


def dematricize(M: Matricization) -> np.ndarray:
    perm = M.row_modes + M.col_modes
    if sorted(perm) != list(range(len(M.shape))):
        raise ValueError(f"modes {perm} do not cover a {len(M.shape)}-mode tensor")
    permuted_shape = tuple(M.shape[m] for m in perm)
    expected = int(np.prod(permuted_shape, dtype=np.int64))
    if M.matrix.size != expected:
        raise ValueError(f"matrix with {M.matrix.size} entries does not fit shape {M.shape}")
    B = np.asarray(M.matrix).reshape(permuted_shape, order="F")
    return np.transpose(B, np.argsort(perm))


def mode_product(L: np.ndarray, mode: int, A: np.ndarray) -> np.ndarray:
    """``L o_mode A``: multiply the matrix ``L`` into one mode of ``A``.

    Trailing axes beyond the tensor's modes are carried along untouched, which
    lets callers push a batch of tensors through at once.
    """
    L = np.asarray(L)
    A = np.asarray(A)
    if L.ndim != 2 or L.shape[1] != A.shape[mode]:
        raise ValueError(
            f"matrix of shape {L.shape} cannot act on mode {mode} of length {A.shape[mode]}"
        )
    shape = A.shape
    before = int(np.prod(shape[:mode], dtype=np.int64))
    out = np.matmul(L, A.reshape(before, shape[mode], -1))
    return out.reshape(shape[:mode] + (L.shape[0],) + shape[mode + 1 :])


def tensor_product(A, B) -> np.ndarray:
    """``(A (x) B)[i, j] = A[i] B[j]``; shape is the concatenation of shapes."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return np.multiply.outer(A, B)


def outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Rank-one tensor ``v_0 (x) v_1 (x) ... (x) v_{d-1}``."""
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float))
    return out


def inner(A: np.ndarray, B: np.ndarray) -> float:
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.vdot(A.ravel(), B.ravel()))


def norm2(A: np.ndarray) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(A).ravel()))
