"""Binary checkpoints for HT tensors.

Layout (all integers little-endian uint64, all floats little-endian float64):

    magic       8 bytes  b"HTLMM\\x00\\x01\\x00"
    d           number of modes
    nnodes      number of tree nodes
    per node, in preorder:
        m       number of modes of the node
        modes   m mode labels (0-based)
    per node, in preorder: hierarchical size r_t (1 at the root)
    per mode 0..d-1: mode length N_mu
    factors in node preorder, each flattened column-major:
        leaf          N_mu x r_mu
        interior      r_left x r_right x r_t
        root          r_left x r_right

The tree shape (children and parents) is recovered from the preorder mode
arrays: the first child of a node is the next node in preorder, and the
second child is the next node whose modes are the remaining ones.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO

import numpy as np

from .dimtree import DimTree, Node, validate
from .ht import HTTensor

MAGIC = b"HTLMM\x00\x01\x00"


def _u64(f: BinaryIO, *vals: int) -> None:
    f.write(struct.pack(f"<{len(vals)}Q", *vals))


def _read_u64(f: BinaryIO, count: int = 1) -> tuple[int, ...]:
    raw = f.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated checkpoint header")
    return struct.unpack(f"<{count}Q", raw)


def dump(X: HTTensor, f: BinaryIO) -> None:
    tree = X.tree
    f.write(MAGIC)
    _u64(f, X.d, len(tree.nodes))
    for node in tree.nodes:
        _u64(f, len(node.modes), *node.modes)
    _u64(f, *X.sizes)
    _u64(f, *X.shape)
    for fac in X.factors:
        f.write(np.asarray(fac, dtype="<f8").tobytes(order="F"))


def save(X: HTTensor, path: str | os.PathLike) -> None:
    with open(path, "wb") as f:
        dump(X, f)


def to_bytes(X: HTTensor) -> bytes:
    buf = io.BytesIO()
    dump(X, buf)
    return buf.getvalue()


def _rebuild_tree(mode_arrays: list[tuple[int, ...]]) -> DimTree:
    n = len(mode_arrays)
    parents: list[int | None] = [None] * n
    children: list[tuple[int, int] | None] = [None] * n

    def build(i: int) -> int:
        """Link the subtree rooted at ``i``; return the index after it."""
        modes = mode_arrays[i]
        if len(modes) == 1:
            return i + 1
        left = i + 1
        if left >= n:
            raise ValueError(f"node {i} has no children in the checkpoint")
        right = build(left)
        if right >= n:
            raise ValueError(f"node {i} has no second child in the checkpoint")
        end = build(right)
        children[i] = (left, right)
        parents[left] = parents[right] = i
        return end

    if build(0) != n:
        raise ValueError("checkpoint tree does not cover its node list")
    tree = DimTree([Node(m, children[i], parents[i]) for i, m in enumerate(mode_arrays)])
    problem = validate(tree)
    if problem is not None:
        raise ValueError(f"invalid tree in checkpoint: {problem}")
    return tree


def load_from(f: BinaryIO) -> HTTensor:
    if f.read(len(MAGIC)) != MAGIC:
        raise ValueError("not an HT checkpoint (bad magic)")
    d, nnodes = _read_u64(f, 2)
    mode_arrays = []
    for _ in range(nnodes):
        (m,) = _read_u64(f)
        mode_arrays.append(tuple(_read_u64(f, m)) if m else ())
    tree = _rebuild_tree(mode_arrays)
    if tree.d != d:
        raise ValueError("checkpoint dimension does not match its tree")
    sizes = _read_u64(f, nnodes)
    shape = _read_u64(f, d)
    factors = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            dims = (shape[node.modes[0]], sizes[t])
        else:
            l, r = node.children
            dims = (sizes[l], sizes[r]) if t == tree.root else (sizes[l], sizes[r], sizes[t])
        count = int(np.prod(dims))
        raw = f.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError(f"truncated checkpoint data at node {t}")
        factors.append(np.frombuffer(raw, dtype="<f8").reshape(dims, order="F").astype(float))
    if f.read(1):
        raise ValueError("trailing bytes after checkpoint data")
    return HTTensor(tree, factors)


def load(path: str | os.PathLike) -> HTTensor:
    with open(path, "rb") as f:
        return load_from(f)


def from_bytes(data: bytes) -> HTTensor:
    return load_from(io.BytesIO(data))
