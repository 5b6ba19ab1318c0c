"""Hierarchical Tucker tensors on binary dimension trees.

Storage follows the usual HT layout.  Node ``t`` of the tree owns one factor:

* a leaf for mode ``mu`` stores its frame ``U_mu`` of shape ``(N_mu, r_mu)``;
* an interior node stores a transfer tensor of shape ``(r_left, r_right, r_t)``;
* the root stores a matrix of shape ``(r_left, r_right)``.

The frame of an interior node is ``U_t[(i_l, i_r), k] = sum_ab U_l[i_l, a]
U_r[i_r, b] B_t[a, b, k]`` with the row index linearized column-major (left
modes fastest), which matches the column-major convention of
:mod:`htlmm.tensor_core`.

Truncation is the root-to-leaves hierarchical SVD: every projection is built
from the matricizations of the *input* tensor and the result is the layered
product of orthogonal projections, so it never increases the 2-norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dimtree import DimTree, build_balanced, layers
from .errors import BudgetExceededError
from .tensor_core import matricize

DEFAULT_DENSE_BUDGET = 10**8
# singular values at or below ZERO_TOL * sigma_1 are treated as exact zeros
ZERO_TOL = 1e-14
# numerical rank used for reporting
RANK_TOL = 1e-10


@dataclass(frozen=True)
class TruncationPolicy:
    """Rank caps and/or a relative singular-value cutoff for ``truncate``.

    ``max_rank`` is a global cap, a mapping ``node -> cap`` (missing nodes are
    uncapped) or ``None``.  ``rel_tol`` discards ``sigma_i <= rel_tol *
    sigma_1``.  Singular values that are zero to roundoff (``ZERO_TOL``) are
    always dropped, except that every node keeps at least one direction.
    """

    max_rank: int | Mapping[int, int] | None = None
    rel_tol: float | None = None

    def __post_init__(self):
        caps = (
            self.max_rank.values()
            if isinstance(self.max_rank, Mapping)
            else [] if self.max_rank is None else [self.max_rank]
        )
        for c in caps:
            if int(c) < 1:
                raise ValueError(f"rank cap must be >= 1, got {c}")
        if self.rel_tol is not None and not 0.0 <= self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in [0, 1), got {self.rel_tol}")

    @classmethod
    def unbounded(cls) -> "TruncationPolicy":
        return cls()

    @property
    def is_unbounded(self) -> bool:
        return self.max_rank is None and not self.rel_tol

    def cap(self, t: int) -> int | None:
        if isinstance(self.max_rank, Mapping):
            c = self.max_rank.get(t)
            return None if c is None else int(c)
        return None if self.max_rank is None else int(self.max_rank)

    def select(self, sigma: np.ndarray, t: int) -> int:
        """Number of leading singular directions kept at node ``t``."""
        if sigma.size == 0 or sigma[0] <= 0.0:
            return 1
        cut = max(ZERO_TOL, self.rel_tol or 0.0) * sigma[0]
        k = int(np.count_nonzero(sigma > cut))
        cap = self.cap(t)
        if cap is not None:
            k = min(k, cap)
        return max(k, 1)


class HTTensor:
    """A tensor in hierarchical Tucker format.

    Instances are treated as immutable: every operation returns a new tensor.
    ``orthogonal`` records whether all non-root frames are known to have
    orthonormal columns, in which case the norm is the Frobenius norm of the
    root matrix.
    """

    __slots__ = ("tree", "factors", "orthogonal")

    def __init__(self, tree: DimTree, factors: Sequence[np.ndarray], orthogonal: bool = False):
        if tree.d < 2:
            raise ValueError("the HT format needs at least two modes")
        if len(factors) != len(tree.nodes):
            raise ValueError(f"{len(factors)} factors for a tree with {len(tree.nodes)} nodes")
        self.tree = tree
        self.factors = tuple(np.asarray(f, dtype=float) for f in factors)
        self.orthogonal = orthogonal
        self._check()

    def _check(self) -> None:
        tree, F = self.tree, self.factors
        for t, node in enumerate(tree.nodes):
            f = F[t]
            if node.is_leaf:
                if f.ndim != 2:
                    raise ValueError(f"leaf {t} needs a matrix, got shape {f.shape}")
                continue
            l, r = node.children
            want = (self._size(l), self._size(r))
            if t == tree.root:
                if f.shape != want:
                    raise ValueError(f"root matrix {f.shape} does not match child sizes {want}")
            elif f.ndim != 3 or f.shape[:2] != want:
                raise ValueError(f"transfer tensor {t} {f.shape} does not match child sizes {want}")

    def _size(self, t: int) -> int:
        if t == self.tree.root:
            return 1
        f = self.factors[t]
        return f.shape[1] if self.tree.is_leaf(t) else f.shape[2]

    @property
    def d(self) -> int:
        return self.tree.d

    @property
    def shape(self) -> tuple[int, ...]:
        out = [0] * self.d
        for t in self.tree.leaves:
            out[self.tree.nodes[t].modes[0]] = self.factors[t].shape[0]
        return tuple(out)

    @property
    def sizes(self) -> list[int]:
        """Hierarchical sizes ``r_t`` in node order (root is 1)."""
        return [self._size(t) for t in range(len(self.tree.nodes))]

    @property
    def max_size(self) -> int:
        return max(self.sizes[1:])

    @property
    def root(self) -> np.ndarray:
        return self.factors[self.tree.root]

    def leaf(self, mode: int) -> np.ndarray:
        return self.factors[self.tree.leaf_of_mode(mode)]

    def num_floats(self) -> int:
        return int(sum(f.size for f in self.factors))

    def to_dense(self, max_entries: int = DEFAULT_DENSE_BUDGET) -> np.ndarray:
        return to_dense(self, max_entries)

    def norm(self) -> float:
        return norm2_ht(self)

    def __add__(self, other: "HTTensor") -> "HTTensor":
        return add(self, other)

    def __sub__(self, other: "HTTensor") -> "HTTensor":
        return add(self, scale(-1.0, other))

    def __mul__(self, alpha: float) -> "HTTensor":
        return scale(alpha, self)

    __rmul__ = __mul__

    def __neg__(self) -> "HTTensor":
        return scale(-1.0, self)

    def __repr__(self) -> str:
        return f"HTTensor(shape={self.shape}, sizes={self.sizes})"


# --------------------------------------------------------------------------
# construction


def _default_tree(tree: DimTree | None, d: int) -> DimTree:
    tree = build_balanced(d) if tree is None else tree
    if tree.d != d:
        raise ValueError(f"tree has {tree.d} modes, tensor has {d}")
    return tree


def _node_extent(tree: DimTree, shape: Sequence[int], t: int) -> int:
    return int(np.prod([shape[m] for m in tree.nodes[t].modes], dtype=np.int64))


def from_dense(
    A: np.ndarray, tree: DimTree | None = None, policy: TruncationPolicy | None = None
) -> HTTensor:
    """HT representation of a dense tensor, truncated under ``policy``.

    The tensor is first embedded exactly (identity leaf frames, identity
    transfer tensors, the root holding the left/right matricization) and then
    passed through :func:`truncate`, so with the default unbounded policy
    the hierarchical sizes come out as the numerical ranks of the
    matricizations.
    """
    A = np.asarray(A, dtype=float)
    tree = _default_tree(tree, A.ndim)
    if A.ndim < 2:
        raise ValueError("the HT format needs at least two modes")
    factors: list[np.ndarray] = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            factors.append(np.eye(A.shape[node.modes[0]]))
        elif t == tree.root:
            left, _ = node.children
            factors.append(matricize(A, tree.nodes[left].modes).matrix)
        else:
            l, r = node.children
            nl = _node_extent(tree, A.shape, l)
            nr = _node_extent(tree, A.shape, r)
            factors.append(np.eye(nl * nr).reshape(nl, nr, nl * nr, order="F"))
    exact = HTTensor(tree, factors, orthogonal=True)
    return truncate(exact, policy or TruncationPolicy.unbounded())


def rank1(vectors: Sequence[np.ndarray], tree: DimTree | None = None, weight: float = 1.0) -> HTTensor:
    """``weight * v_0 (x) ... (x) v_{d-1}`` with every hierarchical size 1."""
    tree = _default_tree(tree, len(vectors))
    factors = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            factors.append(np.asarray(vectors[node.modes[0]], dtype=float).reshape(-1, 1))
        elif t == tree.root:
            factors.append(np.full((1, 1), float(weight)))
        else:
            factors.append(np.ones((1, 1, 1)))
    return HTTensor(tree, factors)


def zeros(shape: Sequence[int], tree: DimTree | None = None) -> HTTensor:
    """The zero tensor with all sizes 1 and zero factors."""
    tree = _default_tree(tree, len(shape))
    factors = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            factors.append(np.zeros((shape[node.modes[0]], 1)))
        elif t == tree.root:
            factors.append(np.zeros((1, 1)))
        else:
            factors.append(np.zeros((1, 1, 1)))
    return HTTensor(tree, factors)


def frame(X: HTTensor, t: int) -> np.ndarray:
    """Explicit frame of node ``t``; its rows index the node's modes column-major."""
    tree = X.tree
    if tree.is_leaf(t):
        return X.factors[t]
    l, r = tree.children(t)
    Ul, Ur = frame(X, l), frame(X, r)
    if t == tree.root:
        return Ul @ X.factors[t] @ Ur.T
    B = _contract_children(Ul, Ur, X.factors[t])
    return B.reshape(Ul.shape[0] * Ur.shape[0], -1, order="F")


def to_dense(X: HTTensor, max_entries: int = DEFAULT_DENSE_BUDGET) -> np.ndarray:
    total = int(np.prod(X.shape, dtype=np.int64))
    if total > max_entries:
        raise BudgetExceededError(total, max_entries)
    return frame(X, X.tree.root).reshape(X.shape, order="F")


# --------------------------------------------------------------------------
# arithmetic


def _contract_children(Ml: np.ndarray, Mr: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``C[i, j, ...] = sum_ab Ml[i, a] Mr[j, b] B[a, b, ...]`` for 2- or 3-way ``B``."""
    C = np.tensordot(Ml, B, axes=(1, 0))
    C = np.tensordot(Mr, C, axes=(1, 1))
    return np.swapaxes(C, 0, 1)


def _check_compatible(X: HTTensor, Y: HTTensor) -> None:
    if X.tree != Y.tree:
        raise ValueError("tensors live on different dimension trees")
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")


def add(X: HTTensor, Y: HTTensor) -> HTTensor:
    """Exact sum; hierarchical sizes add node by node (block-diagonal factors)."""
    _check_compatible(X, Y)
    tree = X.tree
    factors = []
    for t, node in enumerate(tree.nodes):
        fx, fy = X.factors[t], Y.factors[t]
        if node.is_leaf:
            factors.append(np.hstack([fx, fy]))
            continue
        if t == tree.root:
            B = np.zeros((fx.shape[0] + fy.shape[0], fx.shape[1] + fy.shape[1]))
            B[: fx.shape[0], : fx.shape[1]] = fx
            B[fx.shape[0] :, fx.shape[1] :] = fy
        else:
            B = np.zeros(tuple(a + b for a, b in zip(fx.shape, fy.shape)))
            a, b, c = fx.shape
            B[:a, :b, :c] = fx
            B[a:, b:, c:] = fy
        factors.append(B)
    return HTTensor(tree, factors)


def scale(alpha: float, X: HTTensor) -> HTTensor:
    factors = list(X.factors)
    factors[X.tree.root] = float(alpha) * factors[X.tree.root]
    return HTTensor(X.tree, factors, orthogonal=X.orthogonal)


def apply_kron_term(mats: Sequence[np.ndarray | None], X: HTTensor) -> HTTensor:
    """Apply ``M_{d-1} (x) ... (x) M_0`` (``None`` = identity) leaf by leaf."""
    if len(mats) != X.d:
        raise ValueError(f"{len(mats)} mode matrices for a {X.d}-mode tensor")
    factors = list(X.factors)
    for t in X.tree.leaves:
        M = mats[X.tree.nodes[t].modes[0]]
        if M is None:
            continue
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[1] != factors[t].shape[0]:
            raise ValueError(
                f"matrix {M.shape} does not act on mode of length {factors[t].shape[0]}"
            )
        factors[t] = M @ factors[t]
    return HTTensor(X.tree, factors)


def kron_lincomb(
    items: Sequence[tuple[float, Sequence[np.ndarray | None] | None, HTTensor]],
) -> HTTensor:
    """Orthogonalized HT form of ``sum_i w_i (M_i,{d-1} (x) ... (x) M_i,0) X_i``.

    The result is exact.  Terms that agree on every mode below a node (same
    input tensor, same matrix *objects*) share one block of columns there, so
    the hierarchical sizes grow with the number of distinct restrictions
    rather than with the raw term count.  Zero-weight terms are skipped.
    """
    items = [(float(w), m, X) for w, m, X in items if w != 0.0]
    if not items:
        raise ValueError("empty linear combination")
    X0 = items[0][2]
    tree = X0.tree
    for _, mats, X in items:
        _check_compatible(X0, X)
        if mats is not None and len(mats) != tree.d:
            raise ValueError(f"{len(mats)} mode matrices for a {tree.d}-mode tensor")
    tensors: list[HTTensor] = []
    tensor_index: dict[int, int] = {}
    for _, _, X in items:
        if id(X) not in tensor_index:
            tensor_index[id(X)] = len(tensors)
            tensors.append(X)
    tidx = [tensor_index[id(X)] for _, _, X in items]

    # keys[t][i] identifies the restriction of item i to the modes of node t
    keys: list[list[tuple]] = [[] for _ in tree.nodes]
    R: list[np.ndarray | None] = [None] * len(tree.nodes)
    offsets: list[dict] = [dict() for _ in tree.nodes]
    factors: list[np.ndarray | None] = [None] * len(tree.nodes)

    for t in tree.postorder():
        node = tree.nodes[t]
        if node.is_leaf:
            mode = node.modes[0]
            for i, (_, mats, _) in enumerate(items):
                M = None if mats is None else mats[mode]
                keys[t].append((tidx[i], None if M is None else id(M)))
            blocks = []
            col = 0
            for i, (_, mats, _) in enumerate(items):
                k = keys[t][i]
                if k in offsets[t]:
                    continue
                U = tensors[tidx[i]].factors[t]
                M = None if mats is None else mats[mode]
                blk = U if M is None else np.asarray(M) @ U
                offsets[t][k] = slice(col, col + blk.shape[1])
                col += blk.shape[1]
                blocks.append(blk)
            Q, R[t] = np.linalg.qr(np.hstack(blocks))
            factors[t] = Q
            continue

        l, r = node.children
        keys[t] = [(keys[l][i], keys[r][i]) for i in range(len(items))]
        Rl, Rr = R[l], R[r]
        if t == tree.root:
            acc = np.zeros((Rl.shape[0], Rr.shape[0]))
            for i, (w, _, _) in enumerate(items):
                B = tensors[tidx[i]].factors[t]
                sl, sr = offsets[l][keys[l][i]], offsets[r][keys[r][i]]
                acc += w * (Rl[:, sl] @ B @ Rr[:, sr].T)
            factors[t] = acc
            continue
        blocks = []
        col = 0
        for i in range(len(items)):
            k = keys[t][i]
            if k in offsets[t]:
                continue
            B = tensors[tidx[i]].factors[t]
            sl, sr = offsets[l][keys[l][i]], offsets[r][keys[r][i]]
            blk = _contract_children(Rl[:, sl], Rr[:, sr], B)
            offsets[t][k] = slice(col, col + blk.shape[2])
            col += blk.shape[2]
            blocks.append(blk)
        C = np.concatenate(blocks, axis=2)
        ql, qr = C.shape[:2]
        Q, R[t] = np.linalg.qr(C.reshape(ql * qr, -1, order="F"))
        factors[t] = Q.reshape(ql, qr, -1, order="F")
    return HTTensor(tree, factors, orthogonal=True)


def orthogonalize(X: HTTensor) -> HTTensor:
    """Same tensor with orthonormal non-root frames (leaves-to-root QR sweep)."""
    if X.orthogonal:
        return X
    return kron_lincomb([(1.0, None, X)])


# --------------------------------------------------------------------------
# truncation


@dataclass
class HSVD:
    """Hierarchical singular values of a tensor.

    ``bases[t]`` holds, in the orthonormal frame of ``tensor`` at node ``t``,
    the left singular vectors of the node-``t`` matricization, and
    ``sigmas[t]`` the singular values in descending order.
    """

    tensor: HTTensor
    bases: dict[int, np.ndarray] = field(default_factory=dict)
    sigmas: dict[int, np.ndarray] = field(default_factory=dict)

    def numerical_ranks(self, tol: float = RANK_TOL) -> dict[int, int]:
        out = {}
        for t, s in self.sigmas.items():
            out[t] = 0 if s.size == 0 or s[0] <= 0 else int(np.count_nonzero(s > tol * s[0]))
        return out

    def max_numerical_rank(self, tol: float = RANK_TOL) -> int:
        return max(self.numerical_ranks(tol).values())


def _left_svd(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left singular vectors and values of ``F``; wide inputs are first
    reduced by a QR factorization of ``F^T``."""
    if F.shape[1] > F.shape[0]:
        F = np.linalg.qr(F.T, mode="r").T
    W, s, _ = np.linalg.svd(F, full_matrices=False)
    return W, s


def hsvd(X: HTTensor) -> HSVD:
    """Root-to-leaves sweep computing every node's singular values.

    At node ``t`` (frames orthonormal) the matricization is ``U_t F_t W^T``
    with ``W`` orthonormal; only the small factor ``F_t`` is carried, and the
    SVD of ``F_t`` gives the eigenbasis of the reduced Gramian ``F_t F_t^T``.
    """
    Xo = orthogonalize(X)
    tree = Xo.tree
    out = HSVD(Xo)
    l, r = tree.children(tree.root)
    B = Xo.factors[tree.root]
    F: dict[int, np.ndarray] = {l: B, r: B.T}
    for t in range(1, len(tree.nodes)):
        W, s = _left_svd(F.pop(t))
        order = np.argsort(-s, kind="stable")
        W, s = W[:, order], s[order]
        out.bases[t], out.sigmas[t] = W, s
        if tree.is_leaf(t):
            continue
        cl, cr = tree.children(t)
        C = np.tensordot(Xo.factors[t], W * s, axes=(2, 0))
        F[cl] = C.reshape(C.shape[0], -1)
        F[cr] = np.swapaxes(C, 0, 1).reshape(C.shape[1], -1)
    return out


def project(h: HSVD, policy: TruncationPolicy) -> HTTensor:
    """Apply the layered projections selected by ``policy`` to ``h.tensor``."""
    Xo = h.tensor
    tree = Xo.tree
    S = {t: W[:, : policy.select(h.sigmas[t], t)] for t, W in h.bases.items()}
    factors = []
    for t, node in enumerate(tree.nodes):
        f = Xo.factors[t]
        if node.is_leaf:
            factors.append(f @ S[t])
            continue
        l, r = node.children
        C = _contract_children(S[l].T, S[r].T, f)
        factors.append(C if t == tree.root else np.tensordot(C, S[t], axes=(2, 0)))
    return HTTensor(tree, factors)


def truncate(X: HTTensor, policy: TruncationPolicy) -> HTTensor:
    """The rank-truncation operator: hierarchical sizes capped by ``policy``."""
    return project(hsvd(X), policy)


def truncate_with_info(X: HTTensor, policy: TruncationPolicy) -> tuple[HTTensor, HSVD]:
    h = hsvd(X)
    return project(h, policy), h


# --------------------------------------------------------------------------
# norms and storage


def _gram(X: HTTensor, Y: HTTensor) -> float:
    tree = X.tree
    M: dict[int, np.ndarray] = {}
    for t in tree.postorder():
        fx, fy = X.factors[t], Y.factors[t]
        if tree.is_leaf(t):
            M[t] = fx.T @ fy
            continue
        l, r = tree.children(t)
        C = _contract_children(M.pop(l), M.pop(r), fy)
        if t == tree.root:
            return float(np.sum(fx * C))
        M[t] = np.tensordot(fx, C, axes=([0, 1], [0, 1]))
    raise AssertionError("tree has no root")


def inner_ht(X: HTTensor, Y: HTTensor) -> float:
    _check_compatible(X, Y)
    return _gram(X, Y)


def norm2_ht(X: HTTensor) -> float:
    if X.orthogonal:
        return float(np.linalg.norm(X.root))
    return float(np.sqrt(max(_gram(X, X), 0.0)))


def formula_storage_bytes(r: int, n: int, d: int) -> float:
    """Storage formula ``[r n d + (d-2) r^3 + r^2] / 8`` for uniform rank ``r``."""
    return (r * n * d + (d - 2) * r**3 + r**2) / 8


@dataclass(frozen=True)
class StorageReport:
    per_node_sizes: tuple[int, ...]
    actual_float64_bytes: int
    formula_bytes: float | None
    dense_entries: int
    dense_float64_bytes: int
    dense_entries_over_8: float

    def format(self) -> str:
        lines = [
            f"per_node_sizes = {list(self.per_node_sizes)}",
            f"actual_float64_bytes = {self.actual_float64_bytes}",
            "formula_bytes = "
            + ("n/a (non-uniform sizes)" if self.formula_bytes is None else f"{self.formula_bytes:g}"),
            f"dense_entries = {self.dense_entries}",
            f"dense_float64_bytes = {self.dense_float64_bytes}",
            f"dense_entries_over_8 = {self.dense_entries_over_8:g}",
            "note = formula_bytes and dense_entries_over_8 divide the float count by 8; float64 storage multiplies it by 8",
        ]
        return "\n".join(lines)


def storage_report(X: HTTensor) -> StorageReport:
    sizes = X.sizes
    shape = X.shape
    uniform = len(set(sizes[1:])) == 1 and len(set(shape)) == 1
    n_interior = len(X.tree.interior)
    r = sizes[1]
    formula = None
    if uniform and n_interior == X.d - 2:
        formula = formula_storage_bytes(r, shape[0], X.d)
    dense_entries = int(np.prod(shape, dtype=np.int64))
    return StorageReport(
        per_node_sizes=tuple(sizes),
        actual_float64_bytes=8 * X.num_floats(),
        formula_bytes=formula,
        dense_entries=dense_entries,
        dense_float64_bytes=8 * dense_entries,
        dense_entries_over_8=dense_entries / 8,
    )


def tree_layers(X: HTTensor) -> list[list[int]]:
    return layers(X.tree)
