"""Kronecker-structured generators for periodic advection-diffusion equations.

The operator ``-sum_k d/dx_k (f_k u) + sum_kq d2/dx_k dx_q (Gamma_kq u)`` is
discretized in divergence form on an evenly spaced periodic grid.  Because the
coefficients are separable, every piece of the generator is a sum of
Kronecker products with one small matrix per mode, which can be applied to
dense arrays mode by mode or to HT tensors leaf by leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import ht
from .fields import FieldTerm, SeparableField
from .tensor_core import mode_product

SCHEMES = ("fd2", "fourier")


@dataclass(frozen=True)
class Grid:
    """Periodic tensor grid on ``[0, L_0) x ... x [0, L_{d-1})``."""

    n: tuple[int, ...]
    length: tuple[float, ...]

    def __init__(self, d: int, n: int | Sequence[int], length: float | Sequence[float] = 2 * math.pi):
        ns = (int(n),) * d if np.isscalar(n) else tuple(int(v) for v in n)
        ls = (float(length),) * d if np.isscalar(length) else tuple(float(v) for v in length)
        if len(ns) != d or len(ls) != d:
            raise ValueError("grid sizes and lengths must have one entry per dimension")
        if any(v < 2 for v in ns):
            raise ValueError(f"grid needs at least 2 points per mode, got {ns}")
        object.__setattr__(self, "n", ns)
        object.__setattr__(self, "length", ls)

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.length, self.n))

    def nodes(self, mode: int) -> np.ndarray:
        return np.arange(self.n[mode]) * self.dx[mode]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))


# ---------------------------------------------------------------------------
# 1-D differentiation matrices


def _circulant(n: int, stencil: Mapping[int, float]) -> np.ndarray:
    M = np.zeros((n, n))
    rows = np.arange(n)
    for offset, value in stencil.items():
        M[rows, (rows + offset) % n] += value
    return M


def fd_diff1(n: int, dx: float) -> np.ndarray:
    """Periodic centered first difference ``(u[j+1] - u[j-1]) / (2 dx)``."""
    if n < 3:
        raise ValueError("finite-difference stencils need n >= 3")
    return _circulant(n, {1: 0.5 / dx, -1: -0.5 / dx})


def fd_diff2(n: int, dx: float) -> np.ndarray:
    """Periodic centered second difference ``(u[j+1] - 2u[j] + u[j-1]) / dx^2``."""
    if n < 3:
        raise ValueError("finite-difference stencils need n >= 3")
    return _circulant(n, {1: 1.0 / dx**2, 0: -2.0 / dx**2, -1: 1.0 / dx**2})


def fourier_diff(n: int, order: int = 1, length: float = 2 * math.pi) -> np.ndarray:
    """Fourier pseudo-spectral differentiation matrix of the given order.

    For even ``n`` the unpaired Nyquist mode is dropped from odd-order
    derivatives, which keeps the matrix real and antisymmetric.
    """
    if n < 2:
        raise ValueError("Fourier differentiation needs n >= 2")
    k = np.fft.fftfreq(n, d=1.0 / n) * (2 * math.pi / length)
    symbol = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        symbol[n // 2] = 0.0
    D = np.fft.ifft(symbol[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
    return np.ascontiguousarray(D.real)


# ---------------------------------------------------------------------------
# Kronecker operators


@dataclass(frozen=True)
class KronTerm:
    weight: float
    mats: tuple[np.ndarray | None, ...]


class KronOperator:
    """``sum_t weight_t * (M_t,{d-1} (x) ... (x) M_t,0)``; ``None`` is the identity."""

    def __init__(self, shape: Sequence[int], terms: Sequence[KronTerm] = ()):
        self.shape = tuple(int(n) for n in shape)
        self.terms = tuple(terms)
        for term in self.terms:
            if len(term.mats) != len(self.shape):
                raise ValueError("every term needs one matrix slot per mode")
            for n, M in zip(self.shape, term.mats):
                if M is not None and M.shape != (n, n):
                    raise ValueError(f"mode matrix {M.shape} does not match mode length {n}")
        # diagonal mode matrices are applied as broadcast scalings
        self._diag: dict[int, np.ndarray | None] = {}
        for term in self.terms:
            for M in term.mats:
                if M is not None and id(M) not in self._diag:
                    d = np.diagonal(M)
                    self._diag[id(M)] = d.copy() if np.array_equal(M, np.diag(d)) else None

    def __add__(self, other: "KronOperator") -> "KronOperator":
        if self.shape != other.shape:
            raise ValueError("operators act on different shapes")
        return KronOperator(self.shape, self.terms + other.terms)

    def scaled(self, alpha: float) -> "KronOperator":
        return KronOperator(self.shape, [KronTerm(alpha * t.weight, t.mats) for t in self.terms])

    def __len__(self) -> int:
        return len(self.terms)

    def apply(self, X):
        return apply(self, X)

    def diagonal_of(self, M: np.ndarray) -> np.ndarray | None:
        """Diagonal of a mode matrix of this operator if it is diagonal, else ``None``."""
        return self._diag.get(id(M))

    def to_sparse(self) -> sp.csr_matrix:
        """Sparse ``N x N`` matrix acting on column-major vectorizations."""
        N = int(np.prod(self.shape))
        G = sp.csr_matrix((N, N))
        for term in self.terms:
            K = sp.identity(1, format="csr")
            for n, M in zip(self.shape, term.mats):
                K = sp.kron(sp.identity(n) if M is None else sp.csr_matrix(M), K, format="csr")
            G = G + term.weight * K
        return G.tocsr()

    def to_matrix(self) -> np.ndarray:
        """Dense ``N x N`` matrix acting on column-major vectorizations."""
        N = int(np.prod(self.shape))
        G = np.zeros((N, N))
        for term in self.terms:
            K = np.ones((1, 1))
            for n, M in zip(self.shape, term.mats):
                K = np.kron(np.eye(n) if M is None else M, K)
            G += term.weight * K
        return G


def apply(G: KronOperator, X):
    """``G X`` for a dense array (optionally with trailing batch axes) or an HT tensor."""
    if isinstance(X, ht.HTTensor):
        if X.shape != G.shape:
            raise ValueError(f"operator shape {G.shape} vs tensor shape {X.shape}")
        if not G.terms:
            return ht.zeros(X.shape, X.tree)
        return ht.kron_lincomb([(t.weight, t.mats, X) for t in G.terms])
    X = np.asarray(X, dtype=float)
    if X.shape[: len(G.shape)] != G.shape:
        raise ValueError(f"operator shape {G.shape} vs array shape {X.shape}")
    out = np.zeros_like(X)
    for term in G.terms:
        Y = X
        for mode, M in enumerate(term.mats):
            if M is None:
                continue
            diag = G.diagonal_of(M)
            if diag is None:
                Y = mode_product(M, mode, Y)
            else:
                Y = Y * diag.reshape((-1,) + (1,) * (X.ndim - mode - 1))
        out += term.weight * Y
    return out


class _Mats:
    """Builds and de-duplicates the per-mode matrices of one discretization.

    Identical (mode, derivative, coefficient) combinations return the same
    array object, which lets :func:`htlmm.ht.kron_lincomb` merge the
    corresponding HT blocks.
    """

    def __init__(self, grid: Grid, scheme: str):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        self.grid = grid
        self.scheme = scheme
        self._cache: dict[tuple, np.ndarray] = {}

    def deriv(self, mode: int, order: int) -> np.ndarray:
        key = ("D", mode, order)
        if key not in self._cache:
            n, dx, L = self.grid.n[mode], self.grid.dx[mode], self.grid.length[mode]
            if self.scheme == "fd2":
                M = fd_diff1(n, dx) if order == 1 else fd_diff2(n, dx)
            else:
                M = fourier_diff(n, order, L)
            self._cache[key] = M
        return self._cache[key]

    def get(self, mode: int, order: int, term: FieldTerm) -> np.ndarray | None:
        """``D^(order) diag(g)`` at ``mode``, with ``g`` the term's factors there."""
        factors = tuple(f for f in term.factors if f.mode == mode)
        if order == 0 and not factors:
            return None
        if not factors:
            return self.deriv(mode, order)
        key = ("DG", mode, order, factors)
        if key not in self._cache:
            g = term.mode_vector(mode, self.grid.nodes(mode))
            self._cache[key] = g[:, None] * np.eye(len(g)) if order == 0 else self.deriv(mode, order) * g[None, :]
        return self._cache[key]


def _check_field(field: SeparableField, d: int, what: str) -> None:
    if not isinstance(field, SeparableField):
        raise ValueError(f"{what} must be a SeparableField (separable coefficients only)")
    if field.max_mode >= d:
        raise ValueError(f"{what} references x{field.max_mode + 1} in a {d}-dimensional problem")


def build_advection(
    grid: Grid, drift: Sequence[SeparableField | None], scheme: str = "fourier", mats: _Mats | None = None
) -> KronOperator:
    """``-sum_k D_k diag(f_k)``: one term per (component k, field term)."""
    mats = mats or _Mats(grid, scheme)
    d = grid.d
    if len(drift) != d:
        raise ValueError(f"drift needs {d} components, got {len(drift)}")
    terms = []
    for k, fk in enumerate(drift):
        if fk is None:
            continue
        _check_field(fk, d, f"drift component {k + 1}")
        for term in fk.terms:
            row = [mats.get(m, 1 if m == k else 0, term) for m in range(d)]
            terms.append(KronTerm(-term.weight, tuple(row)))
    return KronOperator(grid.shape, terms)


def _gamma_entries(gamma, d: int) -> dict[tuple[int, int], SeparableField]:
    """Normalize a diffusion matrix to its upper triangle, checking symmetry."""
    out: dict[tuple[int, int], SeparableField] = {}
    if isinstance(gamma, Mapping):
        for (k, q), f in gamma.items():
            if f is None:
                continue
            key = (min(k, q), max(k, q))
            if key in out and out[key] != f:
                raise ValueError(f"diffusion matrix is not symmetric at ({k + 1},{q + 1})")
            out[key] = f
        return out
    if len(gamma) != d or any(len(row) != d for row in gamma):
        raise ValueError(f"diffusion matrix must be {d} x {d}")
    for k in range(d):
        for q in range(k, d):
            a, b = gamma[k][q], gamma[q][k]
            a = SeparableField() if a is None else a
            b = SeparableField() if b is None else b
            if a != b:
                raise ValueError(f"diffusion matrix is not symmetric at ({k + 1},{q + 1})")
            if a.terms:
                out[(k, q)] = a
    return out


def build_diffusion(
    grid: Grid,
    gamma,
    scheme: str = "fourier",
    use_symmetry: bool = True,
    mats: _Mats | None = None,
) -> KronOperator:
    """``sum_kq D_k D_q diag(Gamma_kq)`` with second-derivative matrices on the diagonal.

    With ``use_symmetry`` the strict upper triangle is applied once with
    doubled weight; otherwise both triangles are applied (the brute-force
    form, kept for checking).
    """
    mats = mats or _Mats(grid, scheme)
    d = grid.d
    entries = _gamma_entries(gamma, d)
    terms = []
    for (k, q), f in sorted(entries.items()):
        _check_field(f, d, f"diffusion entry ({k + 1},{q + 1})")
        pairs = [(k, q, 1.0)] if k == q else ([(k, q, 2.0)] if use_symmetry else [(k, q, 1.0), (q, k, 1.0)])
        for a, b, mult in pairs:
            for term in f.terms:
                row = []
                for m in range(d):
                    order = 2 if (m == a == b) else (1 if m in (a, b) else 0)
                    row.append(mats.get(m, order, term))
                terms.append(KronTerm(mult * term.weight, tuple(row)))
    return KronOperator(grid.shape, terms)


def build_generator(
    grid: Grid,
    drift: Sequence[SeparableField | None] | None = None,
    gamma=None,
    scheme: str = "fourier",
) -> KronOperator:
    """Full advection-diffusion generator sharing one matrix cache."""
    mats = _Mats(grid, scheme)
    G = KronOperator(grid.shape)
    if drift is not None:
        G = G + build_advection(grid, drift, scheme, mats)
    if gamma is not None:
        G = G + build_diffusion(grid, gamma, scheme, mats=mats)
    return G


# ---------------------------------------------------------------------------
# sampling and quadrature


def sample_dense(field: SeparableField, grid: Grid) -> np.ndarray:
    return field.evaluate([grid.nodes(m) for m in range(grid.d)])


def sample_ht(field: SeparableField, grid: Grid, tree=None, policy: ht.TruncationPolicy | None = None):
    """HT samples: one rank-one tensor per term, summed and compressed."""
    if not field.terms:
        return ht.zeros(grid.shape, tree)
    parts = []
    for term in field.terms:
        vecs = []
        for m in range(grid.d):
            v = term.mode_vector(m, grid.nodes(m))
            vecs.append(np.ones(grid.n[m]) if v is None else v)
        parts.append(ht.rank1(vecs, tree, term.weight))
    X = parts[0]
    for P in parts[1:]:
        X = ht.add(X, P)
    return ht.truncate(X, policy or ht.TruncationPolicy.unbounded())


def _quadrature_rows(grid: Grid, skip: int | None) -> list[np.ndarray | None]:
    return [
        None if m == skip else np.full((1, grid.n[m]), grid.dx[m]) for m in range(grid.d)
    ]


def marginal(X, keep_mode: int, grid: Grid) -> np.ndarray:
    """Rectangle-rule integral over every mode except ``keep_mode``."""
    if not 0 <= keep_mode < grid.d:
        raise ValueError(f"mode {keep_mode} out of range for d = {grid.d}")
    rows = _quadrature_rows(grid, keep_mode)
    if isinstance(X, ht.HTTensor):
        return ht.apply_kron_term(rows, X).to_dense().reshape(-1)
    Y = np.asarray(X, dtype=float)
    for m in reversed(range(grid.d)):
        if m != keep_mode:
            Y = Y.sum(axis=m) * grid.dx[m]
    return Y.reshape(-1)


def total_mass(X, grid: Grid) -> float:
    """Rectangle-rule integral of the whole tensor."""
    if isinstance(X, ht.HTTensor):
        return float(ht.apply_kron_term(_quadrature_rows(grid, None), X).to_dense().sum())
    return float(np.asarray(X).sum() * grid.cell_volume)
