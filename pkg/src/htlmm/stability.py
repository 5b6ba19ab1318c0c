"""Stability diagnostics: power-norm traces, Lax constants, Von Neumann factors.

Exponential bounds such as ``exp(K T)`` overflow quickly for multistep
companion matrices (their norm is at least ``sqrt(2)`` for AB2), so bounds
are compared in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import svds

from . import ht
from .discretization import KronOperator, apply
from .errors import BudgetExceededError
from .lmm import LMMScheme

SVD_CROSSCHECK_MAX = 512
POWER_TOL = 1e-8


@dataclass
class NormGrowthTrace:
    k: np.ndarray
    norm: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=int)
        self.norm = np.asarray(self.norm, dtype=float)
        if self.k.shape != self.norm.shape:
            raise ValueError("k and norm must have the same length")
        if np.any(np.diff(self.k) <= 0):
            raise ValueError("k must be strictly increasing")
        if np.any(self.norm < 0):
            raise ValueError("norms are non-negative")

    def at(self, k: int) -> float:
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            raise KeyError(k)
        return float(self.norm[idx[0]])

    def tail(self, frac: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
        start = int(len(self.k) * (1 - frac))
        return self.k[start:], self.norm[start:]


# ---------------------------------------------------------------------------
# spectral norms


def spectral_norm(A: np.ndarray, tol: float = POWER_TOL, seed: int = 0) -> float:
    """Largest singular value of ``A``.

    Small matrices use a full SVD.  Larger ones use restarted Lanczos
    bidiagonalization (ARPACK through scipy) from a seeded start vector, with
    ``tol`` as the relative convergence tolerance.  Plain power iteration
    stalls on the clustered top singular values of companion matrices.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return 0.0
    if min(A.shape) <= 64:
        return _svd_norm(A)
    v0 = np.random.default_rng(seed).standard_normal(min(A.shape))
    s = svds(A, k=1, tol=tol, v0=v0, return_singular_vectors=False, solver="arpack")
    return float(s[0])


def _svd_norm(A: np.ndarray) -> float:
    return float(np.linalg.svd(A, compute_uv=False)[0])


def _sample_ks(k_max: int, ks: Sequence[int] | None) -> list[int]:
    if ks is None:
        return list(range(1, k_max + 1))
    out = sorted({int(k) for k in ks if 1 <= k <= k_max})
    if not out:
        raise ValueError("no sample points in 1..k_max")
    return out


def log_samples(k_max: int, count: int = 60) -> list[int]:
    """Roughly log-spaced integers in ``1..k_max`` (always including both ends)."""
    pts = np.unique(np.round(np.logspace(0, math.log10(k_max), count)).astype(int))
    return sorted(set(pts.tolist()) | {1, k_max})


def norm_growth(
    L: np.ndarray,
    k_max: int,
    ks: Sequence[int] | None = None,
    tol: float = POWER_TOL,
    max_entries: int = ht.DEFAULT_DENSE_BUDGET,
) -> NormGrowthTrace:
    """``||L^k||_2`` from explicitly accumulated powers."""
    L = np.asarray(L, dtype=float)
    if L.size > max_entries:
        raise BudgetExceededError(L.size, max_entries, "matrix power")
    want = set(_sample_ks(k_max, ks))
    P = np.eye(L.shape[0])
    ks_out, norms, worst = [], [], 0.0
    for k in range(1, max(want) + 1):
        P = L @ P
        if k in want:
            nrm = spectral_norm(P, tol)
            if P.shape[0] <= SVD_CROSSCHECK_MAX:
                ref = _svd_norm(P)
                worst = max(worst, abs(nrm - ref) / max(ref, 1e-300))
            ks_out.append(k)
            norms.append(nrm)
    return NormGrowthTrace(ks_out, norms, {"size": L.shape[0], "svd_discrepancy": worst})


def _batch_apply(G: KronOperator):
    """``Y -> G Y`` on ``N x B`` blocks, by sparse product or mode by mode,
    whichever touches fewer entries."""
    N = int(np.prod(G.shape))
    kron_work = 0
    for term in G.terms:
        kron_work += sum(N * n for n, M in zip(G.shape, term.mats) if M is not None and G.diagonal_of(M) is None)
    S = G.to_sparse()
    # a sparse multiply-add costs several dense GEMM flops
    if 8 * S.nnz < kron_work:
        # column-major rows: another simultaneous permutation, same norms
        return lambda Y: S @ Y
    return lambda Y: apply(G, Y.reshape(G.shape + (-1,))).reshape(N, -1)


def companion_norm_growth(
    scheme: LMMScheme,
    G: KronOperator,
    k_max: int,
    ks: Sequence[int] | None = None,
    tol: float = POWER_TOL,
    max_entries: int = ht.DEFAULT_DENSE_BUDGET,
) -> NormGrowthTrace:
    """``||L^k||_2`` for the companion matrix of ``scheme`` without forming it.

    The powers ``L^k`` have block rows ``Y_{k+s-1}, ..., Y_k`` where the
    ``N x sN`` blocks obey the scheme's own recurrence, so each step costs one
    application of ``G`` to ``sN`` columns (products ``G Y`` are reused as the
    rows shift).  Rows and columns are indexed in C order, a simultaneous
    permutation that leaves singular values unchanged.
    """
    s = scheme.s
    N = int(np.prod(G.shape))
    if (s * N) ** 2 > max_entries:
        raise BudgetExceededError((s * N) ** 2, max_entries, "companion power")
    want = set(_sample_ks(k_max, ks))
    GY_of = _batch_apply(G)
    # L^0 = I: block row i is the identity in column block i
    rows, grows = [], []
    for i in range(s):
        Y = np.zeros((N, s * N))
        Y[:, i * N : (i + 1) * N] = np.eye(N)
        rows.append(Y)
        grows.append(GY_of(Y) if any(scheme.b) else None)
    ks_out, norms, worst = [], [], 0.0
    for k in range(1, max(want) + 1):
        new = None
        for i in range(s):
            j = s - 1 - i
            for coef, block in ((-scheme.a[j], rows[i]), (scheme.dt * scheme.b[j], grows[i])):
                if coef == 0.0:
                    continue
                if new is None:
                    new = coef * block
                else:
                    new += coef * block
        if new is None:
            new = np.zeros((N, s * N))
        rows = [new] + rows[:-1]
        grows = [GY_of(new) if any(scheme.b) else None] + grows[:-1]
        if k in want:
            P = np.vstack(rows)
            nrm = spectral_norm(P, tol)
            if P.shape[0] <= SVD_CROSSCHECK_MAX:
                ref = _svd_norm(P)
                worst = max(worst, abs(nrm - ref) / max(ref, 1e-300))
            ks_out.append(k)
            norms.append(nrm)
    return NormGrowthTrace(
        ks_out, norms, {"size": s * N, "scheme": scheme.name, "dt": scheme.dt, "svd_discrepancy": worst}
    )


def loglog_slope(trace: NormGrowthTrace, frac: float = 0.5) -> float:
    """Least-squares slope of ``log norm`` against ``log k`` on the final part."""
    k, v = trace.tail(frac)
    if len(k) < 2:
        raise ValueError("need at least two points for a slope")
    slope, _ = np.polyfit(np.log(k), np.log(v), 1)
    return float(slope)


def tail_spread(trace: NormGrowthTrace, frac: float = 0.5) -> float:
    """``max / min`` of the trace on its final part."""
    _, v = trace.tail(frac)
    return float(v.max() / v.min())


# ---------------------------------------------------------------------------
# Lax constants


def lax_constant(norm_or_matrix, dt: float) -> float:
    """Smallest ``K >= 0`` with ``||L||_2 <= 1 + K dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if np.ndim(norm_or_matrix) == 0:
        nrm = float(norm_or_matrix)
    else:
        A = np.asarray(norm_or_matrix, dtype=float)
        nrm = _svd_norm(A) if A.shape[0] <= 4 * SVD_CROSSCHECK_MAX else spectral_norm(A, 1e-12)
    return max(0.0, (nrm - 1.0) / dt)


def log_lax_bound(K: float, T: float) -> float:
    """``log C_T`` with ``C_T = exp(K T)``."""
    return K * T


def lax_bound(K: float, T: float) -> float:
    """``C_T = exp(K T)`` (``inf`` when it overflows)."""
    x = K * T
    return math.exp(x) if x < 709.0 else math.inf


def within_lax_bound(norms: Sequence[float], norm0: float, K: float, T: float, rtol: float = 1e-8) -> bool:
    """``max ||u^k|| <= e^{KT} ||u^0||`` evaluated as logarithms."""
    norms = np.asarray(norms, dtype=float)
    if norm0 <= 0:
        return bool(np.all(norms == 0))
    peak = float(norms.max())
    if peak == 0:
        return True
    return math.log(peak) <= math.log(norm0) + log_lax_bound(K, T) + math.log1p(rtol)


def empirical_stability(norms: Sequence[float], norm0: float, C_T: float = 1.0, rtol: float = 1e-8) -> bool:
    """``max_k ||u^k|| <= C_T ||u^0|| (1 + rtol)``."""
    return bool(np.max(np.asarray(norms, dtype=float)) <= C_T * norm0 * (1.0 + rtol))


# ---------------------------------------------------------------------------
# Von Neumann analysis for forward Euler on constant-coefficient diffusion


def amplification(q: Sequence[int], dt: float, dx, c: Sequence[float]) -> float:
    """``g = 1 - 4 (dt / dx^2) sum_k c_k sin(2 pi q_k dx_k)^2`` as written in the analysis.

    With a scalar ``dx`` the same spacing is used in every mode.  The
    prefactor uses the common spacing (or the first one if they differ).
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    dxs = np.broadcast_to(np.asarray(dx, dtype=float), q.shape)
    if np.any(c < 0):
        raise ValueError("diffusion coefficients must be non-negative")
    return float(1.0 - 4.0 * dt / dxs[0] ** 2 * np.sum(c * np.sin(2 * math.pi * q * dxs) ** 2))


def fd2_amplification(q: Sequence[int], dt: float, n: Sequence[int], dx, c: Sequence[float]) -> float:
    """Exact Euler factor of grid mode ``q`` for the periodic second difference,
    ``1 + dt sum_k c_k lambda_k(q_k)`` with ``lambda = -(4/dx^2) sin^2(pi q / n)``."""
    q = np.asarray(q, dtype=float)
    n = np.broadcast_to(np.asarray(n, dtype=float), q.shape)
    dxs = np.broadcast_to(np.asarray(dx, dtype=float), q.shape)
    lam = -4.0 / dxs**2 * np.sin(math.pi * q / n) ** 2
    return float(1.0 + dt * np.sum(np.asarray(c, dtype=float) * lam))


def cfl_bound(d: int, dx: float, c: Sequence[float]) -> float:
    """``dt* = dx^2 / (2 d max_j c_j)``."""
    c = np.asarray(c, dtype=float)
    if d < 1:
        raise ValueError("dimension must be positive")
    if c.size == 0 or np.any(c <= 0):
        raise ValueError("diffusion coefficients must be positive")
    return float(dx**2 / (2 * d * c.max()))


@dataclass(frozen=True)
class CFLReport:
    d: int
    dx: float
    c_max: float
    dt_star: float
    dt: float
    g_min: float
    g_max: float

    @property
    def stable_by_symbol(self) -> bool:
        return max(abs(self.g_min), abs(self.g_max)) <= 1.0 + 1e-12

    def format(self) -> str:
        return "\n".join(
            [
                f"d = {self.d}",
                f"dx = {self.dx:.17g}",
                f"c_max = {self.c_max:.17g}",
                f"dt_star = {self.dt_star:.17g}",
                f"dt = {self.dt:.17g}",
                f"dt_over_dt_star = {self.dt / self.dt_star:.17g}",
                f"g_min = {self.g_min:.17g}",
                f"g_max = {self.g_max:.17g}",
                f"stable_by_symbol = {str(self.stable_by_symbol).lower()}",
                "note = dt_star scales as 1/d for fixed dx and c",
            ]
        )


def cfl_report(d: int, n: int, dx: float, c: Sequence[float], dt: float | None = None) -> CFLReport:
    """Bound and extreme amplification factors over the grid modes ``q = 0..n-1``.

    Extremes use the diagonal modes ``(q, ..., q)``, which contain the worst
    case for equal spacings.
    """
    c = list(c)
    dt_star = cfl_bound(d, dx, c)
    dt = dt_star if dt is None else dt
    gs = [amplification([q] * d, dt, dx, c) for q in range(n)]
    return CFLReport(d, dx, max(c), dt_star, dt, min(gs), max(gs))


def amplification_table(d: int, n: int, dx: float, c: Sequence[float], dt: float) -> list[tuple[int, float]]:
    """``(q, g)`` rows for the diagonal modes ``(q, ..., q)``, ``q = 0..n-1``."""
    return [(q, amplification([q] * d, dt, dx, c)) for q in range(n)]


def stability_threshold(
    is_stable: Callable[[float], bool], lo: float, hi: float, rel_tol: float = 1e-3, max_iter: int = 60
) -> float:
    """Bisection for the largest stable step; needs ``is_stable(lo)`` and not ``is_stable(hi)``."""
    if not is_stable(lo):
        raise ValueError(f"lower end {lo} is not stable")
    if is_stable(hi):
        raise ValueError(f"upper end {hi} is stable")
    for _ in range(max_iter):
        if hi - lo <= rel_tol * lo:
            break
        mid = 0.5 * (lo + hi)
        if is_stable(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# truncation energy


def tau_ratio(X: ht.HTTensor, policy: ht.TruncationPolicy) -> float:
    """``||T_r(X)||_2 / ||X||_2``."""
    nx = ht.norm2_ht(X)
    if nx == 0:
        raise ValueError("tau ratio is undefined for the zero tensor")
    return ht.norm2_ht(ht.truncate(X, policy)) / nx
