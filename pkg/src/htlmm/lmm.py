"""Explicit linear multistep schemes, dense and rank-truncated.

A scheme with coefficients ``a_0..a_{s-1}`` and ``b_0..b_{s-1}`` advances

    u^{k+s} = sum_j (dt b_j G - a_j I) u^{k+j}.

Histories are stored newest first, so ``history[i]`` is ``u^{k+s-1-i}`` and
is paired with coefficient index ``j = s-1-i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import ht
from .discretization import KronOperator, apply
from .errors import BudgetExceededError

_AB = {
    1: ([-1], [1]),
    2: ([0, -1], [Fraction(-1, 2), Fraction(3, 2)]),
    3: ([0, 0, -1], [Fraction(5, 12), Fraction(-16, 12), Fraction(23, 12)]),
}


@dataclass(frozen=True)
class LMMScheme:
    a: tuple[float, ...]
    b: tuple[float, ...]
    dt: float
    name: str = "lmm"

    def __post_init__(self):
        if len(self.a) != len(self.b) or not self.a:
            raise ValueError("a and b must be non-empty and of equal length")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")

    @property
    def s(self) -> int:
        return len(self.a)

    def consistency_defects(self) -> tuple[float, float]:
        """``(1 + sum a_j, sum j a_j + s - sum b_j)``; both vanish for order >= 1."""
        s = self.s
        first = 1.0 + sum(self.a)
        second = sum(j * a for j, a in enumerate(self.a)) + s - sum(self.b)
        return first, second

    def with_dt(self, dt: float) -> "LMMScheme":
        return LMMScheme(self.a, self.b, dt, self.name)


def ab_scheme(s: int, dt: float) -> LMMScheme:
    """Adams-Bashforth scheme with ``s`` steps."""
    if s not in _AB:
        raise ValueError(f"Adams-Bashforth is available for s in {sorted(_AB)}, got {s}")
    a, b = _AB[s]
    return LMMScheme(tuple(float(v) for v in a), tuple(float(v) for v in b), float(dt), f"AB{s}")


@dataclass
class StepInfo:
    """Diagnostics of one truncated step."""

    k: int
    sizes_pre: list[int]
    sizes_post: list[int]
    norm_pre: float
    norm_post: float
    numerical_rank_pre: int

    @property
    def rank_pre(self) -> int:
        return max(self.sizes_pre[1:])

    @property
    def rank_post(self) -> int:
        return max(self.sizes_post[1:])


@dataclass
class StepState:
    """Most recent ``s`` iterates (newest first) and the index of the newest."""

    history: list
    k: int = 0
    info: list[StepInfo] = field(default_factory=list)
    last: ht.HSVD | None = None  # hierarchical SVD of the latest untruncated iterate

    @property
    def current(self):
        return self.history[0]


def _check_history(scheme: LMMScheme, state: StepState) -> None:
    if len(state.history) != scheme.s:
        raise ValueError(f"{scheme.name} needs {scheme.s} history entries, got {len(state.history)}")


def combine_dense(scheme: LMMScheme, G: KronOperator, history) -> np.ndarray:
    """Right-hand side of the recurrence for dense iterates (newest first)."""
    s = scheme.s
    out = None
    for i, u in enumerate(history):
        j = s - 1 - i
        term = -scheme.a[j] * u
        if scheme.b[j] != 0.0:
            term = term + scheme.dt * scheme.b[j] * apply(G, u)
        out = term if out is None else out + term
    return out


def combine_ht(scheme: LMMScheme, G: KronOperator, history) -> ht.HTTensor:
    """Untruncated HT right-hand side, assembled as a single block combination."""
    s = scheme.s
    items = []
    for i, u in enumerate(history):
        j = s - 1 - i
        if scheme.a[j] != 0.0:
            items.append((-scheme.a[j], None, u))
        if scheme.b[j] != 0.0:
            items.extend((scheme.dt * scheme.b[j] * t.weight, t.mats, u) for t in G.terms)
    if not items:
        return ht.zeros(history[0].shape, history[0].tree)
    return ht.kron_lincomb(items)


def step_dense(scheme: LMMScheme, G: KronOperator, state: StepState) -> StepState:
    _check_history(scheme, state)
    new = combine_dense(scheme, G, state.history)
    return StepState([new] + state.history[:-1], state.k + 1, state.info)


def step_truncated(
    scheme: LMMScheme, G: KronOperator, state: StepState, policy: ht.TruncationPolicy
) -> StepState:
    """One step followed by truncation; older history entries are re-truncated too."""
    _check_history(scheme, state)
    w = combine_ht(scheme, G, state.history)
    new, h = ht.truncate_with_info(w, policy)
    info = StepInfo(
        k=state.k + 1,
        sizes_pre=w.sizes,
        sizes_post=new.sizes,
        norm_pre=ht.norm2_ht(w),
        norm_post=ht.norm2_ht(new),
        numerical_rank_pre=h.max_numerical_rank(),
    )
    older = [ht.truncate(u, policy) for u in state.history[:-1]]
    state.info.append(info)
    return StepState([new] + older, state.k + 1, state.info, h)


def step(scheme, G, state, policy=None) -> StepState:
    """Dense step for arrays, truncated step for HT tensors."""
    if isinstance(state.current, ht.HTTensor):
        return step_truncated(scheme, G, state, policy or ht.TruncationPolicy.unbounded())
    return step_dense(scheme, G, state)


def iterate(u0, scheme: LMMScheme, G: KronOperator, policy: ht.TruncationPolicy | None = None):
    """Yield the states ``k = 0, 1, 2, ...`` of a run started from ``u0``.

    While fewer than ``s`` iterates exist, step ``k`` uses the Adams-Bashforth
    scheme of order ``k`` at the same ``dt``; afterwards every step uses
    ``scheme``.  HT iterates are truncated under ``policy``.
    """
    is_ht = isinstance(u0, ht.HTTensor)
    policy = policy or ht.TruncationPolicy.unbounded()
    first = ht.truncate(u0, policy) if is_ht else np.asarray(u0, dtype=float)
    state = StepState([first], 0)
    yield state
    while True:
        if len(state.history) < scheme.s:
            nxt = step(ab_scheme(len(state.history), scheme.dt), G, state, policy)
            state = StepState([nxt.current] + state.history, nxt.k, nxt.info, nxt.last)
        else:
            state = step(scheme, G, state, policy)
        yield state


def warm_start(u0, scheme: LMMScheme, G: KronOperator, policy: ht.TruncationPolicy | None = None) -> StepState:
    """History of length ``s`` bootstrapped with AB1, AB2, ... (see :func:`iterate`)."""
    for state in iterate(u0, scheme, G, policy):
        if len(state.history) == scheme.s:
            return state
    raise AssertionError("unreachable")


def stack(history) -> np.ndarray:
    """Companion-state vector ``[u^{k+s-1}; ...; u^k]`` from a dense history."""
    return np.concatenate([np.asarray(u).reshape(-1, order="F") for u in history])


def companion_operator(
    scheme: LMMScheme, G: np.ndarray | KronOperator, max_entries: int = ht.DEFAULT_DENSE_BUDGET
) -> np.ndarray:
    """Block companion matrix acting on :func:`stack` vectors.

    The top block row is ``[dt b_{s-1} G - a_{s-1} I, ..., dt b_0 G - a_0 I]``
    with identities on the block sub-diagonal.
    """
    if isinstance(G, KronOperator):
        N = int(np.prod(G.shape))
        if N * N > max_entries:
            raise BudgetExceededError(N * N, max_entries, "generator matrix")
        G = G.to_matrix()
    N = G.shape[0]
    s = scheme.s
    if (s * N) ** 2 > max_entries:
        raise BudgetExceededError((s * N) ** 2, max_entries, "companion matrix")
    L = np.zeros((s * N, s * N))
    I = np.eye(N)
    for i in range(s):
        j = s - 1 - i
        L[:N, i * N : (i + 1) * N] = scheme.dt * scheme.b[j] * G - scheme.a[j] * I
    for i in range(1, s):
        L[i * N : (i + 1) * N, (i - 1) * N : i * N] = I
    return L
