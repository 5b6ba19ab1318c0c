"""Experiment drivers behind the command line: time integration runs and
stability sweeps, writing CSV and text artifacts."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, ht, lmm
from . import stability as st
from .config import ExperimentConfig, StabilityConfig
from .discretization import Grid, KronOperator, build_diffusion, build_generator, marginal, sample_dense, sample_ht, total_mass
from .errors import BudgetExceededError, ConfigError
from .fields import SeparableField

BLOWUP = 1e12

RECORD_FIELDS = ["step", "t", "norm", "size_pre", "size_post", "rank_pre", "rank_post", "tau", "mass"]


def fmt(x) -> str:
    """CSV cell: integers verbatim, floats with 17 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class Problem:
    grid: Grid
    G: KronOperator
    scheme: lmm.LMMScheme
    policy: ht.TruncationPolicy
    u0: object


def _drift(cfg: ExperimentConfig):
    d = cfg.pde.dimension
    drift = cfg.coefficients.drift
    return [drift.get(k) for k in range(d)] if drift else None


def random_rank1(grid: Grid, seed: int) -> list[np.ndarray]:
    """Unit-norm standard normal vectors, one per mode."""
    rng = np.random.default_rng(seed)
    out = []
    for n in grid.n:
        v = rng.standard_normal(n)
        out.append(v / np.linalg.norm(v))
    return out


def initial_condition(cfg: ExperimentConfig, grid: Grid, seed: int, representation: str):
    co = cfg.coefficients
    if co.initial_kind == "random_rank1":
        vecs = random_rank1(grid, seed)
        if representation == "ht":
            return ht.rank1(vecs)
        U = vecs[0]
        for v in vecs[1:]:
            U = np.multiply.outer(U, v)
        return U
    if co.initial is None:
        raise ConfigError("no initial condition given ([coefficients] initial = ...)", None, cfg.source)
    if representation == "ht":
        return sample_ht(co.initial, grid)
    return sample_dense(co.initial, grid)


def build_problem(cfg: ExperimentConfig, seed: int = 0, budget: int = ht.DEFAULT_DENSE_BUDGET) -> Problem:
    p, ig = cfg.pde, cfg.integrator
    grid = Grid(p.dimension, p.n, p.length)
    if ig.representation == "dense":
        N = int(np.prod(grid.shape, dtype=np.int64))
        if N > budget:
            raise BudgetExceededError(N, budget, "dense solution")
    gamma = cfg.coefficients.diffusion or None
    try:
        G = build_generator(grid, _drift(cfg), gamma, p.scheme)
    except ValueError as exc:
        raise ConfigError(str(exc), None, cfg.source) from None
    scheme = lmm.ab_scheme(ig.s, ig.dt)
    policy = ht.TruncationPolicy(ig.cap, ig.rel_tol)
    return Problem(grid, G, scheme, policy, initial_condition(cfg, grid, seed, ig.representation))


# ---------------------------------------------------------------------------
# time integration


@dataclass
class RunResult:
    rows: list[list]
    header: list[str]
    marginal_rows: list[list] = field(default_factory=list)
    step_norms: list[tuple[float, float]] = field(default_factory=list)  # (pre, post) per step
    norms: list[float] = field(default_factory=list)
    final: object = None
    timings: list[tuple[int, float]] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def _dense_ranks(U: np.ndarray) -> int:
    if U.ndim < 2:
        return 1
    return ht.hsvd(ht.from_dense(U)).max_numerical_rank()


def run_problem(cfg: ExperimentConfig, prob: Problem, checkpoint_dir: Path | None = None) -> RunResult:
    ig, out = cfg.integrator, cfg.output
    steps = ig.steps
    header = RECORD_FIELDS + [f"tau_{c}" for c in ig.tau_caps]
    res = RunResult([], header)
    modes = [m - 1 for m in out.marginal_modes]
    is_ht = ig.representation == "ht"
    t0 = time.perf_counter()
    for state in lmm.iterate(prob.u0, prob.scheme, prob.G, prob.policy):
        k = state.k
        u = state.current
        nrm = ht.norm2_ht(u) if is_ht else float(np.linalg.norm(u))
        res.norms.append(nrm)
        if is_ht and k > 0:
            info = state.info[-1]
            res.step_norms.append((info.norm_pre, info.norm_post))
        sample = k % out.stride == 0 or k == steps
        if sample:
            if is_ht:
                post_rank = ht.hsvd(u).max_numerical_rank()
                if k == 0:
                    h0 = ht.hsvd(prob.u0)
                    size_pre, rank_pre = prob.u0.max_size, h0.max_numerical_rank()
                    tau = ht.norm2_ht(u) / ht.norm2_ht(prob.u0)
                    taus = [ht.norm2_ht(ht.project(h0, ht.TruncationPolicy(c))) / ht.norm2_ht(h0.tensor) for c in ig.tau_caps]
                else:
                    info = state.info[-1]
                    size_pre, rank_pre = info.rank_pre, info.numerical_rank_pre
                    tau = info.norm_post / info.norm_pre if info.norm_pre > 0 else 1.0
                    h = state.last
                    taus = [ht.norm2_ht(ht.project(h, ht.TruncationPolicy(c))) / info.norm_pre for c in ig.tau_caps]
                row = [k, k * ig.dt, nrm, size_pre, u.max_size, rank_pre, post_rank, tau, total_mass(u, prob.grid)]
            else:
                r = _dense_ranks(u)
                taus = []
                for c in ig.tau_caps:
                    H = ht.from_dense(u)
                    taus.append(st.tau_ratio(H, ht.TruncationPolicy(c)))
                row = [k, k * ig.dt, nrm, r, r, r, r, 1.0, total_mass(u, prob.grid)]
            res.rows.append(row + taus)
            res.timings.append((k, time.perf_counter() - t0))
        if modes and out.marginal_stride and (k % out.marginal_stride == 0 or k == steps):
            for m in modes:
                dens = marginal(u, m, prob.grid)
                for x, v in zip(prob.grid.nodes(m), dens):
                    res.marginal_rows.append([k, k * ig.dt, m + 1, x, v])
        if checkpoint_dir is not None and out.checkpoint_stride and k % out.checkpoint_stride == 0:
            checkpoint.save(_as_ht(u), checkpoint_dir / f"step_{k:06d}.ht")
        if k >= steps:
            res.final = u
            break
    return res


def _as_ht(u):
    return u if isinstance(u, ht.HTTensor) else ht.from_dense(u)


def cmd_run(cfg: ExperimentConfig, out_dir: Path, seed: int = 0) -> RunResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = build_problem(cfg, seed)
    ckpt_dir = out_dir / "checkpoints"
    if cfg.output.checkpoint_stride:
        ckpt_dir.mkdir(exist_ok=True)
    res = run_problem(cfg, prob, ckpt_dir if cfg.output.checkpoint_stride else None)
    write_csv(out_dir / "record.csv", res.header, res.rows)
    write_csv(out_dir / "timing.csv", ["step", "wall_seconds"], res.timings)
    if res.marginal_rows:
        write_csv(out_dir / "marginal.csv", ["step", "t", "mode", "x", "density"], res.marginal_rows)
    if res.final is not None and (cfg.pde.dimension >= 2):
        checkpoint.save(_as_ht(res.final), out_dir / "final.ht")
    return res


# ---------------------------------------------------------------------------
# stability sweeps


def growth_sweep(cfg: ExperimentConfig, out_dir: Path) -> list[list]:
    sc: StabilityConfig = cfg.stability
    ig = cfg.integrator
    scheme = lmm.ab_scheme(ig.s, ig.dt)
    drift = _drift(cfg)
    gamma = cfg.coefficients.diffusion or None
    summary = []
    for n in sc.n_values:
        grid = Grid(cfg.pde.dimension, n, cfg.pde.length)
        for name in sc.schemes:
            if name == "fd2" and n < 3:
                raise ConfigError(f"fd2 needs n >= 3, got n = {n}", None, cfg.source)
            G = build_generator(grid, drift, gamma, name)
            ks = st.log_samples(sc.k_max, sc.samples)
            if 1 not in ks:
                ks = [1] + ks
            tr = st.companion_norm_growth(scheme, G, sc.k_max, ks)
            write_csv(out_dir / f"trace_{name}_n{n}.csv", ["k", "norm"], zip(tr.k.tolist(), tr.norm.tolist()))
            K = st.lax_constant(tr.at(1), ig.dt)
            summary.append(
                [name, n, tr.meta["size"], tr.at(1), tr.norm[-1], st.tail_spread(tr), st.loglog_slope(tr), K]
            )
    write_csv(
        out_dir / "growth_summary.csv",
        ["scheme", "n", "size", "norm_k1", "norm_kmax", "tail_spread", "loglog_slope", "lax_K"],
        [[r[0]] + r[1:] for r in summary],
    )
    return summary


def diffusion_run(d: int, n: int, c: float, dt: float, steps: int, seed: int, representation: str, cap: int):
    """Forward Euler on ``u_t = c Laplacian u`` (periodic FD2) from a random
    rank-one start; returns the norm sequence including ``k = 0``.

    The run stops early once the norm exceeds ``BLOWUP`` times its start.
    """
    grid = Grid(d, n)
    gamma = {(k, k): SeparableField.constant(c) for k in range(d)}
    G = build_diffusion(grid, gamma, "fd2")
    vecs = random_rank1(grid, seed)
    scheme = lmm.ab_scheme(1, dt)
    if representation == "ht":
        u0 = ht.rank1(vecs)
        policy = ht.TruncationPolicy(cap)
    else:
        u0 = vecs[0]
        for v in vecs[1:]:
            u0 = np.multiply.outer(u0, v)
        policy = None
    norms = []
    for state in lmm.iterate(u0, scheme, G, policy):
        u = state.current
        norms.append(ht.norm2_ht(u) if representation == "ht" else float(np.linalg.norm(u)))
        if state.k >= steps or norms[-1] > BLOWUP * norms[0]:
            break
    return np.array(norms)


def cfl_sweep(cfg: ExperimentConfig, out_dir: Path, seed: int = 0) -> dict:
    sc: StabilityConfig = cfg.stability
    n = cfg.pde.n
    if n < 3:
        raise ConfigError("fd2 needs n >= 3", None, cfg.source)
    dx = 2 * math.pi / n
    c = sc.coefficient
    table, thresholds = [], []
    runs = [(d, "dense") for d in sc.dims] + [(d, "ht") for d in sc.ht_dims]
    for d, rep in runs:
        if rep == "ht" and d < 2:
            raise ConfigError("HT sweeps need d >= 2", None, cfg.source)
        if rep == "dense" and n**d > ht.DEFAULT_DENSE_BUDGET:
            raise BudgetExceededError(n**d, ht.DEFAULT_DENSE_BUDGET, "dense diffusion state")
        dt_star = st.cfl_bound(d, dx, [c] * d)
        rep_txt = st.cfl_report(d, n, dx, [c] * d, dt_star).format()
        (out_dir / f"cfl_{rep}_d{d}.txt").write_text(rep_txt + "\n")
        write_csv(out_dir / f"amplification_d{d}.csv", ["q", "g"], st.amplification_table(d, n, dx, [c] * d, dt_star))
        for margin in sc.margins:
            norms = diffusion_run(d, n, c, margin * dt_star, sc.steps, seed, rep, sc.ht_cap)
            stable = st.empirical_stability(norms, norms[0], 1.0)
            table.append([d, rep, margin, margin * dt_star, norms.max() / norms[0], norms[-1] / norms[0], int(stable)])
        if sc.bisect:

            def ok(dt, d=d, rep=rep):
                norms = diffusion_run(d, n, c, dt, sc.steps, seed, rep, sc.ht_cap)
                return st.empirical_stability(norms, norms[0], 1.0)

            thr = st.stability_threshold(ok, 0.5 * dt_star, 2.0 * dt_star, rel_tol=1e-3)
            thresholds.append([d, rep, dt_star, thr, thr / dt_star])
    write_csv(
        out_dir / "cfl_table.csv",
        ["d", "representation", "margin", "dt", "max_norm_ratio", "final_norm_ratio", "stable"],
        table,
    )
    if thresholds:
        write_csv(out_dir / "cfl_threshold.csv", ["d", "representation", "dt_star", "dt_threshold", "ratio"], thresholds)
    return {"table": table, "thresholds": thresholds}


def cmd_stability(cfg: ExperimentConfig, out_dir: Path, seed: int = 0):
    if cfg.stability is None:
        raise ConfigError("stability runs need a [stability] section", None, cfg.source)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.stability.kind == "growth":
        return growth_sweep(cfg, out_dir)
    return cfl_sweep(cfg, out_dir, seed)


# ---------------------------------------------------------------------------
# checkpoint tools


def marginal_rows(X: ht.HTTensor, mode: int, length: float = 2 * math.pi) -> list[list[float]]:
    """``(x, density)`` rows of the marginal on 1-based ``mode``."""
    if not 1 <= mode <= X.d:
        raise ValueError(f"mode {mode} out of range 1..{X.d}")
    grid = Grid(X.d, X.shape, length)
    dens = marginal(X, mode - 1, grid)
    return [[x, v] for x, v in zip(grid.nodes(mode - 1), dens)]


def info_text(X: ht.HTTensor) -> str:
    rep = ht.storage_report(X)
    return "\n".join([f"shape = {list(X.shape)}", "tree:", X.tree.format(X.sizes), rep.format()])
