"""Alternating optimization with an outer penalty loop on the RIS coupling."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import reflection
from .beamforming import update_w
from .fp import _interval, f_a_value, tight_aux, update_all_rho
from .model import (
    RHO_FLOOR,
    ChannelSet,
    Metrics,
    Solution,
    SystemConfig,
    c4_violation,
    constraint_residuals,
    effective_channels,
    evaluate,
    gram,
)
from .surrogate import ScaOptions

STATUSES = ("converged", "non_converged_c4", "infeasible")


@dataclass(frozen=True)
class SolveOptions:
    gamma0: float = 1e-2
    gamma_factor: float = 10.0
    gamma_max: float = 1e6
    inner_tol: float = 1e-5
    inner_cap: int = 50
    c4_tol: float = 1e-6
    ramp_stages: int = 3
    ramp_inner_cap: int = 10
    audit_tol: float = 1e-6
    sca_w: ScaOptions = field(default_factory=ScaOptions)
    sca_v: ScaOptions = field(default_factory=ScaOptions)

    def __post_init__(self):
        if self.gamma_factor <= 1:
            raise ValueError("gamma_factor must exceed 1")
        if min(self.gamma0, self.inner_tol, self.c4_tol, self.audit_tol) <= 0:
            raise ValueError("penalty start and tolerances must be positive")
        if self.ramp_stages < 1 or self.inner_cap < 1:
            raise ValueError("ramp_stages and inner_cap must be >= 1")


@dataclass
class TraceRecord:
    stage: str
    gamma: float
    iteration: int
    block: str
    penalized: float
    objective: float
    c4: float
    max_residual: float
    elapsed: float


@dataclass
class Trace:
    records: list = field(default_factory=list)
    inner_iters: int = 0
    outer_stages: int = 0
    ramp_scales: list = field(default_factory=list)
    status: str = "converged"
    message: str = ""
    max_residual: float = math.nan
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def log(self, cfg, channels, sol, aux, stage, gamma, iteration, block):
        m = evaluate(cfg, channels, sol)
        f_a = f_a_value(cfg, channels, sol, aux)
        self.records.append(TraceRecord(
            stage, gamma, iteration, block, f_a - gamma * m.c4_violation, m.objective, m.c4_violation,
            constraint_residuals(cfg, channels, sol).max_violation(), time.perf_counter() - self._t0,
        ))

    def stages(self) -> dict:
        out: dict = {}
        for r in self.records:
            out.setdefault(r.stage, []).append(r)
        return out

    @property
    def wall_ms(self) -> float:
        return (time.perf_counter() - self._t0) * 1e3


class SolveResult(NamedTuple):
    solution: Solution
    metrics: Metrics
    trace: Trace


# --------------------------------------------------------------------------- feasibility helpers


def strictly_feasible(cfg: SystemConfig, channels: ChannelSet, sol: Solution, margin: float = 1e-9) -> bool:
    """C1-C3 and the split range hold with relative slack ``margin``."""
    rho = np.asarray(sol.rho)
    if np.any(rho < RHO_FLOOR) or np.any(rho > 1):
        return False
    res = constraint_residuals(cfg, channels, sol)
    if res.c3 > 0:
        return False
    if cfg.gamma_min > 0 and np.any(res.c1 > -margin * cfg.gamma_min):
        return False
    if cfg.p_min > 0 and np.any(res.c2 > -margin * cfg.p_min):
        return False
    return True


def mrt(cfg: SystemConfig, h: np.ndarray) -> np.ndarray:
    """Full-power maximum-ratio beamformers, equal power per user."""
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    norms = np.where(norms > 0, norms, 1.0)
    return math.sqrt(cfg.P_T / h.shape[0]) * h.conj() / norms


def min_power_beamformers(h: np.ndarray, noise: np.ndarray, targets: np.ndarray, max_iter: int = 1000):
    """Minimum-power beamformers meeting per-user SINR targets, or ``None`` if the targets are unreachable.

    Uses the uplink-downlink duality fixed point for the dual powers, then
    solves the downlink power equations for the resulting MMSE directions.
    """
    K, M = h.shape
    g = h.conj() / np.sqrt(noise)[:, None]  # columns as in g_k^H w, unit noise
    lam = np.zeros(K)
    for _ in range(max_iter):
        S = np.eye(M, dtype=complex) + (g.T * lam) @ g.conj()
        X = np.linalg.solve(S, g.T)  # columns S^{-1} g_k
        q = np.real(np.einsum("km,mk->k", g.conj(), X))
        new = 1.0 / ((1.0 + 1.0 / targets) * q)
        if np.any(~np.isfinite(new)) or np.max(new) > 1e15:
            return None
        done = np.max(np.abs(new - lam) / np.maximum(new, 1e-300)) < 1e-12
        lam = new
        if done:
            break
    else:
        return None
    S = np.eye(M, dtype=complex) + (g.T * lam) @ g.conj()
    U = np.linalg.solve(S, g.T).T
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    C = np.abs(g.conj() @ U.T) ** 2  # C[k, i] = |g_k^H u_i|^2
    A = -C.copy()
    A[np.diag_indices(K)] = np.diag(C) / targets
    try:
        p = np.linalg.solve(A, np.ones(K))
    except np.linalg.LinAlgError:
        return None
    if np.any(p <= 0):
        return None
    return np.sqrt(p)[:, None] * U


def feasible_point(cfg: SystemConfig, channels: ChannelSet, sol: Solution, margin: float = 1e-3):
    """Repair ``(w, rho)`` for the fixed RIS configuration in ``sol`` so that C1-C3 hold strictly.

    Tries a few split ratios: for each, minimum-power SINR beamformers are
    scaled up to the full budget, then every ``rho_k`` is set to the middle
    of its feasible interval. Returns ``None`` when nothing works.
    """
    h = effective_channels(channels, sol.v)
    K = h.shape[0]
    targets = np.full(K, cfg.gamma_min * (1.0 + margin)) if cfg.gamma_min > 0 else None
    for rho0 in (0.5, 0.8, 0.3, 0.95, 0.1):
        if targets is None:
            w = mrt(cfg, h)
        else:
            noise = np.full(K, cfg.sigma2 + cfg.delta2 / rho0)
            w = min_power_beamformers(h, noise, targets)
            if w is None:
                continue
            power = float(np.sum(np.abs(w) ** 2))
            if power > cfg.P_T:
                continue
            w = w * math.sqrt(cfg.P_T * (1.0 - 1e-9) / power)
        p = np.abs(gram(h, w)) ** 2
        rho = np.empty(K)
        ok = True
        for k in range(K):
            lo, hi = _interval(cfg, p, k)
            if lo > hi:
                ok = False
                break
            rho[k] = 0.5 * (lo + hi)
        if not ok:
            continue
        cand = sol.replace(w=w, rho=rho)
        if strictly_feasible(cfg, channels, cand):
            return cand
    return None


# --------------------------------------------------------------------------- initialization


def initialize(cfg: SystemConfig, channels: ChannelSet, rng) -> Solution:
    """Random RIS phases (coupling satisfied), full-power MRT on the resulting channel, ``rho = 0.5``."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    theta = rng.uniform(-math.pi, math.pi, channels.N)
    v = reflection.project_c4(cfg.reflection, theta)
    w = mrt(cfg, effective_channels(channels, v))
    return Solution(w=w, v=v, theta=theta, rho=np.full(channels.K, 0.5))


# --------------------------------------------------------------------------- alternating loop


def alternating_solve(cfg: SystemConfig, channels: ChannelSet, sol: Solution, penalty: float,
                      opts: SolveOptions | None = None, optimize_v: bool = True,
                      trace: Trace | None = None, stage: str = "", cap: int | None = None):
    """Block ascent on ``f_A - penalty * c4`` over {aux, rho, w, v, theta}.

    ``sol`` must satisfy C1-C3. Returns ``(solution, aux, trace)``.
    """
    opts = opts or SolveOptions()
    trace = trace if trace is not None else Trace()
    optimize_v = optimize_v and channels.N > 0
    stage = stage or f"gamma={penalty:g}"
    cap = cap or opts.inner_cap
    prev = None
    aux = None
    for it in range(cap):
        aux = tight_aux(cfg, channels, sol)
        trace.log(cfg, channels, sol, aux, stage, penalty, it, "aux")
        value = trace.records[-1].penalized
        if prev is not None and value - prev <= opts.inner_tol * max(1.0, abs(value)):
            break
        prev = value
        trace.inner_iters += 1

        sol = sol.replace(rho=update_all_rho(cfg, channels, sol, aux))
        trace.log(cfg, channels, sol, aux, stage, penalty, it, "rho")

        w, _ = update_w(cfg, channels, sol, aux, opts.sca_w)
        sol = sol.replace(w=w)
        trace.log(cfg, channels, sol, aux, stage, penalty, it, "w")

        if optimize_v:
            v, _ = reflection.update_v(cfg, channels, sol, aux, penalty, opts.sca_v)
            sol = sol.replace(v=v)
            trace.log(cfg, channels, sol, aux, stage, penalty, it, "v")
            theta = reflection.optimal_theta(cfg.reflection, v)
            if c4_violation(cfg.reflection, v, theta) <= c4_violation(cfg.reflection, v, sol.theta):
                sol = sol.replace(theta=theta)
            trace.log(cfg, channels, sol, aux, stage, penalty, it, "theta")
    if aux is None:
        aux = tight_aux(cfg, channels, sol)
    return sol, aux, trace


# --------------------------------------------------------------------------- full solves


def _ramp(cfg, channels, sol, opts, optimize_v, trace):
    if strictly_feasible(cfg, channels, sol):
        trace.ramp_scales.append(1.0)
        return sol
    scales = np.linspace(0.0, 1.0, opts.ramp_stages) if opts.ramp_stages > 1 else np.array([1.0])
    for s in scales:
        cfg_s = cfg.with_(gamma_min=s * cfg.gamma_min, p_min=s * cfg.p_min)
        trace.ramp_scales.append(float(s))
        if not strictly_feasible(cfg_s, channels, sol):
            repaired = feasible_point(cfg_s, channels, sol)
            if repaired is None:
                if s == scales[-1]:
                    return None
                continue
            sol = repaired
        if s < 1.0:
            sol, _, _ = alternating_solve(cfg_s, channels, sol, opts.gamma0, opts, optimize_v, trace,
                                          stage=f"ramp={s:g}", cap=opts.ramp_inner_cap)
    return sol


def _finish(cfg, channels, sol, trace, opts):
    metrics = evaluate(cfg, channels, sol)
    worst = constraint_residuals(cfg, channels, sol).max_violation()
    trace.max_residual = worst
    if worst > opts.audit_tol and trace.status != "infeasible":
        trace.status = "infeasible"
        trace.message = f"final audit failed (max residual {worst:.3e})"
    return SolveResult(sol, metrics, trace)


def solve_from(cfg: SystemConfig, channels: ChannelSet, sol: Solution, opts: SolveOptions | None = None,
               optimize_v: bool = True) -> SolveResult:
    """Ramp, penalty loop (when the RIS is optimized), exact C4 projection and fixed-``v`` refinement."""
    opts = opts or SolveOptions()
    trace = Trace()
    optimize_v = optimize_v and channels.N > 0
    start = _ramp(cfg, channels, sol, opts, optimize_v, trace)
    if start is None:
        trace.status = "infeasible"
        trace.message = "no feasible point reached by the constraint ramp"
        return _finish(cfg, channels, sol, trace, opts)
    sol = start

    if optimize_v:
        penalty = opts.gamma0
        reached = False
        while True:
            sol, _, _ = alternating_solve(cfg, channels, sol, penalty, opts, True, trace)
            trace.outer_stages += 1
            if c4_violation(cfg.reflection, sol.v, sol.theta) <= opts.c4_tol:
                reached = True
                break
            penalty *= opts.gamma_factor
            if penalty > opts.gamma_max:
                break
        if not reached:
            trace.status = "non_converged_c4"
        sol = sol.replace(v=reflection.project_c4(cfg.reflection, sol.theta))
        if not strictly_feasible(cfg, channels, sol, margin=0.0):
            repaired = feasible_point(cfg, channels, sol)
            if repaired is None:
                trace.status = "infeasible"
                trace.message = "projection onto the coupling left no feasible beamformer"
                return _finish(cfg, channels, sol, trace, opts)
            sol = repaired

    sol, _, _ = alternating_solve(cfg, channels, sol, 0.0, opts, False, trace, stage="refine")
    return _finish(cfg, channels, sol, trace, opts)


def penalty_solve(cfg: SystemConfig, channels: ChannelSet, opts: SolveOptions | None = None, rng=None) -> SolveResult:
    """Full joint design from a random-phase MRT start."""
    return solve_from(cfg, channels, initialize(cfg, channels, rng), opts, optimize_v=True)


def without_ris(cfg: SystemConfig, channels: ChannelSet):
    M, K = channels.M, channels.K
    return cfg.with_(N=0), ChannelSet.from_links(np.zeros((0, M), complex), channels.h_d, np.zeros((K, 0), complex))


def no_ris_baseline(cfg: SystemConfig, channels: ChannelSet, opts: SolveOptions | None = None) -> SolveResult:
    """Same solver with the RIS removed (``v = 0``); metrics refer to the RIS-free channel."""
    cfg0, ch0 = without_ris(cfg, channels)
    return solve_from(cfg0, ch0, initialize(cfg0, ch0, np.random.default_rng(0)), opts, optimize_v=False)


def random_phase_baseline(cfg: SystemConfig, channels: ChannelSet, opts: SolveOptions | None = None,
                          rng=None) -> SolveResult:
    """Random phases with the coupled amplitude, ``v`` held fixed; only ``(aux, rho, w)`` are optimized."""
    return solve_from(cfg, channels, initialize(cfg, channels, rng), opts, optimize_v=False)
