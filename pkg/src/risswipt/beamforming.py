"""SCA block for the transmit beamformers."""
from __future__ import annotations

import numpy as np

from .fp import AuxVars, f_a_value
from .model import ChannelSet, Solution, SystemConfig, constraint_residuals, effective_channels
from .qcqp import ComplexQuadratic, ConvexQuadraticProgram
from .surrogate import AffineOutputs, ScaOptions, objective_form, sca_step, surrogate_constraints

FEAS_TOL = 1e-9


class InfeasibleExpansion(ValueError):
    """The SCA expansion point violates a true constraint."""


def w_outputs(channels: ChannelSet, v) -> AffineOutputs:
    """``y[k, i] = h_k w_i`` as a linear map of ``vec(w)``."""
    h = effective_channels(channels, v)
    K, M = h.shape
    P = np.zeros((K, K, K * M), complex)
    for i in range(K):
        P[:, i, i * M:(i + 1) * M] = h.conj()
    return AffineOutputs(np.zeros((K, K), complex), P)


def power_budget(cfg: SystemConfig, K: int, M: int) -> ComplexQuadratic:
    n = K * M
    return ComplexQuadratic(np.eye(n, dtype=complex), np.zeros(n, complex), -cfg.P_T)


def check_expansion_point(cfg: SystemConfig, channels: ChannelSet, sol: Solution, tol: float = FEAS_TOL):
    res = constraint_residuals(cfg, channels, sol)
    worst = max(
        float(np.max(res.c1 / max(cfg.gamma_min, 1.0))) if cfg.gamma_min > 0 else -np.inf,
        float(np.max(res.c2 / max(cfg.p_min, 1e-300))) if cfg.p_min > 0 else -np.inf,
        res.c3 / max(cfg.P_T, 1e-300),
    )
    if worst > tol:
        raise InfeasibleExpansion(f"expansion point violates C1-C3 (relative residual {worst:.3e})")


def build_w_subproblem(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars,
                       check: bool = True) -> ConvexQuadraticProgram:
    """Concave surrogate in ``vec(w)`` around ``sol.w``: objective is the w-part of ``f_A`` (plus its constant)."""
    if check:
        check_expansion_point(cfg, channels, sol)
    out = w_outputs(channels, sol.v)
    z_t = np.asarray(sol.w, dtype=complex).ravel()
    cons = surrogate_constraints(cfg, out, sol.rho, z_t) + [power_budget(cfg, channels.K, channels.M)]
    return ConvexQuadraticProgram.from_complex(objective_form(cfg, out, sol.rho, aux), cons, z_t)


def update_w(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars,
             opts: ScaOptions | None = None):
    """Iterate the beamformer surrogate until the relative ``f_A`` gain drops below ``opts.tol``.

    Returns ``(w, trace)`` where ``trace`` lists ``f_A`` after each accepted
    iterate, starting with the value at ``sol.w``. A candidate that would lower
    ``f_A`` is discarded, so the trace is non-decreasing.
    """
    opts = opts or ScaOptions()
    check_expansion_point(cfg, channels, sol)
    out = w_outputs(channels, sol.v)
    K, M = channels.K, channels.M
    budget = power_budget(cfg, K, M)
    w = np.asarray(sol.w, dtype=complex)
    value = f_a_value(cfg, channels, sol, aux)
    trace = [value]
    objective = objective_form(cfg, out, sol.rho, aux)
    for _ in range(opts.max_iter):
        z_t = w.ravel()
        cons = surrogate_constraints(cfg, out, sol.rho, z_t) + [budget]
        z_new, _ = sca_step(objective, cons, z_t, opts)
        if z_new is None:
            break
        cand = sol.replace(w=z_new.reshape(K, M))
        new_value = f_a_value(cfg, channels, cand, aux)
        if new_value < value:
            break
        gain = new_value - value
        w, value = cand.w, new_value
        trace.append(value)
        if gain <= opts.tol * max(1.0, abs(value)):
            break
    return w, trace
