"""RIS block: amplitude model, penalized SCA update of ``v`` and per-element phase update."""
from __future__ import annotations

import math

import numpy as np

from .beamforming import check_expansion_point
from .fp import AuxVars, f_a_value
from .model import ChannelSet, ReflectionModel, Solution, SystemConfig, c4_violation
from .qcqp import ComplexQuadratic, ConvexQuadraticProgram
from .scalar import golden_section_max
from .surrogate import AffineOutputs, ScaOptions, objective_form, sca_step, surrogate_constraints

THETA_GRID = 2048


def reflection_amplitude(model: ReflectionModel, theta):
    return model.amplitude(theta)


def project_c4(model: ReflectionModel, theta) -> np.ndarray:
    """Reflection vector that satisfies the amplitude/phase coupling exactly."""
    return model.coefficient(theta)


def v_outputs(channels: ChannelSet, w) -> AffineOutputs:
    """``conj(h_k w_i) = conj(h_{d,k} w_i) + (H_{r,k} w_i)^H v`` as an affine map of ``v``."""
    w = np.asarray(w, dtype=complex)
    D = np.conj(channels.h_d @ w.T)
    P = np.einsum("knm,im->kin", channels.H_r, w)
    return AffineOutputs(D, P, conjugated=True)


def penalty_form(model: ReflectionModel, theta, weight: float) -> ComplexQuadratic:
    """``-weight * ||v - f(theta) e^{j theta}||^2``."""
    u = project_c4(model, theta)
    n = u.size
    return ComplexQuadratic(-weight * np.eye(n, dtype=complex), weight * u, -weight * float(np.sum(np.abs(u) ** 2)))


def _penalized_objective(cfg, channels, sol, aux, penalty):
    obj = objective_form(cfg, v_outputs(channels, sol.w), sol.rho, aux)
    pen = penalty_form(cfg.reflection, sol.theta, penalty)
    return ComplexQuadratic(obj.Q + pen.Q, obj.c + pen.c, obj.d + pen.d)


def penalized_value(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars, penalty: float) -> float:
    return f_a_value(cfg, channels, sol, aux) - penalty * c4_violation(cfg.reflection, sol.v, sol.theta)


def build_v_subproblem(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars,
                       penalty: float, check: bool = True) -> ConvexQuadraticProgram:
    if check:
        check_expansion_point(cfg, channels, sol)
    out = v_outputs(channels, sol.w)
    v_t = np.asarray(sol.v, dtype=complex)
    cons = surrogate_constraints(cfg, out, sol.rho, v_t)
    return ConvexQuadraticProgram.from_complex(_penalized_objective(cfg, channels, sol, aux, penalty), cons, v_t)


def update_v(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars, penalty: float,
             opts: ScaOptions | None = None):
    """Penalized SCA over ``v``; returns ``(v, trace)`` with the penalized ``f_A`` per accepted iterate."""
    opts = opts or ScaOptions()
    if channels.N == 0:
        return np.asarray(sol.v, dtype=complex), [penalized_value(cfg, channels, sol, aux, penalty)]
    check_expansion_point(cfg, channels, sol)
    out = v_outputs(channels, sol.w)
    objective = _penalized_objective(cfg, channels, sol, aux, penalty)
    v = np.asarray(sol.v, dtype=complex)
    value = penalized_value(cfg, channels, sol, aux, penalty)
    trace = [value]
    for _ in range(opts.max_iter):
        cons = surrogate_constraints(cfg, out, sol.rho, v)
        v_new, _ = sca_step(objective, cons, v, opts)
        if v_new is None:
            break
        cand = sol.replace(v=v_new)
        new_value = penalized_value(cfg, channels, cand, aux, penalty)
        if new_value < value:
            break
        gain = new_value - value
        v, value = v_new, new_value
        trace.append(value)
        if gain <= opts.tol * max(1.0, abs(value)):
            break
    return v, trace


def theta_objective(model: ReflectionModel, v_n, theta):
    """``2 f(theta) |v_n| cos(arg v_n - theta) - f(theta)^2`` (broadcasts)."""
    f = model.amplitude(theta)
    return 2.0 * f * np.abs(v_n) * np.cos(np.angle(v_n) - theta) - f**2


def optimal_theta(model: ReflectionModel, v, grid: int = THETA_GRID, candidates: int = 4) -> np.ndarray:
    """Per-element maximizer of :func:`theta_objective` over ``[-pi, pi]``.

    A uniform grid locates the best few local maxima; each is refined by
    golden-section search inside its grid cell and the best refined value
    wins. Accepts a scalar or a vector of coefficients.
    """
    v = np.asarray(v, dtype=complex)
    scalar = v.ndim == 0
    v = np.atleast_1d(v)
    if v.size == 0:
        return np.zeros(0)
    th = np.linspace(-math.pi, math.pi, grid + 1)
    vals = theta_objective(model, v[:, None], th[None, :])
    # local maxima on the grid (endpoints compare with their single neighbour)
    left = np.concatenate([np.full((v.size, 1), -np.inf), vals[:, :-1]], axis=1)
    right = np.concatenate([vals[:, 1:], np.full((v.size, 1), -np.inf)], axis=1)
    peaks = np.where((vals >= left) & (vals >= right), vals, -np.inf)
    top = np.argsort(-peaks, axis=1)[:, :candidates]
    h = th[1] - th[0]
    centers = th[top]
    lo = np.maximum(centers - h, -math.pi)
    hi = np.minimum(centers + h, math.pi)
    vv = np.broadcast_to(v[:, None], top.shape)
    x, fx = golden_section_max(lambda t: theta_objective(model, vv, t), lo, hi, tol=1e-12)
    grid_best = np.take_along_axis(vals, top, axis=1)
    x = np.where(fx >= grid_best, x, centers)
    fx = np.maximum(fx, grid_best)
    best = x[np.arange(v.size), np.argmax(fx, axis=1)]
    return float(best[0]) if scalar else best
