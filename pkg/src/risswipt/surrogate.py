"""Quadratic forms shared by the beamformer and RIS SCA blocks.

Both blocks see every received amplitude ``y[k, i]`` as an affine function of
the complex block variable ``z``::

    y[k, i] = D[k, i] + P[k, i]^H z

For the beamformers ``z = vec(w)`` and ``y = h_k w_i``. For the RIS ``z = v``
and ``y`` is the *conjugate* of ``h_k w_i`` (because ``h_k`` depends on
``v^H``); magnitudes are unchanged and every auxiliary multiplying ``y`` is
conjugated accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fp import LN2, AuxVars
from .model import SystemConfig
from .qcqp import ComplexQuadratic, ConvexQuadraticProgram, complex_stack, solve


@dataclass(frozen=True)
class AffineOutputs:
    D: np.ndarray  # (K, K)
    P: np.ndarray  # (K, K, n)
    conjugated: bool = False

    def __call__(self, z) -> np.ndarray:
        return self.D + np.einsum("kin,n->ki", self.P.conj(), np.asarray(z, dtype=complex))


def _aux_for(outputs: AffineOutputs, aux: AuxVars):
    if outputs.conjugated:
        return aux.beta_i.conj(), aux.beta_e.conj()
    return aux.beta_i, aux.beta_e


def objective_form(cfg: SystemConfig, outputs: AffineOutputs, rho, aux: AuxVars) -> ComplexQuadratic:
    """``f_A`` as a concave quadratic in ``z`` (bits)."""
    D, P = outputs.D, outputs.P
    rho = np.asarray(rho, dtype=float)
    lam, eb = cfg.lambda_bar, cfg.eta_bar
    b_i, b_e = _aux_for(outputs, aux)
    a_i, a_e = aux.alpha_i, aux.alpha_e
    K = D.shape[0]
    idx = np.arange(K)

    weight = np.abs(b_i) ** 2 * rho + lam * np.sum(np.abs(b_e) ** 2, axis=1) * eb * (1.0 - rho)
    s_i = np.sqrt(rho * (1.0 + a_i))
    s_e = lam * np.sqrt(eb * (1.0 - rho) * (1.0 + a_e))

    Q = -np.einsum("k,kin,kim->nm", weight, P, P.conj())
    c = -np.einsum("k,ki,kin->n", weight, D, P)
    c = c + np.einsum("k,k,kn->n", s_i, b_i, P[idx, idx])
    c = c + np.einsum("k,ki,kin->n", s_e, b_e, P)
    d = np.sum(np.log1p(a_i) - a_i + lam * (np.log1p(a_e) - a_e))
    d -= np.sum(weight * np.sum(np.abs(D) ** 2, axis=1))
    d += 2.0 * np.sum(s_i * np.real(b_i.conj() * D[idx, idx]))
    d += 2.0 * np.sum(s_e * np.real(np.sum(b_e.conj() * D, axis=1)))
    d -= np.sum(np.abs(b_i) ** 2 * (rho * cfg.sigma2 + cfg.delta2))
    d -= lam * cfg.sigma2 * np.sum(np.abs(b_e) ** 2)
    return ComplexQuadratic(Q, c, float(d)).scaled(1.0 / LN2)


def sinr_surrogate(cfg: SystemConfig, outputs: AffineOutputs, rho, z_t, k: int) -> ComplexQuadratic:
    """C1 for user ``k`` with the useful power replaced by its tangent at ``z_t`` (``<= 0`` form)."""
    D, P = outputs.D, outputs.P
    gamma = cfg.gamma_min
    a = outputs(z_t)[k, k]
    others = [i for i in range(D.shape[0]) if i != k]
    Po, Do = P[k, others], D[k, others]
    Q = gamma * Po.T @ Po.conj()
    c = gamma * Do @ Po - a * P[k, k]
    d = (gamma * np.sum(np.abs(Do) ** 2) + gamma * (cfg.sigma2 + cfg.delta2 / rho[k])
         + abs(a) ** 2 - 2.0 * np.real(np.conj(a) * D[k, k]))
    return ComplexQuadratic(Q, c, float(d))


def harvest_surrogate(cfg: SystemConfig, outputs: AffineOutputs, rho, z_t, k: int) -> ComplexQuadratic:
    """C2 for user ``k`` with every ``|y[k, i]|^2`` replaced by its tangent at ``z_t`` (linear, ``<= 0`` form)."""
    D, P = outputs.D, outputs.P
    a = outputs(z_t)[k]
    gain = cfg.eta * (1.0 - rho[k])
    n = P.shape[2]
    c = -gain * (a @ P[k])
    d = cfg.p_min - gain * np.sum(2.0 * np.real(a.conj() * D[k]) - np.abs(a) ** 2)
    return ComplexQuadratic(np.zeros((n, n), complex), c, float(d))


def surrogate_constraints(cfg: SystemConfig, outputs: AffineOutputs, rho, z_t) -> list[ComplexQuadratic]:
    rho = np.asarray(rho, dtype=float)
    cons = []
    K = outputs.D.shape[0]
    if cfg.gamma_min > 0:
        cons += [sinr_surrogate(cfg, outputs, rho, z_t, k) for k in range(K)]
    if cfg.p_min > 0:
        cons += [harvest_surrogate(cfg, outputs, rho, z_t, k) for k in range(K)]
    return cons


# --------------------------------------------------------------------------- SCA driver


@dataclass(frozen=True)
class ScaOptions:
    max_iter: int = 10
    tol: float = 1e-4
    qcqp_tol: float = 1e-9
    max_newton: int = 400


def interior_start(prob: ConvexQuadraticProgram, min_slack: float = 1e-9, target: float = 1e-5):
    """Return a start point with every normalized constraint strictly negative.

    Expansion points of the SCA surrogates are feasible but frequently sit on
    the boundary (active power budget, active SINR target). In that case a
    small auxiliary barrier problem ``max -s - eps ||x - x0||^2`` subject to
    ``g_i(x) <= s``, ``s >= -target`` pulls the point into the interior.
    Returns ``None`` if no interior point is found.
    """
    x0 = np.asarray(prob.x0, dtype=float)
    if not prob.constraints:
        return x0
    g = prob.constraint_values(x0)
    scale = np.array([abs(x0 @ A @ x0) + abs(2.0 * b @ x0) + abs(c) for A, b, c in prob.constraints])
    scale = np.where(scale > 0, scale, 1.0)
    gn = g / scale
    if np.all(gn < -min_slack):
        return x0
    pulled = _pull_inside(prob, x0, scale, gn, min_slack)
    if pulled is not None:
        return pulled
    n = x0.size
    eps = 1e-3 / (x0 @ x0 + 1e-30)
    A0 = np.zeros((n + 1, n + 1))
    A0[:n, :n] = -eps * np.eye(n)
    b0 = np.zeros(n + 1)
    b0[:n] = eps * x0
    b0[n] = -0.5
    cons = []
    for (A, b, c), s in zip(prob.constraints, scale):
        Ab = np.zeros((n + 1, n + 1))
        Ab[:n, :n] = A / s
        cons.append((Ab, np.append(b / s, -0.5), c / s))
    floor_b = np.zeros(n + 1)
    floor_b[n] = -0.5
    cons.append((np.zeros((n + 1, n + 1)), floor_b, -target))
    s0 = max(float(np.max(gn)), -target / 2) + target
    aux = ConvexQuadraticProgram(A0, b0, -eps * (x0 @ x0), cons, np.append(x0, s0))
    res = solve(aux, tol=1e-3 * target, max_newton=200)
    x = res.x[:n]
    if res.status == "infeasible_start" or np.any(prob.constraint_values(x) >= 0):
        return None
    return x


def _pull_inside(prob, x0, scale, gn, min_slack):
    # short move along the summed inward normals of the near-active constraints
    near = np.flatnonzero(gn >= -1e-6)
    d = np.zeros_like(x0)
    for i in near:
        A, b, _ = prob.constraints[i]
        grad = 2.0 * (A @ x0 + b) / scale[i]
        nrm = np.linalg.norm(grad)
        if nrm == 0:
            return None
        d -= grad / nrm
    if not d.any():
        return None
    d /= np.linalg.norm(d)
    step = 1e-6 * max(np.linalg.norm(x0), 1e-12)
    for _ in range(8):
        x = x0 + step * d
        gx = prob.constraint_values(x) / scale
        if np.all(gx < -min_slack):
            return x
        step *= 4.0
    return None


def sca_step(objective: ComplexQuadratic, constraints, z_t, opts: ScaOptions):
    """Solve one convex surrogate from ``z_t``; returns ``(z_new, QcqpSolution)`` or ``(None, None)``."""
    prob = ConvexQuadraticProgram.from_complex(objective, constraints, z_t)
    x0 = interior_start(prob)
    if x0 is None:
        return None, None
    prob.x0 = x0
    res = solve(prob, tol=opts.qcqp_tol, max_newton=opts.max_newton)
    if res.status == "infeasible_start":
        return None, res
    n = x0.size // 2
    return res.x[:n] + 1j * res.x[n:], res
