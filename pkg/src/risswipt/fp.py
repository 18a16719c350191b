"""Fractional-programming reformulation of the weighted rate objective.

Both log terms are rewritten with the Lagrangian-dual plus quadratic
transform. For user ``k`` with ``g[k, i] = h_k w_i`` and ``S_k = sum_i |g[k, i]|^2``:

    f_A = sum_k ln(1 + a_I) - a_I + lam (ln(1 + a_E) - a_E)
          + 2 sqrt(rho (1 + a_I)) Re(b_I^* g[k, k]) - |b_I|^2 (rho (S_k + sigma2) + delta2)
          + 2 lam sqrt(eb (1 - rho) (1 + a_E)) Re(sum_i b_E[i]^* g[k, i])
          - lam ||b_E||^2 (eb (1 - rho) S_k + sigma2)

with ``eb = xi * eta``. The harvesting auxiliary ``b_E`` carries one entry
per beam, which makes the transform tight against ``log(1 + eb (1 - rho) S_k / sigma2)``
for every ``K``. Values are reported in bits (the natural-log expression is
divided by ``ln 2``) so that ``f_A`` at its auxiliary maximizer equals the
weighted objective in bits/s/Hz exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    RHO_FLOOR,
    ChannelSet,
    Solution,
    SystemConfig,
    _check_rho,
    effective_channels,
    eh_snr_from_power,
    gram,
    sinr_from_power,
)
from .scalar import golden_section_max

LN2 = math.log(2.0)


class InfeasibleSplit(ValueError):
    """No power-split ratio satisfies C1 and C2 for the current beamformers and RIS."""


@dataclass(frozen=True)
class AuxVars:
    alpha_i: np.ndarray  # (K,)
    beta_i: np.ndarray  # (K,) complex
    alpha_e: np.ndarray  # (K,)
    beta_e: np.ndarray  # (K, K) complex, beta_e[k, i] pairs with h_k w_i

    @classmethod
    def zeros(cls, K: int) -> "AuxVars":
        return cls(np.zeros(K), np.zeros(K, complex), np.zeros(K), np.zeros((K, K), complex))


def _gram(channels: ChannelSet, sol: Solution) -> np.ndarray:
    return gram(effective_channels(channels, sol.v), np.asarray(sol.w))


def _alpha_closed_form(r):
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return (r2 + r * np.sqrt(r2 + 4.0)) * 0.5


def f_a_terms(cfg: SystemConfig, g: np.ndarray, rho, aux: AuxVars) -> np.ndarray:
    """Per-user contributions to ``f_A`` in nats."""
    rho = _check_rho(rho)
    lam, eb = cfg.lambda_bar, cfg.eta_bar
    S = np.sum(np.abs(g) ** 2, axis=1)
    a_i, b_i, a_e, b_e = aux.alpha_i, aux.beta_i, aux.alpha_e, aux.beta_e
    out = np.log1p(a_i) - a_i + lam * (np.log1p(a_e) - a_e)
    out = out + 2.0 * np.sqrt(rho * (1.0 + a_i)) * np.real(b_i.conj() * np.diag(g))
    out = out - np.abs(b_i) ** 2 * (rho * (S + cfg.sigma2) + cfg.delta2)
    out = out + 2.0 * lam * np.sqrt(eb * (1.0 - rho) * (1.0 + a_e)) * np.real(np.sum(b_e.conj() * g, axis=1))
    out = out - lam * np.sum(np.abs(b_e) ** 2, axis=1) * (eb * (1.0 - rho) * S + cfg.sigma2)
    return out


def f_a_value(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars) -> float:
    """Reformulated objective in bits."""
    return float(np.sum(f_a_terms(cfg, _gram(channels, sol), sol.rho, aux))) / LN2


def _beta_i(cfg, g, rho, alpha_i, S=None):
    S = (g.real**2 + g.imag**2).sum(axis=1) if S is None else S
    return np.sqrt(rho * (1.0 + alpha_i)) * g.diagonal() / (rho * (S + cfg.sigma2) + cfg.delta2)


def _beta_e(cfg, g, rho, alpha_e, S=None):
    S = (g.real**2 + g.imag**2).sum(axis=1) if S is None else S
    gain = cfg.eta_bar * (1.0 - rho)
    return (np.sqrt(gain * (1.0 + alpha_e)) / (gain * S + cfg.sigma2))[:, None] * g


def _id_update(cfg, g, rho, alpha_i, S=None):
    beta = _beta_i(cfg, g, rho, alpha_i, S)
    r = np.sqrt(rho) * (beta.conj() * g.diagonal()).real
    return _alpha_closed_form(r), beta


def _eh_update(cfg, g, rho, alpha_e, S=None):
    beta = _beta_e(cfg, g, rho, alpha_e, S)
    r = np.sqrt(cfg.eta_bar * (1.0 - rho)) * (beta.conj() * g).real.sum(axis=1)
    return _alpha_closed_form(r), beta


def update_aux_id(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars):
    """Closed-form ``beta_I`` (at the current ``alpha_I``), then ``alpha_I`` from the fresh ``beta_I``."""
    return _id_update(cfg, _gram(channels, sol), _check_rho(sol.rho), aux.alpha_i)


def update_aux_eh(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars):
    return _eh_update(cfg, _gram(channels, sol), _check_rho(sol.rho), aux.alpha_e)


def update_aux(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars) -> AuxVars:
    """One pass of both closed-form updates (same values as the two separate updates, fused)."""
    g = _gram(channels, sol)
    rho = _check_rho(sol.rho)
    d = g.diagonal()
    S = (g * g.conj()).real.sum(axis=1)
    D = rho * (S + cfg.sigma2) + cfg.delta2
    c_i = np.sqrt(rho * (1.0 + aux.alpha_i)) / D
    gain = cfg.eta_bar * (1.0 - rho)
    E = gain * S + cfg.sigma2
    c_e = np.sqrt(gain * (1.0 + aux.alpha_e)) / E
    # r = sqrt(rho) Re(beta_I^* d) and its harvesting counterpart, with beta substituted
    r = np.concatenate([np.sqrt(rho) * c_i * (d * d.conj()).real, np.sqrt(gain) * c_e * S])
    alpha = _alpha_closed_form(r)
    K = rho.size
    return AuxVars(alpha[:K], c_i * d, alpha[K:], c_e[:, None] * g)


def tight_aux(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> AuxVars:
    """Joint maximizer of ``f_A`` over the auxiliaries (the fixed point of :func:`update_aux`).

    At this point ``alpha_I`` equals the SINR, ``alpha_E`` the harvesting SNR,
    and ``f_A`` equals the weighted objective.
    """
    g = _gram(channels, sol)
    rho = _check_rho(sol.rho)
    p = np.abs(g) ** 2
    a_i = sinr_from_power(cfg, p, rho)
    a_e = eh_snr_from_power(cfg, p, rho)
    return AuxVars(a_i, _beta_i(cfg, g, rho, a_i), a_e, _beta_e(cfg, g, rho, a_e))


def rho_feasible_interval(cfg: SystemConfig, channels: ChannelSet, sol: Solution, k: int):
    """Range of ``rho_k`` allowed by C1 (in its linear form) and C2, clipped to ``[RHO_FLOOR, 1]``.

    The interval is empty when ``lo > hi``.
    """
    p = np.abs(_gram(channels, sol)) ** 2
    return _interval(cfg, p, k)


def _interval(cfg: SystemConfig, p: np.ndarray, k: int):
    lo, hi = RHO_FLOOR, 1.0
    signal = p[k, k]
    interference = p[k].sum() - signal
    if cfg.gamma_min > 0:
        coef = signal - cfg.gamma_min * (interference + cfg.sigma2)
        rhs = cfg.gamma_min * cfg.delta2
        if coef <= 0:
            if rhs > 0:
                return math.inf, -math.inf
        else:
            lo = max(lo, rhs / coef)
    if cfg.p_min > 0:
        harvest = cfg.eta * p[k].sum()
        if harvest <= 0:
            return math.inf, -math.inf
        hi = min(hi, 1.0 - cfg.p_min / harvest)
    return lo, hi


def rho_coefficients(cfg: SystemConfig, g: np.ndarray, aux: AuxVars, k: int):
    """``(a, b, c, d)`` of the per-user terms ``a sqrt(rho) + b sqrt(1 - rho) + c rho + d (1 - rho)`` (nats)."""
    S = float(np.sum(np.abs(g[k]) ** 2))
    lam, eb = cfg.lambda_bar, cfg.eta_bar
    a = 2.0 * math.sqrt(1.0 + aux.alpha_i[k]) * float(np.real(np.conj(aux.beta_i[k]) * g[k, k]))
    c = -abs(aux.beta_i[k]) ** 2 * (S + cfg.sigma2)
    b = 2.0 * lam * math.sqrt(eb * (1.0 + aux.alpha_e[k])) * float(np.real(np.sum(aux.beta_e[k].conj() * g[k])))
    d = -lam * float(np.sum(np.abs(aux.beta_e[k]) ** 2)) * eb * S
    return a, b, c, d


def maximize_split(a: float, b: float, c: float, d: float, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Maximize ``a sqrt(r) + b sqrt(1 - r) + c r + d (1 - r)`` over ``[lo, hi]``."""
    if lo > hi:
        raise InfeasibleSplit(f"empty split interval [{lo}, {hi}]")

    def phi(r):
        r = np.asarray(r, dtype=float)
        return a * np.sqrt(r) + b * np.sqrt(np.clip(1.0 - r, 0.0, None)) + c * r + d * (1.0 - r)

    if hi - lo <= tol:
        return hi
    if a >= 0 and b >= 0:
        # concave: bisect on the (decreasing) derivative
        def slope(r):
            s = c - d
            if a > 0:
                s += a / (2.0 * math.sqrt(r))
            if b > 0:
                s -= b / (2.0 * math.sqrt(1.0 - r)) if r < 1.0 else math.inf
            return s

        if slope(lo) <= 0:
            return lo
        if slope(hi) >= 0:
            return hi
        left, right = lo, hi
        while right - left > tol:
            mid = 0.5 * (left + right)
            if slope(mid) > 0:
                left = mid
            else:
                right = mid
        return 0.5 * (left + right)
    # sign-indefinite terms: dense grid, then refine around the best cell
    grid = np.linspace(lo, hi, 4097)
    vals = phi(grid)
    j = int(np.argmax(vals))
    x, fx = golden_section_max(phi, np.array([grid[max(j - 1, 0)]]), np.array([grid[min(j + 1, grid.size - 1)]]), tol)
    return float(x[0]) if fx[0] >= vals[j] else float(grid[j])


def update_rho(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars, k: int) -> float:
    """Optimal ``rho_k`` for fixed auxiliaries, beamformers and RIS; never worse than the current one."""
    g = _gram(channels, sol)
    return _update_rho_from_gram(cfg, g, np.asarray(sol.rho, dtype=float), aux, k)


def _update_rho_from_gram(cfg, g, rho, aux, k):
    lo, hi = _interval(cfg, np.abs(g) ** 2, k)
    a, b, c, d = rho_coefficients(cfg, g, aux, k)
    best = maximize_split(a, b, c, d, lo, hi)
    cur = float(rho[k])
    if lo <= cur <= hi:
        def phi(r):
            return a * math.sqrt(r) + b * math.sqrt(max(1.0 - r, 0.0)) + c * r + d * (1.0 - r)

        if phi(best) < phi(cur):
            return cur
    return best


def update_all_rho(cfg: SystemConfig, channels: ChannelSet, sol: Solution, aux: AuxVars) -> np.ndarray:
    g = _gram(channels, sol)
    rho = np.asarray(sol.rho, dtype=float).copy()
    for k in range(channels.K):
        rho[k] = _update_rho_from_gram(cfg, g, rho, aux, k)
    return rho
