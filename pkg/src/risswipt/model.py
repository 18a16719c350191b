"""Domain types and metric evaluation for the RIS-aided SWIPT downlink.

Array conventions used throughout the package:

* ``w``     -- beamformers, shape ``(K, M)``; row ``k`` is ``w_k``.
* ``h``     -- effective channels, shape ``(K, M)``; row ``k`` is ``h_k``.
* ``gram``  -- ``gram[k, i] = h_k w_i`` (no conjugation), shape ``(K, K)``.
* ``G``     -- BS->RIS, ``(N, M)``; ``h_d`` ``(K, M)``; ``h_r`` ``(K, N)``;
  ``H_r`` ``(K, N, M)`` with ``H_r[k] = diag(h_r[k]) @ G``.

All powers are in milliwatts; rates are in bits/s/Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

RHO_FLOOR = 1e-6


@dataclass(frozen=True)
class ReflectionModel:
    """Phase-dependent amplitude ``f(theta) = f_min + (1 - f_min) ((sin(theta - phi) + 1) / 2) ** alpha``."""

    f_min: float = 0.2
    alpha: float = 1.6
    phi: float = 0.43 * math.pi

    def __post_init__(self):
        if not 0.0 <= self.f_min <= 1.0:
            raise ValueError(f"f_min must lie in [0, 1], got {self.f_min}")
        if self.alpha < 0 or self.phi < 0:
            raise ValueError("alpha and phi must be non-negative")

    def amplitude(self, theta):
        base = (np.sin(np.asarray(theta, dtype=float) - self.phi) + 1.0) / 2.0
        # sin can overshoot 1 by an ulp
        base = np.clip(base, 0.0, 1.0)
        return self.f_min + (1.0 - self.f_min) * base**self.alpha

    def coefficient(self, theta):
        """Reflection coefficient ``f(theta) e^{j theta}``."""
        theta = np.asarray(theta, dtype=float)
        return self.amplitude(theta) * np.exp(1j * theta)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants. Powers in mW, ``gamma_min`` linear."""

    M: int = 8
    K: int = 4
    N: int = 60
    P_T: float = 1e4
    sigma2: float = 1e-4
    delta2: float = 1e-5
    eta: float = 0.6
    xi: float = 0.005
    lambda_bar: float = 0.6
    gamma_min: float = 10.0
    p_min: float = 1e-5
    reflection: ReflectionModel = field(default_factory=ReflectionModel)

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.N < 0:
            raise ValueError(f"need M >= 1, K >= 1, N >= 0; got M={self.M}, K={self.K}, N={self.N}")
        for name in ("P_T", "sigma2", "delta2", "p_min"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (0.0 <= self.eta <= 1.0 and 0.0 <= self.xi <= 1.0):
            raise ValueError("eta and xi must lie in [0, 1]")
        # zero is allowed for the first stage of the constraint ramp
        if self.gamma_min < 0:
            raise ValueError("gamma_min must be non-negative")
        if self.lambda_bar < 0:
            raise ValueError("lambda_bar must be non-negative")

    @property
    def eta_bar(self) -> float:
        return self.xi * self.eta

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelSet:
    G: np.ndarray
    h_d: np.ndarray
    h_r: np.ndarray
    H_r: np.ndarray

    @classmethod
    def from_links(cls, G, h_d, h_r) -> "ChannelSet":
        G = np.asarray(G, dtype=complex)
        h_d = np.atleast_2d(np.asarray(h_d, dtype=complex))
        h_r = np.asarray(h_r, dtype=complex).reshape(h_d.shape[0], G.shape[0])
        if G.shape[1] != h_d.shape[1]:
            raise ValueError(f"G has {G.shape[1]} columns but h_d has {h_d.shape[1]}")
        H_r = h_r[:, :, None] * G[None, :, :]
        return cls(G=G, h_d=h_d, h_r=h_r, H_r=H_r)

    @property
    def M(self) -> int:
        return self.h_d.shape[1]

    @property
    def K(self) -> int:
        return self.h_d.shape[0]

    @property
    def N(self) -> int:
        return self.G.shape[0]


@dataclass(frozen=True)
class Solution:
    w: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    rho: np.ndarray

    def replace(self, **changes) -> "Solution":
        return replace(self, **changes)


@dataclass(frozen=True)
class Residuals:
    """Signed constraint residuals; a point is feasible iff every entry is <= 0 (``c4`` up to a tolerance)."""

    c1: np.ndarray
    c2: np.ndarray
    c3: float
    c4: float
    c5: np.ndarray
    rho_low: np.ndarray
    rho_high: np.ndarray

    def max_violation(self) -> float:
        """Largest residual over everything except the C4 coupling."""
        parts = [self.c1, self.c2, [self.c3], self.c5, self.rho_low, self.rho_high]
        return float(max(np.max(p) if len(p) else -np.inf for p in parts))


@dataclass(frozen=True)
class Metrics:
    sinr: np.ndarray
    rate_id_per_user: np.ndarray
    rate_id: float
    p_harv: np.ndarray
    rate_ph: float
    objective: float
    c4_violation: float


def effective_channels(channels: ChannelSet, v) -> np.ndarray:
    """``h_k = h_{d,k} + v^H H_{r,k}`` for every user, shape ``(K, M)``."""
    v = np.asarray(v, dtype=complex)
    if v.shape != (channels.N,):
        raise ValueError(f"v has shape {v.shape}, expected ({channels.N},)")
    if channels.N == 0:
        return channels.h_d.copy()
    return channels.h_d + v.conj() @ channels.H_r


def gram(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``gram[k, i] = h_k w_i``."""
    return h @ w.T


def _received(cfg: SystemConfig, channels: ChannelSet, sol: Solution):
    w = np.asarray(sol.w)
    if w.shape != (channels.K, channels.M):
        raise ValueError(f"w has shape {w.shape}, expected ({channels.K}, {channels.M})")
    p = np.abs(gram(effective_channels(channels, sol.v), w)) ** 2
    return p


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if rho.size and not (rho.min() > 0 and rho.max() <= 1):
        raise ValueError(f"power-split ratios must lie in (0, 1], got {rho}")
    return rho


def sinr_from_power(cfg: SystemConfig, p: np.ndarray, rho) -> np.ndarray:
    """SINR given received powers ``p[k, i] = |h_k w_i|^2``."""
    rho = _check_rho(rho)
    signal = np.diag(p)
    interference = p.sum(axis=1) - signal
    return signal / (interference + cfg.sigma2 + cfg.delta2 / rho)


def eh_snr_from_power(cfg: SystemConfig, p: np.ndarray, rho) -> np.ndarray:
    """Argument of the harvesting rate, ``xi eta (1 - rho) sum_i |h_k w_i|^2 / sigma^2``."""
    if cfg.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    rho = np.asarray(rho, dtype=float)
    return cfg.eta_bar * (1.0 - rho) * p.sum(axis=1) / cfg.sigma2


def sinr(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> np.ndarray:
    return sinr_from_power(cfg, _received(cfg, channels, sol), sol.rho)


def sum_rate_id(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> float:
    return float(np.sum(np.log2(1.0 + sinr(cfg, channels, sol))))


def harvested_power(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> np.ndarray:
    p = _received(cfg, channels, sol)
    return cfg.eta * (1.0 - np.asarray(sol.rho, dtype=float)) * p.sum(axis=1)


def rate_ph(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> float:
    p = _received(cfg, channels, sol)
    return float(np.sum(np.log2(1.0 + eh_snr_from_power(cfg, p, sol.rho))))


def weighted_objective(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> float:
    return evaluate(cfg, channels, sol).objective


def c4_violation(model: ReflectionModel, v, theta) -> float:
    v = np.asarray(v, dtype=complex)
    if v.size == 0:
        return 0.0
    return float(np.sum(np.abs(v - model.coefficient(theta)) ** 2))


def evaluate(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> Metrics:
    """All metrics from one pass over the received-power matrix."""
    p = _received(cfg, channels, sol)
    gamma = sinr_from_power(cfg, p, sol.rho)
    per_user = np.log2(1.0 + gamma)
    r_id = float(np.sum(per_user))
    r_ph = float(np.sum(np.log2(1.0 + eh_snr_from_power(cfg, p, sol.rho))))
    return Metrics(
        sinr=gamma,
        rate_id_per_user=per_user,
        rate_id=r_id,
        p_harv=cfg.eta * (1.0 - np.asarray(sol.rho, dtype=float)) * p.sum(axis=1),
        rate_ph=r_ph,
        objective=r_id + cfg.lambda_bar * r_ph,
        c4_violation=c4_violation(cfg.reflection, sol.v, sol.theta),
    )


def constraint_residuals(cfg: SystemConfig, channels: ChannelSet, sol: Solution) -> Residuals:
    p = _received(cfg, channels, sol)
    rho = np.asarray(sol.rho, dtype=float)
    theta = np.asarray(sol.theta, dtype=float)
    return Residuals(
        c1=cfg.gamma_min - sinr_from_power(cfg, p, rho),
        c2=cfg.p_min - cfg.eta * (1.0 - rho) * p.sum(axis=1),
        c3=float(np.sum(np.abs(sol.w) ** 2) - cfg.P_T),
        c4=c4_violation(cfg.reflection, sol.v, theta),
        c5=np.abs(theta) - math.pi,
        rho_low=RHO_FLOOR - rho,
        rho_high=rho - 1.0,
    )
