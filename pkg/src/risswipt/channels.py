"""Scenario geometry and Rician channel sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, SystemConfig


@dataclass(frozen=True)
class GeometryConfig:
    bs_pos: tuple[float, float] = (0.0, 0.0)
    ris_pos: tuple[float, float] = (0.0, 5.0)
    ue_center: tuple[float, float] = (5.0, 5.0)
    ue_radius: float = 1.0
    pathloss_ris: float = 2.2
    pathloss_direct: float = 3.6
    c0_db: float = -30.0
    d0: float = 1.0
    rician_eps_db: float = 5.0
    d_over_lambda: float = 0.5
    angles: str = "random"  # "random" or "geometry"

    def __post_init__(self):
        if self.ue_radius <= 0 or self.d0 <= 0:
            raise ValueError("ue_radius and d0 must be positive")
        if self.pathloss_ris <= 0 or self.pathloss_direct <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.angles not in ("random", "geometry"):
            raise ValueError(f"angles must be 'random' or 'geometry', got {self.angles!r}")

    @property
    def rician_eps(self) -> float:
        return 10.0 ** (self.rician_eps_db / 10.0)


def steering_vector(n: int, angle: float, d_over_lambda: float = 0.5) -> np.ndarray:
    """ULA response ``[exp(j 2 pi (d/lambda) m sin(angle))]_{m=0..n-1}``."""
    if n <= 0:
        raise ValueError("steering vector needs at least one element")
    m = np.arange(n)
    return np.exp(1j * 2.0 * math.pi * d_over_lambda * m * math.sin(angle))


def path_loss(dist: float, exponent: float, geo: GeometryConfig) -> float:
    """Linear power gain ``C0 (d / d0) ** -exponent``."""
    if np.any(np.asarray(dist) <= 0):
        raise ValueError("link distance must be positive")
    return 10.0 ** (geo.c0_db / 10.0) * (np.asarray(dist) / geo.d0) ** (-exponent)


def _nlos(rng: np.random.Generator, shape) -> np.ndarray:
    # real/imag interleaved in the last axis keeps leading rows stable when the shape grows
    x = rng.standard_normal((*np.atleast_1d(shape), 2))
    return (x[..., 0] + 1j * x[..., 1]) / math.sqrt(2.0)


def _rician(los: np.ndarray, nlos: np.ndarray, eps: float, gain: float) -> np.ndarray:
    return math.sqrt(gain) * (math.sqrt(eps / (1 + eps)) * los + math.sqrt(1 / (1 + eps)) * nlos)


def _angle_between(src, dst) -> float:
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    return math.atan2(dy, dx)


def sample_ue_positions(K: int, geo: GeometryConfig, rng: np.random.Generator) -> np.ndarray:
    # one (radius, angle) pair per user so the first users do not depend on K
    u = rng.random((K, 2))
    r = geo.ue_radius * np.sqrt(u[:, 0])
    phi = math.pi * (2.0 * u[:, 1] - 1.0)
    return np.column_stack([geo.ue_center[0] + r * np.cos(phi), geo.ue_center[1] + r * np.sin(phi)])


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_channels(cfg: SystemConfig, geo: GeometryConfig, rng) -> ChannelSet:
    """Draw one channel realization.

    ``rng`` may be a Generator, a SeedSequence or an integer seed. Each link
    family gets its own child stream, and RIS-side draws are generated one
    RIS element (row of ``G``) or one user at a time, so realizations with
    different ``N`` share their common leading elements.
    """
    rng = _as_generator(rng)
    s_pos, s_ang, s_dir, s_g, *s_users = rng.spawn(4 + cfg.K)
    M, K, N = cfg.M, cfg.K, cfg.N
    eps = geo.rician_eps
    dl = geo.d_over_lambda

    ue = sample_ue_positions(K, geo, s_pos)
    # angles: [RIS arrival, BS departure] then (direct, RIS->UE) per user; the layout does not
    # depend on N and the first users' angles do not depend on K
    ang = s_ang.uniform(-math.pi / 2, math.pi / 2, size=2 + 2 * K)
    if geo.angles == "geometry":
        ang[0] = _angle_between(geo.bs_pos, geo.ris_pos)
        ang[1] = ang[0]
        for k in range(K):
            ang[2 + 2 * k] = _angle_between(geo.bs_pos, ue[k])
            ang[3 + 2 * k] = _angle_between(geo.ris_pos, ue[k])

    d_direct = np.linalg.norm(ue - np.asarray(geo.bs_pos), axis=1)
    d_ris_ue = np.linalg.norm(ue - np.asarray(geo.ris_pos), axis=1)
    d_bs_ris = float(np.linalg.norm(np.asarray(geo.ris_pos) - np.asarray(geo.bs_pos)))

    h_d = np.empty((K, M), dtype=complex)
    for k in range(K):
        los = steering_vector(M, ang[2 + 2 * k], dl).conj()
        h_d[k] = _rician(los, _nlos(s_dir, M), eps, path_loss(d_direct[k], geo.pathloss_direct, geo))

    G = np.empty((N, M), dtype=complex)
    h_r = np.empty((K, N), dtype=complex)
    if N > 0:
        los_g = np.outer(steering_vector(N, ang[0], dl), steering_vector(M, ang[1], dl).conj())
        G[:] = _rician(los_g, _nlos(s_g, (N, M)), eps, path_loss(d_bs_ris, geo.pathloss_ris, geo))
        for k in range(K):
            los = steering_vector(N, ang[3 + 2 * k], dl).conj()
            h_r[k] = _rician(los, _nlos(s_users[k], N), eps, path_loss(d_ris_ue[k], geo.pathloss_ris, geo))
    return ChannelSet.from_links(G, h_d, h_r)
