import math
from pathlib import Path

import numpy as np
import pytest

from risswipt.channels import GeometryConfig, sample_channels
from risswipt.model import ChannelSet, ReflectionModel, Solution, SystemConfig

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def random_instance(rng, M=None, K=None, N=None, **cfg_changes):
    """Small random scenario with unit-scale channels and a random point (rho interior)."""
    M = M or int(rng.integers(1, 9))
    K = K or int(rng.integers(1, 5))
    N = int(rng.integers(0, 17)) if N is None else N
    cfg = SystemConfig(M=M, K=K, N=N, **cfg_changes)
    ch = ChannelSet.from_links(0.3 * crandn(rng, N, M), crandn(rng, K, M), 0.3 * crandn(rng, K, N))
    theta = rng.uniform(-math.pi, math.pi, N)
    sol = Solution(
        w=0.1 * crandn(rng, K, M),
        v=cfg.reflection.coefficient(theta),
        theta=theta,
        rho=rng.uniform(0.05, 0.95, K),
    )
    return cfg, ch, sol


def reference_channels(seed=42, **changes):
    cfg = SystemConfig(**changes)
    return cfg, sample_channels(cfg, GeometryConfig(), seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def model():
    return ReflectionModel()


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
