import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from risswipt.qcqp import (
    ComplexQuadratic,
    ConvexQuadraticProgram,
    complex_stack,
    complex_unstack,
    hermitian_to_real,
    kkt_residual,
    solve,
)


def ball_problem(c, P, x0=None):
    """maximize 2 c'x - |x|^2 subject to |x|^2 <= P."""
    n = c.size
    return ConvexQuadraticProgram(-np.eye(n), c, 0.0, [(np.eye(n), np.zeros(n), -P)],
                                  np.zeros(n) if x0 is None else x0)


def random_2d(rng, m):
    B = rng.standard_normal((2, 2))
    cons = []
    for _ in range(m):
        C = rng.standard_normal((2, 2))
        cons.append((C @ C.T + 0.1 * np.eye(2), 0.3 * rng.standard_normal(2), -1.0))
    return ConvexQuadraticProgram(-(B @ B.T) - 0.05 * np.eye(2), 2 * rng.standard_normal(2), 0.0, cons, np.zeros(2))


def grid_optimum(prob, half_width=3.0, n=400):
    xs = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(xs, xs)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    ok = np.ones(len(pts), bool)
    for A, b, c in prob.constraints:
        ok &= np.einsum("pi,ij,pj->p", pts, A, pts) + 2 * pts @ b + c <= 0
    vals = np.einsum("pi,ij,pj->p", pts, prob.A0, pts) + 2 * pts @ prob.b0 + prob.c0
    return vals[ok].max()


def test_complex_stack_round_trip():
    assert np.array_equal(complex_stack(1 + 2j), [1.0, 2.0])
    assert complex_unstack([1.0, 2.0]) == 1 + 2j
    assert np.array_equal(complex_stack(np.zeros(3, complex)), np.zeros(6))


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10))
def test_hermitian_form_preserved(seed, n):
    rng = np.random.default_rng(seed)
    h, w, z = crandn(rng, n), crandn(rng, n), crandn(rng, n)
    # |h w|^2 = w^H (h^H h) w
    Q = np.outer(h.conj(), h)
    x = complex_stack(w)
    assert x @ hermitian_to_real(Q) @ x == pytest.approx(abs(h @ w) ** 2, rel=1e-12)
    q = ComplexQuadratic(Q, crandn(rng, n), 0.7)
    A, b, c = q.to_real()
    xz = complex_stack(z)
    assert xz @ A @ xz + 2 * b @ xz + c == pytest.approx(q(z), rel=1e-12, abs=1e-12)
    np.testing.assert_array_equal(complex_unstack(complex_stack(z)), z)


def test_unconstrained_optimum_inside_ball(rng):
    prob = ConvexQuadraticProgram(-np.eye(3), np.zeros(3), 0.0, [(np.eye(3), np.zeros(3), -1.0)],
                                  0.01 * rng.standard_normal(3))
    res = solve(prob)
    assert res.status == "converged"
    np.testing.assert_allclose(res.x, 0.0, atol=1e-8)


@pytest.mark.parametrize("n", [2, 4, 64, 160])
def test_active_ball_closed_form(n, rng):
    c = rng.standard_normal(n)
    c *= 3.0 / np.linalg.norm(c)
    P = 2.0
    res = solve(ball_problem(c, P))
    assert res.status == "converged"
    np.testing.assert_allclose(res.x, c * np.sqrt(P) / np.linalg.norm(c), atol=1e-6)
    assert res.kkt_residual <= 1e-8
    assert res.multipliers[0] == pytest.approx(np.linalg.norm(c) / np.sqrt(P) - 1, rel=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_matches_grid_search_2d(seed):
    rng = np.random.default_rng(seed)
    prob = random_2d(rng, int(rng.integers(1, 4)))
    res = solve(prob)
    assert res.status == "converged"
    assert res.kkt_residual <= 1e-8
    assert np.all(prob.constraint_values(res.x) <= 1e-8)
    assert res.objective_value >= grid_optimum(prob) - 1e-3


def test_stage_values_non_decreasing(rng):
    for _ in range(10):
        res = solve(random_2d(rng, 3))
        assert np.all(np.diff(res.stage_values) >= -1e-9)


def test_infeasible_start_reported():
    prob = ball_problem(np.ones(2), 1.0, x0=np.array([2.0, 0.0]))
    assert solve(prob).status == "infeasible_start"
    boundary = ball_problem(np.ones(2), 1.0, x0=np.array([1.0, 0.0]))
    assert solve(boundary).status == "infeasible_start"


def test_newton_cap_reported():
    res = solve(ball_problem(np.full(4, 3.0), 1.0), max_newton=3)
    assert res.status == "max_iter"
    assert res.iterations == 3


def test_convexity_check():
    prob = ball_problem(np.ones(2), 1.0)
    prob.check_convexity()
    bad = ConvexQuadraticProgram(np.eye(2), np.zeros(2), 0.0, [], np.zeros(2))
    with pytest.raises(ValueError):
        bad.check_convexity()


def test_kkt_residual_rejects_negative_multiplier():
    prob = ball_problem(np.ones(2), 1.0)
    assert kkt_residual(prob, np.zeros(2), np.array([-1.0])) == np.inf


def test_linear_constraints_and_many_dims(rng):
    n = 40
    B = rng.standard_normal((n, n))
    cons = [(np.zeros((n, n)), rng.standard_normal(n), -1.0) for _ in range(6)]
    cons.append((np.eye(n), np.zeros(n), -4.0))
    prob = ConvexQuadraticProgram(-B @ B.T / n, 5 * rng.standard_normal(n), 0.0, cons, np.zeros(n))
    res = solve(prob)
    assert res.status == "converged"
    assert res.kkt_residual <= 1e-8
    assert np.all(prob.constraint_values(res.x) <= 1e-8)


def test_no_constraints_solves_linear_system(rng):
    B = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    res = solve(ConvexQuadraticProgram(-(B @ B.T) - np.eye(3), b, 0.0, [], np.zeros(3)))
    np.testing.assert_allclose((B @ B.T + np.eye(3)) @ res.x, b, atol=1e-10)
