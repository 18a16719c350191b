"""Beamformer and RIS blocks."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from risswipt.beamforming import InfeasibleExpansion, build_w_subproblem, check_expansion_point, update_w
from risswipt.fp import f_a_value, tight_aux
from risswipt.model import ReflectionModel, c4_violation, constraint_residuals
from risswipt.optimizer import feasible_point
from risswipt.reflection import (
    build_v_subproblem,
    optimal_theta,
    penalized_value,
    penalty_form,
    project_c4,
    theta_objective,
    update_v,
)
from risswipt.surrogate import ScaOptions


def feasible_instance(seed, N=5, **changes):
    rng = np.random.default_rng(seed)
    changes = {"gamma_min": 1.0, "p_min": 1e-4, "P_T": 10.0, **changes}
    cfg, ch, sol = random_instance(rng, M=4, K=2, N=N, **changes)
    sol = feasible_point(cfg, ch, sol)
    assert sol is not None
    return cfg, ch, sol


@pytest.mark.parametrize("seed", range(6))
def test_update_w_monotone_and_feasible(seed):
    cfg, ch, sol = feasible_instance(seed)
    aux = tight_aux(cfg, ch, sol)
    w, trace = update_w(cfg, ch, sol, aux)
    assert np.all(np.diff(trace) >= 0)
    new = sol.replace(w=w)
    assert f_a_value(cfg, ch, new, aux) == pytest.approx(trace[-1])
    res = constraint_residuals(cfg, ch, new)
    assert np.all(res.c1 <= 1e-9 * cfg.gamma_min) and np.all(res.c2 <= 1e-12) and res.c3 <= 1e-9 * cfg.P_T


def test_w_subproblem_objective_is_f_a():
    cfg, ch, sol = feasible_instance(0)
    aux = tight_aux(cfg, ch, sol)
    prob = build_w_subproblem(cfg, ch, sol, aux)
    prob.check_convexity()
    assert prob.objective(prob.x0) == pytest.approx(f_a_value(cfg, ch, sol, aux), rel=1e-12)
    assert len(prob.constraints) == 2 * 2 + 1


def test_w_expansion_point_must_be_feasible():
    cfg, ch, sol = feasible_instance(1)
    loud = sol.replace(w=sol.w * 100)
    with pytest.raises(InfeasibleExpansion):
        check_expansion_point(cfg, ch, loud)
    with pytest.raises(InfeasibleExpansion):
        update_w(cfg, ch, loud, tight_aux(cfg, ch, loud))


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("penalty", [0.0, 1.0, 100.0])
def test_update_v_monotone_and_feasible(seed, penalty):
    cfg, ch, sol = feasible_instance(seed)
    aux = tight_aux(cfg, ch, sol)
    v, trace = update_v(cfg, ch, sol, aux, penalty)
    assert np.all(np.diff(trace) >= 0)
    new = sol.replace(v=v)
    assert penalized_value(cfg, ch, new, aux, penalty) == pytest.approx(trace[-1])
    res = constraint_residuals(cfg, ch, new)
    assert np.all(res.c1 <= 1e-9 * cfg.gamma_min) and np.all(res.c2 <= 1e-12)


def test_v_subproblem_objective_is_penalized_f_a():
    cfg, ch, sol = feasible_instance(2)
    aux = tight_aux(cfg, ch, sol)
    rng = np.random.default_rng(0)
    sol = sol.replace(v=sol.v + 0.1 * rng.standard_normal(5))
    prob = build_v_subproblem(cfg, ch, sol, aux, penalty=3.0, check=False)
    prob.check_convexity()
    assert prob.objective(prob.x0) == pytest.approx(penalized_value(cfg, ch, sol, aux, 3.0), rel=1e-12)


def test_penalty_form_matches_violation(model, rng):
    th = rng.uniform(-math.pi, math.pi, 6)
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    assert penalty_form(model, th, 2.5)(v) == pytest.approx(-2.5 * c4_violation(model, v, th), rel=1e-12)


def test_update_v_without_ris_is_identity():
    cfg, ch, sol = feasible_instance(0, N=0)
    v, trace = update_v(cfg, ch, sol, tight_aux(cfg, ch, sol), 1.0)
    assert v.size == 0 and len(trace) == 1


def test_projection_has_coupled_amplitude(model, rng):
    th = rng.uniform(-math.pi, math.pi, 50)
    u = project_c4(model, th)
    np.testing.assert_allclose(np.abs(u), model.amplitude(th), rtol=1e-14)
    np.testing.assert_allclose(np.angle(u), th, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    mag=st.floats(0, 2), arg=st.floats(-math.pi, math.pi),
    f_min=st.floats(0, 1), alpha=st.floats(0, 4), phi=st.floats(0, 2 * math.pi),
)
def test_optimal_theta_beats_fine_grid(mag, arg, f_min, alpha, phi):
    model = ReflectionModel(f_min, alpha, phi)
    v = mag * np.exp(1j * arg)
    th = optimal_theta(model, v)
    grid = np.linspace(-math.pi, math.pi, 100001)
    assert -math.pi <= th <= math.pi
    assert theta_objective(model, v, th) >= theta_objective(model, v, grid).max() - 1e-9


def test_optimal_theta_minimizes_distance(model, rng):
    v = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    th = optimal_theta(model, v)
    for _ in range(20):
        other = rng.uniform(-math.pi, math.pi, 30)
        assert np.all(np.abs(v - model.coefficient(th)) <= np.abs(v - model.coefficient(other)) + 1e-9)


def test_optimal_theta_unit_amplitude_is_phase_alignment():
    model = ReflectionModel(f_min=1.0)
    v = np.exp(1j * np.array([0.3, -2.0, 3.0])) * 0.7
    np.testing.assert_allclose(optimal_theta(model, v), np.angle(v), atol=1e-9)


def test_optimal_theta_scalar_and_empty(model):
    assert isinstance(optimal_theta(model, 0.5 + 0.5j), float)
    assert optimal_theta(model, np.zeros(0)).size == 0


def test_sca_options_tolerance_respected():
    cfg, ch, sol = feasible_instance(3)
    aux = tight_aux(cfg, ch, sol)
    _, trace = update_w(cfg, ch, sol, aux, ScaOptions(max_iter=1))
    assert len(trace) <= 2
