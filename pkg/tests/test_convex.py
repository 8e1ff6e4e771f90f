import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indchains.confidence import occupancy_constraints
from indchains.convex import (
    LinearConstraintSystem, RegularizerSpec, bregman, omd_update, project, project_dykstra,
    solve_lp,
)
from indchains.errors import InfeasibleError, StructuralError, UnboundedError
from indchains.occupancy import ShrunkPolytopeSpec
from oracles import lp_by_vertex_enumeration, projection_by_dual_gradient


def simplex(n):
    return LinearConstraintSystem(n, A_eq=[np.ones(n)], b_eq=[1.0], A_ub=-np.eye(n), b_ub=np.zeros(n))


def random_polytope(rng, n, m_eq=1, m_ub=8):
    """Random polytope that contains a known interior point."""
    x0 = rng.random(n)
    A_eq = rng.normal(size=(m_eq, n))
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.random(m_ub) * 0.5
    # box keeps it bounded
    A_ub = np.vstack([A_ub, np.eye(n), -np.eye(n)])
    b_ub = np.concatenate([b_ub, x0 + 1.0, 1.0 - x0])
    return LinearConstraintSystem(n, A_eq=A_eq, b_eq=A_eq @ x0, A_ub=A_ub, b_ub=b_ub), x0


def feasible_samples(rng, system, count):
    """Vertices from random objectives and their random convex combinations."""
    verts = [solve_lp(rng.normal(size=system.dimension), system).x for _ in range(count)]
    combos = [np.average(verts, axis=0, weights=rng.random(len(verts))) for _ in range(count)]
    return verts + combos


def test_simplex_projection_examples():
    assert np.allclose(project(np.array([0.6, 0.6]), simplex(2)), [0.5, 0.5], atol=1e-12)
    assert np.allclose(project(np.array([2.0, -1.0]), simplex(2)), [1.0, 0.0], atol=1e-12)


def test_zero_gradient_is_identity_on_feasible_points():
    rng = np.random.default_rng(0)
    system, x0 = random_polytope(rng, 6)
    out = omd_update(x0, np.zeros(6), 0.3, system, RegularizerSpec())
    assert np.allclose(out, x0, atol=1e-10)
    out = omd_update(x0, rng.normal(size=6), 0.0, system, RegularizerSpec())
    assert np.allclose(out, x0, atol=1e-10)


def test_omd_step_scales_with_mu():
    sys2 = simplex(3)
    x = np.full(3, 1 / 3)
    g = np.array([1.0, 0.0, 0.0])
    a = omd_update(x, g, 0.2, sys2, RegularizerSpec(mu=2.0))
    b = omd_update(x, g, 0.1, sys2, RegularizerSpec(mu=1.0))
    assert np.allclose(a, b, atol=1e-14)


def test_random_six_dim_projection_matches_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        system, _ = random_polytope(rng, 6)
        y = rng.normal(size=6) * 2
        x = project(y, system)
        ref = projection_by_dual_gradient(y, system.A_eq, system.b_eq, system.A_ub, system.b_ub)
        worst = max(worst, np.abs(x - ref).max())
        assert max(system.residuals(x)) <= 1e-9
    assert worst < 1e-6


def test_projection_variational_inequality():
    rng = np.random.default_rng(8)
    for _ in range(10):
        system, _ = random_polytope(rng, 5)
        y = rng.normal(size=5) * 3
        x = project(y, system)
        for z in feasible_samples(rng, system, 25):
            assert (x - y) @ (z - x) >= -1e-7


def test_dykstra_agrees_with_active_set():
    rng = np.random.default_rng(9)
    for _ in range(5):
        system, _ = random_polytope(rng, 4, m_ub=5)
        y = rng.normal(size=4)
        assert np.allclose(project(y, system), project_dykstra(y, system), atol=1e-6)


def test_projection_on_occupancy_polytope_keeps_shape():
    system = occupancy_constraints(ShrunkPolytopeSpec(0.02, 2, 2))
    y = np.random.default_rng(1).random((2, 2, 2))
    x = project(y, system)
    assert x.shape == (2, 2, 2)
    assert max(system.residuals(x)) <= 1e-9


def test_infeasible_system_detected():
    with pytest.raises(InfeasibleError):
        LinearConstraintSystem(2, A_eq=[[1, 1]], b_eq=[1.0], A_ub=[[-1, 0], [0, -1], [1, 1]],
                               b_ub=[0, 0, 0.5])


def test_dimension_mismatch():
    with pytest.raises(StructuralError):
        LinearConstraintSystem(3, A_eq=[[1, 1]], b_eq=[1.0])


def test_lp_examples():
    x, value = solve_lp(np.array([1.0, 0.0]), simplex(2))
    assert value == pytest.approx(1.0) and np.allclose(x, [1, 0])
    sol = solve_lp(np.array([0.5, 0.5]), simplex(2))
    assert sol.value == pytest.approx(0.5)
    assert np.isclose(sol.x, 0).sum() == 1  # a vertex
    x, value = solve_lp(np.array([1.0, 2.0]), simplex(2), sense="minimize")
    assert value == pytest.approx(1.0)


def test_lp_unbounded_reported():
    system = LinearConstraintSystem(2, A_ub=[[-1, 0], [0, -1]], b_ub=[0, 0])
    with pytest.raises(UnboundedError):
        solve_lp(np.array([1.0, 1.0]), system)


def test_lp_matches_vertex_enumeration_and_duality():
    rng = np.random.default_rng(10)
    for _ in range(25):
        system, _ = random_polytope(rng, 3, m_ub=4)
        c = rng.normal(size=3)
        sol = solve_lp(c, system)
        ref, _ = lp_by_vertex_enumeration(c, system.A_eq, system.b_eq, system.A_ub, system.b_ub)
        assert sol.value == pytest.approx(ref, abs=1e-8)
        assert sol.dual_value == pytest.approx(sol.value, abs=1e-8)


def test_bregman_examples():
    reg = RegularizerSpec()
    assert bregman(reg, np.array([0.3, 0.7]), np.array([0.3, 0.7])) == 0.0
    assert bregman(reg, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)
    with pytest.raises(StructuralError):
        RegularizerSpec(mu=0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 5.0))
def test_three_point_identity_and_strong_convexity(seed, mu):
    rng = np.random.default_rng(seed)
    reg = RegularizerSpec(mu=mu)
    x, y, z = rng.normal(size=(3, 5))
    lhs = bregman(reg, z, x) + bregman(reg, x, y) - bregman(reg, z, y)
    rhs = (reg.gradient(y) - reg.gradient(x)) @ (z - x)
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(rhs)))
    assert bregman(reg, x, y) == pytest.approx(0.5 * mu * np.sum((x - y) ** 2), rel=1e-12)
