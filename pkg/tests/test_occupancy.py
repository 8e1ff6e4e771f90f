import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indchains.confidence import ConfidenceState
from indchains.errors import ErgodicityError, StructuralError
from indchains.game import g1
from indchains.occupancy import (
    ShrunkPolytopeSpec, check_membership, flow_residual, induced_kernel_and_policy,
    occupancy_from_policy, stationary_distribution, uniform_occupancy,
)
from oracles import stationary_by_power, stationary_two_state


def random_pair(rng, S, A):
    kernel = rng.dirichlet(np.ones(S), size=(S, A))
    policy = rng.dirichlet(np.ones(A), size=S)
    return policy, kernel


def test_g1_uniform_policy_occupancy():
    kernel = g1().players[0].kernel
    nu, rho, q = occupancy_from_policy(np.full((2, 2), 0.5), kernel)
    assert np.allclose(nu, 0.5, atol=1e-14)
    assert np.allclose(rho, 0.25, atol=1e-14)
    assert np.allclose(q, 0.25 * kernel, atol=1e-14)


def test_two_state_chain_matches_closed_form():
    chain = np.array([[0.9, 0.1], [0.3, 0.7]])
    expected = stationary_two_state(0.1, 0.3)
    assert np.allclose(expected, [0.75, 0.25])
    assert np.allclose(stationary_distribution(chain), expected, atol=1e-14)


def test_period_two_cycle_is_half_half():
    kernel = np.zeros((2, 1, 2))
    kernel[0, 0, 1] = kernel[1, 0, 0] = 1.0
    nu, _, _ = occupancy_from_policy(np.ones((2, 1)), kernel)
    assert np.allclose(nu, 0.5)


def test_reducible_chain_raises():
    with pytest.raises(ErgodicityError):
        stationary_distribution(np.eye(2))


def test_stationary_solve_residual_and_power_oracle():
    rng = np.random.default_rng(0)
    for _ in range(30):
        chain = rng.dirichlet(np.ones(4), size=4)
        nu = stationary_distribution(chain)
        assert np.abs(nu @ chain - nu).max() < 1e-10
        assert np.allclose(nu, stationary_by_power(chain, 5000), atol=1e-8)


def test_shape_mismatch_raises():
    with pytest.raises(StructuralError):
        occupancy_from_policy(np.full((3, 2), 0.5), g1().players[0].kernel)


def test_uniform_q_induces_uniform_kernel_and_policy():
    kernel, policy = induced_kernel_and_policy(uniform_occupancy(3, 2))
    assert np.allclose(kernel, 1 / 3) and np.allclose(policy, 0.5)


def test_concentrated_q_gives_deterministic_policy():
    q = np.zeros((2, 2, 2))
    q[0, 1, 1] = 0.5
    q[1, 0, 0] = 0.5
    kernel, policy, kflag, pflag = induced_kernel_and_policy(q, return_flags=True)
    assert np.array_equal(policy, [[0.0, 1.0], [1.0, 0.0]])
    assert kflag[0, 0] and kflag[1, 1] and not pflag.any()
    assert np.allclose(kernel[0, 0], 0.5)  # uniform fallback row


def test_zero_state_row_is_flagged():
    q = np.zeros((2, 1, 2))
    q[0, 0, 0] = 1.0
    _, policy, _, pflag = induced_kernel_and_policy(q, return_flags=True)
    assert pflag.tolist() == [False, True]
    assert np.allclose(policy[1], 1.0)


def test_roundtrip_recovers_kernel_and_policy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        policy, kernel = random_pair(rng, 3, 2)
        _, _, q = occupancy_from_policy(policy, kernel)
        k2, p2 = induced_kernel_and_policy(q)
        assert np.allclose(k2, kernel, atol=1e-9) and np.allclose(p2, policy, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_occupancy_roundtrip_property(S, A, seed):
    rng = np.random.default_rng(seed)
    policy, kernel = random_pair(rng, S, A)
    _, _, q = occupancy_from_policy(policy, kernel)
    assert check_membership(q, ShrunkPolytopeSpec(0.0, S, A), tol=1e-10)
    k2, p2 = induced_kernel_and_policy(q)
    _, _, q2 = occupancy_from_policy(p2, k2)
    assert np.abs(q2 - q).max() < 1e-8


def test_membership_examples():
    spec = ShrunkPolytopeSpec(0.01, 2, 2)
    assert check_membership(uniform_occupancy(2, 2), spec)
    q = np.zeros((2, 2, 2))
    q[0, 0] = [0.25, 0.25]
    q[1, 0] = [0.25, 0.0]
    q[1, 1] = [0.0, 0.25]
    # rho(0, 1) = 0 while flow stays balanced
    assert np.allclose(flow_residual(q), 0)
    verdict = check_membership(q, spec)
    assert not verdict
    assert verdict.violations["shrinkage"] == pytest.approx(0.01)
    assert verdict.max_violation == pytest.approx(0.01)


def test_membership_against_box_around_true_kernel():
    kernel = g1().players[0].kernel
    _, _, q = occupancy_from_policy(np.array([[0.3, 0.7], [0.6, 0.4]]), kernel)
    box = ConfidenceState.fresh(2, 2)
    box.lower = np.clip(kernel - 0.05, 0, 1)
    box.upper = np.clip(kernel + 0.05, 0, 1)
    assert check_membership(q, ShrunkPolytopeSpec(0.01, 2, 2), confidence=box)
    box.lower = np.clip(kernel + 0.01, 0, 1)
    assert not check_membership(q, ShrunkPolytopeSpec(0.01, 2, 2), confidence=box)


def test_shrunk_spec_bounds():
    with pytest.raises(StructuralError):
        ShrunkPolytopeSpec(0.3, 2, 2)
    with pytest.raises(StructuralError):
        ShrunkPolytopeSpec(-0.1, 2, 2)


def test_stationary_distribution_matches_long_trajectory():
    rng = np.random.default_rng(2)
    policy, kernel = random_pair(rng, 3, 2)
    nu, _, _ = occupancy_from_policy(policy, kernel)
    chain = np.einsum("sa,sat->st", policy, kernel)
    cum = np.cumsum(chain, axis=1)
    u = rng.random(10**6)
    counts = np.zeros(3)
    s = 0
    for x in u:
        counts[s] += 1
        s = min(int(np.searchsorted(cum[s], x, side="right")), 2)
    assert np.abs(counts / counts.sum() - nu).max() < 5e-3
