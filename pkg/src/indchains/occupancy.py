"""Occupancy measures of a single player's chain.

Three nested views of the long-run behaviour of a stationary policy ``pi``
on a kernel ``P``:

* ``nu[s]``          state occupancy (the stationary distribution),
* ``rho[s, a]``      state-action occupancy, ``nu[s] * pi[s, a]``,
* ``q[s, a, s2]``    transition occupancy, ``rho[s, a] * P[s, a, s2]``.

A ``q`` with unit mass and balanced in/out flow at every state induces its
own kernel and policy, and is exactly their occupancy measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ErgodicityError, StructuralError

MASS_TOL = 1e-10


def stationary_distribution(chain):
    """Stationary distribution of a stochastic matrix by a direct linear solve.

    One balance equation of ``(p^T - I) nu = 0`` is replaced by the
    normalization row.  Raises :class:`ErgodicityError` when the system is
    singular, i.e. when the chain has more than one closed class.
    """
    chain = np.asarray(chain, dtype=float)
    S = chain.shape[0]
    if S == 1:
        return np.ones(1)
    system = chain.T - np.eye(S)
    system[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    if np.linalg.cond(system) > 1e12:
        raise ErgodicityError("induced chain has no unique stationary distribution")
    nu = np.linalg.solve(system, rhs)
    if nu.min() < -1e-10:
        raise ErgodicityError(f"stationary solve produced negative mass {nu.min():.3g}")
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def occupancy_from_policy(policy, kernel):
    """Return ``(nu, rho, q)`` for ``policy`` (S, A) run on ``kernel`` (S, A, S)."""
    policy = np.asarray(policy, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if policy.shape != kernel.shape[:2]:
        raise StructuralError(
            f"policy shape {policy.shape} does not match kernel shape {kernel.shape}"
        )
    chain = np.einsum("sa,sat->st", policy, kernel)
    nu = stationary_distribution(chain)
    rho = nu[:, None] * policy
    q = rho[:, :, None] * kernel
    return nu, rho, q


def state_action_occupancy(q):
    return np.asarray(q).sum(axis=2)


def state_occupancy(q):
    return np.asarray(q).sum(axis=(1, 2))


def flow_residual(q):
    """Inflow minus outflow per state."""
    q = np.asarray(q)
    return q.sum(axis=(0, 1)) - q.sum(axis=(1, 2))


def uniform_occupancy(num_states, num_actions):
    return np.full((num_states, num_actions, num_states), 1.0 / (num_actions * num_states**2))


def induced_kernel_and_policy(q, return_flags=False):
    """Kernel ``P^q`` and policy ``pi^q`` induced by an occupancy measure.

    Rows with zero mass have no induced value; they fall back to uniform and
    are reported in the boolean flag arrays when ``return_flags`` is set
    (``(S, A)`` for the kernel, ``(S,)`` for the policy).
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 3 or q.shape[0] != q.shape[2]:
        raise StructuralError(f"occupancy must have shape (S, A, S), got {q.shape}")
    S, A, _ = q.shape
    rho = q.sum(axis=2)
    nu = rho.sum(axis=1)
    kernel_empty = rho <= 0.0
    policy_empty = nu <= 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        kernel = np.where(kernel_empty[:, :, None], 1.0 / S, q / rho[:, :, None])
        policy = np.where(policy_empty[:, None], 1.0 / A, rho / nu[:, None])
    if return_flags:
        return kernel, policy, kernel_empty, policy_empty
    return kernel, policy


@dataclass(frozen=True)
class ShrunkPolytopeSpec:
    """Lower bound ``delta`` on every ``rho[s, a]``; ``delta = 0`` is the full polytope."""

    delta: float
    num_states: int
    num_actions: int

    def __post_init__(self):
        cap = 1.0 / (self.num_states * self.num_actions)
        if not 0.0 <= self.delta <= cap * (1 + 1e-12):
            raise StructuralError(
                f"delta={self.delta} must lie in [0, 1/(|S||A|)] = [0, {cap:.6g}]"
            )

    @property
    def shape(self):
        return (self.num_states, self.num_actions, self.num_states)


@dataclass
class MembershipVerdict:
    member: bool
    max_violation: float
    violations: dict = field(default_factory=dict)

    def __bool__(self):
        return self.member


def check_membership(q, spec: ShrunkPolytopeSpec, confidence=None, tol=1e-9):
    """Test ``q`` against the shrunk polytope and, optionally, a confidence box.

    ``confidence`` is anything with ``lower`` and ``upper`` arrays of shape
    ``(S, A, S)``; the kernel box is checked in its linear form
    ``lower * rho <= q <= upper * rho``.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != spec.shape:
        raise StructuralError(f"occupancy shape {q.shape} does not match {spec.shape}")
    rho = q.sum(axis=2)
    found = {
        "nonnegativity": float(max(0.0, -q.min())),
        "normalization": float(abs(q.sum() - 1.0)),
        "flow_balance": float(np.abs(flow_residual(q)).max()),
        "shrinkage": float(max(0.0, (spec.delta - rho).max())),
    }
    if confidence is not None:
        lower = np.asarray(confidence.lower)
        upper = np.asarray(confidence.upper)
        found["confidence_lower"] = float(max(0.0, (lower * rho[:, :, None] - q).max()))
        found["confidence_upper"] = float(max(0.0, (q - upper * rho[:, :, None]).max()))
    worst = max(found.values())
    return MembershipVerdict(member=worst <= tol, max_violation=worst, violations=found)
