"""Stochastic games with independent per-player Markov chains.

Each player ``i`` owns a finite chain with ``S_i`` states and ``A_i``
actions.  Its kernel is stored densely as an array of shape
``(S_i, A_i, S_i)`` indexed ``[s, a, s_next]``.  Rewards couple the players:
``rewards[i]`` has shape ``(S_1, ..., S_n, A_1, ..., A_n)`` with values in
``[0, 1]``.  The joint transition is the product of the per-player kernels by
construction, so factorization never needs to be checked.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import StructuralError

ROW_TOL = 1e-12
# Deterministic-policy enumeration cap for the irreducibility check.
_MAX_ENUMERATED_POLICIES = 4096


def check_kernel(probs, tol=ROW_TOL, name="kernel"):
    """Validate a ``(S, A, S)`` transition tensor and return it as float array."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 3 or probs.shape[0] != probs.shape[2] or 0 in probs.shape:
        raise StructuralError(f"{name} must have shape (S, A, S), got {probs.shape}")
    if not np.all(np.isfinite(probs)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(probs))[0])
        raise StructuralError(f"{name} has non-finite entry at (s, a, s')={bad}")
    if np.any(probs < 0):
        bad = tuple(int(i) for i in np.argwhere(probs < 0)[0])
        raise StructuralError(f"{name} has negative entry at (s, a, s')={bad}")
    sums = probs.sum(axis=2)
    off = np.abs(sums - 1.0) > tol
    if np.any(off):
        s, a = (int(i) for i in np.argwhere(off)[0])
        raise StructuralError(
            f"{name} row (s={s}, a={a}) sums to {sums[s, a]!r}, not 1"
        )
    return probs


def check_policy(probs, tol=ROW_TOL, name="policy"):
    """Validate a ``(S, A)`` stationary policy table."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or 0 in probs.shape:
        raise StructuralError(f"{name} must have shape (S, A), got {probs.shape}")
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        s, a = (int(i) for i in np.argwhere(~(probs >= 0))[0])
        raise StructuralError(f"{name} has invalid entry at (s={s}, a={a})")
    sums = probs.sum(axis=1)
    off = np.abs(sums - 1.0) > tol
    if np.any(off):
        s = int(np.argmax(off))
        raise StructuralError(f"{name} row s={s} sums to {sums[s]!r}, not 1")
    return probs


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PlayerModel:
    """One player's state/action sets and true (hidden) transition kernel."""

    player_id: int
    kernel: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "kernel", _frozen(check_kernel(self.kernel, name=f"player {self.player_id} kernel"))
        )

    @property
    def num_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def num_actions(self) -> int:
        return self.kernel.shape[1]

    @cached_property
    def cumulative(self):
        # Nested lists so bisect works without numpy call overhead in hot loops.
        cum = np.cumsum(self.kernel, axis=2)
        cum[:, :, -1] = 1.0
        return [[list(row) for row in per_state] for per_state in cum]

    def sample_next(self, s, a, u):
        """Next state for a uniform draw ``u`` in [0, 1) (inverse CDF)."""
        return bisect.bisect_right(self.cumulative[s][a], u)


@dataclass(frozen=True, eq=False)
class JointGame:
    """An n-player game: independent chains coupled only through rewards."""

    players: tuple
    rewards: tuple
    name: str = ""

    def __post_init__(self):
        players = tuple(self.players)
        if not players:
            raise StructuralError("a game needs at least one player")
        for i, p in enumerate(players):
            if p.player_id != i:
                raise StructuralError(f"player at position {i} has player_id {p.player_id}")
        object.__setattr__(self, "players", players)
        rewards = tuple(_frozen(r) for r in self.rewards)
        if len(rewards) != len(players):
            raise StructuralError(
                f"expected {len(players)} reward tensors, got {len(rewards)}"
            )
        shape = self.state_shape + self.action_shape
        for i, r in enumerate(rewards):
            if r.shape != shape:
                raise StructuralError(f"rewards[{i}] has shape {r.shape}, expected {shape}")
            if not np.all(np.isfinite(r)) or r.min() < 0.0 or r.max() > 1.0:
                bad = np.argwhere(~((r >= 0.0) & (r <= 1.0)))[0]
                raise StructuralError(
                    f"rewards[{i}] entry at {tuple(int(b) for b in bad)} outside [0, 1]"
                )
        object.__setattr__(self, "rewards", rewards)

    @property
    def n(self) -> int:
        return len(self.players)

    @property
    def state_shape(self) -> tuple:
        return tuple(p.num_states for p in self.players)

    @property
    def action_shape(self) -> tuple:
        return tuple(p.num_actions for p in self.players)

    def reward(self, joint_state, joint_action):
        idx = tuple(joint_state) + tuple(joint_action)
        return tuple(float(r[idx]) for r in self.rewards)


@dataclass
class AssumptionReport:
    """Outcome of :func:`validate_game`.

    ``alpha`` is the smallest column sum ``sum_a P_i(s'|s, a)`` over players
    and state pairs, ``contraction`` the worst one-step L1 contraction factor
    of any induced chain and ``tau_bound`` the resulting mixing parameter
    (already multiplied by the safety factor).
    """

    alpha: float
    tau_bound: float
    ergodic: bool
    contraction: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.alpha > 0 and self.ergodic


def induced_chain(kernel, policy):
    """State-to-state matrix ``p(s'|s) = sum_a pi(a|s) P(s'|s, a)``."""
    return np.einsum("sa,sat->st", policy, kernel)


def dobrushin(chain):
    """L1 contraction coefficient of a stochastic matrix on zero-sum vectors."""
    chain = np.asarray(chain, dtype=float)
    diff = np.abs(chain[:, None, :] - chain[None, :, :]).sum(axis=2)
    return 0.5 * float(diff.max())


def worst_contraction(kernel):
    """Largest Dobrushin coefficient over all stationary policies.

    The coefficient is convex in the policy, so the maximum sits at a
    deterministic policy; and since different states may pick actions
    independently it reduces to a max over ``(s, a)`` row pairs with
    ``s != s'``.
    """
    kernel = np.asarray(kernel, dtype=float)
    S, A, _ = kernel.shape
    if S == 1:
        return 0.0
    rows = kernel.reshape(S * A, S)
    diff = 0.5 * np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)
    owner = np.repeat(np.arange(S), A)
    diff[owner[:, None] == owner[None, :]] = 0.0
    return float(diff.max())


def tau_from_contraction(contraction, safety=2.0):
    """Mixing parameter with ``||(nu - nu') p||_1 <= exp(-1/tau) ||nu - nu'||_1``."""
    if contraction <= 0.0:
        return 0.0
    if contraction >= 1.0:
        return math.inf
    return safety * (-1.0 / math.log(contraction))


def mixing_factor(tau):
    """``exp(-1/tau)`` with the conventions tau=0 -> 0 and tau=inf -> 1."""
    if tau <= 0.0:
        return 0.0
    if math.isinf(tau):
        return 1.0
    return math.exp(-1.0 / tau)


def _reachable_everywhere(chain):
    S = chain.shape[0]
    adj = chain > 0
    reach = adj | np.eye(S, dtype=bool)
    for _ in range(max(1, int(math.ceil(math.log2(S))) + 1)):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all())


def _deterministic_policies(S, A, rng):
    total = A ** S
    if total <= _MAX_ENUMERATED_POLICIES:
        yield from itertools.product(range(A), repeat=S)
    else:
        for _ in range(_MAX_ENUMERATED_POLICIES):
            yield tuple(int(x) for x in rng.integers(0, A, size=S))


def validate_game(game: JointGame, safety=2.0) -> AssumptionReport:
    """Check the minimum-reachability and uniform-mixing assumptions.

    Uses the true kernels, so it belongs to the simulator/evaluator side and
    must never be fed to learners beyond the scalar ``tau_bound``.
    """
    violations = []
    alpha = math.inf
    worst = 0.0
    ergodic = True
    rng = np.random.default_rng(0)
    for p in game.players:
        col = p.kernel.sum(axis=1)  # (S, S'): sum over actions
        a_min = float(col.min())
        if a_min <= 0.0:
            s, t = (int(x) for x in np.argwhere(col <= 0.0)[0])
            violations.append(
                f"player {p.player_id}: state {t} unreachable from state {s} under every action"
            )
        alpha = min(alpha, a_min)
        c = worst_contraction(p.kernel)
        worst = max(worst, c)
        if c >= 1.0 - 1e-12:
            ergodic = False
            violations.append(
                f"player {p.player_id}: some induced chain does not contract in one step "
                f"(coefficient {c:.6g})"
            )
        S, A = p.num_states, p.num_actions
        for acts in _deterministic_policies(S, A, rng):
            chain = p.kernel[np.arange(S), list(acts)]
            if not _reachable_everywhere(chain):
                ergodic = False
                violations.append(
                    f"player {p.player_id}: induced chain of deterministic policy {acts} "
                    "is not irreducible"
                )
                break
    tau = tau_from_contraction(worst, safety)
    return AssumptionReport(
        alpha=float(alpha), tau_bound=tau, ergodic=ergodic, contraction=worst,
        violations=violations,
    )


def joint_step(game: JointGame, joint_state, joint_action, rng):
    """Advance every player's chain one step and read the reward vector.

    ``rng`` is either one ``numpy.random.Generator`` shared by all players or
    a sequence with one generator per player.
    """
    n = game.n
    if len(joint_state) != n or len(joint_action) != n:
        raise IndexError(f"expected {n}-tuples for joint state and action")
    rewards = game.reward(joint_state, joint_action)
    if isinstance(rng, np.random.Generator):
        draws = rng.random(n)
    else:
        draws = [g.random() for g in rng]
    nxt = tuple(
        p.sample_next(s, a, u)
        for p, s, a, u in zip(game.players, joint_state, joint_action, draws)
    )
    return nxt, rewards


# ---------------------------------------------------------------------------
# Built-in instances
# ---------------------------------------------------------------------------

def _stay_switch_kernel(stay0=0.9, stay1=0.1):
    k = np.empty((2, 2, 2))
    for s in range(2):
        k[s, 0, s], k[s, 0, 1 - s] = stay0, 1 - stay0
        k[s, 1, s], k[s, 1, 1 - s] = stay1, 1 - stay1
    return k


def g1() -> JointGame:
    """Two players, two states and actions each.

    Action 0 keeps the current state with probability 0.9, action 1 with
    probability 0.1.  Player 0 is paid 1 when both states agree, player 1
    when they differ (constant-sum).
    """
    k = _stay_switch_kernel()
    match = np.zeros((2, 2, 2, 2))
    for s1, s2 in itertools.product(range(2), repeat=2):
        match[s1, s2, :, :] = 1.0 if s1 == s2 else 0.0
    return JointGame(
        players=(PlayerModel(0, k), PlayerModel(1, k)),
        rewards=(match, 1.0 - match),
        name="G1",
    )


def g2() -> JointGame:
    """Matching pennies with a single state per player."""
    k = np.ones((1, 2, 1))
    r = np.zeros((1, 1, 2, 2))
    r[0, 0, 0, 0] = r[0, 0, 1, 1] = 1.0
    return JointGame(
        players=(PlayerModel(0, k), PlayerModel(1, k)),
        rewards=(r, 1.0 - r),
        name="G2",
    )


def g3(seed=20240611) -> JointGame:
    """Three players with random kernels and rewards drawn from a fixed seed."""
    rng = np.random.default_rng(seed)
    players = tuple(
        PlayerModel(i, rng.dirichlet(np.full(2, 2.0), size=(2, 2))) for i in range(3)
    )
    rewards = tuple(rng.random((2, 2, 2, 2, 2, 2)) for _ in range(3))
    return JointGame(players=players, rewards=rewards, name="G3")


def single_player_game(kernel, reward, name="single") -> JointGame:
    """n = 1 game whose reward depends only on the player's own (s, a)."""
    reward = np.asarray(reward, dtype=float)
    return JointGame(players=(PlayerModel(0, kernel),), rewards=(reward,), name=name)


def trivial_game(reward=0.5) -> JointGame:
    """One player, one state, one action."""
    return single_player_game(np.ones((1, 1, 1)), np.full((1, 1), reward), name="trivial")


BUILTIN_GAMES = {"G1": g1, "G2": g2, "G3": g3, "trivial": trivial_game}


def builtin_game(name: str) -> JointGame:
    try:
        return BUILTIN_GAMES[name]()
    except KeyError:
        raise StructuralError(
            f"unknown built-in game {name!r}; choose from {sorted(BUILTIN_GAMES)}"
        ) from None

