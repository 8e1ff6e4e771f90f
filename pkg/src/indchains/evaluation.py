"""Oracle computations against the true kernels.

Everything here is simulator/evaluator side: payoffs, payoff gradients,
best responses, the Nikaido-Isoda gap, its step-size weighted average and
the error/regret/bias split of that average.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np

from .convex import LinearConstraintSystem, solve_lp
from .errors import InfeasibleError, StructuralError
from .game import JointGame, mixing_factor
from .occupancy import occupancy_from_policy, state_action_occupancy, state_occupancy


def _subscripts(n):
    letters = string.ascii_letters
    if 2 * n > len(letters):
        raise StructuralError(f"too many players for einsum contraction: {n}")
    return letters[:n], letters[n:2 * n]


def occupancies(game: JointGame, policies):
    """True state-action occupancies ``rho_j`` of every player's policy."""
    if len(policies) != game.n:
        raise StructuralError(f"expected {game.n} policies, got {len(policies)}")
    return [occupancy_from_policy(pi, p.kernel)[1] for pi, p in zip(policies, game.players)]


def value_from_occupancies(game: JointGame, rhos):
    """``V_i = sum_{s, a} prod_j rho_j(s_j, a_j) r_i(s, a)`` for every player."""
    st, ac = _subscripts(game.n)
    spec = st + ac + "," + ",".join(s + a for s, a in zip(st, ac)) + "->"
    return np.array([np.einsum(spec, r, *rhos) for r in game.rewards])


def exact_value(game: JointGame, policies):
    """Long-run average payoff vector of a stationary joint policy."""
    return value_from_occupancies(game, occupancies(game, policies))


def payoff_gradient(game: JointGame, i, rhos):
    """``v_i(rho_{-i})`` over ``(s_i, a_i)``; ``rhos[i]`` itself is ignored."""
    st, ac = _subscripts(game.n)
    others = [j for j in range(game.n) if j != i]
    spec = (
        st + ac + ("," if others else "")
        + ",".join(st[j] + ac[j] for j in others)
        + "->" + st[i] + ac[i]
    )
    return np.einsum(spec, game.rewards[i], *[rhos[j] for j in others])


def extend_over_next_state(v, num_states):
    """Constant extension of an ``(S, A)`` vector across ``s'``."""
    return np.repeat(np.asarray(v)[:, :, None], num_states, axis=2)


def flow_polytope(kernel, delta, verify=True):
    """Stationary state-action occupancies of ``kernel`` with ``rho >= delta``.

    Variables are ``rho`` flattened row-major over ``(s, a)``.
    """
    kernel = np.asarray(kernel, dtype=float)
    S, A, _ = kernel.shape
    dim = S * A
    inflow = kernel.reshape(dim, S).T  # [s, (s', a')] = P(s | s', a')
    outflow = np.kron(np.eye(S), np.ones(A))
    A_eq = np.vstack([np.ones(dim), outflow - inflow])
    b_eq = np.concatenate([[1.0], np.zeros(S)])
    A_ub = -np.eye(dim)
    b_ub = np.full(dim, -float(delta))
    try:
        return LinearConstraintSystem(dim, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, verify=verify)
    except InfeasibleError:
        raise InfeasibleError(
            f"no stationary occupancy has every rho(s, a) >= delta={delta}"
        ) from None


def best_response_value(game: JointGame, i, rhos, delta, polytope=None):
    """Best value player ``i`` can reach over the ``delta``-shrunk polytope.

    Returns ``(value, q)`` with ``q = rho * P_i`` the maximizing occupancy.
    """
    kernel = game.players[i].kernel
    S, A, _ = kernel.shape
    if polytope is None:
        polytope = flow_polytope(kernel, delta)
    v = payoff_gradient(game, i, rhos)
    sol = solve_lp(v.ravel(), polytope)
    rho = np.clip(sol.x.reshape(S, A), 0.0, None)
    return sol.value, rho[:, :, None] * kernel


@dataclass
class GapReport:
    """Instantaneous gap plus its per-player ingredients.

    ``weighted`` and ``weight`` are filled in only by :class:`GapTracker`.
    """

    instant: float
    best_response: np.ndarray
    values: np.ndarray
    weighted: float | None = None
    weight: float | None = None

    @property
    def per_player(self):
        return self.best_response - self.values


def ni_gap(game: JointGame, policies, deltas, polytopes=None):
    """``sum_i [max_{q_i'} V_i(q_i', q_-i) - V_i(q)]`` for a stationary profile."""
    return _gap_from_rhos(game, occupancies(game, policies), deltas, polytopes)


def _gap_from_rhos(game, rhos, deltas, polytopes=None):
    deltas = _per_player(deltas, game.n)
    values = value_from_occupancies(game, rhos)
    br = np.array([
        best_response_value(game, i, rhos, deltas[i],
                            None if polytopes is None else polytopes[i])[0]
        for i in range(game.n)
    ])
    return GapReport(instant=float((br - values).sum()), best_response=br, values=values)


def _per_player(x, n):
    if np.ndim(x) == 0:
        return [float(x)] * n
    x = list(x)
    if len(x) != n:
        raise StructuralError(f"expected {n} per-player values, got {len(x)}")
    return [float(v) for v in x]


@dataclass
class DiagnosticsRow:
    """Per-player split of the gap: ``error + regret + bias`` equals player ``i``'s gap."""

    error: np.ndarray
    regret: np.ndarray
    bias: np.ndarray

    @property
    def total(self):
        return self.error + self.regret + self.bias


def diagnostics(rho_hat, rho, v, R, rho_best):
    """Error, regret and bias of one player for one episode.

    ``rho_hat`` is the learner's occupancy estimate, ``rho`` the true
    occupancy of the same policy, ``v`` the payoff gradient at the true
    opponents, ``R`` the logged reward estimate and ``rho_best`` a
    comparator occupancy (usually the best response).
    """
    error = float(np.sum((rho_hat - rho) * v))
    regret = float(np.sum((rho_best - rho_hat) * R))
    bias = float(np.sum((rho_best - rho_hat) * (v - R)))
    return error, regret, bias


def nu_error_bound(num_states, tau, max_width):
    """``2 |S| / (1 - exp(-1/tau)) * max_width``: bound on ``||nu_hat - nu||_1``."""
    gap = 1.0 - mixing_factor(tau)
    if gap <= 0.0:
        return math.inf
    return 2.0 * num_states / gap * max_width


@dataclass
class EpisodeTerms:
    """True-kernel quantities for one episode of every player."""

    rho: list
    rho_hat: list
    v: list
    values: np.ndarray
    nu_error: np.ndarray
    instant: dict = field(default_factory=dict)


class GapTracker:
    """Accumulates the step-size weighted gap and its error/regret/bias split.

    With weights ``eta^k / w`` and ``w = sum eta^k``, the weighted gap of
    player ``i`` is ``max_rho <rho, sum_k eta^k v_i^k> / w - sum_k eta^k V_i^k / w``,
    one LP per player.  Every sum involved is linear so only running totals
    are kept.
    """

    def __init__(self, game: JointGame, deltas):
        self.game = game
        self.deltas = _per_player(deltas, game.n)
        self.polytopes = []
        for i, (p, d) in enumerate(zip(game.players, self.deltas)):
            try:
                self.polytopes.append(flow_polytope(p.kernel, d))
            except InfeasibleError as err:
                raise InfeasibleError(f"player {i}, before episode 1: {err}") from None
        shapes = [(p.num_states, p.num_actions) for p in game.players]
        self.weight = 0.0
        self.acc_v = [np.zeros(s) for s in shapes]
        self.acc_R = [np.zeros(s) for s in shapes]
        self.acc_value = np.zeros(game.n)
        self.acc_hat_v = np.zeros(game.n)
        self.acc_hat_R = np.zeros(game.n)

    def add_episode(self, eta, q_hats, policies, rewards_estimates, with_instant=False):
        game = self.game
        rhos = occupancies(game, policies)
        rho_hats = [state_action_occupancy(q) for q in q_hats]
        vs = [payoff_gradient(game, i, rhos) for i in range(game.n)]
        values = np.array([float(np.sum(r * v)) for r, v in zip(rhos, vs)])
        nu_err = np.array([
            float(np.abs(state_occupancy(q) - r.sum(axis=1)).sum()) for q, r in zip(q_hats, rhos)
        ])
        self.weight += eta
        for i in range(game.n):
            R = np.asarray(rewards_estimates[i])
            self.acc_v[i] += eta * vs[i]
            self.acc_R[i] += eta * R
            self.acc_value[i] += eta * values[i]
            self.acc_hat_v[i] += eta * float(np.sum(rho_hats[i] * vs[i]))
            self.acc_hat_R[i] += eta * float(np.sum(rho_hats[i] * R))
        terms = EpisodeTerms(rho=rhos, rho_hat=rho_hats, v=vs, values=values, nu_error=nu_err)
        if with_instant:
            report = _gap_from_rhos(game, rhos, self.deltas, self.polytopes)
            err, reg, bia = [], [], []
            for i in range(game.n):
                S, A = rhos[i].shape
                best = solve_lp(vs[i].ravel(), self.polytopes[i]).x.reshape(S, A)
                e, r, b = diagnostics(rho_hats[i], rhos[i], vs[i], rewards_estimates[i], best)
                err.append(e)
                reg.append(r)
                bia.append(b)
            terms.instant = {
                "report": report,
                "error": np.array(err), "regret": np.array(reg), "bias": np.array(bia),
            }
        return terms

    def weighted(self):
        """``(GapReport, DiagnosticsRow)`` for the running weighted average."""
        if self.weight <= 0.0:
            raise StructuralError("no episodes with positive step size recorded")
        w = self.weight
        best = np.zeros(self.game.n)
        error = np.zeros(self.game.n)
        regret = np.zeros(self.game.n)
        bias = np.zeros(self.game.n)
        for i in range(self.game.n):
            sol = solve_lp(self.acc_v[i].ravel() / w, self.polytopes[i])
            rho_star = sol.x.reshape(self.acc_v[i].shape)
            best[i] = sol.value
            error[i] = (self.acc_hat_v[i] - self.acc_value[i]) / w
            regret[i] = (float(np.sum(rho_star * self.acc_R[i])) - self.acc_hat_R[i]) / w
            bias[i] = (
                float(np.sum(rho_star * (self.acc_v[i] - self.acc_R[i])))
                - self.acc_hat_v[i] + self.acc_hat_R[i]
            ) / w
        values = self.acc_value / w
        report = GapReport(
            instant=float("nan"), best_response=best, values=values,
            weighted=float((best - values).sum()), weight=w,
        )
        return report, DiagnosticsRow(error=error, regret=regret, bias=bias)


def stability_probe(game: JointGame, candidate_policies, samples=10_000, rng=None,
                    concentration=1.0):
    """Smallest ``sum_i <v_i(rho_-i), rho_i* - rho_i>`` over random stationary profiles.

    A negative value beyond round-off refutes global stability of the
    candidate; a nonnegative value is only numerical evidence.
    """
    rng = np.random.default_rng(rng)
    star = occupancies(game, candidate_policies)
    worst = math.inf
    for _ in range(samples):
        policies = [
            rng.dirichlet(np.full(p.num_actions, concentration), size=p.num_states)
            for p in game.players
        ]
        rhos = occupancies(game, policies)
        total = sum(
            float(np.sum(payoff_gradient(game, i, rhos) * (star[i] - rhos[i])))
            for i in range(game.n)
        )
        worst = min(worst, total)
    return worst
