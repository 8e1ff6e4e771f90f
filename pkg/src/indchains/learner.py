"""Per-player episodic learner.

A :class:`Learner` only ever sees its own state, its own action, its own
scalar reward and its own next state.  Each episode it

1. plays the policy induced by its current occupancy estimate ``q_hat``,
2. ignores the first ``d`` steps (warm-up) for reward estimation,
3. records the first reward observed at every ``(s, a)`` until all pairs
   are covered,
4. at the global episode end, tightens its confidence box and takes one
   mirror-descent step on ``q_hat`` over the shrunk polytope restricted to
   that box.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .confidence import ConfidenceState, WidthSchedule, as_constraints
from .convex import RegularizerSpec, omd_update
from .errors import ConfidenceCollapseError, StructuralError
from .game import check_policy, mixing_factor
from .occupancy import ShrunkPolytopeSpec, induced_kernel_and_policy, uniform_occupancy

WARMING = "warming"
COVERING = "covering"
DONE = "done"


@dataclass(frozen=True)
class StepSizeSchedule:
    """``eta^k = c / sqrt(K)`` (finite) or ``c / (k^power * ln(k + 1))`` (asymptotic).

    For ``power`` in (1/2, 1] the asymptotic family is nonincreasing, has a
    divergent sum, a summable square and summable ``eta^k sqrt(ln k / k)``.
    """

    mode: str = "finite"
    c: float = 1.0
    horizon: int | None = None
    power: float = 0.75

    def __post_init__(self):
        if self.mode not in ("finite", "asymptotic"):
            raise StructuralError(f"unknown step-size mode {self.mode!r}")
        if not self.c > 0:
            raise StructuralError(f"step-size constant c must be positive, got {self.c}")
        if self.mode == "finite" and (self.horizon is None or self.horizon < 1):
            raise StructuralError("finite step sizes need a horizon K >= 1")
        if self.mode == "asymptotic" and not 0.5 < self.power <= 1.0:
            raise StructuralError(f"power must lie in (1/2, 1], got {self.power}")

    def __call__(self, k):
        if self.mode == "finite":
            return self.c / math.sqrt(self.horizon)
        return self.c / (k**self.power * math.log(k + 1))


@dataclass(frozen=True)
class WarmupSchedule:
    """Warm-up length: a constant (finite mode) or ``2 tau ln k`` (asymptotic)."""

    mode: str = "finite"
    tau: float = 0.0
    constant: float = 0.0

    @classmethod
    def finite(cls, tau, horizon, min_states):
        """``d = tau ln((1 - exp(-1/tau)) sqrt(K) / (2 min_i |S_i|))``, floored at 0."""
        if tau <= 0:
            return cls("finite", tau, 0.0)
        arg = (1.0 - mixing_factor(tau)) * math.sqrt(horizon) / (2.0 * min_states)
        return cls("finite", tau, max(0.0, tau * math.log(arg)))

    def length(self, k):
        raw = self.constant if self.mode == "finite" else 2.0 * self.tau * math.log(k)
        return int(math.ceil(max(0.0, raw) - 1e-12))


def default_delta(epsilon, num_states, num_actions, n, tau):
    """Conservative shrinkage threshold ``eps / (4 |S||A| n (tau + 1))``."""
    return epsilon / (4.0 * num_states * num_actions * n * (tau + 1.0))


@dataclass(frozen=True)
class LearnerConfig:
    delta: float
    step_size: StepSizeSchedule
    warmup: WarmupSchedule
    widths: WidthSchedule
    epsilon: float = 0.1
    rng_seed: int | None = None
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    frozen: bool = False

    def check(self, num_states, num_actions):
        cap = 1.0 / (num_states * num_actions)
        # A single (s, a) pair always carries all the mass, so delta = 1 is fine there.
        ok = 0.0 < self.delta <= cap if cap == 1.0 else 0.0 < self.delta < cap
        if not ok:
            raise StructuralError(
                f"delta={self.delta} must lie in (0, 1/(|S||A|)) = (0, {cap:.6g})"
            )


class Learner:
    """Decentralized learner state machine for one player."""

    def __init__(self, num_states, num_actions, config: LearnerConfig, rng=None,
                 initial_policy=None):
        config.check(num_states, num_actions)
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        self.spec = ShrunkPolytopeSpec(config.delta, self.num_states, self.num_actions)
        if initial_policy is None:
            self.q_hat = uniform_occupancy(self.num_states, self.num_actions)
        else:
            pol = check_policy(initial_policy)
            # Uniform state mass with uniform next state keeps flow balanced.
            self.q_hat = pol[:, :, None] / self.num_states**2 * np.ones(self.num_states)
        self.confidence = ConfidenceState.fresh(self.num_states, self.num_actions)
        self.episode = 1
        self.policy = None
        self.R = np.zeros((self.num_states, self.num_actions))
        self.unvisited = set()
        self.phase = DONE
        self.step_in_episode = 0
        self.warmup_steps = 0
        self._cum_policy = None

    # -- episode phases -------------------------------------------------

    def begin_episode(self):
        _, self.policy = induced_kernel_and_policy(self.q_hat)
        cum = np.cumsum(self.policy, axis=1)
        cum[:, -1] = 1.0
        self._cum_policy = [list(row) for row in cum]
        self.R = np.zeros((self.num_states, self.num_actions))
        self.unvisited = {(s, a) for s in range(self.num_states) for a in range(self.num_actions)}
        self.phase = WARMING
        self.step_in_episode = 0
        self.warmup_steps = self.config.warmup.length(self.episode)
        return self

    def act(self, s, rng=None):
        u = (rng or self.rng).random()
        return bisect.bisect_right(self._cum_policy[s], u)

    def observe(self, s, a, reward, s_next):
        """Process one own-chain transition; returns True once every pair is covered.

        Players that are already done keep feeding their counters while the
        other players finish the episode, but never touch ``R`` again.
        """
        self.confidence.record_transition(s, a, s_next)
        if self.phase == WARMING and self.step_in_episode >= self.warmup_steps:
            self.phase = COVERING
        if self.phase == COVERING and (s, a) in self.unvisited:
            self.unvisited.discard((s, a))
            self.R[s, a] = reward
            if not self.unvisited:
                self.phase = DONE
        self.step_in_episode += 1
        return self.phase == DONE

    @property
    def local_done(self):
        return self.phase == DONE

    def end_episode(self):
        """Confidence update followed by the mirror-descent step.

        Returns a small event dict.  A collapsed confidence box is reported
        under ``"collapse"`` and replaced by a fresh, non-intersected box so
        the run can continue; projection infeasibility propagates.
        """
        cfg = self.config
        event = {"episode": self.episode, "collapse": None}
        try:
            self.confidence.end_episode_update(cfg.widths)
        except ConfidenceCollapseError as err:
            event["collapse"] = str(err)
            self.confidence.restart(cfg.widths)
        eta = cfg.step_size(self.episode)
        old = self.q_hat
        if not cfg.frozen:
            gradient = np.repeat(self.R[:, :, None], self.num_states, axis=2)
            constraints = as_constraints(self.confidence, self.spec, verify=False)
            self.q_hat = omd_update(old, gradient, eta, constraints, cfg.regularizer)
        event["eta"] = eta
        event["update_norm"] = float(np.linalg.norm(self.q_hat - old))
        event["max_width"] = self.confidence.max_width()
        self.episode += 1
        return event

    def snapshot(self):
        return {
            "q_hat": self.q_hat.copy(),
            "policy": None if self.policy is None else self.policy.copy(),
            "R": self.R.copy(),
            "lower": self.confidence.lower.copy(),
            "upper": self.confidence.upper.copy(),
        }
