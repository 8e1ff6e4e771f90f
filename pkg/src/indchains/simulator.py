"""Multi-player runs: joint stepping, episode barrier, seeding and records.

Learners see only their own ``(s, a, r, s')``.  The simulator owns the true
game, advances all chains in lock step and ends an episode once every
learner has covered its state-action pairs.

Seeding: the master seed feeds :class:`numpy.random.SeedSequence`; player
``i`` gets the child with spawn key ``(i, 0)`` for action sampling and
``(i, 1)`` for its own kernel sampling.  Diagnostics never draw random
numbers, so turning the oracle on or off leaves trajectories unchanged.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .confidence import WidthSchedule
from .errors import ErgodicityError, InfeasibleError, SnapshotError, StructuralError
from .evaluation import GapTracker, nu_error_bound
from .game import JointGame, check_policy, validate_game
from .learner import (
    Learner, LearnerConfig, StepSizeSchedule, WarmupSchedule, default_delta,
)
from .occupancy import induced_kernel_and_policy

ACTION_STREAM = 0
KERNEL_STREAM = 1


def player_rng(master_seed, player, purpose):
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(player), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_run_seeds(master_seed, count):
    """Independent integer master seeds for ``count`` runs of one batch."""
    children = np.random.SeedSequence(int(master_seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


@dataclass
class SimulationConfig:
    game: JointGame
    learner_configs: list
    episodes: int
    master_seed: int = 0
    oracle: bool = True
    record_every: int = 1
    tau: float | None = None
    initial_state: tuple | None = None
    initial_policies: list | None = None
    max_episode_steps: int | None = None
    mode: str = "finite"

    def __post_init__(self):
        if len(self.learner_configs) != self.game.n:
            raise StructuralError(
                f"expected {self.game.n} learner configs, got {len(self.learner_configs)}"
            )
        if self.episodes < 1:
            raise StructuralError(f"episodes must be >= 1, got {self.episodes}")
        if self.record_every < 1:
            raise StructuralError(f"record_every must be >= 1, got {self.record_every}")


def build_config(game: JointGame, mode="finite", episodes=100, *, gamma=0.1, epsilon=0.1,
                 c=1.0, delta=None, tau=None, power=0.75, warmup=None,
                 width_variant="tight", master_seed=0, oracle=True, record_every=1,
                 frozen=False, initial_policies=None):
    """Learner configs for every player from the headline parameter choices.

    ``tau`` defaults to the bound from :func:`validate_game`; ``warmup``
    overrides the warm-up length with a constant; ``delta`` overrides the
    conservative default shrinkage.
    """
    if mode not in ("finite", "asymptotic"):
        raise StructuralError(f"mode must be 'finite' or 'asymptotic', got {mode!r}")
    if tau is None:
        tau = validate_game(game).tau_bound
    if math.isinf(tau):
        raise ErgodicityError("mixing parameter is unbounded; the game violates ergodicity")
    min_states = min(game.state_shape)
    horizon = episodes if mode == "finite" else None
    if warmup is not None:
        warm = WarmupSchedule("finite", tau, float(warmup))
    elif mode == "finite":
        warm = WarmupSchedule.finite(tau, episodes, min_states)
    else:
        warm = WarmupSchedule("asymptotic", tau)
    steps = StepSizeSchedule(mode, c, horizon, power)
    configs = []
    for p in game.players:
        S, A = p.num_states, p.num_actions
        d = default_delta(epsilon, S, A, game.n, tau) if delta is None else delta
        widths = WidthSchedule(mode, game.n, gamma, S, A, horizon=horizon, variant=width_variant)
        configs.append(LearnerConfig(
            delta=float(d), step_size=steps, warmup=warm, widths=widths,
            epsilon=epsilon, frozen=frozen,
        ))
    return SimulationConfig(
        game=game, learner_configs=configs, episodes=episodes, master_seed=master_seed,
        oracle=oracle, record_every=record_every, tau=tau, mode=mode,
        initial_policies=initial_policies,
    )


def policy_hash(policy):
    return hashlib.sha256(np.ascontiguousarray(policy, dtype=float).tobytes()).hexdigest()[:16]


def csv_columns(n):
    cols = ["k", "steps_total", "tau_k"]
    for i in range(n):
        cols += [f"update_norm_{i}", f"max_width_{i}", f"coverage_{i}"]
    cols += ["ni_gap_weighted", "ni_gap_instant"]
    for i in range(n):
        cols += [f"error_{i}", f"regret_{i}", f"bias_{i}"]
    return cols


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunRecord:
    """Append-only per-episode log of one run plus snapshots for replay."""

    n: int
    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    extras: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    policy_hashes: dict = field(default_factory=dict)
    halted: bool = False

    @property
    def columns(self):
        return csv_columns(self.n)

    def append(self, row, extra=None):
        if self.rows and row["k"] <= self.rows[-1]["k"]:
            raise StructuralError(
                f"rows must be strictly increasing in k: {row['k']} after {self.rows[-1]['k']}"
            )
        unknown = set(row) - set(self.columns)
        if unknown:
            raise StructuralError(f"unknown record columns {sorted(unknown)}")
        self.rows.append(row)
        self.extras.append(extra or {})

    def column(self, name):
        return [r.get(name) for r in self.rows]

    def last(self, name):
        for r in reversed(self.rows):
            if r.get(name) is not None:
                return r[name]
        return None

    @property
    def coverage(self):
        """True kernel inside every episode's box for every player (None without oracle)."""
        flags = [r.get(f"coverage_{i}") for r in self.rows for i in range(self.n)]
        if not flags or any(f is None for f in flags):
            return None
        return all(flags)

    @property
    def episode_lengths(self):
        return np.array([r["tau_k"] for r in self.rows])

    def to_csv(self, target=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([_fmt(r.get(c)) for c in self.columns])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self, include_snapshots=True):
        out = {
            "meta": self.meta,
            "columns": self.columns,
            "rows": self.rows,
            "extras": self.extras,
            "errors": self.errors,
            "halted": self.halted,
            "policy_hashes": {str(k): v for k, v in self.policy_hashes.items()},
        }
        if include_snapshots:
            out["snapshots"] = {
                str(k): [q.tolist() for q in qs] for k, qs in self.snapshots.items()
            }
        return out

    def to_json(self, target=None, include_snapshots=True):
        text = json.dumps(self.to_dict(include_snapshots), indent=1, default=_json_default)
        if target is not None:
            with open(target, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, data):
        rec = cls(n=len([c for c in data["columns"] if c.startswith("update_norm_")]))
        rec.meta = data.get("meta", {})
        rec.rows = data["rows"]
        rec.extras = data.get("extras", [{} for _ in rec.rows])
        rec.errors = data.get("errors", [])
        rec.halted = data.get("halted", False)
        rec.policy_hashes = {int(k): v for k, v in data.get("policy_hashes", {}).items()}
        rec.snapshots = {
            int(k): [np.array(q) for q in qs] for k, qs in data.get("snapshots", {}).items()
        }
        return rec


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def replay_policies(record: RunRecord, game: JointGame, k):
    """Policies every player used in episode ``k``, from the stored ``q_hat``."""
    if k not in record.snapshots:
        available = sorted(record.snapshots)
        nearest = min(available, key=lambda j: (abs(j - k), j)) if available else None
        raise SnapshotError(
            f"no snapshot for episode {k}; nearest stored episode is {nearest}",
            available=available,
        )
    qs = record.snapshots[k]
    if len(qs) != game.n:
        raise StructuralError(f"snapshot has {len(qs)} players, game has {game.n}")
    policies = []
    for q, p in zip(qs, game.players):
        q = np.asarray(q)
        if q.shape != (p.num_states, p.num_actions, p.num_states):
            raise StructuralError(f"snapshot shape {q.shape} does not match player {p.player_id}")
        policies.append(induced_kernel_and_policy(q)[1])
    return policies


def _should_log(k, cfg):
    return k == 1 or k == cfg.episodes or k % cfg.record_every == 0


def run(config: SimulationConfig) -> RunRecord:
    """Execute ``config.episodes`` episodes and return the record."""
    game = config.game
    n = game.n
    report = validate_game(game)
    if report.alpha <= 0.0:
        raise ErgodicityError("; ".join(report.violations) or "reachability constant is zero")
    tau = report.tau_bound if config.tau is None else config.tau

    learners = []
    for i, (p, lc) in enumerate(zip(game.players, config.learner_configs)):
        init = None if config.initial_policies is None else config.initial_policies[i]
        learners.append(Learner(p.num_states, p.num_actions, lc,
                                rng=player_rng(config.master_seed, i, ACTION_STREAM),
                                initial_policy=init))
    kernel_rngs = [player_rng(config.master_seed, i, KERNEL_STREAM) for i in range(n)]
    cums = [p.cumulative for p in game.players]
    rewards = game.rewards
    tracker = GapTracker(game, [lc.delta for lc in config.learner_configs]) if config.oracle else None

    record = RunRecord(n=n, meta={
        "game": game.name, "n": n, "mode": config.mode, "episodes": config.episodes,
        "master_seed": int(config.master_seed), "tau": tau, "record_every": config.record_every,
        "deltas": [lc.delta for lc in config.learner_configs],
        "oracle": bool(config.oracle),
    })
    state = tuple(config.initial_state) if config.initial_state is not None else (0,) * n
    steps_total = 0
    cap = config.max_episode_steps

    for k in range(1, config.episodes + 1):
        for L in learners:
            L.begin_episode()
        logged = _should_log(k, config)
        if logged:
            record.snapshots[k] = [L.q_hat.copy() for L in learners]
            record.policy_hashes[k] = [policy_hash(L.policy) for L in learners]
        done = [False] * n
        remaining = n
        length = 0
        while remaining:
            actions = tuple(L.act(s) for L, s in zip(learners, state))
            idx = state + actions
            nxt = tuple(
                bisect.bisect_right(cums[i][state[i]][actions[i]], kernel_rngs[i].random())
                for i in range(n)
            )
            for i, L in enumerate(learners):
                if L.observe(state[i], actions[i], float(rewards[i][idx]), nxt[i]) and not done[i]:
                    done[i] = True
                    remaining -= 1
            state = nxt
            length += 1
            if cap is not None and length >= cap and remaining:
                record.errors.append({"episode": k, "player": done.index(False), "kind": "episode_cap",
                                      "message": f"episode exceeded {cap} steps"})
                break
        steps_total += length

        # Snapshot of what was played this episode before the update moves q_hat.
        played_q = [L.q_hat for L in learners]
        played_pi = [L.policy for L in learners]
        played_R = [L.R.copy() for L in learners]
        prior_width = [L.confidence.max_width() for L in learners]
        eta = learners[0].config.step_size(k)

        events = []
        for i, L in enumerate(learners):
            try:
                ev = L.end_episode()
            except InfeasibleError as err:
                record.errors.append({"episode": k, "player": i, "kind": "infeasible",
                                      "message": str(err)})
                record.halted = True
                break
            if ev["collapse"] is not None:
                record.errors.append({"episode": k, "player": i, "kind": "coverage",
                                      "message": ev["collapse"]})
            events.append(ev)
        if record.halted:
            break

        row = {"k": k, "steps_total": steps_total, "tau_k": length}
        for i, (L, ev, p) in enumerate(zip(learners, events, game.players)):
            row[f"update_norm_{i}"] = ev["update_norm"]
            row[f"max_width_{i}"] = ev["max_width"]
            if config.oracle:
                row[f"coverage_{i}"] = ev["collapse"] is None and L.confidence.contains(p.kernel)
        extra = {}
        if tracker is not None:
            terms = tracker.add_episode(eta, played_q, played_pi, played_R, with_instant=logged)
            extra["nu_error"] = terms.nu_error.tolist()
            extra["nu_bound"] = [
                nu_error_bound(p.num_states, tau, w) for p, w in zip(game.players, prior_width)
            ]
            extra["values"] = terms.values.tolist()
            if logged:
                weighted, split = tracker.weighted()
                row["ni_gap_weighted"] = weighted.weighted
                row["ni_gap_instant"] = terms.instant["report"].instant
                for i in range(n):
                    row[f"error_{i}"] = float(split.error[i])
                    row[f"regret_{i}"] = float(split.regret[i])
                    row[f"bias_{i}"] = float(split.bias[i])
                extra["instant_error"] = terms.instant["error"].tolist()
                extra["instant_regret"] = terms.instant["regret"].tolist()
                extra["instant_bias"] = terms.instant["bias"].tolist()
        record.append(row, extra)

    final = config.episodes + 1
    if not record.halted:
        record.snapshots[final] = [L.q_hat.copy() for L in learners]
        record.policy_hashes[final] = [
            policy_hash(induced_kernel_and_policy(L.q_hat)[1]) for L in learners
        ]
    record.meta["steps_total"] = steps_total
    return record


def final_policies(record: RunRecord, game: JointGame):
    """Policies induced by the occupancy estimates after the last update."""
    return replay_policies(record, game, max(record.snapshots))


def monte_carlo_values(game: JointGame, policies, steps, seed=0, initial_state=None):
    """Empirical average reward of a stationary joint policy over ``steps`` steps.

    Each player's own (state, action) path is a Markov chain of its own, so
    the paths are sampled one player at a time and the rewards read off at
    the end.
    """
    n = game.n
    rng = np.random.default_rng(seed)
    state0 = (0,) * n if initial_state is None else tuple(initial_state)
    paths_s, paths_a = [], []
    for i, (p, pi) in enumerate(zip(game.players, policies)):
        pi = check_policy(pi)
        pol_cum = np.cumsum(pi, axis=1)
        pol_cum[:, -1] = 1.0
        pol_cum = [list(r) for r in pol_cum]
        ker_cum = p.cumulative
        u_act = rng.random(steps).tolist()
        u_next = rng.random(steps).tolist()
        s = state0[i]
        ss = np.empty(steps, dtype=np.int64)
        aa = np.empty(steps, dtype=np.int64)
        for t in range(steps):
            a = bisect.bisect_right(pol_cum[s], u_act[t])
            ss[t] = s
            aa[t] = a
            s = bisect.bisect_right(ker_cum[s][a], u_next[t])
        paths_s.append(ss)
        paths_a.append(aa)
    idx = tuple(paths_s) + tuple(paths_a)
    return np.array([float(r[idx].mean()) for r in game.rewards])
