import inspect
import json

import numpy as np
import pytest

from indchains.errors import ErgodicityError, SnapshotError, StructuralError
from indchains.evaluation import ni_gap
from indchains.game import JointGame, PlayerModel, g1, g2, g3, trivial_game
from indchains.learner import Learner
from indchains.simulator import (
    RunRecord, build_config, csv_columns, derive_run_seeds, final_policies, player_rng,
    policy_hash, replay_policies, run,
)


def g1_run(episodes=10, seed=7, **kw):
    return run(build_config(g1(), "finite", episodes, master_seed=seed, delta=0.02, **kw))


def dominant_game():
    """Each player has a strictly better own action whatever the opponent does."""
    k = np.ones((1, 2, 1))
    r0 = np.zeros((1, 1, 2, 2))
    r0[0, 0, 0, :], r0[0, 0, 1, :] = 0.8, 0.2
    r0[0, 0, :, 1] += 0.1
    r1 = np.zeros((1, 1, 2, 2))
    r1[0, 0, :, 0], r1[0, 0, :, 1] = 0.7, 0.3
    r1[0, 0, 1, :] += 0.1
    return JointGame(players=(PlayerModel(0, k), PlayerModel(1, k)), rewards=(r0, r1), name="dominant")


@pytest.mark.parametrize("d", [0, 3, 7])
def test_trivial_game_episode_length(d):
    game = trivial_game(0.3)
    rec = run(build_config(game, "finite", 5, warmup=d, delta=1.0, tau=1.0))
    assert np.all(rec.episode_lengths == d + 1)
    assert all(np.allclose(q, 1.0) for qs in rec.snapshots.values() for q in qs)
    assert rec.meta["steps_total"] == 5 * (d + 1)


def test_trivial_learner_reads_single_reward(monkeypatch):
    seen = []
    orig = Learner.end_episode

    def spy(self):
        seen.append(self.R.copy())
        return orig(self)

    monkeypatch.setattr(Learner, "end_episode", spy)
    run(build_config(trivial_game(0.3), "finite", 1, warmup=2, delta=1.0, tau=1.0))
    assert seen[0].tolist() == [[0.3]]


def test_run_is_deterministic():
    a, b = g1_run(), g1_run()
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()
    assert g1_run(seed=8).to_csv() != a.to_csv()


def test_oracle_does_not_perturb_trajectories():
    on, off = g1_run(oracle=True), g1_run(oracle=False)
    assert on.column("tau_k") == off.column("tau_k")
    assert on.policy_hashes == off.policy_hashes
    assert off.coverage is None and off.last("ni_gap_weighted") is None


def test_seed_streams_are_independent_and_reproducible():
    a = player_rng(5, 0, 0).random(4)
    assert np.array_equal(a, player_rng(5, 0, 0).random(4))
    assert not np.array_equal(a, player_rng(5, 1, 0).random(4))
    assert not np.array_equal(a, player_rng(5, 0, 1).random(4))
    seeds = derive_run_seeds(3, 6)
    assert seeds == derive_run_seeds(3, 6) and len(set(seeds)) == 6


def test_replay_first_episode_uniform_and_hashes_match():
    game = g1()
    rec = g1_run(episodes=12, record_every=5)
    assert all(np.allclose(p, 0.5) for p in replay_policies(rec, game, 1))
    assert sorted(rec.snapshots) == [1, 5, 10, 12, 13]
    for k in rec.snapshots:
        pols = replay_policies(rec, game, k)
        assert [policy_hash(p) for p in pols] == rec.policy_hashes[k]


def test_replay_missing_snapshot_names_nearest():
    rec = g1_run(episodes=12, record_every=5)
    with pytest.raises(SnapshotError) as info:
        replay_policies(rec, g1(), 6)
    assert list(info.value.available) == [1, 5, 10, 12, 13]
    assert "nearest stored episode is 5" in str(info.value)


def test_json_roundtrip_preserves_replay():
    game = g1()
    rec = g1_run(episodes=6, record_every=3)
    back = RunRecord.from_dict(json.loads(rec.to_json()))
    assert back.to_csv() == rec.to_csv()
    for k in rec.snapshots:
        assert np.allclose(np.concatenate([p.ravel() for p in replay_policies(back, game, k)]),
                           np.concatenate([p.ravel() for p in replay_policies(rec, game, k)]))


def test_csv_schema():
    rec = g1_run(episodes=4, record_every=2)
    lines = rec.to_csv().splitlines()
    header = lines[0].split(",")
    assert header == csv_columns(2)
    assert header[:6] == ["k", "steps_total", "tau_k", "update_norm_0", "max_width_0", "coverage_0"]
    assert header[-6:] == ["error_0", "regret_0", "bias_0", "error_1", "regret_1", "bias_1"]
    assert len(lines) == 5 and all(len(l.split(",")) == len(header) for l in lines)
    ks = [int(l.split(",")[0]) for l in lines[1:]]
    assert ks == [1, 2, 3, 4]


def test_rows_strictly_increasing():
    rec = RunRecord(n=1)
    rec.append({"k": 1})
    with pytest.raises(StructuralError):
        rec.append({"k": 1})
    with pytest.raises(StructuralError):
        rec.append({"k": 2, "bogus": 1})


def test_steps_total_is_running_sum():
    rec = g1_run(episodes=8)
    assert np.array_equal(np.cumsum(rec.column("tau_k")), rec.column("steps_total"))


def test_barrier_every_end_precedes_next_begin(monkeypatch):
    log = []
    begin, end = Learner.begin_episode, Learner.end_episode

    def spy_begin(self):
        log.append(("begin", id(self), self.episode))
        return begin(self)

    def spy_end(self):
        log.append(("end", id(self), self.episode))
        return end(self)

    monkeypatch.setattr(Learner, "begin_episode", spy_begin)
    monkeypatch.setattr(Learner, "end_episode", spy_end)
    run(build_config(g3(), "finite", 5, delta=0.02, master_seed=1))
    players = {pid for _, pid, _ in log}
    assert len(players) == 3
    for k in range(1, 6):
        last_end = max(j for j, (kind, _, ep) in enumerate(log) if kind == "end" and ep == k)
        starts_next = [j for j, (kind, _, ep) in enumerate(log) if kind == "begin" and ep == k + 1]
        ends_k = [j for j, (kind, _, ep) in enumerate(log) if kind == "end" and ep == k]
        assert len(ends_k) == 3
        assert all(j > last_end for j in starts_next)


def test_learners_only_see_their_own_chain(monkeypatch):
    seen = {}
    observe = Learner.observe

    def spy(self, s, a, reward, s_next):
        seen.setdefault(id(self), set()).add((type(s), type(a), type(reward), type(s_next)))
        assert 0 <= s < self.num_states and 0 <= a < self.num_actions
        assert 0.0 <= reward <= 1.0
        return observe(self, s, a, reward, s_next)

    monkeypatch.setattr(Learner, "observe", spy)
    run(build_config(g1(), "finite", 3, delta=0.02))
    assert all(t == {(int, int, float, int)} for t in seen.values())
    assert list(inspect.signature(Learner.observe).parameters)[1:] == ["s", "a", "reward", "s_next"]


def test_episode_length_bound_loose():
    rec = run(build_config(g1(), "finite", 100, delta=0.05, warmup=20, master_seed=3, oracle=False))
    assert rec.episode_lengths.mean() <= 20 + 200
    assert rec.episode_lengths.min() >= 20 + 4


def test_unreachable_game_rejected():
    k = np.zeros((2, 1, 2))
    k[:, 0, 0] = 1.0
    game = JointGame(players=(PlayerModel(0, k),), rewards=(np.zeros((2, 1)),), name="absorbing")
    with pytest.raises(ErgodicityError):
        run(build_config(game, "finite", 3, delta=0.1, tau=1.0))


def test_weighted_gap_logged_nonnegative():
    rec = g1_run(episodes=20, record_every=5)
    gaps = [g for g in rec.column("ni_gap_weighted") if g is not None]
    assert len(gaps) == 5 and min(gaps) >= -1e-9


def test_dominant_action_game_converges_asymptotically():
    # Strictly stable instance: the unique equilibrium of the shrunk game plays
    # the dominant action with probability 1 - delta.
    game = dominant_game()
    delta = 0.01
    for seed in range(3):
        rec = run(build_config(game, "asymptotic", 600, delta=delta, master_seed=seed,
                               record_every=100))
        pols = final_policies(rec, game)
        for p in pols:
            assert p[0, 0] == pytest.approx(1 - delta, abs=0.02)
        assert ni_gap(game, pols, delta).instant <= 0.01


def test_matching_pennies_asymptotic_smoke():
    rec = run(build_config(g2(), "asymptotic", 50, delta=0.01, master_seed=0, record_every=10))
    assert len(rec.rows) == 50 and not rec.halted
    assert all(g >= -1e-9 for g in rec.column("ni_gap_weighted") if g is not None)
