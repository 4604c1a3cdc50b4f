import dataclasses
import math

import numpy as np
import pytest

from lanechange import qnet
from lanechange.agent import (
    DQNAgent,
    EpsilonSchedule,
    ReplayBuffer,
    TrainingConfig,
    benchmark_decide,
    epsilon_at,
    greedy_action,
    run_training,
    write_metrics_csv,
)
from lanechange.indicators import builtin_profile
from lanechange.reward import RewardParams
from lanechange.simulation import Action, ScenarioConfig, sample_initial_state

from test_qnet import zero_network


def fixed_q_network(q_change, q_keep):
    """All-zero weights, output biases pinned to fixed Q-values."""
    net = zero_network()
    net.biases[3][0] = q_change
    net.biases[3][1] = q_keep
    return net


def small_config(**kwargs):
    defaults = dict(episodes=40, replay_warmup=64, replay_capacity=512,
                    batch_size=16, seed=3, style="normal")
    defaults.update(kwargs)
    return TrainingConfig(**defaults)


class TestEpsilonSchedule:
    def test_schedule_endpoints(self):
        schedule = EpsilonSchedule(0.8, 0.1, 10000)
        assert epsilon_at(schedule, 0) == 0.8
        assert epsilon_at(schedule, 10000) == pytest.approx(0.1)
        assert epsilon_at(schedule, 5000) == pytest.approx(0.45)

    def test_clamped_beyond_total(self):
        schedule = EpsilonSchedule(0.8, 0.1, 100)
        assert epsilon_at(schedule, 1000) == pytest.approx(0.1)


class TestSelectAction:
    def test_greedy_argmax(self):
        agent = DQNAgent(small_config(), net=fixed_q_network(0.2, 0.8))
        action = agent.select_action(np.full(8, 0.5), 0.0, np.random.default_rng(0))
        assert action == Action.KEEP

    def test_tie_breaks_toward_keep(self):
        agent = DQNAgent(small_config(), net=fixed_q_network(0.5, 0.5))
        action = agent.select_action(np.full(8, 0.5), 0.0, np.random.default_rng(0))
        assert action == Action.KEEP

    def test_full_exploration_is_uniform(self):
        agent = DQNAgent(small_config(), net=fixed_q_network(0.0, 1.0))
        rng = np.random.default_rng(12)
        draws = 10_000
        changes = sum(
            agent.select_action(np.full(8, 0.5), 1.0, rng) == Action.CHANGE
            for _ in range(draws)
        )
        sigma = math.sqrt(draws * 0.25)
        assert abs(changes - draws / 2) <= 3 * sigma


class TestReplayBuffer:
    def test_fifo_eviction_with_sentinels(self):
        buffer = ReplayBuffer(capacity=5)
        for i in range(8):
            buffer.push(np.full(8, float(i)), Action.KEEP, float(i),
                        np.full(8, float(i)), False)
        assert len(buffer) == 5
        # Oldest three (0, 1, 2) evicted.
        assert set(buffer.rewards.tolist()) == {3.0, 4.0, 5.0, 6.0, 7.0}
        assert buffer.inserted == 8

    def test_sample_draws_without_replacement(self):
        buffer = ReplayBuffer(capacity=16)
        for i in range(16):
            buffer.push(np.zeros(8), Action.KEEP, float(i), np.zeros(8), False)
        _, _, rewards, _, _ = buffer.sample(16, np.random.default_rng(0))
        assert sorted(rewards.tolist()) == [float(i) for i in range(16)]


class TestTrainStep:
    def fill_buffer(self, agent, n, terminal, reward=1.5, rng=None):
        rng = rng or np.random.default_rng(0)
        buffer = ReplayBuffer(agent.config.replay_capacity)
        for _ in range(n):
            buffer.push(rng.uniform(size=8), Action(int(rng.integers(2))), reward,
                        rng.uniform(size=8), terminal)
        return buffer

    def test_error_before_warmup(self):
        agent = DQNAgent(small_config(), rng=np.random.default_rng(0))
        buffer = self.fill_buffer(agent, 10, terminal=False)
        with pytest.raises(RuntimeError, match="warmup"):
            agent.train_step(buffer, np.random.default_rng(0))

    def test_all_terminal_targets_equal_rewards(self):
        # With a zero network Q == 0, so loss == mean(r^2) when y == r.
        agent = DQNAgent(small_config(), net=zero_network())
        buffer = self.fill_buffer(agent, 64, terminal=True, reward=1.5)
        loss = agent.train_step(buffer, np.random.default_rng(1))
        assert loss == pytest.approx(1.5**2)

    def test_discount_zero_targets_equal_rewards(self):
        config = small_config(discount=0.0)
        agent = DQNAgent(config, net=zero_network())
        buffer = self.fill_buffer(agent, 64, terminal=False, reward=2.0)
        loss = agent.train_step(buffer, np.random.default_rng(1))
        assert loss == pytest.approx(4.0)

    def test_bootstrap_cap_limits_targets(self):
        # Target net predicts Q == 5 everywhere; cap 1.0 limits the
        # continuation to 1.0, so y = r + gamma * 1.
        config = small_config(discount=0.5, bootstrap_value_cap=1.0)
        agent = DQNAgent(config, net=fixed_q_network(5.0, 5.0))
        agent.sync_target()
        agent.net = zero_network()
        buffer = self.fill_buffer(agent, 64, terminal=False, reward=1.0)
        loss = agent.train_step(buffer, np.random.default_rng(1))
        assert loss == pytest.approx(1.5**2)

    def test_overfit_single_batch_loss_decreases(self):
        config = small_config(batch_size=16, replay_warmup=16)
        agent = DQNAgent(config, rng=np.random.default_rng(5))
        rng = np.random.default_rng(6)
        buffer = ReplayBuffer(16)
        for _ in range(16):
            buffer.push(rng.uniform(size=8), Action(int(rng.integers(2))),
                        rng.uniform(0, 3), rng.uniform(size=8), True)
        losses = [agent.train_step(buffer, np.random.default_rng(7))
                  for _ in range(100)]
        assert losses[-1] < 0.01 * losses[0]
        # Overall downtrend: each quarter strictly below the previous.
        quarters = [np.mean(losses[i:i + 25]) for i in range(0, 100, 25)]
        assert all(b < a for a, b in zip(quarters, quarters[1:]))


class TestSyncTarget:
    def test_sync_copies_bitwise_and_freezes(self):
        agent = DQNAgent(small_config(), rng=np.random.default_rng(1))
        buffer = TestTrainStep().fill_buffer(agent, 64, terminal=True)
        agent.sync_target()
        probe = np.random.default_rng(2).uniform(size=(5, 8))
        np.testing.assert_array_equal(qnet.forward(agent.target, probe),
                                      qnet.forward(agent.net, probe))
        before = qnet.forward(agent.target, probe).copy()
        for _ in range(5):
            agent.train_step(buffer, np.random.default_rng(3))
        np.testing.assert_array_equal(qnet.forward(agent.target, probe), before)
        assert not np.allclose(qnet.forward(agent.net, probe), before)


class TestBenchmarkAgent:
    def test_obvious_cases(self):
        config = ScenarioConfig()
        profile = builtin_profile("normal")
        params = RewardParams()
        rng = np.random.default_rng(0)
        state = sample_initial_state(config, rng)
        # All indicator errors huge -> keep.
        far = dataclasses.replace(
            state, ego=dataclasses.replace(state.ego, v=state.front.v))
        assert benchmark_decide(far, profile, params, config) in (Action.KEEP, Action.CHANGE)

    def test_matches_brute_force_reward_comparison(self):
        # Independent oracle: recompute indicators and piecewise rewards with
        # local arithmetic, then compare total rewards directly.
        config = ScenarioConfig()
        profile = builtin_profile("aggressive")
        params = RewardParams()
        rng = np.random.default_rng(99)

        def oracle(state):
            v_e = state.ego.v
            refs = [a * v_e + b for a, b in zip(profile.slopes, profile.intercepts)]

            def ttc(gap, closing):
                return min(gap / closing, config.ttc_cap) if closing > 0 else config.ttc_cap

            errors = [
                abs(ttc(state.front.x - state.ego.x, v_e - state.front.v) - refs[0]),
                abs(ttc(state.target_front.x - state.ego.x, v_e - state.target_front.v) - refs[1]),
                abs((v_e - state.target_behind.v) - refs[2]),
            ]
            if state.ego.x - state.target_behind.x > config.behind_relevance_limit:
                errors[2] = 0.0
            r_change = r_keep = 0.0
            for e, m, n in zip(errors, params.max_acceptable, params.max_effective):
                if e <= m:
                    c = 1.0
                elif e >= n:
                    c = 0.0
                else:
                    c = (n - e) / (n - m)
                r_change += c
                r_keep += 1.0 - c
            return Action.CHANGE if r_change > r_keep else Action.KEEP

        for _ in range(10_000):
            state = sample_initial_state(config, rng)
            assert benchmark_decide(state, profile, params, config) == oracle(state)

    def test_change_iff_reward_above_half(self):
        # Complementarity corollary: CHANGE iff R_change > 1.5.
        from lanechange.indicators import compute_indicators, reference_values
        from lanechange.reward import total_reward

        config = ScenarioConfig()
        profile = builtin_profile("normal")
        params = RewardParams()
        rng = np.random.default_rng(13)
        for _ in range(2000):
            state = sample_initial_state(config, rng)
            refs = reference_values(profile, state.ego.v)
            r_change = total_reward(compute_indicators(state, config), refs,
                                    Action.CHANGE, params).total
            expected = Action.CHANGE if r_change > 1.5 else Action.KEEP
            assert benchmark_decide(state, profile, params, config) == expected


class TestRunTraining:
    def test_metrics_rows_and_determinism(self):
        config = small_config(episodes=60)
        a = run_training(config)
        b = run_training(config)
        assert len(a.rows) == 60
        assert a.rows == b.rows
        for row in a.rows:
            assert row["termination"] in ("changed", "max_steps", "forced_stop")
            assert 0.0 <= row["step_reward"] <= 3.0

    def test_different_seed_changes_trace(self):
        a = run_training(small_config(seed=1))
        b = run_training(small_config(seed=2))
        assert a.rows != b.rows

    def test_outputs_written(self, tmp_path):
        config = small_config(episodes=25, checkpoint_every=10)
        result = run_training(config, out_dir=tmp_path)
        assert (tmp_path / "metrics.csv").exists()
        assert (tmp_path / "checkpoint.json").exists()
        assert (tmp_path / "checkpoint_ep000010.json").exists()
        assert (tmp_path / "checkpoint_ep000020.json").exists()
        header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
        assert header == "episode,step_reward,loss,steps,termination,epsilon"
        loaded, _ = qnet.load_checkpoint(result.checkpoint_path)
        probe = np.random.default_rng(0).uniform(size=8)
        np.testing.assert_array_equal(qnet.forward(loaded, probe),
                                      qnet.forward(result.network, probe))

    def test_target_sync_cadence_covers_episode_zero(self):
        # After episode 0 the target equals the initial net, so training on
        # a warmup-filled buffer starts from a synced target.
        config = small_config(episodes=1)
        result = run_training(config)
        assert len(result.rows) == 1

    def test_validation_catches_bad_config(self):
        with pytest.raises(ValueError):
            small_config(epsilon_start=0.1, epsilon_end=0.8).validate()
        with pytest.raises(ValueError):
            small_config(replay_warmup=10_000, replay_capacity=100).validate()
        with pytest.raises(ValueError):
            small_config(update_cadence="sometimes").validate()

    def test_config_round_trip_rejects_unknown_keys(self):
        config = small_config()
        data = config.to_dict()
        assert TrainingConfig.from_dict(data) == config
        data["mystery"] = 1
        with pytest.raises(ValueError, match="unknown"):
            TrainingConfig.from_dict(data)

    def test_greedy_action_prefers_larger_q(self):
        assert greedy_action(fixed_q_network(1.0, 0.0), np.full(8, 0.5)) == Action.CHANGE
