import dataclasses

import numpy as np
import pytest

from lanechange.simulation import (
    Action,
    Environment,
    ScenarioConfig,
    ScenarioState,
    Termination,
    VehicleState,
    normalize_state,
    replay_episode,
    sample_initial_state,
    split_episodes,
    step,
    trace_record,
    validate_state,
)


def make_state(ego_v=20.0, front_gap=50.0, front_v=20.0, nf_gap=60.0, nf_v=18.0,
               nb_gap=40.0, nb_v=15.0):
    return ScenarioState(
        ego=VehicleState(x=0.0, v=ego_v),
        front=VehicleState(x=front_gap, v=front_v),
        target_front=VehicleState(x=nf_gap, v=nf_v),
        target_behind=VehicleState(x=-nb_gap, v=nb_v),
    )


class TestSampling:
    def test_degenerate_speed_range_is_exact(self):
        config = ScenarioConfig(ego_speed_range=(20.0, 20.0))
        state = sample_initial_state(config, np.random.default_rng(0))
        assert state.ego.v == 20.0

    def test_same_seed_same_state(self):
        config = ScenarioConfig()
        a = sample_initial_state(config, np.random.default_rng(123))
        b = sample_initial_state(config, np.random.default_rng(123))
        assert a == b

    def test_behind_relevance_limit_holds_for_all_samples(self):
        # Wider gap range than the limit, so rejection sampling must work.
        config = ScenarioConfig(target_behind_gap_range=(5.0, 150.0),
                                behind_relevance_limit=100.0)
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            state = sample_initial_state(config, rng)
            assert state.behind_gap <= 100.0
            assert state.target_front is not None
            validate_state(state)

    def test_impossible_config_raises(self):
        config = ScenarioConfig(target_behind_gap_range=(120.0, 150.0),
                                behind_relevance_limit=100.0)
        with pytest.raises(RuntimeError):
            sample_initial_state(config, np.random.default_rng(0))

    def test_invalid_range_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(ego_speed_range=(27.0, 15.0)).validate()


class TestStep:
    def test_change_is_absorbing(self):
        config = ScenarioConfig()
        state = make_state()
        nxt, terminal, kind = step(state, Action.CHANGE, config)
        assert terminal and kind == Termination.CHANGED
        assert nxt == state

    def test_equal_speeds_preserve_gap(self):
        config = ScenarioConfig()
        state = make_state(ego_v=20.0, front_gap=50.0, front_v=20.0)
        nxt, terminal, _ = step(state, Action.KEEP, config)
        assert not terminal
        assert nxt.front_gap == pytest.approx(50.0)

    def test_forced_stop_at_min_gap(self):
        # gap' = 5.4 - (25 - 20) * 0.1 = 4.9 < 5
        config = ScenarioConfig()
        state = make_state(ego_v=25.0, front_gap=5.4, front_v=20.0)
        nxt, terminal, kind = step(state, Action.KEEP, config)
        assert terminal and kind == Termination.FORCED_STOP
        assert nxt.front_gap == pytest.approx(4.9)

    def test_max_steps_termination(self):
        config = ScenarioConfig(max_episode_steps=3)
        state = make_state()
        for expected_terminal in (False, False, True):
            state, terminal, kind = step(state, Action.KEEP, config)
            assert terminal == expected_terminal
        assert kind == Termination.MAX_STEPS
        assert state.step_index == 3

    def test_constant_speeds_and_monotone_positions(self):
        config = ScenarioConfig()
        state = make_state()
        speeds = (state.ego.v, state.front.v, state.target_front.v, state.target_behind.v)
        prev = state
        for _ in range(50):
            nxt, terminal, _ = step(prev, Action.KEEP, config)
            assert (nxt.ego.v, nxt.front.v, nxt.target_front.v, nxt.target_behind.v) == speeds
            assert nxt.ego.x >= prev.ego.x
            assert nxt.front.x >= prev.front.x
            assert nxt.target_behind.x >= prev.target_behind.x
            if terminal:
                break
            prev = nxt


class TestNormalization:
    def test_speed_at_vmax_maps_to_one(self):
        config = ScenarioConfig()
        state = make_state(ego_v=config.v_max)
        assert normalize_state(state, config)[0] == 1.0

    def test_ego_position_is_half(self):
        config = ScenarioConfig()
        rng = np.random.default_rng(3)
        for _ in range(100):
            state = sample_initial_state(config, rng)
            assert normalize_state(state, config)[1] == 0.5

    def test_front_at_half_sensing_range(self):
        config = ScenarioConfig()
        state = make_state(front_gap=config.sensing_range / 2.0)
        # (D/2 + D) / (2 D) = 0.75
        assert normalize_state(state, config)[3] == pytest.approx(0.75)

    def test_bounds_hold_for_adversarial_states(self):
        config = ScenarioConfig()
        rng = np.random.default_rng(11)
        for _ in range(2000):
            state = ScenarioState(
                ego=VehicleState(x=0.0, v=rng.uniform(0, 100)),
                front=VehicleState(x=rng.uniform(0.1, 1000), v=rng.uniform(0, 100)),
                target_front=None if rng.random() < 0.2 else
                VehicleState(x=rng.uniform(0.1, 1000), v=rng.uniform(0, 100)),
                target_behind=VehicleState(x=-rng.uniform(0.1, 1000), v=rng.uniform(0, 100)),
            )
            vec = normalize_state(state, config)
            assert vec.shape == (8,)
            assert np.all(vec > 0.0) and np.all(vec <= 1.0)

    def test_missing_target_front_maps_to_far_fast(self):
        config = ScenarioConfig()
        state = dataclasses.replace(make_state(), target_front=None)
        vec = normalize_state(state, config)
        assert vec[4] == 1.0 and vec[5] == 1.0


class TestDeterminismAndTraces:
    def run_episode(self, seed, actions):
        config = ScenarioConfig()
        env = Environment(config)
        state = env.reset(np.random.default_rng(seed))
        records = []
        for action in actions:
            nxt, terminal, _ = env.step(action)
            records.append(trace_record(state, action, terminal))
            if terminal:
                break
            state = nxt
        return records

    def test_identical_runs_are_bit_identical(self):
        actions = [Action.KEEP] * 30 + [Action.CHANGE]
        assert self.run_episode(5, actions) == self.run_episode(5, actions)

    def test_trace_replays_exactly(self):
        config = ScenarioConfig()
        records = self.run_episode(9, [Action.KEEP] * 12 + [Action.CHANGE])
        episodes = list(split_episodes(records))
        assert len(episodes) == 1
        assert replay_episode(episodes[0], config) == []

    def test_tampered_trace_is_detected(self):
        config = ScenarioConfig()
        records = self.run_episode(9, [Action.KEEP] * 12 + [Action.CHANGE])
        records[5]["ego"]["x"] += 0.5
        assert replay_episode(records, config) != []
