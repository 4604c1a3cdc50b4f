"""DQN training loop and the greedy one-step-reward benchmark agent."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import qnet
from .indicators import StyleProfile, compute_indicators, load_profile, reference_values
from .reward import RewardParams, total_reward
from .simulation import Action, Environment, ScenarioConfig, ScenarioState, Termination, normalize_state

log = logging.getLogger(__name__)

METRICS_HEADER = "episode,step_reward,loss,steps,termination,epsilon"


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to end over the training episodes."""

    start: float = 0.8
    end: float = 0.1
    total_episodes: int = 10000

    def value(self, episode: int) -> float:
        frac = min(episode / self.total_episodes, 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass
class TrainingConfig:
    """Training hyperparameters with the builtin default recipe."""

    learning_rate: float = 0.005
    epsilon_start: float = 0.8
    epsilon_end: float = 0.1
    discount: float = 0.98
    replay_capacity: int = 10000
    replay_warmup: int = 2000
    batch_size: int = 32
    target_sync_episodes: int = 20
    episodes: int = 10000
    seed: int = 0
    style: str = "normal"
    # One gradient update per environment step or per episode.
    update_cadence: str = "step"
    # Bootstrap through max_steps/forced_stop ends; CHANGE stays terminal.
    truncation_bootstrap: bool = True
    # Cap on the bootstrapped continuation value inside TD targets. Under
    # the constant-sum reward an uncapped bootstrap values endless keeping
    # at ~R_max/(1-gamma) and the trained policy never changes lane; the
    # cap bounds that optimism so the fixed-point policy becomes "change
    # once the change reward clears (R_max + gamma*cap)/2". 1.4 puts that
    # stopping threshold at ~2.19: above the 2.0 plateau reached when one
    # indicator is dead and the other two match, below a perfect 3.
    # None restores the plain uncapped target.
    bootstrap_value_cap: Optional[float] = 1.4
    optimizer: str = "adam"
    # Periodic checkpoint cadence in episodes (0 disables; the final
    # checkpoint is always written when an output directory is given).
    checkpoint_every: int = 1000
    reward: RewardParams = field(default_factory=RewardParams)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def validate(self) -> None:
        if not (0.0 <= self.discount <= 1.0):
            raise ValueError("discount must lie in [0, 1]")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        if self.replay_warmup > self.replay_capacity:
            raise ValueError("replay_warmup must not exceed replay_capacity")
        if self.batch_size > self.replay_warmup:
            raise ValueError("batch_size must not exceed replay_warmup")
        if self.episodes <= 0:
            raise ValueError("episodes must be positive")
        if self.update_cadence not in ("step", "episode"):
            raise ValueError("update_cadence must be 'step' or 'episode'")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        self.reward.validate()
        self.scenario.validate()

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epsilon_start": self.epsilon_start,
            "epsilon_end": self.epsilon_end,
            "discount": self.discount,
            "replay_capacity": self.replay_capacity,
            "replay_warmup": self.replay_warmup,
            "batch_size": self.batch_size,
            "target_sync_episodes": self.target_sync_episodes,
            "episodes": self.episodes,
            "seed": self.seed,
            "style": self.style,
            "update_cadence": self.update_cadence,
            "truncation_bootstrap": self.truncation_bootstrap,
            "bootstrap_value_cap": self.bootstrap_value_cap,
            "optimizer": self.optimizer,
            "checkpoint_every": self.checkpoint_every,
            "reward": self.reward.to_dict(),
            "scenario": self.scenario.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "reward" in kwargs:
            kwargs["reward"] = RewardParams.from_dict(kwargs["reward"])
        if "scenario" in kwargs:
            kwargs["scenario"] = ScenarioConfig.from_dict(kwargs["scenario"])
        config = cls(**kwargs)
        config.validate()
        return config


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions, stored as flat arrays."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, 8), dtype=np.float64)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.next_states = np.zeros((capacity, 8), dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=np.float64)
        self.size = 0
        self.cursor = 0
        self.inserted = 0

    def push(self, state: np.ndarray, action: Action, reward: float,
             next_state: np.ndarray, terminal: bool) -> None:
        i = self.cursor
        self.states[i] = state
        self.actions[i] = int(action)
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = 1.0 if terminal else 0.0
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])

    def __len__(self) -> int:
        return self.size


def epsilon_at(schedule: EpsilonSchedule, episode: int) -> float:
    return schedule.value(episode)


class DQNAgent:
    """Prediction network, frozen target copy and optimizer state."""

    def __init__(self, config: TrainingConfig, net: Optional[qnet.Network] = None,
                 rng: Optional[np.random.Generator] = None):
        config.validate()
        self.config = config
        if net is None:
            if rng is None:
                raise ValueError("either a network or an init rng is required")
            net = qnet.init_network(rng)
        self.net = net
        self.target = net.copy()
        self.opt = qnet.init_optimizer(net, config.learning_rate,
                                       plain_sgd=config.optimizer == "sgd")

    def select_action(self, state_vec: np.ndarray, epsilon: float,
                      rng: np.random.Generator) -> Action:
        if epsilon > 0.0 and rng.random() < epsilon:
            return Action(int(rng.integers(2)))
        return greedy_action(self.net, state_vec)

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
        if len(buffer) < self.config.replay_warmup:
            raise RuntimeError(
                f"replay warmup not reached ({len(buffer)} < {self.config.replay_warmup})"
            )
        states, actions, rewards, next_states, terminals = buffer.sample(
            self.config.batch_size, rng)
        q_next = qnet.forward(self.target, next_states)
        continuation = q_next.max(axis=1)
        if self.config.bootstrap_value_cap is not None:
            continuation = np.minimum(continuation, self.config.bootstrap_value_cap)
        targets = rewards + (1.0 - terminals) * self.config.discount * continuation
        grads, loss = qnet.backward(self.net, states, actions, targets)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss {loss}")
        qnet.apply_update(self.net, grads, self.opt)
        return loss

    def sync_target(self) -> None:
        self.target = self.net.copy()


def greedy_action(net: qnet.Network, state_vec: np.ndarray) -> Action:
    """Argmax over Q-values with ties broken toward KEEP."""
    q = qnet.forward(net, state_vec)
    return Action.CHANGE if q[0] > q[1] else Action.KEEP


def benchmark_decide(state: ScenarioState, profile: StyleProfile,
                     reward_params: RewardParams, config: ScenarioConfig) -> Action:
    """Greedy one-step-reward agent: pick the action with the larger total
    reward at the current state, ties toward KEEP."""
    ind = compute_indicators(state, config)
    refs = reference_values(profile, state.ego.v, config.reference_speed_scale)
    r_change = total_reward(ind, refs, Action.CHANGE, reward_params).total
    r_keep = total_reward(ind, refs, Action.KEEP, reward_params).total
    return Action.CHANGE if r_change > r_keep else Action.KEEP


@dataclass
class TrainingResult:
    rows: list[dict]
    network: qnet.Network
    checkpoint_path: Optional[Path] = None
    metrics_path: Optional[Path] = None


def _format_metric(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(rows: list[dict], path: str | Path) -> None:
    columns = METRICS_HEADER.split(",")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_format_metric(row[c]) for c in columns) + "\n")


def run_training(config: TrainingConfig, out_dir: Optional[str | Path] = None) -> TrainingResult:
    """Train one style-conditioned agent for ``config.episodes`` episodes.

    Randomness is split deterministically from the single run seed into
    independent streams for network init, scenario sampling, action
    selection and replay sampling, so identical configs replay exactly.
    """
    config.validate()
    profile = load_profile(config.style)
    seeds = np.random.SeedSequence(config.seed).spawn(4)
    net_rng, env_rng, action_rng, replay_rng = (np.random.default_rng(s) for s in seeds)

    agent = DQNAgent(config, rng=net_rng)
    buffer = ReplayBuffer(config.replay_capacity)
    env = Environment(config.scenario)
    schedule = EpsilonSchedule(config.epsilon_start, config.epsilon_end, config.episodes)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    for episode in range(config.episodes):
        if episode % config.target_sync_episodes == 0:
            agent.sync_target()
        eps = schedule.value(episode)
        state = env.reset(env_rng)
        state_vec = normalize_state(state, config.scenario)
        refs = reference_values(profile, state.ego.v, config.scenario.reference_speed_scale)

        rewards_sum = 0.0
        losses_sum = 0.0
        loss_count = 0
        steps = 0
        termination = None
        while True:
            action = agent.select_action(state_vec, eps, action_rng)
            breakdown = total_reward(compute_indicators(state, config.scenario),
                                     refs, action, config.reward)
            next_state, terminal, kind = env.step(action)
            next_vec = normalize_state(next_state, config.scenario)
            stored_terminal = (kind == Termination.CHANGED) if config.truncation_bootstrap else terminal
            buffer.push(state_vec, action, breakdown.total, next_vec, stored_terminal)

            rewards_sum += breakdown.total
            steps += 1

            if config.update_cadence == "step" and len(buffer) >= config.replay_warmup:
                losses_sum += _guarded_train_step(agent, buffer, replay_rng, out_path)
                loss_count += 1

            if terminal:
                termination = kind
                break
            state = next_state
            state_vec = next_vec

        if config.update_cadence == "episode" and len(buffer) >= config.replay_warmup:
            losses_sum += _guarded_train_step(agent, buffer, replay_rng, out_path)
            loss_count += 1

        rows.append({
            "episode": episode,
            "step_reward": rewards_sum / steps,
            "loss": losses_sum / loss_count if loss_count else None,
            "steps": steps,
            "termination": termination.value,
            "epsilon": eps,
        })
        if config.checkpoint_every and out_path is not None \
                and (episode + 1) % config.checkpoint_every == 0:
            qnet.save_checkpoint(agent.net, out_path / f"checkpoint_ep{episode + 1:06d}.json",
                                 meta={"episode": episode + 1, "style": profile.name})
        if (episode + 1) % 1000 == 0:
            log.info("episode %d/%d  step_reward=%.3f  eps=%.3f",
                     episode + 1, config.episodes, rows[-1]["step_reward"], eps)

    checkpoint_path = None
    metrics_path = None
    if out_path is not None:
        checkpoint_path = out_path / "checkpoint.json"
        qnet.save_checkpoint(agent.net, checkpoint_path,
                             meta={"episode": config.episodes, "style": profile.name})
        metrics_path = out_path / "metrics.csv"
        write_metrics_csv(rows, metrics_path)
    return TrainingResult(rows=rows, network=agent.net,
                          checkpoint_path=checkpoint_path, metrics_path=metrics_path)


def _guarded_train_step(agent: DQNAgent, buffer: ReplayBuffer,
                        rng: np.random.Generator, out_path: Optional[Path]) -> float:
    try:
        return agent.train_step(buffer, rng)
    except FloatingPointError:
        if out_path is not None:
            qnet.save_checkpoint(agent.net, out_path / "diagnostic_checkpoint.json",
                                 meta={"reason": "non-finite loss"})
        raise
