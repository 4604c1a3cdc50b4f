"""Deterministic two-lane highway environment.

Scenario sampling, constant-speed kinematic stepping, termination and
ego-centric state normalization. All quantities are SI (m, m/s, s).
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

# Open lower bound of the normalized range (0,1].
NORM_FLOOR = 1e-6

_SAMPLE_MAX_TRIES = 1000


class Action(enum.IntEnum):
    """Decision actions; the index matches the Q-network output order."""

    CHANGE = 0
    KEEP = 1


class Termination(enum.Enum):
    CHANGED = "changed"
    MAX_STEPS = "max_steps"
    FORCED_STOP = "forced_stop"


@dataclass(frozen=True)
class VehicleState:
    """Longitudinal position (m) and speed (m/s) of one car."""

    x: float
    v: float


@dataclass(frozen=True)
class ScenarioState:
    """Ego plus the three surrounding cars at one decision instant.

    ``target_front`` may be None only for injected out-of-domain states;
    sampled training states always carry all four vehicles.
    """

    ego: VehicleState
    front: VehicleState
    target_front: Optional[VehicleState]
    target_behind: VehicleState
    t: float = 0.0
    step_index: int = 0

    @property
    def front_gap(self) -> float:
        return self.front.x - self.ego.x

    @property
    def behind_gap(self) -> float:
        return self.ego.x - self.target_behind.x


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario generator and stepping parameters.

    ``reference_speed_scale`` multiplies the ego speed before evaluating a
    style's reference lines (set 3.6 to reinterpret the fitted lines in kph);
    ``rel_speed_sign`` flips the behind-car relative-speed convention.
    """

    dt: float = 0.1
    v_max: float = 30.0
    sensing_range: float = 200.0
    ego_speed_range: tuple[float, float] = (15.0, 27.0)
    neighbor_speed_range: tuple[float, float] = (6.0, 22.0)
    front_gap_range: tuple[float, float] = (20.0, 90.0)
    target_front_gap_range: tuple[float, float] = (20.0, 90.0)
    target_behind_gap_range: tuple[float, float] = (5.0, 60.0)
    behind_relevance_limit: float = 100.0
    min_front_gap: float = 5.0
    max_episode_steps: int = 200
    ttc_cap: float = 99.0
    rel_speed_sign: float = 1.0
    reference_speed_scale: float = 1.0
    rng_seed: int = 0

    def validate(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.sensing_range <= 0:
            raise ValueError("sensing_range must be positive")
        if self.max_episode_steps <= 0:
            raise ValueError("max_episode_steps must be positive")
        if self.ttc_cap <= 0:
            raise ValueError("ttc_cap must be positive")
        for name in ("ego_speed_range", "neighbor_speed_range", "front_gap_range",
                     "target_front_gap_range", "target_behind_gap_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name} must be a nonempty [min, max] range")
            if lo < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.rel_speed_sign not in (1.0, -1.0):
            raise ValueError("rel_speed_sign must be +1 or -1")

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "v_max": self.v_max,
            "sensing_range": self.sensing_range,
            "ego_speed_range": list(self.ego_speed_range),
            "neighbor_speed_range": list(self.neighbor_speed_range),
            "front_gap_range": list(self.front_gap_range),
            "target_front_gap_range": list(self.target_front_gap_range),
            "target_behind_gap_range": list(self.target_behind_gap_range),
            "behind_relevance_limit": self.behind_relevance_limit,
            "min_front_gap": self.min_front_gap,
            "max_episode_steps": self.max_episode_steps,
            "ttc_cap": self.ttc_cap,
            "rel_speed_sign": self.rel_speed_sign,
            "reference_speed_scale": self.reference_speed_scale,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown scenario config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in ("ego_speed_range", "neighbor_speed_range", "front_gap_range",
                     "target_front_gap_range", "target_behind_gap_range"):
            if name in kwargs:
                kwargs[name] = tuple(float(v) for v in kwargs[name])
        config = cls(**kwargs)
        config.validate()
        return config


def validate_state(state: ScenarioState) -> None:
    """Reject states that violate the scenario geometry.

    Initial states place the target-lane cars ahead of and behind the ego,
    but constant-speed stepping can legitimately let them drift level with
    or past it mid-episode, so only the current-lane ordering (which the
    forced-stop rule protects) is enforced here.
    """
    cars = [("ego", state.ego), ("front", state.front), ("target_behind", state.target_behind)]
    if state.target_front is not None:
        cars.append(("target_front", state.target_front))
    for name, car in cars:
        if not math.isfinite(car.x):
            raise ValueError(f"{name}.x must be finite")
        if not math.isfinite(car.v) or car.v < 0:
            raise ValueError(f"{name}.v must be finite and nonnegative")
    if state.front.x <= state.ego.x:
        raise ValueError("front car must be ahead of ego")


def sample_initial_state(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioState:
    """Draw a random episode start satisfying the training-domain rules.

    All four cars are present and the behind car starts within
    ``behind_relevance_limit``; speeds stay constant for the episode.
    """
    config.validate()
    for _ in range(_SAMPLE_MAX_TRIES):
        ego_v = rng.uniform(*config.ego_speed_range)
        front_v = rng.uniform(*config.neighbor_speed_range)
        target_front_v = rng.uniform(*config.neighbor_speed_range)
        target_behind_v = rng.uniform(*config.neighbor_speed_range)
        front_gap = rng.uniform(*config.front_gap_range)
        target_front_gap = rng.uniform(*config.target_front_gap_range)
        target_behind_gap = rng.uniform(*config.target_behind_gap_range)
        if target_behind_gap > config.behind_relevance_limit:
            continue
        if front_gap <= 0 or target_front_gap <= 0 or target_behind_gap <= 0:
            continue
        return ScenarioState(
            ego=VehicleState(x=0.0, v=ego_v),
            front=VehicleState(x=front_gap, v=front_v),
            target_front=VehicleState(x=target_front_gap, v=target_front_v),
            target_behind=VehicleState(x=-target_behind_gap, v=target_behind_v),
        )
    raise RuntimeError(
        "could not sample a valid initial state; check that the configured "
        "gap ranges are compatible with behind_relevance_limit"
    )


def step(
    state: ScenarioState, action: Action, config: ScenarioConfig
) -> tuple[ScenarioState, bool, Optional[Termination]]:
    """Advance one decision step.

    CHANGE is absorbing: the episode ends with the state unchanged (no
    lateral dynamics are simulated). KEEP advances every car by v*dt at
    constant speed, then checks the forced-stop and step-cap terminations.
    """
    if action == Action.CHANGE:
        return state, True, Termination.CHANGED

    dt = config.dt

    def advance(car: Optional[VehicleState]) -> Optional[VehicleState]:
        if car is None:
            return None
        return VehicleState(x=car.x + car.v * dt, v=car.v)

    nxt = ScenarioState(
        ego=advance(state.ego),
        front=advance(state.front),
        target_front=advance(state.target_front),
        target_behind=advance(state.target_behind),
        t=state.t + dt,
        step_index=state.step_index + 1,
    )
    if nxt.front_gap < config.min_front_gap:
        return nxt, True, Termination.FORCED_STOP
    if nxt.step_index >= config.max_episode_steps:
        return nxt, True, Termination.MAX_STEPS
    return nxt, False, None


def normalize_state(state: ScenarioState, config: ScenarioConfig) -> np.ndarray:
    """Map a scenario state to the eight-value network input in (0,1].

    Speeds map as v / v_max; positions map ego-centrically as
    (x - x_ego + D) / (2D) so the ego component is exactly 0.5. Everything
    is clamped into (NORM_FLOOR, 1]. An absent target-lane front car maps
    to (1.0, 1.0): a far, fast car that imposes no constraint.
    """
    d = config.sensing_range

    def clamp(value: float) -> float:
        return min(max(value, NORM_FLOOR), 1.0)

    def norm_v(car: Optional[VehicleState]) -> float:
        if car is None:
            return 1.0
        return clamp(car.v / config.v_max)

    def norm_x(car: Optional[VehicleState]) -> float:
        if car is None:
            return 1.0
        return clamp((car.x - state.ego.x + d) / (2.0 * d))

    return np.array(
        [
            norm_v(state.ego),
            norm_x(state.ego),
            norm_v(state.front),
            norm_x(state.front),
            norm_v(state.target_front),
            norm_x(state.target_front),
            norm_v(state.target_behind),
            norm_x(state.target_behind),
        ],
        dtype=np.float64,
    )


class Environment:
    """Single-episode owner around the pure sampling/stepping functions."""

    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        self.state: Optional[ScenarioState] = None
        self._rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed))

    def reset(self, rng: Optional[np.random.Generator] = None) -> ScenarioState:
        """Sample a fresh episode, from the given stream or the config seed."""
        self.state = sample_initial_state(self.config, rng if rng is not None else self._rng)
        return self.state

    def step(self, action: Action) -> tuple[ScenarioState, bool, Optional[Termination]]:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        nxt, terminal, kind = step(self.state, action, self.config)
        self.state = nxt
        return nxt, terminal, kind


# --- Episode traces (JSON Lines, one record per decision step) ---


def _car_dict(car: Optional[VehicleState]) -> Optional[dict]:
    if car is None:
        return None
    return {"x": car.x, "v": car.v}


def trace_record(state: ScenarioState, action: Action, terminal: bool) -> dict:
    return {
        "t": state.t,
        "step": state.step_index,
        "ego": _car_dict(state.ego),
        "f": _car_dict(state.front),
        "nf": _car_dict(state.target_front),
        "nb": _car_dict(state.target_behind),
        "action": action.name,
        "terminal": terminal,
    }


def state_from_trace_record(record: dict) -> ScenarioState:
    def car(key: str) -> Optional[VehicleState]:
        data = record[key]
        if data is None:
            return None
        return VehicleState(x=float(data["x"]), v=float(data["v"]))

    return ScenarioState(
        ego=car("ego"),
        front=car("f"),
        target_front=car("nf"),
        target_behind=car("nb"),
        t=float(record["t"]),
        step_index=int(record["step"]),
    )


def write_trace(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def read_trace(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def split_episodes(records: list[dict]) -> Iterator[list[dict]]:
    """Split a multi-episode trace on terminal rows."""
    episode: list[dict] = []
    for record in records:
        episode.append(record)
        if record["terminal"]:
            yield episode
            episode = []
    if episode:
        yield episode


def replay_episode(records: list[dict], config: ScenarioConfig) -> list[str]:
    """Re-step a logged episode and report any mismatch against the log.

    Returns a list of human-readable mismatch descriptions; empty means the
    episode replays bit-exactly.
    """
    mismatches: list[str] = []
    state = state_from_trace_record(records[0])
    for i, record in enumerate(records):
        expected = trace_record(state, Action[record["action"]], bool(record["terminal"]))
        if expected != record:
            mismatches.append(f"row {i}: logged {record} != replayed {expected}")
            break
        is_last = i == len(records) - 1
        state, terminal, _ = step(state, Action[record["action"]], config)
        if terminal != bool(record["terminal"]):
            mismatches.append(f"row {i}: terminal flag mismatch (replayed {terminal})")
            break
        if terminal and not is_last:
            mismatches.append(f"row {i}: terminal row before end of episode")
            break
        if not terminal and is_last:
            mismatches.append(f"row {i}: episode log ends without a terminal row")
            break
    return mismatches
