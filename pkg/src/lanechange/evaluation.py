"""Evaluation harness: rollouts, MAE against reference lines, agreement.

Policies are plain callables from a scenario state to an action, so trained
networks, the greedy benchmark and the synthetic reference driver all share
one evaluation path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import qnet
from .agent import benchmark_decide, greedy_action
from .indicators import (
    NO_TARGET_FRONT,
    IndicatorVector,
    StyleProfile,
    compute_indicators,
    reference_values,
)
from .reward import RewardParams
from .simulation import (
    Action,
    Environment,
    ScenarioConfig,
    ScenarioState,
    Termination,
    normalize_state,
    sample_initial_state,
    trace_record,
)

Policy = Callable[[ScenarioState], Action]

# Reference-driver acceptance bands around the reference lines (s, s, m/s).
DEFAULT_TOLERANCES = (0.5, 0.5, 1.0)


def rl_policy(net: qnet.Network, config: ScenarioConfig) -> Policy:
    """Greedy (epsilon = 0) policy of a trained network."""

    def decide(state: ScenarioState) -> Action:
        return greedy_action(net, normalize_state(state, config))

    return decide


def benchmark_policy(profile: StyleProfile, params: RewardParams,
                     config: ScenarioConfig) -> Policy:
    def decide(state: ScenarioState) -> Action:
        return benchmark_decide(state, profile, params, config)

    return decide


def reference_driver_decide(
    state: ScenarioState,
    profile: StyleProfile,
    tolerances: tuple[float, float, float],
    config: ScenarioConfig,
) -> Action:
    """Band driver standing in for a human: CHANGE iff every relevant
    indicator lies within its tolerance of the reference line."""
    ind = compute_indicators(state, config)
    refs = reference_values(profile, state.ego.v, config.reference_speed_scale)
    if abs(ind.t_f - refs.t_f) > tolerances[0]:
        return Action.KEEP
    if ind.t_nf != NO_TARGET_FRONT and abs(ind.t_nf - refs.t_nf) > tolerances[1]:
        return Action.KEEP
    if ind.nb_relevant and abs(ind.dv_nb - refs.dv_nb) > tolerances[2]:
        return Action.KEEP
    return Action.CHANGE


def reference_driver_policy(
    profile: StyleProfile,
    config: ScenarioConfig,
    tolerances: tuple[float, float, float] = DEFAULT_TOLERANCES,
) -> Policy:
    def decide(state: ScenarioState) -> Action:
        return reference_driver_decide(state, profile, tolerances, config)

    return decide


@dataclass(frozen=True)
class LaneChangePoint:
    """Indicator values captured at one CHANGE decision."""

    v_e: float
    indicators: IndicatorVector
    agent_kind: str


@dataclass
class EpisodeOutcome:
    termination: Termination
    steps_taken: int


@dataclass
class RolloutResult:
    points: list[LaneChangePoint]
    outcomes: list[EpisodeOutcome]
    traces: list[list[dict]] = field(default_factory=list)


def run_rollouts(
    policy: Policy,
    config: ScenarioConfig,
    episodes: int,
    seed: int,
    agent_kind: str = "rl",
    collect_traces: bool = False,
) -> RolloutResult:
    """Greedy policy execution over freshly sampled episodes.

    Yields one lane-change point per episode that ends with a CHANGE
    decision; deterministic for a given seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    env = Environment(config)
    points: list[LaneChangePoint] = []
    outcomes: list[EpisodeOutcome] = []
    traces: list[list[dict]] = []
    for _ in range(episodes):
        state = env.reset(rng)
        trace: list[dict] = []
        steps = 0
        while True:
            action = policy(state)
            if action == Action.CHANGE:
                points.append(LaneChangePoint(
                    v_e=state.ego.v,
                    indicators=compute_indicators(state, config),
                    agent_kind=agent_kind,
                ))
            next_state, terminal, kind = env.step(action)
            if collect_traces:
                trace.append(trace_record(state, action, terminal))
            steps += 1
            if terminal:
                outcomes.append(EpisodeOutcome(termination=kind, steps_taken=steps))
                break
            state = next_state
        if collect_traces:
            traces.append(trace)
    return RolloutResult(points=points, outcomes=outcomes, traces=traces)


_INDICATOR_KEYS = {"t_f": 0, "t_nf": 1, "dv_nb": 2}


def mae(points: Sequence[LaneChangePoint], profile: StyleProfile, indicator: str,
        speed_scale: float = 1.0) -> float:
    """Mean absolute error of lane-change points against the reference line.

    Sentinel target-front values and irrelevant behind-car values are
    excluded per the out-of-domain rules.
    """
    if indicator not in _INDICATOR_KEYS:
        raise ValueError(f"unknown indicator {indicator!r}")
    errors = []
    for point in points:
        refs = reference_values(profile, point.v_e, speed_scale)
        if indicator == "t_f":
            errors.append(abs(point.indicators.t_f - refs.t_f))
        elif indicator == "t_nf":
            if point.indicators.t_nf == NO_TARGET_FRONT:
                continue
            errors.append(abs(point.indicators.t_nf - refs.t_nf))
        else:
            if not point.indicators.nb_relevant:
                continue
            errors.append(abs(point.indicators.dv_nb - refs.dv_nb))
    if not errors:
        raise ValueError("no lane-change points to score")
    return float(np.mean(errors))


@dataclass
class Disagreement:
    state: ScenarioState
    expected: Action
    actual: Action
    behind_gap: float
    target_front_present: bool


@dataclass
class AgreementReport:
    total: int
    agree: int
    disagreements: list[Disagreement]

    @property
    def accuracy(self) -> float:
        return self.agree / self.total if self.total else 0.0


def sample_states(config: ScenarioConfig, count: int, seed: int) -> list[ScenarioState]:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return [sample_initial_state(config, rng) for _ in range(count)]


def agreement(policy_a: Policy, policy_b: Policy,
              states: Sequence[ScenarioState]) -> AgreementReport:
    """Evaluate both policies on identical states and audit disagreements.

    Each disagreement keeps the full state plus the behind-car distance and
    target-front presence, so out-of-domain cases remain identifiable.
    """
    agree = 0
    disagreements: list[Disagreement] = []
    for state in states:
        a = policy_a(state)
        b = policy_b(state)
        if a == b:
            agree += 1
        else:
            disagreements.append(Disagreement(
                state=state,
                expected=b,
                actual=a,
                behind_gap=state.behind_gap,
                target_front_present=state.target_front is not None,
            ))
    return AgreementReport(total=len(states), agree=agree, disagreements=disagreements)


def points_csv_rows(points: Sequence[LaneChangePoint], style: str) -> list[str]:
    rows = ["v_e,t_f,t_nf,dv_nb,agent_kind,style"]
    for p in points:
        rows.append(",".join([
            repr(p.v_e), repr(p.indicators.t_f), repr(p.indicators.t_nf),
            repr(p.indicators.dv_nb), p.agent_kind, style,
        ]))
    return rows


def export_results(
    points: Sequence[LaneChangePoint],
    summary: dict,
    out_dir: str | Path,
    style: str,
) -> tuple[Path, Path]:
    """Write the lane-change point CSV and the JSON summary, byte-stably."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "points.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(points_csv_rows(points, style)) + "\n")
    summary_path = out / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, summary_path
