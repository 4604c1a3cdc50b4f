"""Personalization reward: complementary piecewise-linear terms per indicator.

For each indicator the CHANGE reward is 1 within the acceptable error band,
ramps linearly to 0 at the effective-error bound, and the KEEP reward is its
exact complement, so the two actions' rewards always sum to 1 per indicator
(3 in total).
"""
from __future__ import annotations

from dataclasses import dataclass

from .indicators import NO_TARGET_FRONT, IndicatorVector
from .simulation import Action

INDICATOR_NAMES = ("t_f", "t_nf", "dv_nb")


@dataclass(frozen=True)
class RewardParams:
    """Per-indicator error bands (t_f, t_nf in s; dv_nb in m/s).

    ``max_acceptable`` is the error below which an indicator fully matches
    the driver; ``max_effective`` the error beyond which it does not match
    at all.
    """

    max_acceptable: tuple[float, float, float] = (0.2, 0.2, 0.5)
    max_effective: tuple[float, float, float] = (2.0, 2.0, 5.0)

    def validate(self) -> None:
        for m, n in zip(self.max_acceptable, self.max_effective):
            _check_band(m, n)

    def to_dict(self) -> dict:
        return {
            "max_acceptable": list(self.max_acceptable),
            "max_effective": list(self.max_effective),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RewardParams":
        unknown = set(data) - {"max_acceptable", "max_effective"}
        if unknown:
            raise ValueError(f"unknown reward params keys: {sorted(unknown)}")
        params = cls(
            max_acceptable=tuple(float(v) for v in data.get("max_acceptable", cls.max_acceptable)),
            max_effective=tuple(float(v) for v in data.get("max_effective", cls.max_effective)),
        )
        params.validate()
        return params


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-indicator rewards for one action plus their total."""

    front: float
    target_front: float
    behind: float
    total: float


def _check_band(m: float, n: float) -> None:
    if not (0.0 <= m < n):
        raise ValueError(f"invalid error band: need 0 <= m < n, got m={m}, n={n}")


def absolute_error(actual: float, reference: float) -> float:
    return abs(actual - reference)


def indicator_reward(error: float, action: Action, m: float, n: float) -> float:
    """Reward of one indicator for the taken action.

    CHANGE: 1 on [0, m], (n - e)/(n - m) on (m, n), 0 on [n, inf).
    KEEP is computed as 1 minus the CHANGE value so the pair sums to
    exactly 1.
    """
    _check_band(m, n)
    if error < 0.0:
        raise ValueError("error must be nonnegative")
    if error <= m:
        change = 1.0
    elif error >= n:
        change = 0.0
    else:
        change = (n - error) / (n - m)
    return change if action == Action.CHANGE else 1.0 - change


def total_reward(
    indicators: IndicatorVector,
    references: IndicatorVector,
    action: Action,
    params: RewardParams,
) -> RewardBreakdown:
    """Sum the three indicator rewards for one action.

    Sentinel or irrelevant indicators are neutralized by forcing their
    error to zero under both actions, which keeps the per-indicator
    complementarity intact.
    """
    e_f = absolute_error(indicators.t_f, references.t_f)
    if indicators.t_nf == NO_TARGET_FRONT:
        e_nf = 0.0
    else:
        e_nf = absolute_error(indicators.t_nf, references.t_nf)
    if not indicators.nb_relevant:
        e_nb = 0.0
    else:
        e_nb = absolute_error(indicators.dv_nb, references.dv_nb)

    r_f = indicator_reward(e_f, action, params.max_acceptable[0], params.max_effective[0])
    r_nf = indicator_reward(e_nf, action, params.max_acceptable[1], params.max_effective[1])
    r_nb = indicator_reward(e_nb, action, params.max_acceptable[2], params.max_effective[2])
    return RewardBreakdown(front=r_f, target_front=r_nf, behind=r_nb, total=r_f + r_nf + r_nb)
