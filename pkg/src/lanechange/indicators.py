"""Personalization indicators, style reference lines and their statistics.

Covers the indicator triple (front TTC, target-lane front TTC, behind-car
relative speed), affine per-style reference lines fitted by OLS, Pearson
correlation screening, and k-means style clustering.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .simulation import Action, ScenarioConfig, ScenarioState, validate_state

# Sentinel for a missing target-lane front car.
NO_TARGET_FRONT = -1.0

BUILTIN_STYLE_NAMES = ("defensive", "normal", "aggressive")


@dataclass(frozen=True)
class IndicatorVector:
    """The decision-point triple: TTCs in seconds, relative speed in m/s.

    ``t_nf`` is -1 when there is no target-lane front car. ``nb_relevant``
    is False when the behind car is beyond the relevance limit, in which
    case ``dv_nb`` must contribute zero error downstream.
    """

    t_f: float
    t_nf: float
    dv_nb: float
    nb_relevant: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.t_f, self.t_nf, self.dv_nb], dtype=np.float64)


@dataclass(frozen=True)
class StyleProfile:
    """Affine reference lines (indicator = slope * v_ego + intercept)."""

    name: str
    slopes: tuple[float, float, float]
    intercepts: tuple[float, float, float]
    source: str = "fitted"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "A": list(self.slopes),
            "b": list(self.intercepts),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StyleProfile":
        unknown = set(data) - {"name", "A", "b", "source"}
        if unknown:
            raise ValueError(f"unknown style profile keys: {sorted(unknown)}")
        slopes = tuple(float(v) for v in data["A"])
        intercepts = tuple(float(v) for v in data["b"])
        if len(slopes) != 3 or len(intercepts) != 3:
            raise ValueError("style profile A and b must each hold 3 values")
        if not all(math.isfinite(v) for v in slopes + intercepts):
            raise ValueError("style profile parameters must be finite")
        return cls(
            name=str(data["name"]),
            slopes=slopes,
            intercepts=intercepts,
            source=str(data.get("source", "fitted")),
        )


def builtin_profile(name: str) -> StyleProfile:
    """Load one of the shipped defensive/normal/aggressive profiles."""
    key = name.lower()
    if key not in BUILTIN_STYLE_NAMES:
        raise ValueError(f"unknown builtin style {name!r}; expected one of {BUILTIN_STYLE_NAMES}")
    text = resources.files("lanechange.profiles").joinpath(f"{key}.json").read_text("utf-8")
    return StyleProfile.from_dict(json.loads(text))


def load_profile(ref: str | Path) -> StyleProfile:
    """Resolve a builtin style name or a profile JSON path."""
    if isinstance(ref, str) and ref.lower() in BUILTIN_STYLE_NAMES:
        return builtin_profile(ref)
    with open(ref, "r", encoding="utf-8") as fh:
        return StyleProfile.from_dict(json.load(fh))


def save_profile(profile: StyleProfile, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile.to_dict(), fh, indent=2)
        fh.write("\n")


def compute_indicators(state: ScenarioState, config: ScenarioConfig) -> IndicatorVector:
    """Pure indicator computation for one state.

    TTCs use the bumper gap over the closing speed, capped at
    ``config.ttc_cap`` for non-closing situations; a missing target-lane
    front car yields the -1 sentinel; the behind-car term is flagged
    irrelevant beyond ``config.behind_relevance_limit``.
    """

    def ttc(gap: float, closing: float) -> float:
        # Non-closing, or a lead car that has already dropped level with or
        # behind the ego, imposes no collision constraint.
        if closing <= 0.0 or gap <= 0.0:
            return config.ttc_cap
        return min(gap / closing, config.ttc_cap)

    t_f = ttc(state.front_gap, state.ego.v - state.front.v)
    if state.target_front is None:
        t_nf = NO_TARGET_FRONT
    else:
        t_nf = ttc(state.target_front.x - state.ego.x, state.ego.v - state.target_front.v)
    dv_nb = config.rel_speed_sign * (state.ego.v - state.target_behind.v)
    nb_relevant = state.behind_gap <= config.behind_relevance_limit
    return IndicatorVector(t_f=t_f, t_nf=t_nf, dv_nb=dv_nb, nb_relevant=nb_relevant)


def reference_values(profile: StyleProfile, v_e: float, speed_scale: float = 1.0) -> IndicatorVector:
    """Evaluate the style's reference lines at an ego speed in m/s."""
    v = v_e * speed_scale
    a, b = profile.slopes, profile.intercepts
    return IndicatorVector(
        t_f=a[0] * v + b[0],
        t_nf=a[1] * v + b[1],
        dv_nb=a[2] * v + b[2],
    )


@dataclass
class DecisionRecord:
    """One timestamped decision event with its full state and indicators."""

    state: ScenarioState
    indicators: IndicatorVector
    v_e: float
    decision: Action
    wall_time: float
    driver_id: str

    def to_dict(self) -> dict:
        return {
            "driver_id": self.driver_id,
            "wall_time": self.wall_time,
            "v_e": self.v_e,
            "decision": self.decision.name,
            "state": {
                "ego": {"x": self.state.ego.x, "v": self.state.ego.v},
                "f": {"x": self.state.front.x, "v": self.state.front.v},
                "nf": None if self.state.target_front is None
                else {"x": self.state.target_front.x, "v": self.state.target_front.v},
                "nb": {"x": self.state.target_behind.x, "v": self.state.target_behind.v},
                "t": self.state.t,
                "step": self.state.step_index,
            },
            "indicators": {
                "tf": self.indicators.t_f,
                "tnf": self.indicators.t_nf,
                "dvnb": self.indicators.dv_nb,
                "nb_relevant": self.indicators.nb_relevant,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionRecord":
        from .simulation import VehicleState

        sd = data["state"]

        def car(key: str):
            if sd[key] is None:
                return None
            return VehicleState(x=float(sd[key]["x"]), v=float(sd[key]["v"]))

        state = ScenarioState(
            ego=car("ego"),
            front=car("f"),
            target_front=car("nf"),
            target_behind=car("nb"),
            t=float(sd.get("t", 0.0)),
            step_index=int(sd.get("step", 0)),
        )
        ind = data["indicators"]
        return cls(
            state=state,
            indicators=IndicatorVector(
                t_f=float(ind["tf"]),
                t_nf=float(ind["tnf"]),
                dv_nb=float(ind["dvnb"]),
                nb_relevant=bool(ind.get("nb_relevant", True)),
            ),
            v_e=float(data["v_e"]),
            decision=Action[data["decision"]],
            wall_time=float(data["wall_time"]),
            driver_id=str(data["driver_id"]),
        )


def make_decision_record(
    state: ScenarioState,
    decision: Action,
    config: ScenarioConfig,
    driver_id: str,
    wall_time: float,
) -> DecisionRecord:
    return DecisionRecord(
        state=state,
        indicators=compute_indicators(state, config),
        v_e=state.ego.v,
        decision=decision,
        wall_time=wall_time,
        driver_id=driver_id,
    )


def write_decision_records(path, records: Sequence[DecisionRecord], meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}) + "\n")
        for record in records:
            fh.write(json.dumps(record.to_dict()) + "\n")


def read_decision_records(path, verify: bool = True) -> tuple[list[DecisionRecord], Optional[dict]]:
    """Read a DecisionRecord JSON Lines log.

    With ``verify``, each record's indicators are recomputed from its state
    (using the scenario config from the log's meta line when present) and
    must match exactly.
    """
    records: list[DecisionRecord] = []
    meta: Optional[dict] = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if "meta" in data:
                meta = data["meta"]
                continue
            if "session_end" in data:
                continue
            records.append(DecisionRecord.from_dict(data))
    if verify:
        config = ScenarioConfig()
        if meta and "scenario" in meta:
            config = ScenarioConfig.from_dict(meta["scenario"])
        for i, record in enumerate(records):
            validate_state(record.state)
            recomputed = compute_indicators(record.state, config)
            if recomputed != record.indicators:
                raise ValueError(
                    f"record {i}: logged indicators {record.indicators} do not "
                    f"recompute from the logged state (got {recomputed})"
                )
    return records, meta


# --- Fitting and statistics ---


def _simple_ols(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Least-squares line y = slope * x + intercept."""
    if xs.size < 2:
        raise ValueError("need at least 2 points for a line fit")
    x_mean = xs.mean()
    sxx = float(((xs - x_mean) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("degenerate design: all ego speeds are identical")
    y_mean = ys.mean()
    slope = float(((xs - x_mean) * (ys - y_mean)).sum()) / sxx
    return slope, float(y_mean - slope * x_mean)


def fit_profile_ols(records: Sequence[DecisionRecord], name: str = "fitted") -> StyleProfile:
    """Fit per-indicator reference lines to lane-change decision points.

    Only CHANGE records are used; rows with the missing-car sentinel are
    excluded from the target-front fit and rows with an irrelevant behind
    car from the relative-speed fit.
    """
    change = [r for r in records if r.decision == Action.CHANGE]
    if len(change) < 2:
        raise ValueError("need at least 2 lane-change records to fit a profile")

    slopes = []
    intercepts = []
    for component in range(3):
        xs, ys = [], []
        for r in change:
            if component == 1 and r.indicators.t_nf == NO_TARGET_FRONT:
                continue
            if component == 2 and not r.indicators.nb_relevant:
                continue
            xs.append(r.v_e)
            ys.append(r.indicators.as_array()[component])
        slope, intercept = _simple_ols(np.asarray(xs, dtype=np.float64),
                                       np.asarray(ys, dtype=np.float64))
        slopes.append(slope)
        intercepts.append(intercept)
    return StyleProfile(name=name, slopes=tuple(slopes), intercepts=tuple(intercepts),
                        source="fitted")


def pearson_correlation(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Pearson r with a two-sided p-value from the t distribution (n-2 dof)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("xs and ys must have the same length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 pairs for a correlation test")
    xd = x - x.mean()
    yd = y - y.mean()
    sxx = float((xd * xd).sum())
    syy = float((yd * yd).sum())
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance input")
    r = float((xd * yd).sum() / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t_stat = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(stats.t.sf(abs(t_stat), df=n - 2))
    return r, p


@dataclass
class ClusterResult:
    """Clusters ordered by ascending front-TTC centroid (aggressive first)."""

    names: list[str]
    centroids: np.ndarray
    labels: list[str]
    degenerate: list[bool]


def _kmeans_pp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All remaining mass collapsed onto existing centroids.
            centroids[i] = points[rng.integers(n)]
            continue
        target = rng.uniform(0.0, total)
        idx = int(np.searchsorted(np.cumsum(closest), target))
        idx = min(idx, n - 1)
        centroids[i] = points[idx]
        closest = np.minimum(closest, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def cluster_styles(
    per_driver_features: Sequence[Sequence[float]],
    k: int = 3,
    rng: Optional[np.random.Generator] = None,
    max_iter: int = 100,
) -> ClusterResult:
    """k-means (k-means++ seeding) over per-driver indicator features.

    Features are standardized per dimension before clustering; the clusters
    are then named by ascending mean front-TTC centroid, so the aggressive
    cluster is the one with the smallest TTC.
    """
    points = np.asarray(per_driver_features, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("per_driver_features must be a list of equal-length vectors")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    if rng is None:
        rng = np.random.default_rng(0)

    mean = points.mean(axis=0)
    std = points.std(axis=0)
    std[std == 0.0] = 1.0
    z = (points - mean) / std

    centroids = _kmeans_pp_seed(z, k, rng)
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignment = dists.argmin(axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = z[assignment == c]
            if members.shape[0]:
                new_centroids[c] = members.mean(axis=0)
        if np.allclose(new_centroids, centroids, rtol=0.0, atol=1e-12):
            centroids = new_centroids
            break
        centroids = new_centroids

    counts = np.bincount(assignment, minlength=k)
    raw_centroids = centroids * std + mean

    order = np.argsort(raw_centroids[:, 0], kind="stable")
    if k == 3:
        ordered_names = ["aggressive", "normal", "defensive"]
    else:
        ordered_names = [f"cluster_{i}" for i in range(k)]
    name_by_cluster = {int(order[rank]): ordered_names[rank] for rank in range(k)}
    ranked = [int(c) for c in order]
    return ClusterResult(
        names=[name_by_cluster[c] for c in ranked],
        centroids=raw_centroids[ranked],
        labels=[name_by_cluster[int(c)] for c in assignment],
        degenerate=[counts[c] == 0 for c in ranked],
    )
