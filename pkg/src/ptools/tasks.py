"""Task specifications, scoring oracles, and score categorization.

The five physics simulations of the original system are replaced by
deterministic geometric oracles; each rewards the shape drivers that
make a tool effective for its task. Exact formulas are fixed here and
the shipped per-task threshold triples were calibrated once against
the default synthetic p-tool population.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from statistics import median

import numpy as np

from .ptool import TYPE_SUPERPARABOLOID, PToolFeatures, part_properties

TASK_NAMES = ("hammering", "lifting", "rolling", "cutting", "scooping")

TASKSPEC_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TaskSpec:
    """A task's 12 positioning parameters, thresholds and oracle binding."""

    name: str
    arm_vector: np.ndarray
    contact_point: np.ndarray
    action_vector: np.ndarray
    plane_normal: np.ndarray
    thresholds: tuple[float, float, float]
    oracle_id: str

    def __post_init__(self):
        for attr in ("arm_vector", "contact_point", "action_vector", "plane_normal"):
            v = np.asarray(getattr(self, attr), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{attr} must be a finite 3-vector")
            object.__setattr__(self, attr, v)
        a, n = self.action_vector, self.plane_normal
        na, nn = np.linalg.norm(a), np.linalg.norm(n)
        if na < 1e-12 or nn < 1e-12:
            raise ValueError("action_vector and plane_normal must be nonzero")
        if abs(np.dot(a, n)) > (1.0 - 1e-9) * na * nn:
            raise ValueError("action_vector and plane_normal must not be parallel")
        t1, t2, t3 = self.thresholds
        if not t1 < t2 < t3:
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", (float(t1), float(t2), float(t3)))

    def to_dict(self) -> dict:
        return {
            "schema_version": TASKSPEC_SCHEMA_VERSION,
            "name": self.name,
            "arm_vector": self.arm_vector.tolist(),
            "contact_point": self.contact_point.tolist(),
            "action_vector": self.action_vector.tolist(),
            "plane_normal": self.plane_normal.tolist(),
            "thresholds": list(self.thresholds),
            "oracle_id": self.oracle_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(name=d["name"],
                   arm_vector=np.array(d["arm_vector"], dtype=float),
                   contact_point=np.array(d["contact_point"], dtype=float),
                   action_vector=np.array(d["action_vector"], dtype=float),
                   plane_normal=np.array(d["plane_normal"], dtype=float),
                   thresholds=tuple(d["thresholds"]),
                   oracle_id=d["oracle_id"])

    @classmethod
    def load(cls, path) -> "TaskSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_default_task(name: str) -> TaskSpec:
    """Shipped TaskSpec for one of the five tasks."""
    if name not in TASK_NAMES:
        raise ValueError(f"unknown task '{name}', expected one of {TASK_NAMES}")
    ref = resources.files("ptools") / "data" / "tasks" / f"{name}.json"
    return TaskSpec.from_dict(json.loads(ref.read_text()))


# ---------------------------------------------------------------------------
# Scoring oracles
# ---------------------------------------------------------------------------

def _mass_split(f: PToolFeatures) -> tuple[float, float]:
    v_g, _, _ = part_properties(f.grasp_sub)
    v_a, _, _ = part_properties(f.action_sub)
    total = v_g + v_a
    m_g = f.mass * v_g / total
    return m_g, f.mass - m_g


def _oracle_hammering(f: PToolFeatures) -> float:
    """Striking: action mass times moment arm times face flatness."""
    _, m_a = _mass_split(f)
    d = float(np.linalg.norm(f.ga_vec))
    e1, e2 = f.action_sub[3], f.action_sub[4]
    flatness = (2.2 - e1) * (2.2 - e2) / (2.1 * 2.1)
    return 100.0 * m_a * d * flatness


def _oracle_lifting(f: PToolFeatures) -> float:
    """Sliding under: a thin, flat, broad action part."""
    s = np.sort(f.action_sub[0:3])
    thinness = 1.0 - s[0] / s[1]
    e2 = f.action_sub[4]
    squareness = float(np.exp(-((e2 - 2.0) ** 2) / 0.5))
    breadth = float(np.sqrt(s[1] * s[2]))
    return 100.0 * thinness * squareness * breadth


def _oracle_rolling(f: PToolFeatures) -> float:
    """Rolling: an elongated convex cylinder with a round cross-section."""
    s = np.sort(f.action_sub[0:3])
    elongation = s[2] / s[1]
    roundness = s[0] / s[1]
    e1, e2 = f.action_sub[3], f.action_sub[4]
    shape = float(np.exp(-((e1 - 0.1) ** 2 + (e2 - 1.0) ** 2) / 0.5))
    return elongation * roundness * shape


def _oracle_cutting(f: PToolFeatures) -> float:
    """Cutting: one very thin scale and a long edge."""
    s = np.sort(f.action_sub[0:3])
    return float(s[2] / (s[0] + 1e-3))


def _oracle_scooping(f: PToolFeatures) -> float:
    """Scooping: concave (superparaboloid) action parts by capacity."""
    if f.action_sub[8] != TYPE_SUPERPARABOLOID:
        return 0.0
    v_a, _, _ = part_properties(f.action_sub)
    return 1000.0 * float(v_a)


ORACLES = {
    "hammering_v1": _oracle_hammering,
    "lifting_v1": _oracle_lifting,
    "rolling_v1": _oracle_rolling,
    "cutting_v1": _oracle_cutting,
    "scooping_v1": _oracle_scooping,
}


def register_oracle(oracle_id: str, fn) -> None:
    """Register a scoring oracle (used for stochastic test stand-ins)."""
    ORACLES[oracle_id] = fn


def oracle_score(features: PToolFeatures, task: TaskSpec) -> float:
    """One deterministic oracle evaluation for the task."""
    try:
        fn = ORACLES[task.oracle_id]
    except KeyError:
        raise ValueError(f"unknown oracle '{task.oracle_id}'")
    return float(fn(features))


def score_tool(features: PToolFeatures, task: TaskSpec, runs: int = 3) -> float:
    """Median of `runs` oracle evaluations.

    With the deterministic oracles this equals a single evaluation;
    the median contract is kept for stochastic scorers.
    """
    if runs < 1 or runs % 2 == 0:
        raise ValueError("runs must be odd and >= 1")
    fn = ORACLES[task.oracle_id]
    return float(median(fn(features) for _ in range(runs)))


# ---------------------------------------------------------------------------
# Categorization and threshold calibration
# ---------------------------------------------------------------------------

def categorize(raw: float, thresholds: tuple[float, float, float]) -> int:
    """Map a raw score to the 1-4 affordance range (right-closed bins)."""
    t1, t2, t3 = thresholds
    if not t1 < t2 < t3:
        raise ValueError("thresholds must be strictly increasing")
    return 1 + int(raw > t1) + int(raw > t2) + int(raw > t3)


def calibrate_thresholds(raw_scores, labels) -> tuple[tuple[float, float, float], float]:
    """Best threshold triple over midpoints of sorted raw scores.

    Exhaustive over the candidate grid (solved as a prefix-sum sweep),
    returns (thresholds, accuracy). The caller decides whether the
    accuracy clears its target.
    """
    raw = np.asarray(raw_scores, dtype=float)
    lab = np.asarray(labels, dtype=int)
    if raw.shape != lab.shape or raw.ndim != 1:
        raise ValueError("raw_scores and labels must be equal-length vectors")
    if set(np.unique(lab)) - {1, 2, 3, 4}:
        raise ValueError("labels must be in 1..4")
    if len(set(np.unique(lab))) < 4:
        raise ValueError("all four labels must be present")
    uniq = np.unique(raw)
    if len(uniq) < 4:
        raise ValueError("need at least 4 distinct raw scores")

    order = np.argsort(raw, kind="stable")
    lab_sorted = lab[order]
    raw_sorted = raw[order]
    n = len(raw)

    # Candidate cuts: below the minimum, between distinct consecutive
    # values, above the maximum. cut_pos[c] = count of points <= cut c.
    mids = 0.5 * (uniq[:-1] + uniq[1:])
    cut_values = np.concatenate([[uniq[0] - 1.0], mids, [uniq[-1] + 1.0]])
    cut_pos = np.searchsorted(raw_sorted, cut_values, side="right")

    # Prefix label counts: P[l][i] = # of the first i points with label l.
    P = {l: np.concatenate([[0], np.cumsum(lab_sorted == l)]) for l in (1, 2, 3, 4)}
    f1 = P[1][cut_pos] - P[2][cut_pos]
    f2 = P[2][cut_pos] - P[3][cut_pos]
    f3 = P[3][cut_pos] - P[4][cut_pos]

    m = len(cut_values)
    best12 = np.full(m, -np.inf)   # best over i < j of f1[i], at index j-1
    best_i = np.zeros(m, dtype=int)
    running, run_idx = -np.inf, 0
    for j in range(m):
        best12[j], best_i[j] = running, run_idx
        if f1[j] > running:
            running, run_idx = f1[j], j

    best123 = np.full(m, -np.inf)
    best_j = np.zeros(m, dtype=int)
    running, run_idx = -np.inf, 0
    for k in range(m):
        best123[k], best_j[k] = running, run_idx
        v = best12[k] + f2[k]
        if v > running:
            running, run_idx = v, k

    totals = best123 + f3
    k_star = int(np.argmax(totals))
    j_star = int(best_j[k_star])
    i_star = int(best_i[j_star])
    correct = totals[k_star] + P[4][-1]
    thresholds = (float(cut_values[i_star]), float(cut_values[j_star]),
                  float(cut_values[k_star]))
    return thresholds, float(correct) / n
