"""Run-time projection: interpret a cloud as the best p-tool for a task.

Spheres are planted at random seed points, each cut sub-cloud is
fitted, the best fit per seed survives, p-tools are extracted over all
part pairs and orientations, the task function scores each candidate,
and a weighted vote over normalized fit and task scores picks the
winner.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitDivergence, FitOptions, FitResult, fit_best
from .pointcloud import PointCloud, cut_sphere
from .ptool import PTool, ToolPose, extract_ptools, features, pose_for_task
from .superquadric import SuperquadricParams
from .taskfn import TaskFunctionModel, predict_batch
from .tasks import TaskSpec, categorize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectionConfig:
    n_seeds: int = 20
    radii_per_seed: int = 10
    radius_range: tuple[float, float] = (0.001, 0.1)
    w_fit: float = 1.0
    w_task: float = 1.0
    rng_seed: int = 0
    min_subcloud_points: int = 10
    accept_ratio: float = 1.05
    fit_options: FitOptions | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.radii_per_seed < 1:
            raise ValueError("radii_per_seed must be >= 1")
        lo, hi = self.radius_range
        if not 0.0 < lo < hi:
            raise ValueError("radius_range must satisfy 0 < min < max")
        if self.w_fit < 0.0 or self.w_task < 0.0 or self.w_fit + self.w_task <= 0.0:
            raise ValueError("weights must be >= 0 with a positive sum")


@dataclass(frozen=True)
class ProjectionResult:
    best: PTool
    combined_score: float
    fit_score: float
    task_raw: float
    affordance_category: int
    grasp_region: SuperquadricParams
    pose: ToolPose
    candidates_evaluated: int

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict(),
            "combined_score": self.combined_score,
            "fit_score": self.fit_score,
            "task_raw": self.task_raw,
            "affordance_category": self.affordance_category,
            "grasp_region": self.grasp_region.to_dict(),
            "pose": {
                "elbow": self.pose.elbow.tolist(),
                "rotation": self.pose.rotation.tolist(),
                "translation": self.pose.translation.tolist(),
                "degenerate": self.pose.degenerate,
            },
            "candidates_evaluated": self.candidates_evaluated,
        }


def plant_seeds(cloud: PointCloud,
                cfg: ProjectionConfig) -> list[tuple[np.ndarray, float]]:
    """Seed centers (cloud members) with radii_per_seed radii each.

    Seeds are drawn without replacement via a permutation prefix, so
    the first k seeds agree for any two configs sharing rng_seed; each
    seed's radii come from an independent per-seed stream for the same
    reason. Clouds smaller than n_seeds fall back to sampling with
    replacement (logged).
    """
    if len(cloud) == 0:
        raise ValueError("cannot plant seeds on an empty cloud")
    rng = np.random.default_rng(cfg.rng_seed)
    perm = rng.permutation(len(cloud))
    if len(cloud) >= cfg.n_seeds:
        idx = perm[:cfg.n_seeds]
    else:
        logger.warning("cloud has %d points < %d seeds; sampling with replacement",
                       len(cloud), cfg.n_seeds)
        idx = rng.integers(0, len(cloud), size=cfg.n_seeds)
    lo, hi = cfg.radius_range
    out = []
    for s, i in enumerate(idx):
        seed_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.rng_seed, spawn_key=(s,)))
        radii = seed_rng.uniform(lo, hi, size=cfg.radii_per_seed)
        for r in radii:
            out.append((cloud.points[i].copy(), float(r)))
    return out


def per_seed_fits(cloud: PointCloud, cfg: ProjectionConfig) -> list[FitResult]:
    """Best fit per seed over its radius sub-clouds (lowest sym distance)."""
    pairs = plant_seeds(cloud, cfg)
    fits: list[FitResult] = []
    for s in range(cfg.n_seeds):
        best: FitResult | None = None
        for center, radius in pairs[s * cfg.radii_per_seed:(s + 1) * cfg.radii_per_seed]:
            sub = cut_sphere(cloud, center, radius)
            if len(sub) < cfg.min_subcloud_points:
                continue
            try:
                res = fit_best(sub, cfg.rng_seed, options=cfg.fit_options)
            except (FitDivergence, ValueError):
                continue
            if best is None or res.sym_distance < best.sym_distance:
                best = res
        if best is not None:
            fits.append(best)
    return fits


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-15:
        return np.full(len(values), 0.5)
    return (values - lo) / (hi - lo)


def vote(fit_scores: np.ndarray, task_scores: np.ndarray,
         w_fit: float, w_task: float) -> tuple[int, np.ndarray]:
    """Weighted vote over min-max normalized scores; returns (winner, combined).

    Fit scores are inverted (lower raw distance = better) so both
    terms are higher-is-better; ties go to the lowest index.
    """
    fit_n = 1.0 - _minmax(np.asarray(fit_scores, dtype=float))
    task_n = _minmax(np.asarray(task_scores, dtype=float))
    combined = (w_fit * fit_n + w_task * task_n) / (w_fit + w_task)
    return int(np.argmax(combined)), combined


def project(cloud: PointCloud, mass: float, task: TaskSpec,
            model: TaskFunctionModel,
            cfg: ProjectionConfig | None = None) -> ProjectionResult:
    """Full projection pipeline for one cloud and task."""
    cfg = cfg or ProjectionConfig()
    if not np.isfinite(mass) or mass <= 0.0:
        raise ValueError("mass must be finite and > 0")
    if model.task_name is not None and model.task_name != task.name:
        raise ValueError(
            f"model was trained for '{model.task_name}', not '{task.name}'")

    fits = per_seed_fits(cloud, cfg)
    if not fits:
        raise FitDivergence("no seed produced a fittable sub-cloud")
    candidates = extract_ptools(fits, mass, accept_ratio=cfg.accept_ratio,
                                rng_seed=cfg.rng_seed)

    X = np.array([features(pt).vector for pt, _ in candidates])
    task_raw, _ = predict_batch(model, X)
    fit_scores = np.array([score for _, score in candidates])

    winner, combined = vote(fit_scores, task_raw, cfg.w_fit, cfg.w_task)
    best_pt, best_fit_score = candidates[winner]
    grasp_region = fits[best_pt.provenance["grasp_index"]].params
    return ProjectionResult(
        best=best_pt,
        combined_score=float(combined[winner]),
        fit_score=float(best_fit_score),
        task_raw=float(task_raw[winner]),
        affordance_category=categorize(float(task_raw[winner]), task.thresholds),
        grasp_region=grasp_region,
        pose=pose_for_task(best_pt, task),
        candidates_evaluated=len(candidates))
