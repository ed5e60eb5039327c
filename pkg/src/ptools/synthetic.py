"""Synthetic tool clouds and random p-tools for tests and training.

Tool clouds are built from two superquadric parts (handle + head,
handle + blade, single bowl, ...) with per-part segment labels, plus
the ground-truth p-tool they realize. Random p-tools draw tool-like
parameters for training-set generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import euler_zyz_to_matrix, matrix_to_euler_zyz
from .pointcloud import PointCloud
from .ptool import TYPE_SUPERELLIPSOID, TYPE_SUPERPARABOLOID, PTool, part_to_params
from .superquadric import sample_surface

TOOL_KINDS = ("hammer", "mallet", "spatula", "knife", "rolling_pin", "bowl",
              "scoop", "dumbbell", "sphere", "plate")


@dataclass(frozen=True)
class SyntheticTool:
    """A generated cloud, its mass, and the p-tool it was built from."""

    kind: str
    cloud: PointCloud
    mass: float
    true_ptool: PTool

    @property
    def head_center(self) -> np.ndarray:
        """Action-part center in the cloud frame (the p-tool's ga_vec)."""
        return self.true_ptool.ga_vec

    @property
    def head_half_extent(self) -> float:
        return float(np.max(self.true_ptool.action[0:3]))


def _two_part(kind, grasp, action, ga_vec, a_orient, mass, n_points, rng):
    pt = PTool(grasp=np.array(grasp), action=np.array(action),
               ga_vec=np.asarray(ga_vec, dtype=float),
               a_orient=np.asarray(a_orient, dtype=float), mass=mass)
    n_action = n_points // 2
    n_grasp = n_points - n_action
    grasp_cloud = sample_surface(part_to_params(pt.grasp), n_grasp,
                                 int(rng.integers(2 ** 31)))
    action_cloud = sample_surface(
        part_to_params(pt.action, orient=pt.a_orient, center=pt.ga_vec),
        n_action, int(rng.integers(2 ** 31)))
    pts = np.vstack([grasp_cloud.points, action_cloud.points])
    seg = np.concatenate([np.zeros(n_grasp, dtype=int), np.ones(n_action, dtype=int)])
    return SyntheticTool(kind=kind, cloud=PointCloud(pts, segment_ids=seg),
                         mass=mass, true_ptool=pt)


def _single_part(kind, sub, mass, n_points, rng):
    pt = PTool(grasp=np.array(sub), action=np.array(sub),
               ga_vec=np.zeros(3), a_orient=np.zeros(3), mass=mass)
    cloud = sample_surface(part_to_params(pt.action), n_points,
                           int(rng.integers(2 ** 31)))
    seg = np.zeros(n_points, dtype=int)
    return SyntheticTool(kind=kind, cloud=PointCloud(cloud.points, segment_ids=seg),
                         mass=mass, true_ptool=pt)


def make_tool(kind: str, rng_seed: int, n_points: int = 1200,
              size: float = 1.0) -> SyntheticTool:
    """Generate a named synthetic tool cloud with ground truth.

    `size` scales all linear dimensions. Segment id 0 is the grasp
    part, 1 the action part.
    """
    rng = np.random.default_rng(rng_seed)
    s = size
    E, P = TYPE_SUPERELLIPSOID, TYPE_SUPERPARABOLOID
    if kind == "hammer":
        handle = [0.013 * s, 0.013 * s, 0.12 * s, 0.3, 1.0, 0, 0, 0, E]
        head = [0.045 * s, 0.018 * s, 0.018 * s, 0.2, 0.3, 0, 0, 0, E]
        return _two_part(kind, handle, head, [0.0, 0.0, 0.13 * s],
                         [0.0, 0.0, 0.0], 0.9 * s, n_points, rng)
    if kind == "mallet":
        handle = [0.014 * s, 0.014 * s, 0.13 * s, 0.4, 1.0, 0, 0, 0, E]
        head = [0.03 * s, 0.03 * s, 0.05 * s, 0.3, 1.0, 0, 0, 0, E]
        return _two_part(kind, handle, head, [0.0, 0.0, 0.15 * s],
                         [0.0, np.pi / 2.0, 0.0], 1.1 * s, n_points, rng)
    if kind == "spatula":
        handle = [0.011 * s, 0.011 * s, 0.1 * s, 0.4, 1.0, 0, 0, 0, E]
        blade = [0.045 * s, 0.035 * s, 0.004 * s, 0.2, 1.8, 0, 0, 0, E]
        return _two_part(kind, handle, blade, [0.0, 0.0, 0.12 * s],
                         [0.0, 0.0, 0.0], 0.25 * s, n_points, rng)
    if kind == "knife":
        handle = [0.012 * s, 0.012 * s, 0.06 * s, 0.3, 1.0, 0, 0, 0, E]
        blade = [0.09 * s, 0.011 * s, 0.0035 * s, 0.2, 0.6, 0, 0, 0, E]
        return _two_part(kind, handle, blade, [0.0, 0.0, 0.15 * s],
                         [0.0, np.pi / 2.0, 0.0], 0.3 * s, n_points, rng)
    if kind == "rolling_pin":
        return _single_part(kind, [0.025 * s, 0.025 * s, 0.16 * s,
                                   0.15, 1.0, 0, 0, 0, E], 0.7 * s, n_points, rng)
    if kind == "bowl":
        return _single_part(kind, [0.09 * s, 0.085 * s, 0.045 * s,
                                   1.0, 1.1, 0, 0, 0, P], 0.5 * s, n_points, rng)
    if kind == "scoop":
        handle = [0.01 * s, 0.01 * s, 0.09 * s, 0.4, 1.0, 0, 0, 0, E]
        head = [0.05 * s, 0.035 * s, 0.025 * s, 1.0, 1.2, 0, 0, 0, P]
        return _two_part(kind, handle, head, [0.0, 0.0, 0.12 * s],
                         [0.0, np.pi / 2.0, 0.0], 0.2 * s, n_points, rng)
    if kind == "dumbbell":
        a = [0.035 * s, 0.035 * s, 0.035 * s, 1.0, 1.0, 0, 0, 0, E]
        return _two_part(kind, a, list(a), [0.0, 0.0, 0.14 * s],
                         [0.0, 0.0, 0.0], 1.4 * s, n_points, rng)
    if kind == "sphere":
        return _single_part(kind, [0.05 * s, 0.05 * s, 0.05 * s,
                                   1.0, 1.0, 0, 0, 0, E], 0.9 * s, n_points, rng)
    if kind == "plate":
        return _single_part(kind, [0.09 * s, 0.09 * s, 0.008 * s,
                                   0.3, 1.0, 0, 0, 0, E], 0.4 * s, n_points, rng)
    raise ValueError(f"unknown tool kind '{kind}', expected one of {TOOL_KINDS}")


def random_ptool(rng: np.random.Generator) -> PTool:
    """One random tool-like p-tool (meters, kilograms)."""
    def part() -> np.ndarray:
        profile = rng.choice(["rod", "blob", "plate", "bowl"])
        if profile == "rod":
            sub = [rng.uniform(0.008, 0.03), rng.uniform(0.008, 0.03),
                   rng.uniform(0.05, 0.18), rng.uniform(0.1, 0.6),
                   rng.uniform(0.5, 1.5), 0.0, 0.0, 0.0, TYPE_SUPERELLIPSOID]
        elif profile == "blob":
            sub = [rng.uniform(0.015, 0.06), rng.uniform(0.015, 0.06),
                   rng.uniform(0.015, 0.06), rng.uniform(0.1, 1.8),
                   rng.uniform(0.1, 1.8), 0.0, 0.0, 0.0, TYPE_SUPERELLIPSOID]
        elif profile == "plate":
            sub = [rng.uniform(0.03, 0.1), rng.uniform(0.02, 0.08),
                   rng.uniform(0.002, 0.01), rng.uniform(0.1, 0.5),
                   rng.uniform(0.5, 2.0), 0.0, 0.0, 0.0, TYPE_SUPERELLIPSOID]
        else:
            sub = [rng.uniform(0.03, 0.1), rng.uniform(0.03, 0.09),
                   rng.uniform(0.015, 0.06), rng.uniform(0.5, 1.5),
                   rng.uniform(0.5, 1.5), 0.0, 0.0, 0.0, TYPE_SUPERPARABOLOID]
        sub = np.array(sub)
        if sub[8] == TYPE_SUPERELLIPSOID and rng.uniform() < 0.25:
            sub[5] = rng.uniform(-0.9, 0.9)
            sub[6] = rng.uniform(-0.9, 0.9)
        return sub

    grasp = part()
    action = part()
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    ga_vec = direction * rng.uniform(0.02, 0.35)
    a_orient = rng.uniform(0.0, np.pi, size=3)
    mass = rng.uniform(0.05, 2.5)
    return PTool(grasp=grasp, action=action, ga_vec=ga_vec,
                 a_orient=a_orient, mass=float(mass))


def random_ptools(n: int, rng_seed: int) -> list[PTool]:
    rng = np.random.default_rng(rng_seed)
    return [random_ptool(rng) for _ in range(n)]


def benchmark_tools(rng_seed: int = 0, n_points: int = 900) -> list[SyntheticTool]:
    """The fixed 10-tool benchmark: varied affordance quality per task."""
    kinds = ["hammer", "mallet", "spatula", "knife", "rolling_pin",
             "bowl", "scoop", "dumbbell", "sphere", "plate"]
    rng = np.random.default_rng(rng_seed)
    return [make_tool(k, int(rng.integers(2 ** 31)), n_points=n_points)
            for k in kinds]
