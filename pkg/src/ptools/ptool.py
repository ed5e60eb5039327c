"""The 25-parameter two-part tool abstraction (p-tool).

A p-tool holds a grasp part and an action part (9 values each: three
scales, two shape exponents, two taper factors, bend radius, type
flag), the vector from the grasp center to the action center, ZYZ
orientation angles for the action part, and the tool mass. The
canonical frame anchors the grasp part at the origin with zero
orientation. The feature vector appends the composite
moment-of-inertia diagonal and center of mass (25+3+3 = 31).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from .fitting import FitResult, polish_scales
from .geometry import (
    euler_zyz_to_matrix,
    matrix_to_euler_zyz,
    rot_x,
    rot_y,
    rot_z,
    rotation_about_axis,
    rotation_between,
)
from .pointcloud import PointCloud, symmetric_distance
from .superquadric import (
    SuperquadricKind,
    SuperquadricParams,
    mass_properties_full,
    sample_surface,
)

TYPE_SUPERELLIPSOID = 0.0
TYPE_SUPERPARABOLOID = 1.0

# Sub-vector layout: a1 a2 a3 eps1 eps2 Kx Ky k type
SUB_FIELDS = ("a1", "a2", "a3", "eps1", "eps2", "Kx", "Ky", "k", "type")

PART_MC_SAMPLES = 60_000


def _validate_sub(sub: np.ndarray, label: str) -> None:
    if sub.shape != (9,):
        raise ValueError(f"{label} sub-vector must have 9 values")
    if np.any(sub[0:3] <= 0.0):
        raise ValueError(f"{label} scales must be > 0")
    if np.any(sub[3:5] < 0.1 - 1e-9) or np.any(sub[3:5] > 2.0 + 1e-9):
        raise ValueError(f"{label} shape exponents must lie in [0.1, 2]")
    if np.any(np.abs(sub[5:7]) > 1.0 + 1e-9):
        raise ValueError(f"{label} taper factors must lie in [-1, 1]")
    if sub[8] not in (TYPE_SUPERELLIPSOID, TYPE_SUPERPARABOLOID):
        raise ValueError(f"{label} type flag must be 0 or 1")


@dataclass(frozen=True)
class PTool:
    grasp: np.ndarray
    action: np.ndarray
    ga_vec: np.ndarray
    a_orient: np.ndarray
    mass: float
    provenance: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        g = np.asarray(self.grasp, dtype=float)
        a = np.asarray(self.action, dtype=float)
        _validate_sub(g, "grasp")
        _validate_sub(a, "action")
        v = np.asarray(self.ga_vec, dtype=float)
        o = np.asarray(self.a_orient, dtype=float)
        if v.shape != (3,) or o.shape != (3,):
            raise ValueError("ga_vec and a_orient must have 3 values")
        if not np.isfinite(self.mass) or self.mass <= 0.0:
            raise ValueError("mass must be finite and > 0")
        object.__setattr__(self, "grasp", g)
        object.__setattr__(self, "action", a)
        object.__setattr__(self, "ga_vec", v)
        object.__setattr__(self, "a_orient", o)

    @property
    def vector(self) -> np.ndarray:
        """The 25-value p-tool vector."""
        return np.concatenate([self.grasp, self.action, self.ga_vec,
                               self.a_orient, [self.mass]])

    @classmethod
    def from_vector(cls, v, provenance: dict | None = None) -> "PTool":
        v = np.asarray(v, dtype=float)
        if v.shape != (25,):
            raise ValueError("p-tool vector must have 25 values")
        return cls(grasp=v[0:9], action=v[9:18], ga_vec=v[18:21],
                   a_orient=v[21:24], mass=float(v[24]),
                   provenance=provenance)

    def to_dict(self) -> dict:
        d = {f"g_{n}": float(x) for n, x in zip(SUB_FIELDS, self.grasp)}
        d.update({f"a_{n}": float(x) for n, x in zip(SUB_FIELDS, self.action)})
        d.update({"vc_x": float(self.ga_vec[0]), "vc_y": float(self.ga_vec[1]),
                  "vc_z": float(self.ga_vec[2]),
                  "ao_theta": float(self.a_orient[0]),
                  "ao_phi": float(self.a_orient[1]),
                  "ao_psi": float(self.a_orient[2]),
                  "mass": float(self.mass)})
        if self.provenance is not None:
            d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PTool":
        grasp = [d[f"g_{n}"] for n in SUB_FIELDS]
        action = [d[f"a_{n}"] for n in SUB_FIELDS]
        return cls(grasp=np.array(grasp), action=np.array(action),
                   ga_vec=np.array([d["vc_x"], d["vc_y"], d["vc_z"]]),
                   a_orient=np.array([d["ao_theta"], d["ao_phi"], d["ao_psi"]]),
                   mass=d["mass"], provenance=d.get("provenance"))


@dataclass(frozen=True)
class PToolFeatures:
    """25 p-tool values + MOI diagonal + COM: the 31-dim learning input."""

    ptool25: np.ndarray
    moi_diag: np.ndarray
    com: np.ndarray

    def __post_init__(self):
        if len(self.ptool25) != 25 or len(self.moi_diag) != 3 or len(self.com) != 3:
            raise ValueError("feature blocks must be 25 + 3 + 3 values")
        if np.any(np.asarray(self.moi_diag) <= 0.0):
            raise ValueError("moi_diag must be positive")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.ptool25, self.moi_diag, self.com])

    @property
    def action_sub(self) -> np.ndarray:
        return self.ptool25[9:18]

    @property
    def grasp_sub(self) -> np.ndarray:
        return self.ptool25[0:9]

    @property
    def ga_vec(self) -> np.ndarray:
        return self.ptool25[18:21]

    @property
    def mass(self) -> float:
        return float(self.ptool25[24])


@dataclass(frozen=True)
class ToolPose:
    """Rigid placement of a p-tool for a task plus the arm elbow point."""

    elbow: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or np.linalg.det(R) < 0.0:
            raise ValueError("rotation must be orthonormal with det +1")


def part_to_params(sub: np.ndarray, orient=(0.0, 0.0, 0.0),
                   center=(0.0, 0.0, 0.0)) -> SuperquadricParams:
    """Realize a 9-value part sub-vector as a posed superquadric."""
    a1, a2, a3, e1, e2, kx, ky, k, type_flag = np.asarray(sub, dtype=float)
    if type_flag == TYPE_SUPERPARABOLOID:
        kind = SuperquadricKind.SUPERPARABOLOID
    elif k != 0.0:
        kind = SuperquadricKind.BENT_SUPERELLIPSOID
    elif kx != 0.0 or ky != 0.0:
        kind = SuperquadricKind.TAPERED_SUPERELLIPSOID
    else:
        kind = SuperquadricKind.SUPERELLIPSOID
    cx, cy, cz = np.asarray(center, dtype=float)
    return SuperquadricParams(a1=a1, a2=a2, a3=a3, eps1=e1, eps2=e2,
                              theta=orient[0], phi=orient[1], psi=orient[2],
                              Kx=kx, Ky=ky, k=k, px=cx, py=cy, pz=cz,
                              kind=kind)


def params_to_sub(params: SuperquadricParams) -> np.ndarray:
    """Pose-free part sub-vector of a superquadric."""
    t = TYPE_SUPERPARABOLOID if params.kind.is_paraboloid else TYPE_SUPERELLIPSOID
    e1 = min(max(params.eps1, 0.1), 2.0)
    e2 = min(max(params.eps2, 0.1), 2.0)
    return np.array([params.a1, params.a2, params.a3, e1, e2,
                     params.Kx, params.Ky, params.k, t])


# ---------------------------------------------------------------------------
# Extraction from fitted superquadrics
# ---------------------------------------------------------------------------

# Action-part reorientations: identity plus +-pi/2 about x and y, and a
# single quarter turn about z (+pi/2 and -pi/2 about the primitive's
# z collapse to the same shape, which is how "5 rotations plus original"
# yields 6 orientations). Each rotation permutes the scale triple.
_ORIENTATIONS = (
    (np.eye(3), (0, 1, 2)),
    (rot_x(np.pi / 2.0), (0, 2, 1)),
    (rot_x(-np.pi / 2.0), (0, 2, 1)),
    (rot_y(np.pi / 2.0), (2, 1, 0)),
    (rot_y(-np.pi / 2.0), (2, 1, 0)),
    (rot_z(np.pi / 2.0), (1, 0, 2)),
)


def _orientation_variants(fit: FitResult, accept_ratio: float,
                          rng_seed: int) -> list[tuple[int, SuperquadricParams, float]]:
    """Accepted (orientation index, params, sym_distance) for one fit.

    The identity orientation always survives. Rotated variants permute
    the scales, get a short scale-only polish against the fit's cloud,
    and are kept only when their symmetric distance stays within
    accept_ratio of the original fit's.
    """
    out = [(0, fit.params, fit.sym_distance)]
    if accept_ratio <= 0.0:
        return out
    base = fit.params
    r0 = base.rotation
    scales = base.scales
    for idx, (r_axis, perm) in enumerate(_ORIENTATIONS[1:], start=1):
        s = scales[list(perm)]
        theta, phi, psi = matrix_to_euler_zyz(r0 @ r_axis)
        cand = replace(base, a1=s[0], a2=s[1], a3=s[2],
                       theta=theta, phi=phi, psi=psi)
        cand = polish_scales(cand, fit.cloud)
        sym = symmetric_distance(
            fit.cloud, sample_surface(cand, len(fit.cloud), rng_seed))
        if np.isinf(accept_ratio) or sym <= accept_ratio * fit.sym_distance:
            out.append((idx, cand, sym))
    return out


def extract_ptools(fits: list[FitResult], mass: float,
                   accept_ratio: float = 1.05,
                   rng_seed: int = 0) -> list[tuple[PTool, float]]:
    """All (p-tool, fit score) interpretations of a set of fitted parts.

    Every ordered pair of distinct fits becomes (grasp, action) - a
    single fit is paired with itself - and the action part is tried in
    up to 6 orientations (identity plus quarter turns). The fit score
    is the sum of both parts' symmetric distances. The grasp part
    keeps its original orientation. accept_ratio controls the rotated
    orientation acceptance test (default 1.05x the original score; 0
    keeps only the identity, inf keeps all six).
    """
    if not np.isfinite(mass) or mass <= 0.0:
        raise ValueError("mass must be finite and > 0")
    if not fits:
        raise ValueError("need at least one fit")
    variants = [_orientation_variants(f, accept_ratio, rng_seed) for f in fits]

    if len(fits) == 1:
        pairs = [(0, 0)]
    else:
        pairs = [(g, a) for g in range(len(fits)) for a in range(len(fits))
                 if g != a]

    out: list[tuple[PTool, float]] = []
    for g_idx, a_idx in pairs:
        g_fit = fits[g_idx]
        rg = g_fit.params.rotation
        grasp_sub = params_to_sub(g_fit.params)
        ga_world = fits[a_idx].params.center - g_fit.params.center
        ga_vec = rg.T @ ga_world
        for o_idx, cand, sym in variants[a_idx]:
            rel = rg.T @ cand.rotation
            a_orient = np.array(matrix_to_euler_zyz(rel))
            pt = PTool(grasp=grasp_sub, action=params_to_sub(cand),
                       ga_vec=ga_vec, a_orient=a_orient, mass=mass,
                       provenance={"grasp_index": g_idx, "action_index": a_idx,
                                   "orientation_index": o_idx})
            out.append((pt, g_fit.sym_distance + sym))
    return out


# ---------------------------------------------------------------------------
# Rendering and features
# ---------------------------------------------------------------------------

def render(pt: PTool, n_per_part: int, rng_seed: int) -> PointCloud:
    """Sample the p-tool in its canonical frame as a labeled cloud.

    The grasp part sits at the origin with zero orientation (segment
    id 0); the action part is rotated by a_orient and translated by
    ga_vec (segment id 1).
    """
    ss = np.random.SeedSequence(rng_seed)
    s_grasp, s_action = ss.generate_state(2)
    grasp = sample_surface(part_to_params(pt.grasp), n_per_part, int(s_grasp))
    action = sample_surface(
        part_to_params(pt.action, orient=pt.a_orient, center=pt.ga_vec),
        n_per_part, int(s_action))
    points = np.vstack([grasp.points, action.points])
    seg = np.concatenate([np.zeros(n_per_part, dtype=int),
                          np.ones(n_per_part, dtype=int)])
    return PointCloud(points, segment_ids=seg)


@functools.lru_cache(maxsize=4096)
def _part_unit_props(sub_key: tuple) -> tuple:
    """(volume, com, unit-mass inertia tensor) of a part in its own frame."""
    sq = part_to_params(np.array(sub_key))
    vol, com, inertia = mass_properties_full(sq, 1.0, n_samples=PART_MC_SAMPLES)
    return vol, com, inertia


def part_properties(sub: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Volume, COM and unit-mass inertia of a part sub-vector (cached)."""
    key = tuple(np.round(np.asarray(sub, dtype=float), 12))
    vol, com, inertia = _part_unit_props(key)
    return vol, com.copy(), inertia.copy()


def features(pt: PTool) -> PToolFeatures:
    """31-dim feature vector: p-tool values + composite MOI diag + COM.

    Mass is split between the parts by volume (homogeneous density);
    each part's inertia is rotated into the canonical p-tool frame and
    transferred to the composite COM with the parallel-axis theorem.
    """
    v_g, com_g, i_g = part_properties(pt.grasp)
    v_a, com_a, i_a = part_properties(pt.action)
    total_v = v_g + v_a
    if total_v <= 0.0:
        raise ValueError("p-tool has zero total volume")
    m_g = pt.mass * v_g / total_v
    m_a = pt.mass * v_a / total_v

    r_a = euler_zyz_to_matrix(*pt.a_orient)
    com_a_world = r_a @ com_a + pt.ga_vec
    i_a_world = r_a @ (m_a * i_a) @ r_a.T
    i_g_world = m_g * i_g

    com = (m_g * com_g + m_a * com_a_world) / pt.mass
    inertia = np.zeros((3, 3))
    for m_part, c_part, i_part in ((m_g, com_g, i_g_world),
                                   (m_a, com_a_world, i_a_world)):
        d = c_part - com
        inertia += i_part + m_part * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    return PToolFeatures(ptool25=pt.vector, moi_diag=np.diag(inertia).copy(),
                         com=com)


# ---------------------------------------------------------------------------
# Task positioning
# ---------------------------------------------------------------------------

def pose_for_task(pt: PTool, task) -> ToolPose:
    """Orient and place the p-tool for a task.

    The action part's z-axis is rotated onto the task action vector,
    then the tool spins about that vector until ga_vec lies in the
    task plane. The tool is translated so the action part's contact
    extent reaches the contact point, and the elbow sits one arm
    length (0.30 m) behind the grasp center along the arm vector.
    """
    a_hat = np.asarray(task.action_vector, dtype=float)
    n_hat = np.asarray(task.plane_normal, dtype=float)
    if np.linalg.norm(a_hat) < 1e-12 or np.linalg.norm(n_hat) < 1e-12:
        raise ValueError("task action vector and plane normal must be nonzero")
    a_hat = a_hat / np.linalg.norm(a_hat)
    n_hat = n_hat / np.linalg.norm(n_hat)

    z_action = euler_zyz_to_matrix(*pt.a_orient) @ np.array([0.0, 0.0, 1.0])
    r1 = rotation_between(z_action, a_hat)

    u = r1 @ pt.ga_vec
    degenerate = False
    psi = 0.0
    norm_u = np.linalg.norm(u)
    if norm_u < 1e-12 or abs(np.dot(u, a_hat)) > (1.0 - 1e-12) * norm_u:
        degenerate = True  # ga_vec parallel to the action vector
    else:
        # Solve (rot(a_hat, psi) @ u) . n_hat = 0:
        # (A - C) cos(psi) + B sin(psi) = -C.
        A = float(np.dot(u, n_hat))
        B = float(np.dot(np.cross(a_hat, u), n_hat))
        C = float(np.dot(a_hat, u) * np.dot(a_hat, n_hat))
        rho = np.hypot(A - C, B)
        if rho < 1e-15:
            degenerate = abs(A) > 1e-12  # spin cannot change u . n_hat
        elif abs(C) > rho:
            degenerate = True  # the plane is unreachable by spinning
        else:
            delta = np.arctan2(B, A - C)
            off = np.arccos(np.clip(-C / rho, -1.0, 1.0))
            cands = [delta + off, delta - off]
            cands = [(c + np.pi) % (2.0 * np.pi) - np.pi for c in cands]
            psi = min(cands, key=abs)
    rotation = rotation_about_axis(a_hat, psi) @ r1 if psi != 0.0 else r1

    extent = float(pt.action[2])  # action a3 along the aligned axis
    contact = np.asarray(task.contact_point, dtype=float)
    action_center = contact + extent * a_hat
    translation = action_center - rotation @ pt.ga_vec

    arm = np.asarray(task.arm_vector, dtype=float)
    arm_n = np.linalg.norm(arm)
    if arm_n < 1e-12:
        raise ValueError("task arm vector must be nonzero")
    elbow = translation - 0.30 * arm / arm_n
    return ToolPose(elbow=elbow, rotation=rotation, translation=translation,
                    degenerate=degenerate)
