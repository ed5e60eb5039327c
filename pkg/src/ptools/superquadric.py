"""Superquadric primitives: superellipsoids and superparaboloids.

A primitive is described by 14 parameters: three scales (a1, a2, a3),
two shape exponents (eps1, eps2), ZYZ Euler pose angles (theta, phi,
psi), taper factors (Kx, Ky), bend radius k, and center (px, py, pz),
plus a kind tag selecting the surface family and which deformations the
fitting variants optimize.

Surface conventions: superellipsoids use the inside-outside level F = 1
(F < 1 inside); superparaboloids use F = 0 (F < 0 inside).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import beta as beta_fn

from .geometry import euler_zyz_to_matrix


class SuperquadricKind(Enum):
    SUPERELLIPSOID = "superellipsoid"
    TAPERED_SUPERELLIPSOID = "tapered_superellipsoid"
    BENT_SUPERELLIPSOID = "bent_superellipsoid"
    SUPERPARABOLOID = "superparaboloid"

    @property
    def is_paraboloid(self) -> bool:
        return self is SuperquadricKind.SUPERPARABOLOID


@dataclass(frozen=True)
class SuperquadricParams:
    """Full 14-parameter primitive description.

    Scales are in meters, angles in radians; taper factors are
    dimensionless in [-1, 1]; k is the bend-circle radius in meters
    (0 means no bending). Fitted primitives keep shape exponents in
    [0.1, 2] and pose angles in [0, pi]; hand-built primitives may use
    values outside those ranges.
    """

    a1: float
    a2: float
    a3: float
    eps1: float = 1.0
    eps2: float = 1.0
    theta: float = 0.0
    phi: float = 0.0
    psi: float = 0.0
    Kx: float = 0.0
    Ky: float = 0.0
    k: float = 0.0
    px: float = 0.0
    py: float = 0.0
    pz: float = 0.0
    kind: SuperquadricKind = SuperquadricKind.SUPERELLIPSOID

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "a3"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        vals = [self.eps1, self.eps2, self.theta, self.phi, self.psi,
                self.Kx, self.Ky, self.k, self.px, self.py, self.pz]
        if not np.all(np.isfinite(vals)):
            raise ValueError("superquadric parameters must be finite")
        if self.eps1 <= 0.0 or self.eps2 <= 0.0:
            raise ValueError("shape exponents must be > 0")
        if self.kind is SuperquadricKind.BENT_SUPERELLIPSOID and self.k == 0.0:
            raise ValueError("bend radius k must be nonzero for a bent superellipsoid")

    @property
    def scales(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.px, self.py, self.pz])

    @property
    def rotation(self) -> np.ndarray:
        return euler_zyz_to_matrix(self.theta, self.phi, self.psi)

    def with_pose(self, theta: float, phi: float, psi: float,
                  center: np.ndarray) -> "SuperquadricParams":
        cx, cy, cz = np.asarray(center, dtype=float)
        return replace(self, theta=theta, phi=phi, psi=psi, px=cx, py=cy, pz=cz)

    def to_dict(self) -> dict:
        return {
            "a1": self.a1, "a2": self.a2, "a3": self.a3,
            "eps1": self.eps1, "eps2": self.eps2,
            "theta": self.theta, "phi": self.phi, "psi": self.psi,
            "Kx": self.Kx, "Ky": self.Ky, "k": self.k,
            "px": self.px, "py": self.py, "pz": self.pz,
            "kind": self.kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuperquadricParams":
        d = dict(d)
        d["kind"] = SuperquadricKind(d["kind"])
        return cls(**d)


def _signed_pow(x: np.ndarray, p: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** p


def _taper_active(sq: SuperquadricParams) -> bool:
    if sq.kind.is_paraboloid:
        return False
    return sq.Kx != 0.0 or sq.Ky != 0.0


def _bend_active(sq: SuperquadricParams) -> bool:
    if sq.kind.is_paraboloid:
        return False
    return sq.k != 0.0


def _apply_taper(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    fx = sq.Kx * pts[:, 2] / sq.a3 + 1.0
    fy = sq.Ky * pts[:, 2] / sq.a3 + 1.0
    return np.column_stack([pts[:, 0] * fx, pts[:, 1] * fy, pts[:, 2]])


def _invert_taper(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    fx = sq.Kx * pts[:, 2] / sq.a3 + 1.0
    fy = sq.Ky * pts[:, 2] / sq.a3 + 1.0
    # Exactly at a fully pinched end the map is not invertible; clamp
    # the factor to keep F finite there.
    tiny = 1e-12
    fx = np.where(np.abs(fx) < tiny, tiny, fx)
    fy = np.where(np.abs(fy) < tiny, tiny, fy)
    return np.column_stack([pts[:, 0] / fx, pts[:, 1] / fy, pts[:, 2]])


def _apply_bend(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    # Circular bend of radius k in the x-z plane, positive on x along z.
    k = sq.k
    gamma = pts[:, 2] / k
    r = k - pts[:, 0]
    x = k - r * np.cos(gamma)
    z = r * np.sin(gamma)
    return np.column_stack([x, pts[:, 1], z])


def _invert_bend(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    # Valid for bend arcs shorter than a quarter circle (|z/k| < pi/2),
    # which covers every fitted primitive (k >= 1.2 * z half-extent).
    k = sq.k
    dx = k - pts[:, 0]
    s = np.where(dx >= 0.0, 1.0, -1.0)
    r = s * np.hypot(dx, pts[:, 2])
    gamma = np.arctan2(s * pts[:, 2], s * dx)
    return np.column_stack([k - r, pts[:, 1], k * gamma])


def _to_canonical(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    """World points -> canonical (undeformed, unposed) frame."""
    local = (pts - sq.center) @ sq.rotation
    if _bend_active(sq):
        local = _invert_bend(sq, local)
    if _taper_active(sq):
        local = _invert_taper(sq, local)
    return local


def _from_canonical(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    """Canonical frame -> world: taper, then bend, then rigid pose."""
    out = pts
    if _taper_active(sq):
        out = _apply_taper(sq, out)
    if _bend_active(sq):
        out = _apply_bend(sq, out)
    return out @ sq.rotation.T + sq.center


def _canonical_f(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    x = np.abs(pts[:, 0] / sq.a1)
    y = np.abs(pts[:, 1] / sq.a2)
    radial = (x ** (2.0 / sq.eps2) + y ** (2.0 / sq.eps2)) ** (sq.eps2 / sq.eps1)
    if sq.kind.is_paraboloid:
        return radial - pts[:, 2] / sq.a3
    return radial + np.abs(pts[:, 2] / sq.a3) ** (2.0 / sq.eps1)


def inside_outside(sq: SuperquadricParams, p: np.ndarray) -> np.ndarray | float:
    """Evaluate the inside-outside function F at world-frame point(s).

    Superellipsoids: F < 1 inside, F = 1 on the surface, F > 1 outside.
    Superparaboloids: F < 0 inside, F = 0 on the surface.

    Accepts a single (3,) point or an (N, 3) array.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    if pts.shape[1] != 3:
        raise ValueError("points must have shape (3,) or (N, 3)")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    f = _canonical_f(sq, _to_canonical(sq, pts))
    return float(f[0]) if single else f


def deform(sq: SuperquadricParams, canonical_point: np.ndarray) -> np.ndarray:
    """Map canonical-frame point(s) to the world frame.

    Applies taper, then the circular bend, then the rigid pose.
    """
    if sq.kind is SuperquadricKind.BENT_SUPERELLIPSOID and sq.k == 0.0:
        raise ValueError("bend radius k = 0 is singular")
    p = np.asarray(canonical_point, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    out = _from_canonical(sq, pts)
    return out[0] if single else out


def surface_level(sq: SuperquadricParams) -> float:
    """The F value on the primitive's surface (1 or 0)."""
    return 0.0 if sq.kind.is_paraboloid else 1.0


def _surface_param_map(sq: SuperquadricParams, u: np.ndarray,
                       v: np.ndarray) -> np.ndarray:
    """Canonical surface points for parameters (u, v).

    Superellipsoid: u = eta in [-pi/2, pi/2], v = omega in [-pi, pi).
    Superparaboloid: u = normalized height in [0, 1], v = omega.
    """
    if sq.kind.is_paraboloid:
        h = np.clip(u, 0.0, 1.0) ** (sq.eps1 / 2.0)
        x = sq.a1 * h * _signed_pow(np.cos(v), sq.eps2)
        y = sq.a2 * h * _signed_pow(np.sin(v), sq.eps2)
        z = sq.a3 * np.clip(u, 0.0, 1.0)
    else:
        ce = _signed_pow(np.cos(u), sq.eps1)
        x = sq.a1 * ce * _signed_pow(np.cos(v), sq.eps2)
        y = sq.a2 * ce * _signed_pow(np.sin(v), sq.eps2)
        z = sq.a3 * _signed_pow(np.sin(u), sq.eps1)
    return np.column_stack([x, y, z])


def _deformed_surface(sq: SuperquadricParams, u: np.ndarray,
                      v: np.ndarray) -> np.ndarray:
    """Surface points after taper/bend, before the rigid pose."""
    pts = _surface_param_map(sq, u, v)
    if _taper_active(sq):
        pts = _apply_taper(sq, pts)
    if _bend_active(sq):
        pts = _apply_bend(sq, pts)
    return pts


def _area_weights(sq: SuperquadricParams, u: np.ndarray,
                  v: np.ndarray) -> np.ndarray:
    """Numerical surface-area element of the deformed parameterization."""
    if sq.kind.is_paraboloid:
        hu = 1e-5
    else:
        hu = 1e-5 * np.pi
    hv = 1e-5 * np.pi
    du = _deformed_surface(sq, u + hu, v) - _deformed_surface(sq, u - hu, v)
    dv = _deformed_surface(sq, u, v + hv) - _deformed_surface(sq, u, v - hv)
    cross = np.cross(du / (2.0 * hu), dv / (2.0 * hv))
    return np.linalg.norm(cross, axis=1)


def _param_domain(sq: SuperquadricParams) -> tuple[float, float]:
    if sq.kind.is_paraboloid:
        return 0.0, 1.0
    return -np.pi / 2.0, np.pi / 2.0


def sample_surface(sq: SuperquadricParams, n: int, rng_seed: int):
    """Draw n close-to-uniform surface points.

    Candidates from the angular parameterization are rejection-sampled
    proportionally to the local area element (estimated numerically on
    the deformed surface), then posed. Deterministic given rng_seed.
    """
    from .pointcloud import PointCloud

    if n < 8:
        raise ValueError("need at least 8 surface samples")
    if sq.kind is SuperquadricKind.BENT_SUPERELLIPSOID and sq.k == 0.0:
        raise ValueError("bend radius k = 0 is singular")
    rng = np.random.default_rng(rng_seed)
    lo, hi = _param_domain(sq)
    accepted: list[np.ndarray] = []
    total = 0
    while total < n:
        m = max(4 * n, 1024)
        u = rng.uniform(lo, hi, size=m)
        v = rng.uniform(-np.pi, np.pi, size=m)
        w = _area_weights(sq, u, v)
        wmax = w.max()
        if not np.isfinite(wmax) or wmax <= 0.0:
            raise ValueError("degenerate surface parameterization")
        keep = rng.uniform(size=m) < w / wmax
        pts = _deformed_surface(sq, u[keep], v[keep])
        accepted.append(pts)
        total += len(pts)
    pts = np.vstack(accepted)[:n]
    return PointCloud(pts @ sq.rotation.T + sq.center)


def _canonical_bbox(sq: SuperquadricParams) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box bounding the deformed (unposed) solid."""
    if not _taper_active(sq) and not _bend_active(sq):
        if sq.kind.is_paraboloid:
            return (np.array([-sq.a1, -sq.a2, 0.0]),
                    np.array([sq.a1, sq.a2, sq.a3]))
        return -sq.scales, sq.scales
    # Deformations map the boundary to the boundary, so bound the
    # deformed surface on a parameter grid and pad.
    lo, hi = _param_domain(sq)
    u, v = np.meshgrid(np.linspace(lo, hi, 48), np.linspace(-np.pi, np.pi, 48))
    pts = _deformed_surface(sq, u.ravel(), v.ravel())
    mn, mx = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * (mx - mn) + 1e-9
    return mn - pad, mx + pad


def _inside_canonical_world(sq: SuperquadricParams, pts: np.ndarray) -> np.ndarray:
    """Membership test for deformed-but-unposed points."""
    local = pts
    if _bend_active(sq):
        local = _invert_bend(sq, local)
    if _taper_active(sq):
        local = _invert_taper(sq, local)
    f = _canonical_f(sq, local)
    if sq.kind.is_paraboloid:
        return (f <= 0.0) & (local[:, 2] <= sq.a3)
    return f <= 1.0


def _se_moment(sq: SuperquadricParams, p: int, q: int, r: int) -> float:
    """Closed-form monomial moment over an undeformed superellipsoid.

    Integral of x^p y^q z^r (p, q, r even) over the solid F <= 1.
    """
    e1, e2 = sq.eps1, sq.eps2
    s = (2.0 * e1 * e2 / (p + q + r + 3)
         * beta_fn((p + q + 2) * e1 / 2.0, (r + 1) * e1 / 2.0)
         * beta_fn((p + 1) * e2 / 2.0, (q + 1) * e2 / 2.0))
    return s * sq.a1 ** (p + 1) * sq.a2 ** (q + 1) * sq.a3 ** (r + 1)


def _mass_properties_closed_form(sq: SuperquadricParams, mass: float):
    vol = _se_moment(sq, 0, 0, 0)
    m2 = np.array([_se_moment(sq, 2, 0, 0), _se_moment(sq, 0, 2, 0),
                   _se_moment(sq, 0, 0, 2)])
    rho = mass / vol
    inertia = np.diag([rho * (m2[1] + m2[2]), rho * (m2[0] + m2[2]),
                       rho * (m2[0] + m2[1])])
    return vol, np.zeros(3), inertia


def _mass_properties_monte_carlo(sq: SuperquadricParams, mass: float,
                                 n_samples: int, seed: int):
    rng = np.random.default_rng(seed)
    mn, mx = _canonical_bbox(sq)
    box_vol = float(np.prod(mx - mn))
    pts = rng.uniform(mn, mx, size=(n_samples, 3))
    inside = _inside_canonical_world(sq, pts)
    n_in = int(inside.sum())
    if n_in == 0:
        raise ValueError("Monte-Carlo volume estimate found no interior points")
    vol = box_vol * n_in / n_samples
    pin = pts[inside]
    com = pin.mean(axis=0)
    d = pin - com
    rho_dv = mass / n_in  # per-sample mass
    sq_sum = (d ** 2).sum(axis=1)
    inertia = rho_dv * (np.eye(3) * sq_sum.sum() - d.T @ d)
    return vol, com, inertia


def mass_properties_full(sq: SuperquadricParams, mass: float,
                         n_samples: int = 300_000, seed: int = 0):
    """Volume, center of mass and full 3x3 inertia tensor about the COM.

    Expressed in the primitive's own (deformed, unposed) frame under a
    homogeneous mass distribution. Undeformed superellipsoids use
    closed-form beta-function integrals; deformed superellipsoids and
    superparaboloids use deterministic Monte-Carlo integration over the
    inside-outside test.
    """
    if not np.isfinite(mass) or mass <= 0.0:
        raise ValueError("mass must be finite and > 0")
    if (not sq.kind.is_paraboloid and not _taper_active(sq)
            and not _bend_active(sq)):
        return _mass_properties_closed_form(sq, mass)
    return _mass_properties_monte_carlo(sq, mass, n_samples, seed)


def mass_properties(sq: SuperquadricParams, mass: float,
                    n_samples: int = 300_000) -> dict:
    """Volume [m^3], COM [m] and inertia-tensor diagonal [kg m^2].

    Values are in the primitive's principal (body) frame.
    """
    vol, com, inertia = mass_properties_full(sq, mass, n_samples=n_samples)
    return {"volume": vol, "com": com, "moi_diag": np.diag(inertia).copy()}


def superellipsoid_volume(a1: float, a2: float, a3: float,
                          eps1: float, eps2: float) -> float:
    """Analytic volume of an undeformed superellipsoid."""
    return (2.0 * a1 * a2 * a3 * eps1 * eps2 / 3.0
            * beta_fn(eps1, eps1 / 2.0) * beta_fn(eps2 / 2.0, eps2 / 2.0))


def superparaboloid_volume(a1: float, a2: float, a3: float,
                           eps1: float, eps2: float) -> float:
    """Analytic volume of the superparaboloid solid (apex to rim)."""
    return (a1 * a2 * a3 * eps2 * beta_fn(eps2 / 2.0, eps2 / 2.0)
            / (eps1 + 1.0))
