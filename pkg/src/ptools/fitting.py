"""Superquadric recovery from point clouds.

Bounded Levenberg-Marquardt over four model variants (normal, tapered,
bent superellipsoid and superparaboloid), each optimizing its own free
subset of the 14 parameters. The per-point residual is
sqrt(a1*a2*a3) * (F^eps1 - 1) with F the inside-outside value (the
superparaboloid level is shifted so its surface also sits at 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import euler_zyz_to_matrix, matrix_to_euler_zyz
from .pointcloud import PointCloud, downsample, symmetric_distance
from .superquadric import (
    SuperquadricKind,
    SuperquadricParams,
    inside_outside,
    sample_surface,
)

# Parameter vector layout shared by all variants.
PARAM_NAMES = ("a1", "a2", "a3", "eps1", "eps2", "theta", "phi", "psi",
               "Kx", "Ky", "k", "px", "py", "pz")

_FIXED = {
    SuperquadricKind.SUPERELLIPSOID: ("Kx", "Ky", "k"),
    SuperquadricKind.TAPERED_SUPERELLIPSOID: ("k",),
    SuperquadricKind.BENT_SUPERELLIPSOID: ("Kx", "Ky"),
    SuperquadricKind.SUPERPARABOLOID: ("Kx", "Ky", "k"),
}

VARIANT_ORDER = (
    SuperquadricKind.SUPERELLIPSOID,
    SuperquadricKind.TAPERED_SUPERELLIPSOID,
    SuperquadricKind.BENT_SUPERELLIPSOID,
    SuperquadricKind.SUPERPARABOLOID,
)


class FitDivergence(RuntimeError):
    """Optimizer hit a non-finite objective; carries the last finite iterate."""

    def __init__(self, message: str, last_params: np.ndarray | None = None):
        super().__init__(message)
        self.last_params = last_params


@dataclass
class FitOptions:
    """Levenberg-Marquardt settings (all overridable)."""

    max_iter: int = 200
    rel_obj_tol: float = 1e-8
    grad_tol: float = 1e-10
    fd_step_scale: float = 1e-6
    downsample_n: int = 1000
    surface_n: int = 1000
    min_points: int = 10


@dataclass(frozen=True)
class FitResult:
    """A converged fit: parameters, objective, and its selection score.

    `cloud` is the downsampled cloud the fit was computed on; rotated
    re-fits during p-tool extraction are scored against it.
    """

    params: SuperquadricParams
    residual: float
    sym_distance: float
    variant: SuperquadricKind
    cloud: PointCloud = field(compare=False, repr=False)


def _residual_batch(X: np.ndarray, pts: np.ndarray,
                    kind: SuperquadricKind) -> np.ndarray:
    """Fitting residuals for a batch of parameter vectors.

    X is (m, 14) in PARAM_NAMES order, pts is (n, 3); returns (m, n)
    residuals sqrt(a1*a2*a3) * (F^eps1 - 1), with the superparaboloid
    level shifted so its surface also sits at 1. Must agree with the
    scalar inside_outside path (asserted in the test suite).
    """
    X = np.atleast_2d(X)
    a1, a2, a3 = X[:, 0:1], X[:, 1:2], X[:, 2:3]
    e1, e2 = X[:, 3:4], X[:, 4:5]

    ct, st = np.cos(X[:, 5]), np.sin(X[:, 5])
    cp, sp = np.cos(X[:, 6]), np.sin(X[:, 6])
    cs, ss = np.cos(X[:, 7]), np.sin(X[:, 7])
    R = np.empty((len(X), 3, 3))
    R[:, 0, 0] = ct * cp * cs - st * ss
    R[:, 0, 1] = -ct * cp * ss - st * cs
    R[:, 0, 2] = ct * sp
    R[:, 1, 0] = st * cp * cs + ct * ss
    R[:, 1, 1] = -st * cp * ss + ct * cs
    R[:, 1, 2] = st * sp
    R[:, 2, 0] = -sp * cs
    R[:, 2, 1] = sp * ss
    R[:, 2, 2] = cp

    centered = pts[None, :, :] - X[:, None, 11:14]
    local = centered @ R
    x, y, z = local[:, :, 0], local[:, :, 1], local[:, :, 2]

    if kind is SuperquadricKind.BENT_SUPERELLIPSOID:
        k = X[:, 10:11]
        dx = k - x
        s = np.where(dx >= 0.0, 1.0, -1.0)
        r = s * np.hypot(dx, z)
        gamma = np.arctan2(s * z, s * dx)
        x = k - r
        z = k * gamma
    if kind is SuperquadricKind.TAPERED_SUPERELLIPSOID:
        tiny = 1e-12
        fx = X[:, 8:9] * z / a3 + 1.0
        fy = X[:, 9:10] * z / a3 + 1.0
        fx = np.where(np.abs(fx) < tiny, tiny, fx)
        fy = np.where(np.abs(fy) < tiny, tiny, fy)
        x = x / fx
        y = y / fy

    radial = ((np.abs(x / a1) ** (2.0 / e2) + np.abs(y / a2) ** (2.0 / e2))
              ** (e2 / e1))
    if kind.is_paraboloid:
        f = radial - z / a3
        level = np.abs(f + 1.0) ** e1
    else:
        f = radial + np.abs(z / a3) ** (2.0 / e1)
        level = f ** e1
    return np.sqrt(a1 * a2 * a3) * (level - 1.0)


def _residuals(x: np.ndarray, pts: np.ndarray, kind: SuperquadricKind) -> np.ndarray:
    return _residual_batch(np.asarray(x, dtype=float)[None, :], pts, kind)[0]


def _objective(x, pts, kind) -> float:
    r = _residuals(x, pts, kind)
    return float(np.dot(r, r))


def _pca_frame(points: np.ndarray, kind: SuperquadricKind):
    """Principal-axes frame the variant is fitted in.

    Returns (A, c0) with A columns the axis directions (det +1); local
    coordinates are (p - c0) @ A. Superellipsoids map the
    largest-variance direction to z (the elongation axis). The bent
    variant additionally puts the bow direction on +x (x correlates
    with z^2 along an arc). The superparaboloid's symmetry axis is the
    direction of strongest skewness (a bowl is asymmetric apex-to-rim
    along its axis, symmetric radially), oriented apex-down.
    """
    c0 = points.mean(axis=0)
    q = points - c0
    _, vecs = np.linalg.eigh(q.T @ q)  # columns, ascending variance

    def skewness(t: np.ndarray) -> float:
        s = t.std()
        return float(np.mean(t ** 3)) / s ** 3 if s > 0.0 else 0.0

    if kind.is_paraboloid:
        coords = q @ vecs
        skews = [skewness(coords[:, j]) for j in range(3)]
        j_axis = int(np.argmax(np.abs(skews)))
        z_dir = vecs[:, j_axis]
        # Surface density grows toward the rim, so the long tail of the
        # axis distribution points at the apex: keep the apex at -z.
        if skews[j_axis] > 0.0:
            z_dir = -z_dir
        rest = [j for j in range(3) if j != j_axis]
        x_dir = vecs[:, rest[0]]
    elif kind is SuperquadricKind.BENT_SUPERELLIPSOID:
        z_dir = vecs[:, 2]
        zz = (q @ z_dir) ** 2
        zz = zz - zz.mean()
        bows = [float(np.dot(q @ vecs[:, j], zz)) for j in (0, 1)]
        j_bow = int(np.argmax(np.abs(bows)))
        x_dir = vecs[:, j_bow] if bows[j_bow] >= 0.0 else -vecs[:, j_bow]
    else:
        z_dir = vecs[:, 2]
        x_dir = vecs[:, 0]

    # Deterministic sign for x (z is pinned above or irrelevant by
    # symmetry), right-handed completion.
    if not kind.is_paraboloid and kind is not SuperquadricKind.BENT_SUPERELLIPSOID:
        i = np.argmax(np.abs(x_dir))
        if x_dir[i] < 0.0:
            x_dir = -x_dir
        i = np.argmax(np.abs(z_dir))
        if z_dir[i] < 0.0:
            z_dir = -z_dir
    A = np.column_stack([x_dir, np.cross(z_dir, x_dir), z_dir])
    return A, c0


def _bounds_for(local_pts: np.ndarray, kind: SuperquadricKind):
    """Per-parameter (lower, upper, init) in the PCA-aligned frame.

    Scale bounds are 0.8x/1.2x the aligned bounding-box half extents
    (Eq. 1 structure), widened where a deformation provably moves the
    canonical scale outside that band: tapering scales an end by up to
    1+|K| = 2, bending shortens the z chord relative to the arc, and
    the superparaboloid's a3 spans its full height.
    """
    mn, mx = local_pts.min(axis=0), local_pts.max(axis=0)
    half = np.maximum(0.5 * (mx - mn), 1e-4)
    scale_lo = 0.8 * half
    scale_hi = 1.2 * half
    scale_init = half.copy()
    if kind is SuperquadricKind.TAPERED_SUPERELLIPSOID:
        scale_lo[0] = 0.4 * half[0]
        scale_lo[1] = 0.4 * half[1]
    elif kind is SuperquadricKind.BENT_SUPERELLIPSOID:
        scale_lo[0] = 0.4 * half[0]
        scale_hi[2] = 1.9 * half[2]
    elif kind.is_paraboloid:
        full_z = max(mx[2] - mn[2], 2e-4)
        scale_lo[2] = 0.8 * full_z
        scale_hi[2] = 1.2 * full_z
        scale_init[2] = full_z

    c3 = 1.2 * half[2]
    k_hi = max(1.0, c3)
    bent = kind is SuperquadricKind.BENT_SUPERELLIPSOID
    # Bend is only optimized (and active) for the bent variant; the
    # other variants pin the slot at the no-bend sentinel 0.
    k_lo, k_init = (c3, k_hi) if bent else (0.0, 0.0)

    center_init = local_pts.mean(axis=0)
    # The cylinder shape init suits superellipsoids; the paraboloid's
    # eps1 is a radial falloff power whose natural start is 1, and its
    # apex sits at the bottom face rather than the centroid.
    eps_init = (1.0, 1.0) if kind.is_paraboloid else (0.1, 1.0)
    if kind.is_paraboloid:
        center_init = np.array([center_init[0], center_init[1], mn[2]])

    lower = np.array([*scale_lo, 0.1, 0.1, 0.0, 0.0, 0.0, -1.0, -1.0, k_lo, *mn])
    upper = np.array([*scale_hi, 2.0, 2.0, np.pi, np.pi, np.pi, 1.0, 1.0, k_hi, *mx])
    init = np.array([*scale_init, *eps_init, 0.0, 0.0, 0.0, 0.0, 0.0, k_init,
                     *center_init])
    return lower, upper, init


def _canonical_angles(R: np.ndarray, kind: SuperquadricKind):
    """ZYZ angles of R, folded into [0, pi] via the primitive's symmetries.

    Returns (theta, phi, psi, flip_taper); flip_taper signals that the
    equivalent orientation negates the taper factors.
    """
    theta, phi, psi = matrix_to_euler_zyz(R)
    flip_taper = False
    symmetric = kind in (SuperquadricKind.SUPERELLIPSOID,
                         SuperquadricKind.TAPERED_SUPERELLIPSOID)
    if symmetric and theta < 0.0:
        # Body rotation by pi about y maps the shape onto itself
        # (negating taper): (theta, phi, psi) -> (theta+pi, pi-phi, pi-psi).
        theta, phi, psi = theta + np.pi, np.pi - phi, np.pi - psi
        flip_taper = True
    if symmetric or kind.is_paraboloid:
        # Body rotation by pi about z is always a symmetry: psi mod pi.
        psi = psi % np.pi
    return theta, phi, psi, flip_taper


def _lm_fit(pts: np.ndarray, kind: SuperquadricKind, lower, upper, x0,
            opts: FitOptions, trace: list | None = None):
    """Projected Levenberg-Marquardt over the variant's free parameters.

    Free parameters are normalized to the unit box spanned by their
    bounds (equalizing meters vs radians), steps are accepted only when
    the objective decreases, and every accepted iterate is projected
    back onto the box. Damping follows the Nielsen gain-ratio schedule.
    """
    free_names = [n for n in PARAM_NAMES if n not in _FIXED[kind]]
    free_idx = [PARAM_NAMES.index(n) for n in free_names]
    lo, hi = lower[free_idx], upper[free_idx]
    span = np.maximum(hi - lo, 1e-12)
    fd_step = opts.fd_step_scale  # in unit-box coordinates

    def expand(z: np.ndarray) -> np.ndarray:
        full = x0.copy()
        full[free_idx] = lo + z * span
        return full

    def residuals_z(z: np.ndarray) -> np.ndarray:
        return _residuals(expand(z), pts, kind)

    z = np.clip((np.clip(x0, lower, upper)[free_idx] - lo) / span, 0.0, 1.0)
    r = residuals_z(z)
    obj = float(np.dot(r, r))
    if not np.isfinite(obj):
        raise FitDivergence("objective non-finite at initialization", expand(z))
    if trace is not None:
        trace.append((0, obj))

    mu = 0.0  # set from the first Jacobian
    nu = 2.0
    n_free = len(free_idx)
    for it in range(1, opts.max_iter + 1):
        # Central-difference Jacobian, all probes in one batched call.
        probes = np.tile(expand(z), (2 * n_free, 1))
        for j, i in enumerate(free_idx):
            probes[2 * j, i] += fd_step * span[j]
            probes[2 * j + 1, i] -= fd_step * span[j]
        evals = _residual_batch(probes, pts, kind)
        J = ((evals[0::2] - evals[1::2]) / (2.0 * fd_step)).T
        g = J.T @ r
        if np.max(np.abs(g)) < opts.grad_tol:
            break
        JTJ = J.T @ J
        if mu == 0.0:
            mu = 1e-3 * max(np.max(np.diag(JTJ)), 1e-12)

        accepted = False
        rel_change = np.inf
        for _ in range(30):
            try:
                step = np.linalg.solve(JTJ + mu * np.eye(n_free), -g)
            except np.linalg.LinAlgError:
                mu *= nu
                nu *= 2.0
                continue
            z_new = np.clip(z + step, 0.0, 1.0)
            r_new = residuals_z(z_new)
            obj_new = float(np.dot(r_new, r_new))
            if np.isfinite(obj_new) and obj_new < obj:
                actual = obj - obj_new
                predicted = float(np.dot(z_new - z, mu * (z - z_new) - 2.0 * g))
                gain = actual / predicted if predicted > 0.0 else 1.0
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * gain - 1.0) ** 3)
                nu = 2.0
                rel_change = actual / max(obj, 1e-300)
                z, r, obj = z_new, r_new, obj_new
                accepted = True
                break
            mu *= nu
            nu *= 2.0
            if mu > 1e16:
                break
        if trace is not None:
            trace.append((it, obj))
        if not accepted or rel_change < opts.rel_obj_tol:
            break
    return expand(z), obj


def fit_variant(cloud: PointCloud, kind: SuperquadricKind, rng_seed: int,
                options: FitOptions | None = None,
                trace: list | None = None) -> FitResult:
    """Fit one superquadric variant to a cloud.

    The cloud is downsampled to 1000 points and expressed in its
    PCA-aligned frame; scales start at the aligned bounding-box half
    extents, shape at a cylinder (eps1=0.1, eps2=1), orientation/taper
    at zero, bend at its least-bent bound, and the center at the cloud
    mean. Bounds follow the recovery formulation (shape in [0.1, 2],
    angles in [0, pi], taper in [-1, 1], bend radius in
    [1.2*half_z, 1 m], center inside the box, scales 0.8x-1.2x the
    half extents with deformation-aware widening, see _bounds_for).
    The returned parameters are in the world frame.
    """
    opts = options or FitOptions()
    if len(cloud) < opts.min_points:
        raise ValueError(f"cloud too small to fit ({len(cloud)} points)")
    sub = downsample(cloud, opts.downsample_n, rng_seed)
    A, c0 = _pca_frame(sub.points, kind)
    local = (sub.points - c0) @ A
    lower, upper, x0 = _bounds_for(local, kind)
    x, obj = _lm_fit(local, kind, lower, upper, x0, opts, trace)

    r_world = A @ euler_zyz_to_matrix(x[5], x[6], x[7])
    center = A @ x[11:14] + c0
    theta, phi, psi, flip = _canonical_angles(r_world, kind)
    tapered = kind is SuperquadricKind.TAPERED_SUPERELLIPSOID
    sgn = -1.0 if flip else 1.0
    params = SuperquadricParams(
        a1=x[0], a2=x[1], a3=x[2], eps1=x[3], eps2=x[4],
        theta=theta, phi=phi, psi=psi,
        Kx=sgn * x[8] if tapered else 0.0,
        Ky=sgn * x[9] if tapered else 0.0,
        k=x[10] if kind is SuperquadricKind.BENT_SUPERELLIPSOID else 0.0,
        px=center[0], py=center[1], pz=center[2], kind=kind)
    sample = sample_surface(params, opts.surface_n, rng_seed)
    sym = symmetric_distance(sub, sample)
    return FitResult(params=params, residual=obj, sym_distance=sym,
                     variant=kind, cloud=sub)


def polish_scales(params: SuperquadricParams, cloud: PointCloud,
                  max_iter: int = 10) -> SuperquadricParams:
    """Short bounded LM over the three scales only, all else frozen.

    Used after rotating an action part: the permuted scale triple is
    refined against the part's cloud within 0.8x-1.2x of its values.
    """
    from dataclasses import replace

    x = np.array([params.a1, params.a2, params.a3, params.eps1, params.eps2,
                  params.theta, params.phi, params.psi,
                  params.Kx, params.Ky, params.k,
                  params.px, params.py, params.pz])
    scales = x[0:3]
    lo, hi = 0.8 * scales, 1.2 * scales
    span = hi - lo
    pts = cloud.points
    kind = params.kind
    h = 1e-6

    def residuals(z):
        xx = x.copy()
        xx[0:3] = lo + z * span
        return _residuals(xx, pts, kind)

    z = np.full(3, 0.5)
    r = residuals(z)
    obj = float(np.dot(r, r))
    mu, nu = 0.0, 2.0
    for _ in range(max_iter):
        J = np.empty((len(pts), 3))
        for j in range(3):
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            J[:, j] = (residuals(zp) - residuals(zm)) / (2.0 * h)
        g = J.T @ r
        JTJ = J.T @ J
        if mu == 0.0:
            mu = 1e-3 * max(np.max(np.diag(JTJ)), 1e-12)
        accepted = False
        for _ in range(10):
            step = np.linalg.solve(JTJ + mu * np.eye(3), -g)
            z_new = np.clip(z + step, 0.0, 1.0)
            r_new = residuals(z_new)
            obj_new = float(np.dot(r_new, r_new))
            if np.isfinite(obj_new) and obj_new < obj:
                z, r, obj = z_new, r_new, obj_new
                mu = max(mu / 3.0, 1e-12)
                nu = 2.0
                accepted = True
                break
            mu *= nu
            nu *= 2.0
        if not accepted:
            break
    s = lo + z * span
    return replace(params, a1=s[0], a2=s[1], a3=s[2])


def fit_best(cloud: PointCloud, rng_seed: int,
             options: FitOptions | None = None) -> FitResult:
    """Fit all four variants and keep the lowest symmetric distance.

    Ties break by variant precedence: normal > tapered > bent >
    superparaboloid.
    """
    best: FitResult | None = None
    errors = []
    for kind in VARIANT_ORDER:
        try:
            res = fit_variant(cloud, kind, rng_seed, options)
        except (FitDivergence, ValueError) as exc:
            errors.append((kind, exc))
            continue
        if best is None or res.sym_distance < best.sym_distance:
            best = res
    if best is None:
        raise FitDivergence(f"all four variants failed: {errors}")
    return best
