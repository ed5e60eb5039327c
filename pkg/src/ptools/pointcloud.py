"""Point cloud container, ASCII PLY I/O and cloud-level utilities."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


class PlyParseError(ValueError):
    """Malformed PLY input; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class BoundingBox:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.min > self.max):
            raise ValueError("bounding box min must be <= max componentwise")

    @property
    def extents(self) -> np.ndarray:
        return self.max - self.min

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * (self.max - self.min)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


class PointCloud:
    """Immutable set of 3D points with optional normals and segment ids."""

    def __init__(self, points, normals=None, segment_ids=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        self._points = pts
        self._points.setflags(write=False)

        self._normals = None
        if normals is not None:
            nrm = np.asarray(normals, dtype=float)
            if nrm.shape != pts.shape:
                raise ValueError("normals must match points shape")
            lens = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lens - 1.0) > 1e-3):
                raise ValueError("normals must be unit length within 1e-3")
            self._normals = nrm
            self._normals.setflags(write=False)

        self._segment_ids = None
        if segment_ids is not None:
            seg = np.asarray(segment_ids, dtype=int)
            if seg.shape != (len(pts),):
                raise ValueError("segment_ids must match point count")
            if np.any(seg < 0):
                raise ValueError("segment_ids must be non-negative")
            self._segment_ids = seg
            self._segment_ids.setflags(write=False)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def normals(self) -> np.ndarray | None:
        return self._normals

    @property
    def segment_ids(self) -> np.ndarray | None:
        return self._segment_ids

    def __len__(self) -> int:
        return len(self._points)

    def select(self, index) -> "PointCloud":
        """Sub-cloud at the given indices/mask, carrying attributes."""
        return PointCloud(
            self._points[index],
            None if self._normals is None else self._normals[index],
            None if self._segment_ids is None else self._segment_ids[index],
        )

    def with_segment_ids(self, segment_ids) -> "PointCloud":
        return PointCloud(self._points, self._normals, segment_ids)

    def bounding_box(self) -> BoundingBox:
        if len(self) == 0:
            raise ValueError("empty cloud has no bounding box")
        return BoundingBox(self._points.min(axis=0), self._points.max(axis=0))

    def centroid(self) -> np.ndarray:
        return self._points.mean(axis=0)

    def segments(self) -> dict[int, np.ndarray]:
        """Map segment id -> indices of its points."""
        if self._segment_ids is None:
            raise ValueError("cloud has no segment ids")
        ids = np.unique(self._segment_ids)
        return {int(i): np.flatnonzero(self._segment_ids == i) for i in ids}


def downsample(cloud: PointCloud, n: int, rng_seed: int) -> PointCloud:
    """Uniform random subset of size n (no-op when the cloud is smaller)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(cloud) == 0:
        raise ValueError("cannot downsample an empty cloud")
    if len(cloud) <= n:
        return cloud
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(cloud), size=n, replace=False)
    return cloud.select(np.sort(idx))


def _directed_mean_distance(a: np.ndarray, b_tree: cKDTree) -> float:
    d, _ = b_tree.query(a, k=1)
    return float(np.mean(d))


def symmetric_distance(P: PointCloud, S: PointCloud) -> float:
    """D(P,S) + D(S,P), the two-way mean closest-point distance [m]."""
    if len(P) == 0 or len(S) == 0:
        raise ValueError("clouds must be non-empty")
    tp = cKDTree(P.points)
    ts = cKDTree(S.points)
    return _directed_mean_distance(P.points, ts) + _directed_mean_distance(S.points, tp)


def cut_sphere(cloud: PointCloud, center, radius: float) -> PointCloud:
    """Points within the closed ball of the given center and radius."""
    if radius <= 0.0:
        raise ValueError("radius must be > 0")
    center = np.asarray(center, dtype=float)
    d = np.linalg.norm(cloud.points - center, axis=1)
    return cloud.select(d <= radius)


def merge_small_segments(cloud: PointCloud,
                         threshold_fraction: float = 0.05) -> PointCloud:
    """Absorb segments smaller than the threshold into their neighbors.

    The smallest small segment is merged first (each of its points goes
    to the segment holding its nearest point outside the segment) and
    sizes are recomputed, until no segment holds fewer than
    threshold_fraction of all points. At least one segment survives.
    Point order and coordinates are preserved; only labels change.
    """
    if cloud.segment_ids is None:
        raise ValueError("cloud has no segment ids")
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold_fraction must be in (0, 1)")
    labels = cloud.segment_ids.copy()
    n = len(cloud)
    while True:
        ids, counts = np.unique(labels, return_counts=True)
        if len(ids) <= 1:
            break
        small = counts < threshold_fraction * n
        if not np.any(small):
            break
        victim = ids[small][np.argmin(counts[small])]
        inside = labels == victim
        tree = cKDTree(cloud.points[~inside])
        _, nn = tree.query(cloud.points[inside], k=1)
        labels[inside] = labels[~inside][nn]
    return cloud.with_segment_ids(labels)


def select_segmentation(options: list[PointCloud], rng_seed: int = 0) -> int:
    """Index of the segmentation whose segments fit superquadrics best.

    Every segment of every option is fitted (fitting.fit_best) and the
    option minimizing the mean per-segment symmetric distance wins;
    ties go to the lowest index.
    """
    from .fitting import fit_best

    if not options:
        raise ValueError("empty option list")
    best_idx, best_score = 0, np.inf
    for i, opt in enumerate(options):
        if opt.segment_ids is None:
            raise ValueError(f"option {i} has no segment ids")
        scores = []
        for idx in opt.segments().values():
            fit = fit_best(opt.select(idx), rng_seed)
            scores.append(fit.sym_distance)
        mean_score = float(np.mean(scores))
        if mean_score < best_score:
            best_idx, best_score = i, mean_score
    return best_idx


# ---------------------------------------------------------------------------
# ASCII PLY I/O
# ---------------------------------------------------------------------------

_FLOAT_TYPES = {"float", "float32", "float64", "double"}
_INT_TYPES = {"char", "uchar", "short", "ushort", "int", "uint",
              "int8", "uint8", "int16", "uint16", "int32", "uint32"}


def read_ply(path) -> PointCloud:
    """Read an ASCII PLY file with x,y,z and optional nx,ny,nz / segment."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyParseError("missing 'ply' magic", 1)

    n_vertex = None
    props: list[str] = []
    in_vertex_element = False
    body_start = None
    lineno = 1
    for lineno, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise PlyParseError("only ascii format is supported", lineno)
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyParseError("malformed element declaration", lineno)
            in_vertex_element = tok[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertex = int(tok[2])
                except ValueError:
                    raise PlyParseError("vertex count is not an integer", lineno)
        elif tok[0] == "property":
            if in_vertex_element:
                if len(tok) != 3:
                    raise PlyParseError("malformed property declaration", lineno)
                ptype, pname = tok[1], tok[2]
                if ptype not in _FLOAT_TYPES | _INT_TYPES:
                    raise PlyParseError(f"unsupported property type '{ptype}'", lineno)
                props.append(pname)
        elif tok[0] == "end_header":
            body_start = lineno
            break
        elif tok[0] == "ply":
            raise PlyParseError("duplicate 'ply' magic", lineno)
    else:
        raise PlyParseError("missing end_header", lineno)

    if n_vertex is None:
        raise PlyParseError("no vertex element declared", body_start)
    for need in ("x", "y", "z"):
        if need not in props:
            raise PlyParseError(f"vertex element lacks property '{need}'", body_start)

    rows = np.empty((n_vertex, len(props)))
    for i in range(n_vertex):
        ln = body_start + i
        if ln >= len(lines):
            raise PlyParseError("unexpected end of file in vertex data", ln + 1)
        fields = lines[ln].split()
        if len(fields) != len(props):
            raise PlyParseError(
                f"expected {len(props)} values, got {len(fields)}", ln + 1)
        try:
            rows[i] = [float(f) for f in fields]
        except ValueError:
            raise PlyParseError("non-numeric vertex value", ln + 1)

    col = {name: j for j, name in enumerate(props)}
    points = rows[:, [col["x"], col["y"], col["z"]]]
    normals = None
    if all(k in col for k in ("nx", "ny", "nz")):
        normals = rows[:, [col["nx"], col["ny"], col["nz"]]]
    segment_ids = None
    if "segment" in col:
        segment_ids = rows[:, col["segment"]].astype(int)
    return PointCloud(points, normals, segment_ids)


def write_ply(cloud: PointCloud, path) -> None:
    """Write the cloud as ASCII PLY with the same optional properties."""
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property double x", "property double y", "property double z"]
    cols = [cloud.points]
    if cloud.normals is not None:
        lines += ["property double nx", "property double ny", "property double nz"]
        cols.append(cloud.normals)
    if cloud.segment_ids is not None:
        lines.append("property int segment")
    lines.append("end_header")

    data = np.hstack(cols)
    seg = cloud.segment_ids
    body = []
    for i in range(len(cloud)):
        row = " ".join(repr(float(v)) for v in data[i])
        if seg is not None:
            row += f" {int(seg[i])}"
        body.append(row)
    Path(path).write_text("\n".join(lines + body) + "\n")
