"""Point-cloud kernels: cropping, rigid alignment, radius search and curvature.

Points are ``(n, 3)`` float64 arrays in meters. A single point is any
length-3 array-like.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    DegenerateConfiguration,
    EmptyCloud,
    NonMonotonicPositions,
    TooFewPoints,
)

N_LANDMARKS = 68
NOSE_TIP = 30  # 0-based index in the iBUG 68-point layout
K_MIN = 8
_MAX_CELLS = 1 << 22


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3))
    arr = arr.reshape(-1, 3)
    if not np.isfinite(arr).all():
        raise ValueError("point coordinates must be finite")
    return arr


def _as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.isfinite(arr).all():
        raise ValueError(f"point must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    frame_index: int = 0
    timestamp: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")

    def __len__(self):
        return len(self.points)

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.frame_index, self.timestamp)


@dataclass(frozen=True)
class LandmarkSet:
    positions: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        pos = _as_points(self.positions)
        if len(pos) != N_LANDMARKS:
            raise ValueError(f"expected {N_LANDMARKS} landmarks, got {len(pos)}")
        object.__setattr__(self, "positions", pos)

    def nose_tip(self, index: int = NOSE_TIP) -> np.ndarray:
        return self.positions[index]


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), rtol=0, atol=1e-9) or abs(np.linalg.det(r) - 1) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def apply(self, points) -> np.ndarray:
        pts = _as_points(points)
        return pts @ self.rotation.T + self.translation


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Right-handed rotation by ``angle`` radians about ``axis`` (Rodrigues)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx = np.array([[0, -axis[2], axis[1]],
                   [axis[2], 0, -axis[0]],
                   [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def crop_sphere(cloud: PointCloud, center, radius: float) -> PointCloud:
    """Keep points with ``|p - center| <= radius``, preserving order."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = np.asarray(center, dtype=np.float64).reshape(3)
    if np.isnan(c).any():
        raise ValueError("center contains NaN")
    d = cloud.points - c
    d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    return cloud.with_points(cloud.points[d2 <= radius * radius])


def procrustes_rigid(source, target) -> RigidTransform:
    """Least-squares rotation and translation mapping ``source`` onto ``target``.

    No scaling; reflections are removed by the determinant sign correction
    (Kabsch). Coplanar configurations are accepted because the proper
    rotation is still unique; collinear or coincident ones are not.
    """
    s = source.positions if isinstance(source, LandmarkSet) else _as_points(source)
    t = target.positions if isinstance(target, LandmarkSet) else _as_points(target)
    if s.shape != t.shape:
        raise ValueError("source and target must have the same shape")
    s_mean = s.mean(axis=0)
    t_mean = t.mean(axis=0)
    sc = s - s_mean
    tc = t - t_mean
    sv = np.linalg.svd(sc, compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateConfiguration(
            f"landmark configuration has rank < 2 (singular values {sv})")
    h = sc.T @ tc
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    # re-orthonormalise away rounding so the RigidTransform checks pass
    uu, _, vv = np.linalg.svd(rot)
    rot = uu @ vv
    return RigidTransform(rot, t_mean - rot @ s_mean)


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    return cloud.with_points(transform.apply(cloud.points))


class SpatialIndex:
    """Uniform-grid index for fixed-radius queries over an immutable cloud."""

    def __init__(self, points, cell: float = 0.006):
        pts = np.ascontiguousarray(_as_points(points))
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        if not cell > 0:
            raise ValueError("cell size must be positive")
        lo = pts.min(axis=0)
        span = pts.max(axis=0) - lo
        while True:
            dims = (np.floor(span / cell) + 1).astype(np.int64)
            if np.prod(dims.astype(np.float64)) <= _MAX_CELLS:
                break
            cell *= 1.5
        self.points = pts
        self.points.flags.writeable = False
        self.lo = lo
        self.cell = float(cell)
        self.dims = dims
        self.order, self.starts = _kernels.grid_build(pts, lo, self.cell, dims)
        self._sorted = np.ascontiguousarray(pts[self.order])

    def __len__(self):
        return len(self.points)

    def query_radius(self, query, radius: float) -> np.ndarray:
        """Sorted indices of points within ``radius`` (inclusive) of ``query``."""
        q = _as_point(query)
        idx = _kernels.grid_count(self._sorted, self.lo, self.cell, self.dims,
                                  self.order, self.starts, q, float(radius))
        return np.sort(idx)

    def moments(self, queries, radius: float):
        """Neighbour counts and neighbourhood covariances for many queries."""
        q = np.ascontiguousarray(_as_points(queries))
        return _kernels.grid_moments(self._sorted, self.lo, self.cell, self.dims,
                                     self.starts, q, float(radius))


def build_index(cloud, cell: float = 0.006) -> SpatialIndex:
    pts = cloud.points if isinstance(cloud, PointCloud) else cloud
    return SpatialIndex(pts, cell)


def _sorted_eigvals(cov: np.ndarray) -> np.ndarray:
    lam = np.linalg.eigvalsh(cov)
    return np.maximum(lam, 0.0)


@dataclass(frozen=True)
class EigenTriple:
    l0: float
    l1: float
    l2: float

    @property
    def surface_variation(self) -> Optional[float]:
        total = self.l0 + self.l1 + self.l2
        if total <= 0:
            return None
        return abs(self.l0 / total)


def pca_eigenvalues(points: Sequence) -> EigenTriple:
    """Ascending eigenvalues of the population covariance of ``points``."""
    pts = _as_points(points)
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")
    c = pts - pts.mean(axis=0)
    cov = np.einsum("ni,nj->ij", c, c, optimize=False) / len(pts)
    lam = _sorted_eigvals(cov)
    return EigenTriple(float(lam[0]), float(lam[1]), float(lam[2]))


def surface_variations(index: SpatialIndex, queries, radius: float = 0.006,
                       k_min: int = K_MIN) -> np.ndarray:
    """Surface variation at each query; NaN where fewer than ``k_min`` neighbours."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    counts, cov = index.moments(queries, radius)
    out = np.full(len(counts), np.nan)
    ok = counts >= max(k_min, 1)
    if ok.any():
        lam = _sorted_eigvals(cov[ok])
        total = lam.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            kv = np.abs(lam[:, 0] / total)
        kv[total <= 0] = np.nan
        out[ok] = kv
    return out


def surface_variation(index: SpatialIndex, query, radius: float = 0.006,
                      k_min: int = K_MIN) -> Optional[float]:
    """Surface variation ``|l0 / (l0 + l1 + l2)|`` of the ball around ``query``.

    Returns None (missing) when the ball holds fewer than ``k_min`` points.
    """
    value = surface_variations(index, np.reshape(_as_point(query), (1, 3)), radius, k_min)[0]
    return None if np.isnan(value) else float(value)


def curvature_1d(samples) -> np.ndarray:
    """Planar-curve curvature ``y'' / (1 + y'^2)^1.5`` by finite differences.

    ``samples`` are ``(position, height)`` pairs with strictly increasing
    positions. Interior points use the three-point central stencil for
    nonuniform spacing; the endpoints use one-sided second-order stencils.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise TooFewPoints("need at least 3 (position, height) samples")
    s, y = arr[:, 0], arr[:, 1]
    h = np.diff(s)
    if not (h > 0).all():
        raise NonMonotonicPositions("positions must be strictly increasing")
    n = len(s)
    d1 = np.empty(n)
    d2 = np.empty(n)
    hl, hr = h[:-1], h[1:]
    yl, yc, yr = y[:-2], y[1:-1], y[2:]
    d1[1:-1] = (hl**2 * yr - hr**2 * yl + (hr**2 - hl**2) * yc) / (hl * hr * (hl + hr))
    d2[1:-1] = 2 * (hl * yr - (hl + hr) * yc + hr * yl) / (hl * hr * (hl + hr))
    for end, (i0, i1, i2) in ((0, (0, 1, 2)), (n - 1, (n - 1, n - 2, n - 3))):
        # derivatives of the quadratic through three end samples, at the end
        xs = s[[i0, i1, i2]] - s[i0]
        coef = np.polyfit(xs, y[[i0, i1, i2]], 2)
        d1[end] = coef[1]
        d2[end] = 2 * coef[0]
    return d2 / (1 + d1**2) ** 1.5
