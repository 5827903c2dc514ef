"""Radial stripes around the nose tip and their curvature profiles.

Stripe ``k`` is the half-plane slab ``|p.n1_k| <= delta, p.n2_k > 0`` where
``(n1_k, n2_k)`` is the face x/y pair turned by ``k * 360/N`` degrees about
the face z axis (clockwise when looking along +z). Stripe 0 points towards
the forehead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import _kernels
from .errors import IndexOutOfRange
from .geometry import (K_MIN, NOSE_TIP, LandmarkSet, PointCloud, SpatialIndex,
                       build_index, surface_variations)


@dataclass(frozen=True)
class ReferenceFrame:
    origin: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray

    def __post_init__(self):
        for name in ("origin", "n1", "n2", "n3"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(3))
        axes = np.stack([self.n1, self.n2, self.n3])
        if not np.allclose(axes @ axes.T, np.eye(3), rtol=0, atol=1e-9):
            raise ValueError("frame axes must be orthonormal")
        if not np.allclose(np.cross(self.n1, self.n2), self.n3, rtol=0, atol=1e-9):
            raise ValueError("frame must be right-handed")


@dataclass(frozen=True)
class StripeConfig:
    n_stripes: int = 128
    n_samples: int = 64
    delta: float = 0.0025
    neighborhood_radius: float = 0.006
    radial_extent: float = 0.1
    k_min: int = K_MIN

    def __post_init__(self):
        if self.n_stripes < 4:
            raise ValueError("n_stripes must be >= 4")
        if self.n_samples < 8:
            raise ValueError("n_samples must be >= 8")
        for name in ("delta", "neighborhood_radius", "radial_extent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_min < 3:
            raise ValueError("k_min must be >= 3")

    @property
    def slot_width(self) -> float:
        return self.radial_extent / self.n_samples

    def radial_positions(self) -> np.ndarray:
        return np.arange(1, self.n_samples + 1) * self.slot_width


@dataclass(frozen=True)
class StripeSamples:
    stripe_index: int
    radial_positions: np.ndarray
    sample_points: np.ndarray  # (M, 3), NaN rows for missing slots

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.sample_points[:, 0])


@dataclass(frozen=True)
class StripeCurvatures:
    stripe_index: int
    values: np.ndarray
    missing_stripe: bool = False


def reference_frame(landmarks: LandmarkSet, nose_index: int = NOSE_TIP) -> ReferenceFrame:
    """Nose-tip origin with the world axes of the pose-normalised scan."""
    return ReferenceFrame(landmarks.nose_tip(nose_index).copy(),
                          np.array([1.0, 0.0, 0.0]),
                          np.array([0.0, 1.0, 0.0]),
                          np.array([0.0, 0.0, 1.0]))


def all_stripe_axes(frame: ReferenceFrame, n: int):
    """``(n, 3)`` arrays of the rotated x and y axes for every stripe."""
    ang = 2 * np.pi * np.arange(n) / n
    c = np.cos(ang)[:, None]
    s = np.sin(ang)[:, None]
    n1k = c * frame.n1 + s * frame.n2
    n2k = -s * frame.n1 + c * frame.n2
    # exact values for k = 0 so that stripe 0 uses the frame axes themselves
    n1k[0] = frame.n1
    n2k[0] = frame.n2
    return np.ascontiguousarray(n1k), np.ascontiguousarray(n2k)


def stripe_axes(frame: ReferenceFrame, k: int, n: int):
    if not 0 <= k < n:
        raise IndexOutOfRange(f"stripe index {k} outside [0, {n})")
    n1k, n2k = all_stripe_axes(frame, n)
    return n1k[k], n2k[k]


def _projections(points: np.ndarray, origin: np.ndarray, axis: np.ndarray) -> np.ndarray:
    d = points - origin
    return d[:, 0] * axis[0] + d[:, 1] * axis[1] + d[:, 2] * axis[2]


def extract_stripe(cloud: PointCloud, frame: ReferenceFrame, k: int,
                   config: StripeConfig) -> np.ndarray:
    """Points of ``cloud`` belonging to stripe ``k``, in cloud order."""
    n1k, n2k = stripe_axes(frame, k, config.n_stripes)
    pts = cloud.points
    a = _projections(pts, frame.origin, n1k)
    b = _projections(pts, frame.origin, n2k)
    return pts[(np.abs(a) <= config.delta) & (b > 0)]


def subsample_stripe(stripe_points, frame: ReferenceFrame, k: int,
                     config: StripeConfig) -> StripeSamples:
    """Snap stripe points to ``M`` equidistant radial slots.

    Each slot takes the point whose radial projection is nearest to the slot
    position, provided it lies within half a slot width; ties go to the
    earlier point.
    """
    _, n2k = stripe_axes(frame, k, config.n_stripes)
    pos = config.radial_positions()
    width = config.slot_width
    out = np.full((config.n_samples, 3), np.nan)
    pts = np.asarray(stripe_points, dtype=np.float64).reshape(-1, 3)
    if len(pts):
        b = _projections(pts, frame.origin, n2k)
        slot = np.floor(b / width + 0.5).astype(np.int64) - 1
        ok = (slot >= 0) & (slot < config.n_samples)
        dist = np.full(len(b), np.inf)
        dist[ok] = np.abs(b[ok] - (slot[ok] + 1) * width)
        ok &= dist <= 0.5 * width
        for j in np.unique(slot[ok]):
            cand = np.flatnonzero(ok & (slot == j))
            out[j] = pts[cand[np.argmin(dist[cand])]]
    return StripeSamples(k, pos, out)


def fill_missing(values: np.ndarray):
    """Linear interpolation over NaN slots, nearest value at the ends.

    Returns ``(filled, all_missing)``; an all-NaN row becomes zeros.
    """
    v = np.asarray(values, dtype=np.float64)
    ok = ~np.isnan(v)
    if not ok.any():
        return np.zeros_like(v), True
    if ok.all():
        return v.copy(), False
    idx = np.arange(len(v))
    return np.interp(idx, idx[ok], v[ok]), False


def stripe_curvatures(samples: StripeSamples, index: SpatialIndex,
                      config: StripeConfig) -> StripeCurvatures:
    values = np.full(config.n_samples, np.nan)
    have = ~samples.missing
    if have.any():
        values[have] = surface_variations(index, samples.sample_points[have],
                                          config.neighborhood_radius, config.k_min)
    filled, empty = fill_missing(values)
    return StripeCurvatures(samples.stripe_index, filled, empty)


@dataclass(frozen=True)
class FrameCurvatures:
    """All stripe curvature profiles of one frame as an ``(N, M)`` array."""

    values: np.ndarray
    missing_stripes: np.ndarray
    raw: Optional[np.ndarray] = None  # before gap filling, NaN = missing

    def stripes(self) -> List[StripeCurvatures]:
        return [StripeCurvatures(k, self.values[k], bool(self.missing_stripes[k]))
                for k in range(len(self.values))]


def sample_slots(points: np.ndarray, frame: ReferenceFrame, config: StripeConfig) -> np.ndarray:
    """``(N, M)`` indices into ``points`` of every stripe slot; -1 = missing."""
    n1k, n2k = all_stripe_axes(frame, config.n_stripes)
    return _kernels.stripe_slots(np.ascontiguousarray(points, dtype=np.float64),
                                 frame.origin, frame.n1, frame.n2, n1k, n2k,
                                 float(config.delta), float(config.radial_extent),
                                 int(config.n_samples))


def frame_curvatures(cloud: PointCloud, frame: ReferenceFrame, config: StripeConfig,
                     index: Optional[SpatialIndex] = None) -> FrameCurvatures:
    """Stripe extraction, snapping and curvature for every stripe of a frame.

    Same result as calling extract_stripe, subsample_stripe and
    stripe_curvatures per stripe, in one pass over the cloud.
    """
    pts = cloud.points
    n, m = config.n_stripes, config.n_samples
    raw = np.full((n, m), np.nan)
    if len(pts) == 0:
        return FrameCurvatures(np.zeros((n, m)), np.ones(n, bool), raw)
    if index is None:
        index = build_index(pts, config.neighborhood_radius)
    slots = sample_slots(pts, frame, config)
    have = slots >= 0
    if have.any():
        # stripes share points near the origin; evaluate each point once
        uniq, inverse = np.unique(slots[have], return_inverse=True)
        kv = surface_variations(index, pts[uniq], config.neighborhood_radius, config.k_min)
        raw[have] = kv[inverse]
    values = np.empty_like(raw)
    empty = np.zeros(n, bool)
    for k in range(n):
        values[k], empty[k] = fill_missing(raw[k])
    return FrameCurvatures(values, empty, raw)
