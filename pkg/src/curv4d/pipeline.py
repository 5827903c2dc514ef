"""End-to-end feature extraction: pose normalisation, stripes, correlation, sigma."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from multiprocessing import get_context
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateConfiguration, TooFewFrames
from .formats import (FeatureTable, ManifestRow, PipelineConfig, LANDMARK_FILE, frame_files,
                      read_frame, read_landmarks)
from .anomaly import train_ocsvm
from .geometry import (LandmarkSet, PointCloud, RigidTransform, apply_transform, build_index,
                       crop_sphere, procrustes_rigid)
from .stripes import frame_curvatures, reference_frame
from .temporal import CorrelationSeries, SeriesBuilder, sigma_features

log = logging.getLogger(__name__)


def preprocess(clouds: Iterable[PointCloud], landmarks: Sequence[LandmarkSet],
               config: PipelineConfig = PipelineConfig(),
               with_context: bool = False) -> Iterator[tuple]:
    """Crop each frame around its nose tip and align it rigidly to frame 0.

    Yields ``(cloud, landmarks)`` in the pose of the first frame. Frames whose
    landmarks cannot be aligned are dropped with a warning. With
    ``with_context`` a third item is yielded: the aligned points within
    ``sphere_radius + margin``, used for neighbourhoods near the crop edge.
    """
    target = landmarks[0]
    for cloud, lm in zip(clouds, landmarks):
        nose = lm.nose_tip(config.nose_index)
        try:
            transform = procrustes_rigid(lm, target)
        except DegenerateConfiguration as exc:
            log.warning("dropping frame %d: %s", cloud.frame_index, exc)
            continue
        aligned_lm = LandmarkSet(transform.apply(lm.positions), frame_index=lm.frame_index)
        if not with_context:
            yield apply_transform(crop_sphere(cloud, nose, config.sphere_radius), transform), aligned_lm
            continue
        context = crop_sphere(cloud, nose, config.sphere_radius + config.margin)
        cropped = crop_sphere(context, nose, config.sphere_radius)
        yield (apply_transform(cropped, transform), aligned_lm,
               apply_transform(context, transform))


def correlation_series(clouds: Iterable[PointCloud], landmarks: Sequence[LandmarkSet],
                       config: PipelineConfig = PipelineConfig(),
                       keep_curvatures: bool = False):
    """Correlation series of one recording; optionally the per-frame curvatures too."""
    builder = SeriesBuilder(config.lag)
    kept = []
    n_frames = 0
    for cloud, lm, context in preprocess(clouds, landmarks, config, with_context=True):
        frame = reference_frame(lm, config.nose_index)
        index = build_index(context, config.stripes.neighborhood_radius) if len(cloud) else None
        curv = frame_curvatures(cloud, frame, config.stripes, index)
        builder.push(curv.values)
        if keep_curvatures:
            kept.append(curv)
        n_frames += 1
    if n_frames < 2:
        raise TooFewFrames(f"only {n_frames} usable frame(s)")
    series = builder.result()
    return (series, kept) if keep_curvatures else series


def _disk_frames(directory: Path, scale: float) -> Iterator[PointCloud]:
    for i, p in enumerate(frame_files(directory)):
        yield read_frame(p, frame_index=i, scale=scale)


def load_recording_landmarks(directory: Path, config: PipelineConfig) -> List[LandmarkSet]:
    lms = read_landmarks(Path(directory) / LANDMARK_FILE, scale=config.unit_scale)
    n_files = len(frame_files(directory))
    missing = [f for f in range(n_files) if f not in lms]
    if missing:
        from .errors import MissingLandmark
        raise MissingLandmark(f"{directory}: no landmarks for frame {missing[0]}")
    return [lms[f] for f in range(n_files)]


def recording_series(directory, config: PipelineConfig = PipelineConfig()) -> CorrelationSeries:
    directory = Path(directory)
    lms = load_recording_landmarks(directory, config)
    return correlation_series(_disk_frames(directory, config.unit_scale), lms, config)


def recording_features(directory, config: PipelineConfig = PipelineConfig()) -> np.ndarray:
    return sigma_features(recording_series(directory, config)).sigma


def _features_job(args):
    directory, config = args
    return recording_features(directory, config)


def manifest_features(rows: Sequence[ManifestRow], config: PipelineConfig = PipelineConfig(),
                      jobs: int = 1) -> FeatureTable:
    """sigma features for every manifest row, in manifest order."""
    tasks = [(r.path, config) for r in rows]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
            sig = list(pool.map(_features_job, tasks))
    else:
        sig = [_features_job(t) for t in tasks]
    n = config.stripes.n_stripes
    return FeatureTable([r.recording_id for r in rows], [r.subject_id for r in rows],
                        [r.label for r in rows], np.array(sig).reshape(len(rows), n))


def trainer(config: PipelineConfig = PipelineConfig()):
    """Training callable for the configured one-class model (picklable)."""
    return partial(train_ocsvm, nu=config.nu, kernel=config.kernel,
                   center=config.feature_scaling == "zscore")
