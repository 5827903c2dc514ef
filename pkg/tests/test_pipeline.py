import numpy as np
import pytest

from curv4d.errors import MissingLandmark, TooFewFrames
from curv4d.formats import PipelineConfig
from curv4d.geometry import LandmarkSet, PointCloud, rotation_matrix
from curv4d.pipeline import correlation_series, preprocess, recording_features, recording_series
from curv4d.synth import SynthConfig, gen_recording, write_recording
from curv4d.temporal import sigma_features


def canonical(rng, frames=4):
    """A face-like cloud that already sits in the first frame's pose."""
    pts = rng.uniform(-0.08, 0.08, (3000, 3)) * [1, 1, 0.2]
    lm = LandmarkSet(rng.uniform(-0.06, 0.06, (68, 3)) * [1, 1, 0.3])
    return [PointCloud(pts)] * frames, [lm] * frames


def test_preprocess_canonical_is_identity(rng):
    clouds, lms = canonical(rng)
    cfg = PipelineConfig()
    nose = lms[0].nose_tip()
    for cloud, lm in preprocess(clouds, lms, cfg):
        keep = np.linalg.norm(clouds[0].points - nose, axis=1) <= cfg.sphere_radius
        np.testing.assert_allclose(cloud.points, clouds[0].points[keep], atol=1e-9)
        np.testing.assert_allclose(lm.positions, lms[0].positions, atol=1e-9)


def test_preprocess_undoes_head_turn():
    rec = gen_recording(SynthConfig(seed=9, frames=5, points_per_frame=5000), 0)
    lms = list(rec.landmarks)
    clouds = list(rec.clouds)
    rot = rotation_matrix([0, 1, 0], np.deg2rad(15))
    centre = lms[3].nose_tip()
    lms[3] = LandmarkSet((lms[3].positions - centre) @ rot.T + centre, frame_index=3)
    clouds[3] = PointCloud((clouds[3].points - centre) @ rot.T + centre, frame_index=3)
    out = list(preprocess(clouds, lms))
    rms = np.sqrt(((out[3][1].positions - out[0][1].positions) ** 2).sum(axis=1).mean())
    untouched = np.sqrt(((out[2][1].positions - out[0][1].positions) ** 2).sum(axis=1).mean())
    # the detector jitter and the expression set the noise level of the alignment
    assert rms <= 1.5 * max(untouched, 1e-4)


def test_degenerate_frame_dropped(rng, caplog):
    clouds, lms = canonical(rng, 3)
    lms = list(lms)
    lms[1] = LandmarkSet(np.zeros((68, 3)))
    out = list(preprocess(clouds, lms))
    assert len(out) == 2
    assert "dropping frame" in caplog.text


def test_single_frame_too_few(rng):
    clouds, lms = canonical(rng, 1)
    with pytest.raises(TooFewFrames):
        correlation_series(clouds, lms)


def test_disk_and_memory_agree(tmp_path):
    rec = gen_recording(SynthConfig(seed=4, frames=4, points_per_frame=6000), 1)
    write_recording(rec, tmp_path / "r")
    mem = correlation_series(rec.clouds, rec.landmarks)
    disk = recording_series(tmp_path / "r")
    np.testing.assert_array_equal(mem.values, disk.values)
    np.testing.assert_array_equal(recording_features(tmp_path / "r"), sigma_features(mem).sigma)


def test_disk_missing_frame_landmarks(tmp_path):
    rec = gen_recording(SynthConfig(seed=4, frames=3, points_per_frame=500), 1)
    write_recording(rec, tmp_path / "r")
    lm = tmp_path / "r" / "landmarks.csv"
    lm.write_text("\n".join(ln for ln in lm.read_text().splitlines() if not ln.startswith("2,")) + "\n")
    with pytest.raises(MissingLandmark, match="frame 2"):
        recording_series(tmp_path / "r")


def test_context_margin_reduces_edge_curvature():
    # neighbourhoods at the crop wall are half empty without the context ring
    rec = gen_recording(SynthConfig(seed=1, frames=2, points_per_frame=30_000, scenario="flat_photo"), 0)
    with_ring = correlation_series(rec.clouds, rec.landmarks, keep_curvatures=True)[1]
    bare = correlation_series(rec.clouds, rec.landmarks, PipelineConfig(context_margin=0.0),
                              keep_curvatures=True)[1]
    assert with_ring[0].values.max() <= 0.005
    assert with_ring[0].values[:, -4:].mean() < bare[0].values[:, -4:].mean()
