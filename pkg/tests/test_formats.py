import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from curv4d.errors import ConfigError, IOFailure, MissingLandmark, ParseError
from curv4d.formats import (FeatureTable, ManifestRow, PipelineConfig, config_to_text, frame_files,
                            frame_name, load_config, parse_config, read_features, read_frame,
                            read_landmarks, read_manifest, read_ply_points, write_features,
                            write_landmarks, write_manifest, write_ply)
from curv4d.geometry import LandmarkSet
from curv4d.synth import SynthConfig, gen_recording, write_recording


# ---- PLY --------------------------------------------------------------------------------------

def test_ascii_ply_three_vertices(tmp_path):
    p = tmp_path / "f.ply"
    p.write_text("ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\n"
                 "property float x\nproperty float y\nproperty float z\nend_header\n"
                 "0.1 0.2 0.3\n-1e-3 4 5.25\n0 0 0.6\n")
    np.testing.assert_array_equal(read_ply_points(p), [[0.1, 0.2, 0.3], [-1e-3, 4, 5.25], [0, 0, 0.6]])


def test_binary_ply_with_extra_properties(tmp_path):
    p = tmp_path / "f.ply"
    header = (b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double z\n"
              b"property uchar red\nproperty double x\nproperty double y\n"
              b"element face 0\nproperty list uchar int vertex_indices\nend_header\n")
    body = struct.pack("<dBdd", 3.0, 7, 1.0, 2.0) + struct.pack("<dBdd", 6.0, 9, 4.0, 5.0)
    p.write_bytes(header + body)
    np.testing.assert_array_equal(read_ply_points(p), [[1, 2, 3], [4, 5, 6]])


@pytest.mark.parametrize("binary", [True, False])
@pytest.mark.parametrize("dtype", ["float", "double"])
def test_ply_roundtrip(tmp_path, rng, binary, dtype):
    pts = rng.normal(size=(200, 3))
    if dtype == "float":
        pts = pts.astype(np.float32).astype(np.float64)
    write_ply(tmp_path / "a.ply", pts, binary=binary, dtype=dtype)
    assert np.array_equal(read_ply_points(tmp_path / "a.ply"), pts)


@given(hnp.arrays(np.float64, st.tuples(st.integers(0, 20), st.just(3)),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_ascii_double_roundtrip_exact(tmp_path_factory, pts):
    p = tmp_path_factory.mktemp("ply") / "a.ply"
    write_ply(p, pts, binary=False, dtype="double")
    assert np.array_equal(read_ply_points(p), pts.reshape(-1, 3))


def test_ply_errors(tmp_path):
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"hello")
    with pytest.raises(ParseError):
        read_ply_points(bad)
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                   "property float z\nend_header\n1 2 3\n1 2\n")
    with pytest.raises(ParseError, match="line 9"):
        read_ply_points(bad)
    bad.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 5\nproperty float x\n"
                    b"property float y\nproperty float z\nend_header\n" + b"\0" * 12)
    with pytest.raises(ParseError, match="byte offset"):
        read_ply_points(bad)
    bad.write_text("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(ParseError):
        read_ply_points(bad)
    with pytest.raises(IOFailure):
        read_ply_points(tmp_path / "missing.ply")


def test_frame_ordering(tmp_path):
    for i in (10, 2, 1):
        write_ply(tmp_path / frame_name(i), np.zeros((1, 3)))
    (tmp_path / "frame_x.ply").write_text("")
    assert [p.name for p in frame_files(tmp_path)] == [frame_name(i) for i in (1, 2, 10)]


def test_recording_roundtrip(tmp_path):
    rec = gen_recording(SynthConfig(seed=2, frames=3, points_per_frame=2000), 0)
    write_recording(rec, tmp_path)
    files = frame_files(tmp_path)
    assert len(files) == 3
    for f, cloud in zip(files, rec.clouds):
        assert np.array_equal(read_frame(f).points, cloud.points)
    lms = read_landmarks(tmp_path / "landmarks.csv")
    for i, lm in enumerate(rec.landmarks):
        assert np.array_equal(lms[i].positions, lm.positions)


def test_read_frame_mm(tmp_path):
    write_ply(tmp_path / "a.ply", [[1000.0, 0, 500.0]], dtype="double")
    np.testing.assert_allclose(read_frame(tmp_path / "a.ply", scale=0.001).points, [[1.0, 0, 0.5]])


# ---- landmarks ---------------------------------------------------------------------------------

def _lm_sets(n=6):
    rng = np.random.default_rng(0)
    return [LandmarkSet(rng.normal(size=(68, 3)), frame_index=f) for f in range(n)]


def test_missing_landmark_named(tmp_path):
    p = tmp_path / "landmarks.csv"
    write_landmarks(p, _lm_sets())
    lines = p.read_text().splitlines()
    lines = [ln for ln in lines if not ln.startswith("5,30,")]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MissingLandmark, match="frame 5 lacks landmark index 30"):
        read_landmarks(p)


def test_landmark_parse_errors(tmp_path):
    p = tmp_path / "landmarks.csv"
    p.write_text("frame,idx,x,y,z\n")
    with pytest.raises(ParseError):
        read_landmarks(p)
    p.write_text("frame,index,x,y,z\n0,0,1,2\n")
    with pytest.raises(ParseError, match="line 2"):
        read_landmarks(p)
    p.write_text("frame,index,x,y,z\n0,68,1,2,3\n")
    with pytest.raises(ParseError):
        read_landmarks(p)


# ---- manifest / features ------------------------------------------------------------------------

def test_manifest_roundtrip_relative(tmp_path):
    rows = [ManifestRow("s00", "r1", "bonafide", "", tmp_path / "r1"),
            ManifestRow("s00", "r2", "attack", "monitor", tmp_path / "r2")]
    write_manifest(tmp_path / "m.csv", rows, relative_to=tmp_path)
    assert "r2,attack,monitor,r2" in (tmp_path / "m.csv").read_text()
    assert read_manifest(tmp_path / "m.csv") == rows


@pytest.mark.parametrize("body,msg", [
    ("s,r,bonafide,,p\ns,r,bonafide,,p\n", "duplicate"),
    ("s,r,genuine,,p\n", "label"),
    ("s,r,attack,,p\n", "attack_type"),
])
def test_manifest_validation(tmp_path, body, msg):
    p = tmp_path / "m.csv"
    p.write_text("subject_id,recording_id,label,attack_type,path\n" + body)
    with pytest.raises(ParseError, match=msg):
        read_manifest(p)


def test_features_roundtrip(tmp_path, rng):
    t = FeatureTable(["a", "b"], ["s1", "s2"], ["bonafide", "attack"], rng.uniform(size=(2, 128)) * 1e-5)
    write_features(tmp_path / "f.csv", t)
    back = read_features(tmp_path / "f.csv")
    assert back.recording_ids == t.recording_ids and back.labels == t.labels
    assert np.array_equal(back.sigma, t.sigma)
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 3 + 128


def test_features_bad_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("recording_id,subject_id,label,sigma_0\na,s,bonafide,0.1,0.2\n")
    with pytest.raises(ParseError, match="line 2"):
        read_features(p)


# ---- config ----------------------------------------------------------------------------------------

def test_config_defaults_roundtrip():
    cfg = PipelineConfig()
    assert parse_config(config_to_text(cfg)) == cfg
    assert cfg.stripes.n_stripes == 128 and cfg.sphere_radius == 0.1 and cfg.nu == 0.05
    assert cfg.stripes.neighborhood_radius == 0.006 and cfg.lag == 8


def test_config_overrides(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\nn_stripes = 24\nnu=0.1  # trailing\ninput_unit = mm\nmax_lag = 3\n"
                 "kernel_gamma = 0.5\nfeature_scaling = zscore\n")
    cfg = load_config(p)
    assert (cfg.stripes.n_stripes, cfg.nu, cfg.unit_scale, cfg.lag, cfg.kernel.gamma) == (24, 0.1, 0.001, 3, 0.5)
    assert cfg.feature_scaling == "zscore"
    assert parse_config(config_to_text(cfg)) == cfg


@pytest.mark.parametrize("text", ["bogus = 1\n", "nu = 2\n", "nu 0.1\n", "n_stripes = 2\n", "nu = x\n",
                                  "nu = 0.1\nnu = 0.2\n", "input_unit = cm\n", "max_lag = 64\n"])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(IOFailure):
        load_config(tmp_path / "nope.txt")
