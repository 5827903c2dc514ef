"""Seeded synthetic 4D face scans with ground-truth labels.

The head is the front cap of an ellipsoid with a nose ridge, eye sockets,
lips and chin, written as a depth map ``z(x, y)`` in a head frame whose
origin is the nose tip and whose +z axis points away from the sensor.
Expressions are Gaussian depth displacements driven by speech-like and
blink signals. Each frame samples the surface on a pixel grid with a
random sub-pixel offset, applies the head pose and adds sensor noise.

Every random draw comes from a generator keyed on
``(seed, subject, recording, frame)`` so recordings are reproducible and
can be generated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import LandmarkSet, PointCloud, rotation_matrix

SCENARIOS = ("genuine", "flat_photo", "monitor", "rigid_mask", "elastic_mask",
             "partial_chin_mask", "no_blink_genuine")
BONA_FIDE_SCENARIOS = ("genuine", "no_blink_genuine")
FRAME_RATE = 30.0
SENSOR_DISTANCE = 0.6
BACKGROUND_DEPTH = 0.5
BACKGROUND_FRACTION = 0.05
EYE_NOISE_FACTOR = 3.0
LANDMARK_JITTER = 0.0003  # detector noise, in the image plane

# iBUG-68 template (x, y) in meters, nose tip at the origin, +y towards the forehead
_JAW = [(-0.066 * np.cos(t), 0.012 - 0.088 * np.sin(t)) for t in np.linspace(0, np.pi, 17)]
_BROW_R = [(-0.052, 0.046), (-0.044, 0.052), (-0.034, 0.055), (-0.024, 0.054), (-0.014, 0.050)]
_BROW_L = [(-x, y) for x, y in reversed(_BROW_R)]
_NOSE_BRIDGE = [(0.0, 0.040), (0.0, 0.027), (0.0, 0.013), (0.0, 0.0)]
_NOSTRILS = [(-0.014, -0.013), (-0.007, -0.015), (0.0, -0.016), (0.007, -0.015), (0.014, -0.013)]
_EYE_R = [(-0.045, 0.033), (-0.037, 0.037), (-0.027, 0.037), (-0.019, 0.033), (-0.027, 0.029), (-0.037, 0.029)]
_EYE_L = [(0.019, 0.033), (0.027, 0.037), (0.037, 0.037), (0.045, 0.033), (0.037, 0.029), (0.027, 0.029)]
_MOUTH_OUT = [(-0.025, -0.045), (-0.016, -0.038), (-0.007, -0.035), (0.0, -0.036), (0.007, -0.035),
              (0.016, -0.038), (0.025, -0.045), (0.016, -0.052), (0.007, -0.055), (0.0, -0.056),
              (-0.007, -0.055), (-0.016, -0.052)]
_MOUTH_IN = [(-0.019, -0.045), (-0.007, -0.042), (0.0, -0.042), (0.007, -0.042), (0.019, -0.045),
             (0.007, -0.048), (0.0, -0.048), (-0.007, -0.048)]
LANDMARK_TEMPLATE = np.array(_JAW + _BROW_R + _BROW_L + _NOSE_BRIDGE + _NOSTRILS + _EYE_R + _EYE_L
                             + _MOUTH_OUT + _MOUTH_IN)
assert LANDMARK_TEMPLATE.shape == (68, 2)

# expression components: (name, x, y, sx, sy, gain, driver); positive depth = into the face
_COMPONENTS = (
    # name, centre x, centre y, sigma x, sigma y, gain, driver
    ("mouth_open", 0.0, -0.045, 0.016, 0.0025, 1.5, "mouth"),
    ("lip_corner_r", -0.026, -0.044, 0.004, 0.004, -1.2, "smile"),
    ("lip_corner_l", 0.026, -0.044, 0.004, 0.004, -1.2, "smile"),
    ("mentolabial", 0.0, -0.063, 0.014, 0.0025, 3.0, "jaw"),
    ("chin", 0.0, -0.080, 0.020, 0.008, 1.5, "jaw"),
    ("jaw_r", -0.050, -0.062, 0.0025, 0.009, 3.0, "jaw"),
    ("jaw_l", 0.050, -0.062, 0.0025, 0.009, 3.0, "jaw"),
    ("nasolabial_r", -0.030, -0.025, 0.0025, 0.009, 1.5, "smile"),
    ("nasolabial_l", 0.030, -0.025, 0.0025, 0.009, 1.5, "smile"),
    ("cheek_r", -0.048, 0.004, 0.007, 0.004, -1.5, "smile"),
    ("cheek_l", 0.048, 0.004, 0.007, 0.004, -1.5, "smile"),
    ("crow_r", -0.056, 0.028, 0.0025, 0.006, 1.5, "smile"),
    ("crow_l", 0.056, 0.028, 0.0025, 0.006, 1.5, "smile"),
    ("glabella", 0.0, 0.046, 0.0025, 0.006, 1.5, "brow"),
    ("forehead", 0.0, 0.072, 0.025, 0.0025, 1.5, "brow"),
    ("brow_r", -0.033, 0.052, 0.012, 0.0025, -1.5, "brow"),
    ("brow_l", 0.033, 0.052, 0.012, 0.0025, -1.5, "brow"),
    ("lid_r", -0.032, 0.033, 0.009, 0.003, -1.5, "blink"),
    ("lid_l", 0.032, 0.033, 0.009, 0.003, -1.5, "blink"),
)
_MOUTH_COMPONENTS = ("mouth_open", "lip_corner_r", "lip_corner_l")
CHIN_FREEZE_Y = (-0.054, -0.048)  # smooth step: frozen below the first, free above the second


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frames: int = 120
    points_per_frame: int = 50_000  # nominal: the jittered grid lands within about 2%
    noise_sigma: float = 0.0002
    deformation_amplitude: float = 0.004
    scenario: str = "genuine"
    bent_photo: bool = False  # curl flat_photo sheets into a gentle cylinder

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("frames must be >= 2")
        if self.deformation_amplitude < 0:
            raise ValueError("deformation_amplitude must be nonnegative")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.points_per_frame < 100:
            raise ValueError("points_per_frame must be >= 100")


@dataclass
class SynthRecording:
    clouds: List[PointCloud]
    landmarks: List[LandmarkSet]
    label: str
    attack_type: str
    subject_id: str
    recording_id: str
    scenario: str
    deformation_energy: float
    head_poses: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


@dataclass(frozen=True)
class FaceShape:
    """Subject-specific geometry and motion style."""

    scale: float
    a: float
    b: float
    c: float
    y0: float
    nose_height: float
    nose_sx: float
    nose_sy: float
    socket_depth: float
    lip_height: float
    chin_height: float
    expressiveness: float
    mouth_freqs: Tuple[float, ...]
    mouth_phases: Tuple[float, ...]
    smile_freq: float
    brow_freq: float
    blink_period: float


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key]))


def subject_shape(seed: int, subject: int) -> FaceShape:
    r = _rng(seed, subject, 0xFACE)
    s = r.uniform(0.93, 1.07)
    return FaceShape(
        scale=s,
        a=0.088 * s * r.uniform(0.96, 1.04),
        b=0.118 * s * r.uniform(0.96, 1.04),
        c=0.070 * s * r.uniform(0.95, 1.05),
        y0=0.012 * s,
        nose_height=0.021 * r.uniform(0.85, 1.15),
        nose_sx=0.0085 * s,
        nose_sy=0.017 * s,
        socket_depth=0.007 * r.uniform(0.8, 1.2),
        lip_height=0.003 * r.uniform(0.8, 1.2),
        chin_height=0.004 * r.uniform(0.8, 1.2),
        expressiveness=r.uniform(0.9, 1.1),
        mouth_freqs=tuple(r.uniform(1.5, 4.5, 3)),
        mouth_phases=tuple(r.uniform(0, 2 * np.pi, 3)),
        smile_freq=r.uniform(0.3, 0.8),
        brow_freq=r.uniform(0.4, 1.2),
        blink_period=r.uniform(1.0, 1.8),
    )


def _gauss(x, y, cx, cy, sx, sy):
    return np.exp(-0.5 * (((x - cx) / sx) ** 2 + ((y - cy) / sy) ** 2))


def neutral_depth(shape: FaceShape, x, y):
    """Depth of the neutral face (head frame, before the nose-tip shift)."""
    s = shape.scale
    u = 1 - (x / shape.a) ** 2 - ((y - shape.y0) / shape.b) ** 2
    z = -shape.c * np.sqrt(np.clip(u, 0.0, None))
    z = z - shape.nose_height * _gauss(x, y, 0.0, 0.006 * s, shape.nose_sx, shape.nose_sy)
    z = z + shape.socket_depth * (_gauss(x, y, -0.032 * s, 0.033 * s, 0.012 * s, 0.008 * s)
                                  + _gauss(x, y, 0.032 * s, 0.033 * s, 0.012 * s, 0.008 * s))
    z = z - shape.lip_height * _gauss(x, y, 0.0, -0.045 * s, 0.020 * s, 0.007 * s)
    z = z - shape.chin_height * _gauss(x, y, 0.0, -0.080 * s, 0.018 * s, 0.010 * s)
    return z


def drivers(shape: FaceShape, t: float, blink: bool = True) -> Dict[str, float]:
    """Expression activations in [0, 1] at time ``t`` seconds."""
    m = sum(np.sin(2 * np.pi * f * t + p) for f, p in zip(shape.mouth_freqs, shape.mouth_phases))
    mouth = float(np.clip(0.5 + m / 3.0, 0.0, 1.0))
    out = {
        "mouth": mouth,
        "jaw": mouth,
        "smile": float(0.5 + 0.5 * np.sin(2 * np.pi * shape.smile_freq * t)),
        "brow": float(0.5 + 0.5 * np.sin(2 * np.pi * shape.brow_freq * t + 1.0)),
        "blink": 0.0,
    }
    if blink:
        phase = (t % shape.blink_period) / shape.blink_period
        width = 0.16 / shape.blink_period  # ~160 ms closure
        out["blink"] = float(np.exp(-0.5 * ((phase - 0.5) / (0.35 * width)) ** 2))
    return out


def deformation(shape: FaceShape, x, y, act: Dict[str, float], amplitude: float,
                gains: Optional[Dict[str, float]] = None):
    s = shape.scale
    amp = amplitude * shape.expressiveness
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    z = np.zeros(x.shape)
    for name, cx, cy, sx, sy, gain, drv in _COMPONENTS:
        g = gain * (gains.get(name, 1.0) if gains else 1.0)
        w = g * act[drv]
        if w == 0.0:
            continue
        # beyond 5 sigma the bump is below 4e-6 of its height
        near = (np.abs(x - cx * s) < 5 * sx * s) & (np.abs(y - cy * s) < 5 * sy * s)
        z[near] += amp * w * _gauss(x[near], y[near], cx * s, cy * s, sx * s, sy * s)
    return z


def _smoothstep(y, y_lo, y_hi):
    t = np.clip((y - y_lo) / (y_hi - y_lo), 0.0, 1.0)
    return t * t * (3 - 2 * t)


@dataclass(frozen=True)
class _Scenario:
    kind: str  # "face" or "plane"
    motion_gain: float
    gains: Dict[str, float]
    blink: bool
    static_pose: bool
    chin_frozen: bool
    bent: bool
    eye_noise: bool


_SCENARIO_TABLE = {
    "genuine": _Scenario("face", 1.0, {}, True, False, False, False, True),
    "no_blink_genuine": _Scenario("face", 1.0, {}, False, False, False, False, True),
    "rigid_mask": _Scenario("face", 0.0, {}, False, True, False, False, True),
    "elastic_mask": _Scenario("face", 0.25, {n: 0.0 for n in _MOUTH_COMPONENTS}, True, False, False, False, True),
    "partial_chin_mask": _Scenario("face", 1.0, {}, True, False, True, False, True),
    "flat_photo": _Scenario("plane", 0.0, {}, False, True, False, True, False),
    "monitor": _Scenario("plane", 0.0, {}, True, False, False, False, False),
}


def _pixel_grid(shape: FaceShape, n_face: int, offset: np.ndarray):
    area = np.pi * shape.a * shape.b * 0.92
    step = np.sqrt(area / n_face)
    xs = np.arange(-shape.a, shape.a + step, step) + offset[0] * step
    ys = np.arange(shape.y0 - shape.b, shape.y0 + shape.b + step, step) + offset[1] * step
    gx, gy = np.meshgrid(xs, ys)
    gx, gy = gx.ravel(), gy.ravel()
    inside = (gx / shape.a) ** 2 + ((gy - shape.y0) / shape.b) ** 2 <= 0.92
    return gx[inside], gy[inside], step


PLANE_HALF_SIZE = (0.13, 0.15)  # printed sheet / screen, wider than the crop sphere


def _plane_grid(shape: FaceShape, n_face: int, offset: np.ndarray):
    hx, hy = PLANE_HALF_SIZE
    step = np.sqrt(4 * hx * hy / n_face)
    xs = np.arange(-hx, hx, step) + offset[0] * step
    ys = np.arange(-hy, hy, step) + offset[1] * step
    gx, gy = np.meshgrid(xs, ys)
    return gx.ravel(), gy.ravel(), step


def _head_pose(r: np.random.Generator, t: float, wander: np.ndarray, static: bool,
               rigid_jitter: bool):
    """Rotation and translation of the head frame relative to the sensor."""
    if static and not rigid_jitter:
        ang = np.zeros(3)
        trans = np.zeros(3)
    elif rigid_jitter:
        ang = np.deg2rad(r.uniform(-1.0, 1.0, 3))
        trans = r.uniform(-0.002, 0.002, 3)
    else:
        # slow sinusoidal head drift
        ang = np.deg2rad(2.0) * np.sin(2 * np.pi * wander[:3] * t + wander[3:6])
        trans = 0.003 * np.sin(2 * np.pi * wander[6:9] * t + wander[9:12])
    rot = rotation_matrix([1, 0, 0], ang[0]) @ rotation_matrix([0, 1, 0], ang[1]) @ rotation_matrix([0, 0, 1], ang[2])
    return rot, trans + np.array([0.0, 0.0, SENSOR_DISTANCE])


def gen_recording(config: SynthConfig, subject_id: int, recording_index: int = 0,
                  recording_id: Optional[str] = None) -> SynthRecording:
    """Generate one labelled recording; identical inputs give identical arrays."""
    sc = _SCENARIO_TABLE[config.scenario]
    shape = subject_shape(config.seed, subject_id)
    rec_rng = _rng(config.seed, subject_id, recording_index, 0xA11)
    wander = np.concatenate([rec_rng.uniform(0.1, 0.4, 3), rec_rng.uniform(0, 2 * np.pi, 3),
                             rec_rng.uniform(0.1, 0.4, 3), rec_rng.uniform(0, 2 * np.pi, 3)])
    t_offset = rec_rng.uniform(0, 10.0)
    bend_radius = rec_rng.uniform(0.25, 0.5)
    n_face = int(round(config.points_per_frame * (1 - BACKGROUND_FRACTION)))
    n_bg = config.points_per_frame - n_face

    nose_depth = neutral_depth(shape, 0.0, 0.0)
    lm_xy = LANDMARK_TEMPLATE * shape.scale
    neutral_act = drivers(shape, t_offset, blink=False)
    energy = 0.0
    clouds, lms, poses = [], [], []
    for f in range(config.frames):
        r = _rng(config.seed, subject_id, recording_index, f + 1)
        t = t_offset + f / FRAME_RATE
        if sc.kind == "plane":
            gx, gy, step = _plane_grid(shape, n_face, r.uniform(-0.5, 0.5, 2))
        else:
            gx, gy, step = _pixel_grid(shape, n_face, r.uniform(-0.5, 0.5, 2))
        lxy = lm_xy + r.normal(0.0, LANDMARK_JITTER, lm_xy.shape)
        act = drivers(shape, t, blink=sc.blink)

        def expression(x, y, a):
            d = sc.motion_gain * deformation(shape, x, y, a, config.deformation_amplitude, sc.gains)
            if sc.chin_frozen:
                d = d * _smoothstep(y, *CHIN_FREEZE_Y)
            return d

        def surface(x, y):
            if sc.kind == "plane":
                z = np.zeros_like(x)
                if sc.bent and config.bent_photo:
                    z = z + x**2 / (2 * bend_radius)
                return z
            z = neutral_depth(shape, x, y) - nose_depth
            if sc.motion_gain > 0:
                z = z + expression(x, y, act)
            elif config.scenario == "rigid_mask":
                z = z + deformation(shape, x, y, neutral_act, config.deformation_amplitude)
            return z

        face = np.column_stack([gx, gy, surface(gx, gy)])
        lm_local = np.column_stack([lxy, surface(lxy[:, 0], lxy[:, 1])])
        if sc.kind == "face" and sc.motion_gain > 0:
            ref = expression(gx, gy, drivers(shape, t_offset, blink=sc.blink))
            energy += float(np.mean((expression(gx, gy, act) - ref) ** 2))

        rot, trans = _head_pose(r, t, wander, sc.static_pose, config.scenario == "rigid_mask")
        noise = np.full(len(face), config.noise_sigma)
        if sc.eye_noise:
            s = shape.scale
            eyes = (_gauss(gx, gy, -0.032 * s, 0.033 * s, 0.012 * s, 0.007 * s)
                    + _gauss(gx, gy, 0.032 * s, 0.033 * s, 0.012 * s, 0.007 * s))
            noise = noise * (1 + (EYE_NOISE_FACTOR - 1) * np.clip(eyes, 0, 1))
        world = face @ rot.T + trans + r.normal(0.0, 1.0, face.shape) * noise[:, None]
        lm_world = lm_local @ rot.T + trans

        bg_side = int(np.ceil(np.sqrt(n_bg)))
        bx, by = np.meshgrid(np.linspace(-0.3, 0.3, bg_side), np.linspace(-0.3, 0.3, bg_side))
        bg = np.column_stack([bx.ravel(), by.ravel(), np.full(bx.size, BACKGROUND_DEPTH)])[:n_bg]
        bg = bg + trans + r.normal(0.0, config.noise_sigma, bg.shape)
        pts = np.concatenate([world, bg]).astype(np.float32).astype(np.float64)
        clouds.append(PointCloud(pts, frame_index=f, timestamp=f / FRAME_RATE))
        lms.append(LandmarkSet(lm_world, frame_index=f))
        poses.append((rot, trans))

    label = "bonafide" if config.scenario in BONA_FIDE_SCENARIOS else "attack"
    return SynthRecording(
        clouds=clouds, landmarks=lms, label=label,
        attack_type="" if label == "bonafide" else config.scenario,
        subject_id=f"s{subject_id:02d}",
        recording_id=recording_id or f"s{subject_id:02d}_r{recording_index:02d}_{config.scenario}",
        scenario=config.scenario, deformation_energy=energy / config.frames, head_poses=poses)


# ---- benchmark ---------------------------------------------------------------

ATTACK_MIX = (("flat_photo", 12), ("monitor", 9), ("rigid_mask", 8), ("elastic_mask", 8),
              ("partial_chin_mask", 8))
N_NO_BLINK = 4


def benchmark_plan(seed: int, n_subjects: int = 24) -> List[Tuple[int, int, str]]:
    """``(subject, recording_index, scenario)`` rows of the benchmark.

    Proportions follow 109 recordings with 45 attacks for 24 subjects and
    scale linearly otherwise.
    """
    if n_subjects < 2:
        raise ValueError("need at least 2 subjects")
    total = int(round(109 * n_subjects / 24))
    n_attack = int(round(45 * n_subjects / 24))
    n_genuine = total - n_attack
    counts = [c * n_subjects / 24 for _, c in ATTACK_MIX]
    per_type = [int(np.floor(c)) for c in counts]
    rem = n_attack - sum(per_type)
    for i in np.argsort([-(c - np.floor(c)) for c in counts], kind="stable")[:rem]:
        per_type[i] += 1
    attacks = [name for (name, _), k in zip(ATTACK_MIX, per_type) for _ in range(k)]
    n_noblink = int(round(N_NO_BLINK * n_subjects / 24))
    genuine = ["no_blink_genuine"] * n_noblink + ["genuine"] * (n_genuine - n_noblink)

    r = _rng(seed, 0xBE7C)
    rows: Dict[int, List[str]] = {s: [] for s in range(n_subjects)}
    # every subject gets one plain genuine recording; the rest is dealt out
    for s in range(n_subjects):
        rows[s].append("genuine")
    rest_genuine = genuine[:n_noblink] + genuine[n_noblink + n_subjects:]
    for i, sc in enumerate(r.permutation(np.array(rest_genuine, dtype=object))):
        rows[i % n_subjects].append(str(sc))
    order = r.permutation(n_subjects)
    for i, sc in enumerate(attacks):
        rows[int(order[i % n_subjects])].append(sc)
    plan = []
    for s in range(n_subjects):
        for j, sc in enumerate(rows[s]):
            plan.append((s, j, sc))
    return plan


def recording_config(base: SynthConfig, scenario: str) -> SynthConfig:
    return replace(base, scenario=scenario)


def write_recording(rec: SynthRecording, directory) -> Path:
    """One binary float32 PLY per frame plus ``landmarks.csv``."""
    from .formats import LANDMARK_FILE, frame_name, write_landmarks, write_ply
    directory = Path(directory)
    for cloud in rec.clouds:
        write_ply(directory / frame_name(cloud.frame_index), cloud.points, binary=True, dtype="float")
    write_landmarks(directory / LANDMARK_FILE, rec.landmarks)
    return directory


def _benchmark_job(args):
    base, subject, index, scenario, out = args
    rec = gen_recording(recording_config(base, scenario), subject, index)
    write_recording(rec, Path(out) / rec.recording_id)
    return rec.subject_id, rec.recording_id, rec.label, rec.attack_type


def gen_benchmark(seed: int, out_dir, n_subjects: int = 24, base: Optional[SynthConfig] = None,
                  jobs: int = 1) -> Path:
    """Write the benchmark recordings and ``manifest.csv`` under ``out_dir``.

    Output bytes do not depend on ``jobs``. Returns the manifest path.
    """
    from concurrent.futures import ProcessPoolExecutor
    from multiprocessing import get_context

    from .errors import IOFailure
    from .formats import ManifestRow, write_manifest
    base = replace(base or SynthConfig(), seed=seed)
    out = Path(out_dir)
    tasks = [(base, s, j, sc, out) for s, j, sc in benchmark_plan(seed, n_subjects)]
    try:
        out.mkdir(parents=True, exist_ok=True)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
                done = list(pool.map(_benchmark_job, tasks))
        else:
            done = [_benchmark_job(t) for t in tasks]
        rows = [ManifestRow(sid, rid, label, kind, out / rid) for sid, rid, label, kind in done]
        manifest = out / "manifest.csv"
        write_manifest(manifest, rows, relative_to=out)
    except OSError as exc:
        raise IOFailure(f"cannot write benchmark to {out}: {exc}") from exc
    return manifest
