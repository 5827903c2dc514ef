"""On-disk formats: PLY frames, landmark/manifest/feature CSVs and key=value configs."""

from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .anomaly import ATTACK, BONA_FIDE, KernelParams
from .errors import ConfigError, IOFailure, MissingLandmark, ParseError
from .geometry import N_LANDMARKS, NOSE_TIP, LandmarkSet, PointCloud
from .stripes import StripeConfig

FRAME_PATTERN = re.compile(r"^frame_(\d+)\.ply$")
LANDMARK_FILE = "landmarks.csv"
MANIFEST_COLUMNS = ("subject_id", "recording_id", "label", "attack_type", "path")


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _f(v: float) -> str:
    return repr(float(v))


# ---- PLY ---------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass
class _Element:
    name: str
    count: int
    props: list  # (name, dtype) or (name, ("list", count_dtype, item_dtype))


def _parse_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file (missing 'ply' magic or end_header) at byte 0")
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    fmt = None
    elements: List[_Element] = []
    for lineno, raw in enumerate(data[:end].decode("ascii", "replace").splitlines(), start=1):
        tok = raw.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element" and len(tok) == 3:
            try:
                elements.append(_Element(tok[1], int(tok[2]), []))
            except ValueError:
                raise ParseError(f"bad element count on header line {lineno}: {raw!r}")
        elif tok[0] == "property" and elements:
            try:
                if tok[1] == "list":
                    elements[-1].props.append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
                else:
                    elements[-1].props.append((tok[2], _PLY_TYPES[tok[1]]))
            except (KeyError, IndexError):
                raise ParseError(f"bad property on header line {lineno}: {raw!r}")
        else:
            raise ParseError(f"unexpected header line {lineno}: {raw!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, body_start


def read_ply_points(path) -> np.ndarray:
    """x, y, z of the vertex element as an ``(n, 3)`` float64 array."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(str(exc))
    fmt, elements, start = _parse_header(data)
    names = [e.name for e in elements]
    if "vertex" not in names:
        raise ParseError(f"{path}: no vertex element")
    vi = names.index("vertex")
    vert = elements[vi]
    pnames = [p[0] for p in vert.props]
    if not {"x", "y", "z"} <= set(pnames):
        raise ParseError(f"{path}: vertex element lacks x/y/z properties")

    if fmt == "ascii":
        lines = data[start:].split(b"\n")
        line0 = data[:start].count(b"\n") + 1
        skip = 0
        for e in elements[:vi]:
            if any(isinstance(p[1], tuple) for p in e.props) and e.count:
                raise ParseError(f"{path}: list properties before the vertex element are not supported")
            skip += e.count
        cols = [pnames.index(c) for c in "xyz"]
        out = np.empty((vert.count, 3))
        for i in range(vert.count):
            k = skip + i
            if k >= len(lines):
                raise ParseError(f"{path}: file ends before vertex {i} (line {line0 + k})")
            tok = lines[k].split()
            try:
                out[i] = [float(tok[c]) for c in cols]
            except (ValueError, IndexError):
                raise ParseError(f"{path}: bad vertex on line {line0 + k}: {lines[k][:80]!r}")
        return out

    offset = start
    for e in elements[:vi]:
        if any(isinstance(p[1], tuple) for p in e.props):
            raise ParseError(f"{path}: list properties before the vertex element are not supported")
        offset += e.count * np.dtype([(n, "<" + t) for n, t in e.props]).itemsize
    if any(isinstance(p[1], tuple) for p in vert.props):
        raise ParseError(f"{path}: list properties in the vertex element are not supported")
    dt = np.dtype([(n, "<" + t) for n, t in vert.props])
    need = vert.count * dt.itemsize
    if offset + need > len(data):
        raise ParseError(f"{path}: truncated vertex data, need {need} bytes at byte offset {offset}, "
                         f"file has {len(data)}")
    rec = np.frombuffer(data, dtype=dt, count=vert.count, offset=offset)
    return np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)


def write_ply(path, points, binary: bool = True, dtype: str = "float") -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    header = (f"ply\nformat {'binary_little_endian' if binary else 'ascii'} 1.0\n"
              f"element vertex {len(pts)}\n"
              f"property {dtype} x\nproperty {dtype} y\nproperty {dtype} z\nend_header\n").encode("ascii")
    if binary:
        body = np.ascontiguousarray(pts, dtype="<" + _PLY_TYPES[dtype]).tobytes()
    else:
        cast = np.float32 if _PLY_TYPES[dtype] == "f4" else np.float64
        body = "".join(f"{_f(cast(x))} {_f(cast(y))} {_f(cast(z))}\n" for x, y, z in pts).encode("ascii")
    atomic_write_bytes(Path(path), header + body)


def read_frame(path, frame_index: int = 0, scale: float = 1.0) -> PointCloud:
    pts = read_ply_points(path)
    if scale != 1.0:
        pts = pts * scale
    return PointCloud(pts, frame_index=frame_index)


def frame_files(directory) -> List[Path]:
    """Frame PLY files ordered by their numeric suffix."""
    d = Path(directory)
    found = []
    for p in d.iterdir():
        m = FRAME_PATTERN.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]


def frame_name(index: int) -> str:
    return f"frame_{index:06d}.ply"


# ---- landmarks ---------------------------------------------------------------

def write_landmarks(path, sets: Sequence[LandmarkSet]) -> None:
    buf = io.StringIO()
    buf.write("frame,index,x,y,z\n")
    for lm in sets:
        for i, (x, y, z) in enumerate(lm.positions):
            buf.write(f"{lm.frame_index},{i},{_f(x)},{_f(y)},{_f(z)}\n")
    atomic_write_text(Path(path), buf.getvalue())


def read_landmarks(path, scale: float = 1.0) -> Dict[int, LandmarkSet]:
    """Landmark sets keyed by frame; every frame must carry all 68 indices."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IOFailure(str(exc))
    rows: Dict[int, Dict[int, tuple]] = {}
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["frame", "index", "x", "y", "z"]:
        raise ParseError(f"{path}: expected header frame,index,x,y,z on line 1")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            f, i = int(row[0]), int(row[1])
            xyz = (float(row[2]), float(row[3]), float(row[4]))
        except (ValueError, IndexError):
            raise ParseError(f"{path}: malformed landmark row on line {lineno}: {row!r}")
        if not 0 <= i < N_LANDMARKS:
            raise ParseError(f"{path}: landmark index {i} out of range on line {lineno}")
        rows.setdefault(f, {})[i] = xyz
    out = {}
    for f in sorted(rows):
        missing = [i for i in range(N_LANDMARKS) if i not in rows[f]]
        if missing:
            raise MissingLandmark(f"frame {f} lacks landmark index {missing[0]}"
                                  + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
        pos = np.array([rows[f][i] for i in range(N_LANDMARKS)]) * scale
        out[f] = LandmarkSet(pos, frame_index=f)
    return out


# ---- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    subject_id: str
    recording_id: str
    label: str
    attack_type: str
    path: Path


def read_manifest(path) -> List[ManifestRow]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IOFailure(str(exc))
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
        raise ParseError(f"{path}: expected header {','.join(MANIFEST_COLUMNS)}")
    rows, seen = [], set()
    for lineno, r in enumerate(reader, start=2):
        if r["recording_id"] in seen:
            raise ParseError(f"{path}: duplicate recording_id {r['recording_id']!r} on line {lineno}")
        seen.add(r["recording_id"])
        if r["label"] not in (BONA_FIDE, ATTACK):
            raise ParseError(f"{path}: label must be bonafide or attack on line {lineno}")
        if r["label"] == ATTACK and not r["attack_type"]:
            raise ParseError(f"{path}: attack row without attack_type on line {lineno}")
        p = Path(r["path"])
        rows.append(ManifestRow(r["subject_id"], r["recording_id"], r["label"], r["attack_type"],
                                p if p.is_absolute() else path.parent / p))
    return rows


def write_manifest(path, rows: Sequence[ManifestRow], relative_to: Optional[Path] = None) -> None:
    buf = io.StringIO()
    buf.write(",".join(MANIFEST_COLUMNS) + "\n")
    for r in rows:
        p = Path(r.path)
        if relative_to is not None:
            p = p.relative_to(relative_to)
        buf.write(f"{r.subject_id},{r.recording_id},{r.label},{r.attack_type},{p.as_posix()}\n")
    atomic_write_text(Path(path), buf.getvalue())


# ---- features / scores -------------------------------------------------------

@dataclass
class FeatureTable:
    recording_ids: List[str]
    subject_ids: List[str]
    labels: List[str]
    sigma: np.ndarray


def write_features(path, table: FeatureTable) -> None:
    n = table.sigma.shape[1]
    buf = io.StringIO()
    buf.write(",".join(["recording_id", "subject_id", "label"] + [f"sigma_{k}" for k in range(n)]) + "\n")
    for rid, sid, lab, row in zip(table.recording_ids, table.subject_ids, table.labels, table.sigma):
        buf.write(",".join([rid, sid, lab] + [_f(v) for v in row]) + "\n")
    atomic_write_text(Path(path), buf.getvalue())


def read_features(path) -> FeatureTable:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IOFailure(str(exc))
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[:3] != ["recording_id", "subject_id", "label"]:
        raise ParseError(f"{path}: expected recording_id,subject_id,label,sigma_* header")
    rids, sids, labels, rows = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            rows.append([float(v) for v in row[3:]])
        except ValueError:
            raise ParseError(f"{path}: non-numeric feature on line {lineno}")
        rids.append(row[0])
        sids.append(row[1])
        labels.append(row[2])
    sigma = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 3)
    return FeatureTable(rids, sids, labels, sigma)


# ---- pipeline config ---------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    stripes: StripeConfig = StripeConfig()
    max_lag: Optional[int] = None  # None = n_samples // 8
    nu: float = 0.05
    kernel: KernelParams = KernelParams()
    sphere_radius: float = 0.1
    nose_index: int = NOSE_TIP
    input_unit: str = "m"
    feature_scaling: str = "spread"
    context_margin: Optional[float] = None  # None = neighborhood_radius

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise ConfigError("nu must lie in (0, 1]")
        if not self.sphere_radius > 0:
            raise ConfigError("sphere_radius must be positive")
        if not 0 <= self.nose_index < N_LANDMARKS:
            raise ConfigError("nose_index must lie in [0, 68)")
        if self.input_unit not in ("m", "mm"):
            raise ConfigError("input_unit must be m or mm")
        if self.max_lag is not None and not 0 <= self.max_lag < self.stripes.n_samples:
            raise ConfigError("max_lag must lie in [0, n_samples)")
        if self.feature_scaling not in ("zscore", "spread"):
            raise ConfigError("feature_scaling must be zscore or spread")
        if self.context_margin is not None and not self.context_margin >= 0:
            raise ConfigError("context_margin must be >= 0")

    @property
    def unit_scale(self) -> float:
        return 0.001 if self.input_unit == "mm" else 1.0

    @property
    def lag(self) -> int:
        return self.stripes.n_samples // 8 if self.max_lag is None else self.max_lag

    @property
    def margin(self) -> float:
        """Extra radius kept around the crop so boundary neighbourhoods stay whole."""
        if self.context_margin is None:
            return self.stripes.neighborhood_radius
        return self.context_margin


_STRIPE_KEYS = {f.name: f.type for f in fields(StripeConfig)}
_CONFIG_KEYS = ("n_stripes", "n_samples", "delta", "neighborhood_radius", "radial_extent", "k_min",
                "max_lag", "nu", "kernel_degree", "kernel_gamma", "kernel_coef0", "sphere_radius",
                "nose_index", "input_unit", "feature_scaling", "context_margin")


def config_to_text(cfg: PipelineConfig) -> str:
    s = cfg.stripes
    vals = {
        "n_stripes": s.n_stripes, "n_samples": s.n_samples, "delta": s.delta,
        "neighborhood_radius": s.neighborhood_radius, "radial_extent": s.radial_extent,
        "k_min": s.k_min, "max_lag": "auto" if cfg.max_lag is None else cfg.max_lag, "nu": cfg.nu,
        "kernel_degree": cfg.kernel.degree,
        "kernel_gamma": "auto" if cfg.kernel.gamma is None else cfg.kernel.gamma,
        "kernel_coef0": cfg.kernel.coef0, "sphere_radius": cfg.sphere_radius,
        "nose_index": cfg.nose_index, "input_unit": cfg.input_unit,
        "feature_scaling": cfg.feature_scaling,
        "context_margin": "auto" if cfg.context_margin is None else cfg.context_margin,
    }
    return "".join(f"{k} = {vals[k]}\n" for k in _CONFIG_KEYS)


def parse_config(text: str) -> PipelineConfig:
    vals: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in vals:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        vals[key] = value

    def num(key, cast, default):
        if key not in vals:
            return default
        if vals[key] == "auto" and key in ("max_lag", "kernel_gamma", "context_margin"):
            return None
        try:
            return cast(vals[key])
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {vals[key]!r}")

    d = StripeConfig()
    try:
        stripes = StripeConfig(
            n_stripes=num("n_stripes", int, d.n_stripes), n_samples=num("n_samples", int, d.n_samples),
            delta=num("delta", float, d.delta),
            neighborhood_radius=num("neighborhood_radius", float, d.neighborhood_radius),
            radial_extent=num("radial_extent", float, d.radial_extent), k_min=num("k_min", int, d.k_min))
        kernel = KernelParams(num("kernel_degree", int, 3), num("kernel_gamma", float, None),
                              num("kernel_coef0", float, 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc))
    return PipelineConfig(stripes=stripes, max_lag=num("max_lag", int, None), nu=num("nu", float, 0.05),
                          kernel=kernel, sphere_radius=num("sphere_radius", float, 0.1),
                          nose_index=num("nose_index", int, NOSE_TIP),
                          input_unit=vals.get("input_unit", "m"),
                          feature_scaling=vals.get("feature_scaling", "spread"),
                          context_margin=num("context_margin", float, None))


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return parse_config(Path(path).read_text())
    except OSError as exc:
        raise IOFailure(str(exc))
