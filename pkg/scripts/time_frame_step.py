"""Wall time of the per-frame feature step on one large synthetic frame.

Set NUMBA_NUM_THREADS before starting Python to allow more than the core count.
"""
import argparse
import time

import numba
import numpy as np

from curv4d.formats import PipelineConfig
from curv4d.geometry import LandmarkSet, apply_transform, build_index, crop_sphere, procrustes_rigid
from curv4d.stripes import frame_curvatures, reference_frame
from curv4d.synth import SynthConfig, gen_recording
from curv4d.temporal import correlate_frames


def step(rec, cfg, prev):
    cloud, lm = rec.clouds[1], rec.landmarks[1]
    nose = lm.nose_tip(cfg.nose_index)
    tf = procrustes_rigid(lm, rec.landmarks[0])
    context = crop_sphere(cloud, nose, cfg.sphere_radius + cfg.margin)
    face = apply_transform(crop_sphere(context, nose, cfg.sphere_radius), tf)
    index = build_index(apply_transform(context, tf), cfg.stripes.neighborhood_radius)
    cur = frame_curvatures(face, reference_frame(LandmarkSet(tf.apply(lm.positions))), cfg.stripes, index)
    correlate_frames(prev, cur.values, cfg.lag)
    return len(face)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=360_000, help="nominal points per frame before cropping")
    ap.add_argument("--threads", type=int, nargs="+", default=[1])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    cfg = PipelineConfig()
    rec = gen_recording(SynthConfig(seed=7, frames=2, points_per_frame=args.points), 0)
    prev = np.zeros((cfg.stripes.n_stripes, cfg.stripes.n_samples))
    for n in args.threads:
        numba.set_num_threads(n)
        n_face = step(rec, cfg, prev)
        times = []
        for _ in range(args.repeat):
            t = time.perf_counter()
            step(rec, cfg, prev)
            times.append(time.perf_counter() - t)
        print(f"threads {n}: {n_face} face points, median {np.median(times) * 1e3:.0f} ms, "
              f"min {min(times) * 1e3:.0f} ms")


if __name__ == "__main__":
    main()
