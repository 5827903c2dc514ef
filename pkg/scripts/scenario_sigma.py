"""Mean sigma per face region for every synthetic scenario of one subject."""
import argparse

import numpy as np

from curv4d.pipeline import correlation_series
from curv4d.stripes import ReferenceFrame, all_stripe_axes
from curv4d.synth import SCENARIOS, SynthConfig, gen_recording
from curv4d.temporal import sigma_features

# in-plane stripe direction, degrees from +x towards +y (up)
REGIONS = {"forehead": 90, "left eye": 40, "right eye": 140, "cheeks": (0, 180), "mouth": 270, "jaw": (235, 305)}


def region_masks(n):
    _, n2 = all_stripe_axes(ReferenceFrame(np.zeros(3), *np.eye(3)), n)
    ang = np.degrees(np.arctan2(n2[:, 1], n2[:, 0])) % 360
    out = {}
    for name, a in REGIONS.items():
        centres = a if isinstance(a, tuple) else (a,)
        d = np.min([np.abs((ang - c + 180) % 360 - 180) for c in centres], axis=0)
        out[name] = d <= 15
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--subject", type=int, default=0)
    ap.add_argument("--frames", type=int, default=60)
    ap.add_argument("--points", type=int, default=50_000)
    args = ap.parse_args()
    masks = None
    print("scenario            " + "  ".join(f"{r:>9s}" for r in REGIONS))
    for sc in SCENARIOS:
        rec = gen_recording(SynthConfig(seed=args.seed, frames=args.frames, points_per_frame=args.points,
                                        scenario=sc), args.subject)
        series = correlation_series(rec.clouds, rec.landmarks)
        sig = sigma_features(series).sigma
        masks = masks or region_masks(len(sig))
        print(f"{sc:18s}  " + "  ".join(f"{sig[m].mean():9.2e}" for m in masks.values()))


if __name__ == "__main__":
    main()
