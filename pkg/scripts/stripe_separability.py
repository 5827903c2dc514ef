"""Per-stripe AUROC of sigma between bona fide recordings and one attack type.

Shows which directions around the nose carry the evidence, e.g. only the
chin-ward stripes for partial chin masks.
"""
import argparse

import numpy as np

from curv4d.anomaly import ATTACK, BONA_FIDE
from curv4d.evaluation import LabeledScore, auroc
from curv4d.formats import read_features, read_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("features")
    ap.add_argument("manifest")
    ap.add_argument("--attack", default="partial_chin_mask")
    ap.add_argument("--top", type=int, default=12)
    args = ap.parse_args()
    table = read_features(args.features)
    kinds = {r.recording_id: r.attack_type for r in read_manifest(args.manifest)}
    bona = np.array([lab == BONA_FIDE for lab in table.labels])
    chosen = np.array([kinds[rid] == args.attack for rid in table.recording_ids])
    if not chosen.any():
        raise SystemExit(f"no recordings of type {args.attack!r}")
    x = table.sigma
    per = []
    for k in range(x.shape[1]):
        s = [LabeledScore(str(i), "", BONA_FIDE, float(v)) for i, v in enumerate(x[bona, k])]
        s += [LabeledScore(f"a{i}", "", ATTACK, float(v)) for i, v in enumerate(x[chosen, k])]
        per.append(auroc(s))
    per = np.array(per)
    ratio = np.median(x[chosen], axis=0) / np.median(x[bona], axis=0)
    print(f"{args.attack}: {chosen.sum()} recordings vs {bona.sum()} bona fide")
    print("stripe  auroc  median ratio")
    for k in np.argsort(-per)[:args.top]:
        print(f"{k:6d}  {per[k]:.3f}  {ratio[k]:.3f}")
    print(f"median over all stripes: auroc {np.median(per):.3f}, ratio {np.median(ratio):.3f}")


if __name__ == "__main__":
    main()
