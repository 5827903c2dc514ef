"""Leave-one-subject-out with each feature scaling, from a features CSV and its manifest.

The cubic kernel reacts very differently to centred and uncentred inputs;
this prints both so the effect can be seen on the same features.
"""
import argparse

from curv4d.evaluation import loocv
from curv4d.formats import PipelineConfig, read_features, read_manifest
from curv4d.pipeline import trainer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("features")
    ap.add_argument("manifest")
    ap.add_argument("--nu", type=float, default=0.05)
    args = ap.parse_args()
    table = read_features(args.features)
    kinds = {r.recording_id: r.attack_type for r in read_manifest(args.manifest)}
    attack_types = [kinds[rid] for rid in table.recording_ids]
    for scaling in ("spread", "zscore"):
        cfg = PipelineConfig(nu=args.nu, feature_scaling=scaling)
        rep = loocv(table.sigma, table.subject_ids, table.labels, table.recording_ids, trainer(cfg),
                    attack_types=attack_types)
        accepted = ", ".join(f"{k} {a}/{n}" for k, (a, n) in sorted(rep.attack_type_accepted.items()))
        print(f"{scaling:7s} auroc {rep.auroc:.4f}  apcer {rep.apcer_mean:.3f}  bpcer {rep.bpcer_mean:.3f}")
        print(f"        accepted attacks: {accepted}")


if __name__ == "__main__":
    main()
