"""Command-line entry point: ``curv4d <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
Errors print a single ``ErrorClass: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from pathlib import Path
from typing import List, Optional


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one machine-parsable line, like every other failure
        sys.stderr.write(f"UsageError: {message}\n")
        raise SystemExit(1)


def _set_threads(n: Optional[int]) -> None:
    # must run before numba is imported so NUMBA_NUM_THREADS can exceed the core count
    if n is None:
        return
    if "numba" not in sys.modules:
        os.environ["NUMBA_NUM_THREADS"] = str(n)
    import numba

    from . import _kernels  # noqa: F401  selects the threading layer before numba starts it
    from .errors import ConfigError
    if n > numba.config.NUMBA_NUM_THREADS:
        raise ConfigError(f"--threads {n} exceeds the {numba.config.NUMBA_NUM_THREADS} threads "
                          "numba was started with")
    numba.set_num_threads(n)


def _csv_float(v: float) -> str:
    return format(float(v), ".17g")


# ---- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> None:
    from .synth import SynthConfig, gen_benchmark
    base = SynthConfig(seed=args.seed, frames=args.frames, points_per_frame=args.points)
    manifest = gen_benchmark(args.seed, args.out, n_subjects=args.subjects, base=base, jobs=args.jobs)
    print(manifest)


def _features(manifest, config, jobs):
    from .formats import read_manifest
    from .pipeline import manifest_features
    rows = read_manifest(manifest)
    return rows, manifest_features(rows, config, jobs=jobs)


def cmd_features(args) -> None:
    from .formats import load_config, write_features
    config = load_config(args.config)
    _, table = _features(args.manifest, config, args.jobs)
    write_features(args.out, table)


def cmd_train(args) -> None:
    from .anomaly import BONA_FIDE, save_model
    from .errors import EmptyTrainingSet
    from .formats import load_config, read_features
    from .pipeline import trainer
    config = load_config(args.config)
    table = read_features(args.features)
    keep = [i for i, lab in enumerate(table.labels) if lab == BONA_FIDE]
    if not keep:
        raise EmptyTrainingSet(f"{args.features} has no bona fide rows")
    save_model(trainer(config)(table.sigma[keep]), args.out)


def cmd_score(args) -> None:
    from .anomaly import ATTACK, BONA_FIDE, load_model
    from .formats import atomic_write_text, read_features
    model = load_model(args.model)
    table = read_features(args.features)
    scores = model.decision(table.sigma) if len(table.sigma) else []
    buf = io.StringIO()
    buf.write("recording_id,subject_id,label,score,decision\n")
    for rid, sid, lab, s in zip(table.recording_ids, table.subject_ids, table.labels, scores):
        decision = BONA_FIDE if s >= args.threshold else ATTACK
        buf.write(f"{rid},{sid},{lab},{_csv_float(s)},{decision}\n")
    atomic_write_text(Path(args.out), buf.getvalue())


def write_loocv_outputs(report, out: Path, threshold: float) -> None:
    from .evaluation import roc_points
    from .formats import atomic_write_text
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.txt", "\n".join([f"threshold: {threshold!r}"] + report.as_lines()) + "\n")

    buf = io.StringIO()
    buf.write("subject_id,n_train,n_bonafide,n_attack,apcer,bpcer\n")
    for f in report.folds:
        ap = "" if f.apcer is None else _csv_float(f.apcer)
        bp = "" if f.bpcer is None else _csv_float(f.bpcer)
        buf.write(f"{f.subject_id},{f.n_train},{f.n_bona_fide},{f.n_attack},{ap},{bp}\n")
    atomic_write_text(out / "folds.csv", buf.getvalue())

    buf = io.StringIO()
    buf.write("recording_id,subject_id,label,attack_type,score\n")
    for s in report.scores:
        buf.write(f"{s.recording_id},{s.subject_id},{s.true_label},{s.attack_type},{_csv_float(s.score)}\n")
    atomic_write_text(out / "scores.csv", buf.getvalue())

    buf = io.StringIO()
    buf.write("threshold,tpr,fpr\n")
    if report.confusion["bona_fide_accepted"] + report.confusion["bona_fide_rejected"] and \
            report.confusion["attack_accepted"] + report.confusion["attack_rejected"]:
        for thr, tpr, fpr in roc_points(report.scores):
            buf.write(f"{_csv_float(thr)},{_csv_float(tpr)},{_csv_float(fpr)}\n")
    atomic_write_text(out / "roc.csv", buf.getvalue())


def cmd_loocv(args) -> None:
    from .evaluation import loocv
    from .formats import load_config, read_features, read_manifest, write_features
    from .pipeline import trainer
    config = load_config(args.config)
    out = Path(args.out)
    if args.features:
        rows = read_manifest(args.manifest) if args.manifest else None
        table = read_features(args.features)
    else:
        rows, table = _features(args.manifest, config, args.jobs)
        write_features(out / "features.csv", table)
    kinds = None
    if rows is not None:
        by_id = {r.recording_id: r.attack_type for r in rows}
        kinds = [by_id.get(rid, "") for rid in table.recording_ids]
    report = loocv(table.sigma, table.subject_ids, table.labels, table.recording_ids,
                   trainer(config), attack_types=kinds, threshold=args.threshold)
    write_loocv_outputs(report, out, args.threshold)
    print(f"auroc: {report.auroc!r}")


def cmd_palsy_report(args) -> None:
    import numpy as np

    from .formats import atomic_write_text, load_config, read_manifest
    from .pipeline import recording_series
    from .temporal import mean_series
    config = load_config(args.config)
    n = config.stripes.n_stripes
    buf = io.StringIO()
    buf.write("session,manifest,n_recordings,rbar_mean," + ",".join(f"rbar_{k}" for k in range(n)) + "\n")
    for i, manifest in enumerate(args.manifests):
        rows = read_manifest(manifest)
        per_stripe = np.array([mean_series(recording_series(r.path, config))[0] for r in rows])
        session = per_stripe.mean(axis=0) if len(rows) else np.full(n, np.nan)
        buf.write(f"{i},{Path(manifest).as_posix()},{len(rows)},{_csv_float(session.mean())},"
                  + ",".join(_csv_float(v) for v in session) + "\n")
    atomic_write_text(Path(args.out), buf.getvalue())


# ---- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="curv4d", description="Curvature-based 4D face presentation attack detection.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, jobs=True):
        sp.add_argument("--threads", type=int, default=None, help="numba worker threads")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes across recordings")

    sp = sub.add_parser("synth", help="write the synthetic benchmark")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--subjects", type=int, default=24)
    sp.add_argument("--frames", type=int, default=120)
    sp.add_argument("--points", type=int, default=50_000)
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("features", help="sigma features for every manifest row")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("train", help="fit the one-class model on bona fide rows")
    sp.add_argument("--features", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    common(sp, jobs=False)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="score a features CSV with a model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threshold", type=float, default=0.0)
    common(sp, jobs=False)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("loocv", help="leave-one-subject-out evaluation")
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--features", default=None, help="reuse a features CSV instead of recomputing")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threshold", type=float, default=0.0)
    common(sp)
    sp.set_defaults(func=cmd_loocv)

    sp = sub.add_parser("palsy-report", help="per-session mean correlation per stripe")
    sp.add_argument("--manifests", nargs="+", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    common(sp, jobs=False)
    sp.set_defaults(func=cmd_palsy_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "loocv" and not (args.manifest or args.features):
            parser.error("loocv needs --manifest or --features")
        if getattr(args, "jobs", 1) < 1 or (args.threads is not None and args.threads < 1):
            parser.error("--jobs and --threads must be >= 1")
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    from .errors import Curv4dError
    try:
        _set_threads(args.threads)
        args.func(args)
    except Curv4dError as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"IOFailure: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"ValueError: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
