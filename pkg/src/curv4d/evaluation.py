"""PAD error rates, rank-based AUROC and the leave-one-subject-out protocol."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .anomaly import ATTACK, BONA_FIDE, OneClassModel
from .errors import InsufficientSubjects, NoAttackSamples, NoBonaFideSamples, SingleClass


@dataclass(frozen=True)
class LabeledScore:
    recording_id: str
    subject_id: str
    true_label: str
    score: float
    attack_type: str = ""

    def __post_init__(self):
        if self.true_label not in (BONA_FIDE, ATTACK):
            raise ValueError(f"unknown label {self.true_label!r}")
        if not np.isfinite(self.score):
            raise ValueError(f"score for {self.recording_id} is not finite")


def _split(scores: Sequence[LabeledScore]):
    bf = np.array([s.score for s in scores if s.true_label == BONA_FIDE], dtype=np.float64)
    at = np.array([s.score for s in scores if s.true_label == ATTACK], dtype=np.float64)
    return bf, at


def apcer(scores: Sequence[LabeledScore], threshold: float = 0.0) -> float:
    """Fraction of attacks accepted as bona fide (score >= threshold)."""
    _, at = _split(scores)
    if len(at) == 0:
        raise NoAttackSamples("APCER needs at least one attack sample")
    return float(np.count_nonzero(at >= threshold) / len(at))


def bpcer(scores: Sequence[LabeledScore], threshold: float = 0.0) -> float:
    """Fraction of bona fide presentations rejected (score < threshold)."""
    bf, _ = _split(scores)
    if len(bf) == 0:
        raise NoBonaFideSamples("BPCER needs at least one bona fide sample")
    return float(np.count_nonzero(bf < threshold) / len(bf))


def auroc(scores: Sequence[LabeledScore]) -> float:
    """Mann-Whitney estimate of P(bona fide score > attack score), ties count half."""
    bf, at = _split(scores)
    if len(bf) == 0 or len(at) == 0:
        raise SingleClass("AUROC needs both bona fide and attack samples")
    ranks = rankdata(np.concatenate([bf, at]))
    r_bf = ranks[: len(bf)].sum()
    u = r_bf - len(bf) * (len(bf) + 1) / 2
    return float(u / (len(bf) * len(at)))


def roc_points(scores: Sequence[LabeledScore]):
    """``(threshold, tpr, fpr)`` rows for every distinct score, high to low.

    tpr is the bona fide acceptance rate, fpr the attack acceptance rate.
    """
    bf, at = _split(scores)
    if len(bf) == 0 or len(at) == 0:
        raise SingleClass("ROC needs both classes")
    rows = [(np.inf, 0.0, 0.0)]
    for thr in np.unique(np.concatenate([bf, at]))[::-1]:
        rows.append((float(thr), float(np.mean(bf >= thr)), float(np.mean(at >= thr))))
    return rows


@dataclass
class FoldResult:
    subject_id: str
    n_train: int
    n_bona_fide: int
    n_attack: int
    apcer: Optional[float]
    bpcer: Optional[float]


@dataclass
class EvalReport:
    auroc: float
    apcer_mean: float
    apcer_std: float
    bpcer_mean: float
    bpcer_std: float
    pooled_apcer: float
    pooled_bpcer: float
    confusion: Dict[str, int]
    folds: List[FoldResult]
    scores: List[LabeledScore]
    attack_type_accepted: Dict[str, List[int]] = field(default_factory=dict)

    def as_lines(self) -> List[str]:
        c = self.confusion
        lines = [
            f"auroc: {self.auroc!r}",
            f"apcer_mean: {self.apcer_mean!r}",
            f"apcer_std: {self.apcer_std!r}",
            f"bpcer_mean: {self.bpcer_mean!r}",
            f"bpcer_std: {self.bpcer_std!r}",
            f"pooled_apcer: {self.pooled_apcer!r}",
            f"pooled_bpcer: {self.pooled_bpcer!r}",
            f"n_folds: {len(self.folds)}",
            f"n_scores: {len(self.scores)}",
            f"bona_fide_accepted: {c['bona_fide_accepted']}",
            f"bona_fide_rejected: {c['bona_fide_rejected']}",
            f"attack_accepted: {c['attack_accepted']}",
            f"attack_rejected: {c['attack_rejected']}",
        ]
        for kind, (acc, tot) in sorted(self.attack_type_accepted.items()):
            lines.append(f"attack_type_accepted.{kind}: {acc}/{tot}")
        return lines


def _mean_std(values):
    if not values:
        return float("nan"), float("nan")
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


def loocv(features: np.ndarray, subject_ids: Sequence[str], labels: Sequence[str],
          recording_ids: Sequence[str], train: Callable[[np.ndarray], OneClassModel],
          attack_types: Optional[Sequence[str]] = None,
          threshold: float = 0.0) -> EvalReport:
    """Leave-one-subject-out evaluation.

    ``train`` maps a bona fide feature matrix to a model. Each fold trains on
    the bona fide recordings of every other subject and scores all
    recordings of the held-out subject.
    """
    x = np.asarray(features, dtype=np.float64)
    subjects = np.asarray([str(s) for s in subject_ids])
    labels = np.asarray(labels)
    attack_types = np.asarray(attack_types if attack_types is not None else [""] * len(x))
    with_bf = sorted(set(subjects[labels == BONA_FIDE]))
    if len(with_bf) < 2:
        raise InsufficientSubjects("LOOCV needs at least 2 subjects with bona fide recordings")

    all_scores: List[LabeledScore] = []
    folds: List[FoldResult] = []
    for subj in sorted(set(subjects)):
        test = subjects == subj
        train_mask = (~test) & (labels == BONA_FIDE)
        assert not np.any(subjects[train_mask] == subj)
        model = train(x[train_mask])
        s = model.decision(x[test]) if test.any() else np.zeros(0)
        fold_scores = [LabeledScore(recording_ids[i], subj, str(labels[i]), float(v), str(attack_types[i]))
                       for i, v in zip(np.flatnonzero(test), s)]
        bf, at = _split(fold_scores)
        folds.append(FoldResult(subj, int(train_mask.sum()), len(bf), len(at),
                                apcer(fold_scores, threshold) if len(at) else None,
                                bpcer(fold_scores, threshold) if len(bf) else None))
        all_scores.extend(fold_scores)

    ap_m, ap_s = _mean_std([f.apcer for f in folds if f.apcer is not None])
    bp_m, bp_s = _mean_std([f.bpcer for f in folds if f.bpcer is not None])
    bf, at = _split(all_scores)
    confusion = {
        "bona_fide_accepted": int(np.count_nonzero(bf >= threshold)),
        "bona_fide_rejected": int(np.count_nonzero(bf < threshold)),
        "attack_accepted": int(np.count_nonzero(at >= threshold)),
        "attack_rejected": int(np.count_nonzero(at < threshold)),
    }
    per_type: Dict[str, List[int]] = {}
    for sc in all_scores:
        if sc.true_label == ATTACK:
            acc_tot = per_type.setdefault(sc.attack_type or "unknown", [0, 0])
            acc_tot[0] += int(sc.score >= threshold)
            acc_tot[1] += 1
    return EvalReport(
        auroc=auroc(all_scores) if len(bf) and len(at) else float("nan"),
        apcer_mean=ap_m, apcer_std=ap_s, bpcer_mean=bp_m, bpcer_std=bp_s,
        pooled_apcer=apcer(all_scores, threshold) if len(at) else float("nan"),
        pooled_bpcer=bpcer(all_scores, threshold) if len(bf) else float("nan"),
        confusion=confusion, folds=folds, scores=all_scores,
        attack_type_accepted=per_type,
    )
