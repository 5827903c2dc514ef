from functools import partial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curv4d.anomaly import ATTACK, BONA_FIDE, train_ocsvm
from curv4d.errors import InsufficientSubjects, NoAttackSamples, NoBonaFideSamples, SingleClass
from curv4d.evaluation import LabeledScore, apcer, auroc, bpcer, loocv, roc_points

from oracles import pairwise_auroc


def labeled(bona, attack):
    out = [LabeledScore(f"b{i}", "s", BONA_FIDE, float(v)) for i, v in enumerate(bona)]
    out += [LabeledScore(f"a{i}", "s", ATTACK, float(v)) for i, v in enumerate(attack)]
    return out


# ---- rates ---------------------------------------------------------------------------------

def test_apcer_examples():
    assert apcer(labeled([1.0], [-1, -2, -3])) == 0.0
    assert apcer(labeled([1.0], [-1, 0.5, 2, -3])) == 0.5
    with pytest.raises(NoAttackSamples):
        apcer(labeled([1.0], []))


def test_bpcer_examples():
    assert bpcer(labeled([1, 2, 3], [-1])) == 0.0
    assert bpcer(labeled([-0.5] + [1.0] * 9, [-1])) == pytest.approx(0.1)
    assert bpcer(labeled([1, 2, 3], [-1]), threshold=np.inf) == 1.0
    with pytest.raises(NoBonaFideSamples):
        bpcer(labeled([], [1.0]))


def test_threshold_boundary_counts_as_accept():
    s = labeled([0.0], [0.0])
    assert apcer(s, 0.0) == 1.0 and bpcer(s, 0.0) == 0.0


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.lists(st.floats(-5, 5), min_size=1, max_size=30),
       st.floats(-6, 6), st.floats(0, 3))
def test_rates_monotone(bona, attack, t, dt):
    s = labeled(bona, attack)
    assert apcer(s, t + dt) <= apcer(s, t)
    assert bpcer(s, t + dt) >= bpcer(s, t)


def test_score_validation():
    with pytest.raises(ValueError):
        LabeledScore("r", "s", "genuine", 0.0)
    with pytest.raises(ValueError):
        LabeledScore("r", "s", BONA_FIDE, float("nan"))


# ---- AUROC ---------------------------------------------------------------------------------

def test_auroc_examples():
    assert auroc(labeled([2, 3, 4], [-1, 0, 1])) == 1.0
    assert auroc(labeled([0.3] * 5, [0.3] * 7)) == 0.5
    with pytest.raises(SingleClass):
        auroc(labeled([1.0], []))


def test_auroc_against_pairwise(rng):
    for _ in range(20):
        sc = np.round(rng.normal(size=200), 1)
        lab = rng.random(200) < 0.6
        if lab.all() or not lab.any():
            continue
        assert auroc(labeled(sc[lab], sc[~lab])) == pytest.approx(pairwise_auroc(sc[lab], sc[~lab]), abs=1e-12)


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=25), st.lists(st.integers(-3, 3), min_size=1, max_size=25))
def test_auroc_flip_and_transform(bona, attack):
    a = auroc(labeled(bona, attack))
    assert a == pytest.approx(pairwise_auroc(bona, attack), abs=1e-12)
    assert auroc(labeled(attack, bona)) == pytest.approx(1 - a, abs=1e-12)
    f = lambda v: np.exp(v) * 3 + 1  # noqa: E731
    assert auroc(labeled([f(v) for v in bona], [f(v) for v in attack])) == pytest.approx(a, abs=1e-12)


def test_roc_points():
    rows = roc_points(labeled([1.0, 3.0], [2.0]))
    assert rows[0] == (np.inf, 0.0, 0.0)
    assert rows[1:] == [(3.0, 0.5, 0.0), (2.0, 0.5, 1.0), (1.0, 1.0, 1.0)]


# ---- LOOCV ---------------------------------------------------------------------------------

def test_loocv_identical_twins():
    x = np.array([[0.2, 0.4, 0.1], [0.2, 0.4, 0.1]])
    rep = loocv(x, ["s1", "s2"], [BONA_FIDE, BONA_FIDE], ["r1", "r2"], train_ocsvm)
    assert rep.bpcer_mean == 0.0
    assert all(s.score >= 0 for s in rep.scores)
    assert np.isnan(rep.auroc) and np.isnan(rep.apcer_mean)


def test_loocv_fold_partition(rng):
    n_sub = 6
    subj, lab, rid, x = [], [], [], []
    for s in range(n_sub):
        for r in range(4):
            subj.append(f"s{s}")
            lab.append(BONA_FIDE if r < 3 else ATTACK)
            rid.append(f"s{s}_r{r}")
            x.append(rng.normal(1.0 if r < 3 else 3.0, 0.1, 5))
    x = np.array(x)
    seen = []

    def train(feats):
        # the training rows must all be bona fide rows of other subjects
        rows = [i for i in range(len(x)) if any(np.array_equal(x[i], f) for f in feats)]
        seen.append({subj[i] for i in rows})
        assert all(lab[i] == BONA_FIDE for i in rows)
        return train_ocsvm(feats)

    rep = loocv(x, subj, lab, rid, train, attack_types=["mask" if l == ATTACK else "" for l in lab])
    assert sorted(s.recording_id for s in rep.scores) == sorted(rid)
    for fold, trained_on in zip(rep.folds, seen):
        assert fold.subject_id not in trained_on
        assert len(trained_on) == n_sub - 1
    for s in rep.scores:
        assert s.subject_id == s.recording_id.split("_")[0]
    c = rep.confusion
    assert c["bona_fide_accepted"] + c["bona_fide_rejected"] == 18
    assert c["attack_accepted"] + c["attack_rejected"] == 6
    assert rep.attack_type_accepted["mask"][1] == 6
    assert rep.apcer_mean == pytest.approx(np.mean([f.apcer for f in rep.folds]))
    assert 0 <= rep.bpcer_std and 0 <= rep.apcer_std


def test_loocv_pooled_matches_counting(rng):
    x = rng.normal(size=(30, 4))
    subj = [f"s{i % 5}" for i in range(30)]
    lab = [ATTACK if i % 3 == 0 else BONA_FIDE for i in range(30)]
    rep = loocv(x, subj, lab, [f"r{i}" for i in range(30)], partial(train_ocsvm, nu=0.2))
    att = [s.score for s in rep.scores if s.true_label == ATTACK]
    assert rep.pooled_apcer == sum(v >= 0 for v in att) / len(att)
    assert rep.confusion["attack_accepted"] == sum(v >= 0 for v in att)


def test_loocv_needs_two_subjects():
    with pytest.raises(InsufficientSubjects):
        loocv(np.zeros((2, 3)), ["a", "a"], [BONA_FIDE, BONA_FIDE], ["r1", "r2"], train_ocsvm)
    with pytest.raises(InsufficientSubjects):
        loocv(np.zeros((2, 3)), ["a", "b"], [BONA_FIDE, ATTACK], ["r1", "r2"], train_ocsvm)


def test_report_lines():
    x = np.array([[0.2, 0.4], [0.2, 0.4], [5.0, -3.0]])
    rep = loocv(x, ["a", "b", "b"], [BONA_FIDE, BONA_FIDE, ATTACK], ["r1", "r2", "r3"], train_ocsvm,
                attack_types=["", "", "photo"])
    lines = rep.as_lines()
    keys = [ln.split(":")[0] for ln in lines]
    assert keys[:3] == ["auroc", "apcer_mean", "apcer_std"]
    assert "attack_type_accepted.photo" in keys
