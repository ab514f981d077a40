import json
import math
import random

import numpy as np
import pytest

from rhythmiq import (
    EvalReport,
    NoteEvent,
    Performance,
    ScoreModel,
    TimeSignature,
    ValidationError,
    best_rotation_fmeasure,
    default_grammar,
    downbeat_fmeasure,
    note_metrics,
    sample_score,
    score_edit_metrics,
    sdr,
    summarize,
)
from rhythmiq.metrics import ZERO_RESIDUAL_DB
from rhythmiq.trees import note, rest, split

SIG = TimeSignature(4, 4)


def _perf(pairs):
    return Performance(
        tuple(NoteEvent(onset=t, duration=0.1, pitch=p, velocity=80) for t, p in pairs)
    )


# --- note matching ----------------------------------------------------------

def _brute_force_matching(ref, est, tol):
    """Try every injective assignment of ref notes to est notes."""
    candidates = [
        [
            j
            for j, e in enumerate(est.notes)
            if e.pitch == r.pitch and abs(e.onset - r.onset) <= tol
        ]
        for r in ref.notes
    ]

    def best(i, used):
        if i == len(candidates):
            return 0
        top = best(i + 1, used)
        for j in candidates[i]:
            if j not in used:
                top = max(top, 1 + best(i + 1, used | {j}))
        return top

    return best(0, frozenset())


def test_matching_equals_brute_force_randomized():
    rng = random.Random(60301)
    for _ in range(300):
        n_ref = rng.randint(1, 10)
        n_est = rng.randint(1, 10)
        # clustered onsets and few pitches force contested assignments
        ref = _perf(
            (rng.choice([1.0, 1.04, 1.08, 1.5]), rng.choice([60, 61]))
            for _ in range(n_ref)
        )
        est = _perf(
            (rng.choice([1.0, 1.04, 1.08, 1.5]) + rng.uniform(-0.06, 0.06),
             rng.choice([60, 61]))
            for _ in range(n_est)
        )
        got = note_metrics(ref, est)
        want = _brute_force_matching(ref, est, 0.05)
        assert got.matched == want
        assert got.precision == pytest.approx(100.0 * want / n_est)
        assert got.recall == pytest.approx(100.0 * want / n_ref)


def test_one_wrong_pitch_in_four_gives_75():
    ref = _perf([(0.0, 60), (0.5, 62), (1.0, 64), (1.5, 65)])
    est = _perf([(0.0, 60), (0.5, 62), (1.0, 63), (1.5, 65)])
    m = note_metrics(ref, est)
    assert (m.precision, m.recall, m.f_measure) == (75.0, 75.0, 75.0)
    assert m.matched == 3


def test_matching_tolerance_is_inclusive():
    # 0-based onsets keep the difference exactly representable
    ref = _perf([(0.0, 60)])
    assert note_metrics(ref, _perf([(0.05, 60)])).matched == 1
    assert note_metrics(ref, _perf([(0.051, 60)])).matched == 0


def test_matching_is_one_to_one():
    # two est notes inside the window of one ref note: only one may match
    ref = _perf([(1.0, 60)])
    est = _perf([(0.98, 60), (1.02, 60)])
    m = note_metrics(ref, est)
    assert m.matched == 1
    assert m.precision == 50.0
    assert m.recall == 100.0


def test_matching_empty_sides():
    empty = Performance(())
    full = _perf([(0.0, 60)])
    for a, b in [(empty, full), (full, empty), (empty, empty)]:
        m = note_metrics(a, b)
        assert (m.precision, m.recall, m.f_measure) == (0.0, 0.0, 0.0)


def test_matching_validation():
    with pytest.raises(ValidationError):
        note_metrics(_perf([(0, 60)]), _perf([(0, 60)]), onset_tolerance=-0.1)


# --- downbeat and rotation --------------------------------------------------

def test_downbeat_fmeasure_exact_and_partial():
    assert downbeat_fmeasure([0.0, 2.0, 4.0], [0.0, 2.0, 4.0]) == 100.0
    # 2 of 4 reference downbeats found: P=100, R=50, F=66.67
    f = downbeat_fmeasure([0.0, 2.0, 4.0, 6.0], [0.0, 2.0])
    assert f == pytest.approx(200.0 / 3.0)
    assert downbeat_fmeasure([], [1.0]) == 0.0
    assert downbeat_fmeasure([1.0], []) == 0.0
    with pytest.raises(ValidationError):
        downbeat_fmeasure([0.0], [0.0], tolerance=-1)


def test_rotation_recovers_shifted_phase():
    beats = [0.5 * k for k in range(32)]
    ref_downbeats = beats[2::4]
    f, phase = best_rotation_fmeasure(ref_downbeats, beats, 4)
    assert f == 100.0
    assert phase == 2
    # the unrotated choice is strictly worse
    assert downbeat_fmeasure(ref_downbeats, beats[0::4]) < 100.0


def test_rotation_dominates_downbeat_randomized():
    rng = random.Random(4242)
    for _ in range(200):
        bpb = rng.choice([3, 4])
        n = rng.randint(4, 40)
        beats = sorted(rng.uniform(0, 30) for _ in range(n))
        ref = sorted(rng.uniform(0, 30) for _ in range(rng.randint(1, 12)))
        plain = downbeat_fmeasure(ref, beats[0::bpb])
        best, phase = best_rotation_fmeasure(ref, beats, bpb)
        assert best >= plain
        # ties resolve to the smallest phase, so phase 0 iff no improvement
        assert (phase == 0) == (best == plain)


def test_rotation_validation():
    with pytest.raises(ValidationError):
        best_rotation_fmeasure([0.0], [0.0], 0)


# --- score edit counts ------------------------------------------------------

def test_identical_scores_have_zero_edits():
    score = sample_score(default_grammar(), 4, random.Random(11))
    em = score_edit_metrics(score, score)
    assert em.note_insertions == em.note_deletions == 0
    assert em.rest_insertions == em.rest_deletions == 0
    assert em.timesig_mismatches == 0
    assert em.total_error_rate == 0.0


def test_spurious_rests_push_rate_past_100():
    ref = ScoreModel(SIG, [split(note(60), note(62), rest(), rest())])
    est = ScoreModel(
        SIG,
        [split(split(note(60), rest()), split(note(62), rest()),
               split(note(64), rest()), split(note(65), rest()))],
    )
    em = score_edit_metrics(ref, est)
    assert em.n_ref_notes == 2
    assert em.note_deletions == 2
    assert em.rest_insertions == 2
    assert em.rest_deletions == 4
    assert em.rest_deletion_rate == 200.0
    assert em.total_error_rate == 400.0


def test_measure_count_mismatch_counts_as_timesig():
    ref = ScoreModel(SIG, [split(note(60), note(62), rest(), rest())])
    est = ScoreModel(SIG, [split(note(60), note(62), rest(), rest()), rest()])
    em = score_edit_metrics(ref, est)
    assert em.timesig_mismatches == 1


def test_different_signatures_count_every_measure():
    ref = ScoreModel(SIG, [rest(), rest()])
    est = ScoreModel(TimeSignature(3, 4), [rest(), rest()])
    em = score_edit_metrics(ref, est)
    assert em.timesig_mismatches == 2


def test_rates_with_empty_reference():
    ref = ScoreModel(SIG, [rest()])
    est = ScoreModel(SIG, [split(note(60), rest(), rest(), rest())])
    em = score_edit_metrics(ref, est)
    assert em.n_ref_notes == 0
    assert em.note_deletion_rate == math.inf
    assert em.note_insertion_rate == 0.0


# --- SDR ---------------------------------------------------------------------

def test_sdr_constructed_20db():
    ref = np.ones(100)
    est = ref + 0.1
    assert sdr(ref, est) == pytest.approx(20.0, abs=1e-12)


def test_sdr_identity_hits_cap():
    ref = np.linspace(-1, 1, 50)
    assert sdr(ref, ref.copy()) == ZERO_RESIDUAL_DB


def test_sdr_scale_invariance():
    rng = np.random.default_rng(3)
    ref = rng.standard_normal(256)
    est = ref + 0.05 * rng.standard_normal(256)
    base = sdr(ref, est)
    for c in (1e3, 1e-3):
        assert sdr(c * ref, c * est) == pytest.approx(base, abs=1e-6)


def test_sdr_can_go_negative():
    ref = np.ones(10)
    assert sdr(ref, -ref) == pytest.approx(10 * math.log10(0.25))


def test_sdr_validation():
    with pytest.raises(ValidationError):
        sdr(np.ones(3), np.ones(4))
    with pytest.raises(ValidationError):
        sdr(np.array([]), np.array([]))
    with pytest.raises(ValidationError):
        sdr(np.zeros(5), np.ones(5))


# --- reporting ---------------------------------------------------------------

def test_summarize_population_std():
    s = summarize([0.0, 10.0])
    assert s == {"mean": 5.0, "std": 5.0, "max": 10.0}
    with pytest.raises(ValidationError):
        summarize([])


def test_eval_report_json_shape():
    report = EvalReport({"f": [50.0, 100.0], "sdr": [20.0, 22.0]})
    payload = json.loads(report.to_json())
    assert set(payload) == {"per_item", "summary"}
    assert payload["per_item"]["f"] == [50.0, 100.0]
    for stats in payload["summary"].values():
        assert set(stats) == {"mean", "std", "max"}
    assert payload["summary"]["f"]["mean"] == 75.0
