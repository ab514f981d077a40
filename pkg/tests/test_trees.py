from fractions import Fraction

import pytest

from rhythmiq import (
    CONTINUATION,
    NOTE,
    REST,
    DecompositionError,
    NoteEvent,
    Performance,
    RhythmTree,
    ScoreModel,
    TimeSignature,
    ValidationError,
    decompose_measure,
    render_performance,
    tree_to_notation,
)
from rhythmiq.trees import (
    _split_arity,
    continuation,
    notatable,
    note,
    rest,
    split,
    split_notatable,
)

SIG = TimeSignature(4, 4)
F = Fraction


def test_tree_validation():
    with pytest.raises(ValidationError):
        RhythmTree(label="chord")
    with pytest.raises(ValidationError):
        RhythmTree(label=NOTE)  # note without pitch
    with pytest.raises(ValidationError):
        RhythmTree(label=REST, pitch=60)
    with pytest.raises(ValidationError):
        RhythmTree(children=(note(60),))  # 1-child split
    with pytest.raises(ValidationError):
        RhythmTree(children=(note(60), note(62)), label=REST)


def test_leaves_intervals_are_exact():
    tree = split(note(60), split(note(62), note(64)))
    got = [(l.label, a, b) for l, a, b in tree.leaves()]
    assert got == [
        (NOTE, F(0), F(1, 2)),
        (NOTE, F(1, 2), F(3, 4)),
        (NOTE, F(3, 4), F(1)),
    ]
    assert tree.depth() == 2
    assert tree.count_leaves() == 3


def test_validate_flow():
    split(note(60), continuation()).validate_flow()
    with pytest.raises(ValidationError):
        split(rest(), continuation()).validate_flow()
    # carried sound from the previous measure satisfies a leading continuation
    split(continuation(), rest()).validate_flow(carried=True)


def test_split_arity_prefers_binary():
    assert _split_arity([F(1, 2)], F(0), F(1)) == 2
    assert _split_arity([], F(0), F(1)) == 2
    assert _split_arity([F(1, 3)], F(0), F(1)) == 3
    assert _split_arity([F(1, 5)], F(0), F(1)) == 5
    # mixed odd denominators force the smallest odd prime involved
    assert _split_arity([F(1, 3), F(1, 5)], F(0), F(1)) == 3
    # relative to the interval, not absolute position
    assert _split_arity([F(1, 2) + F(1, 6)], F(1, 2), F(1)) == 3


def test_decompose_note_held_into_beat_two():
    # sound covers [0, 3/8): beat 2 is half-covered, so it reads as a
    # continuation and the empty tail as rests
    tree = decompose_measure([(F(0), 60)], [F(3, 8)], SIG)
    assert tree.leaf_labels() == [NOTE, CONTINUATION, REST, REST]


def test_decompose_half_covered_measure_absorbs():
    # uncovered tail is exactly the threshold, so the whole measure
    # collapses to one note leaf before any split happens
    tree = decompose_measure([(F(0), 60)], [F(1, 2)], SIG)
    assert tree.leaf_labels() == [NOTE]


def test_decompose_triplet_beat():
    onsets = [(F(0), 60), (F(1, 12), 62), (F(1, 6), 64), (F(1, 4), 65)]
    extents = [F(1, 12), F(1, 6), F(1, 4), F(1, 2)]
    tree = decompose_measure(onsets, extents, SIG)
    beat1 = tree.children[0]
    assert len(beat1.children) == 3
    assert [c.label for c in beat1.children] == [NOTE, NOTE, NOTE]


def test_decompose_rest_threshold():
    # a 16th of trailing silence (1/4 of the beat) is absorbed into the note
    tree = decompose_measure([(F(0), 60)], [F(3, 16)], SIG, max_depth=2)
    assert tree.children[0].label == NOTE
    # more than half the beat silent becomes a finer split instead
    tree = decompose_measure([(F(0), 60)], [F(1, 16)], SIG)
    assert not tree.children[0].is_leaf
    assert tree.children[0].children[0].label == NOTE


def test_decompose_depth_limit():
    with pytest.raises(DecompositionError):
        decompose_measure([(F(0), 60), (F(1, 64), 62)], [F(1, 64), F(1)], SIG,
                          max_depth=3)


def test_decompose_validation():
    with pytest.raises(ValidationError):
        decompose_measure([(F(1), 60)], [F(2)], SIG)  # onset outside [0, 1)
    with pytest.raises(ValidationError):
        decompose_measure([(F(0), 60)], [F(0)], SIG)  # extent not past onset


def test_notatable():
    assert notatable(F(1, 4))
    assert notatable(F(3, 8))   # dotted quarter of a whole
    assert notatable(F(7, 16))  # double dotted
    assert not notatable(F(5, 16))
    assert not notatable(F(1, 3))
    assert split_notatable(F(5, 16)) == [F(1, 4), F(1, 16)]
    assert split_notatable(F(7, 8)) == [F(7, 8)]
    with pytest.raises(ValidationError):
        split_notatable(F(1, 3))


def test_dotted_merge():
    # quarter + tied eighth prints as one dotted quarter
    tree = split(
        split(note(60), continuation()),
        split(continuation(), note(62)),
        note(64),
        rest(),
    )
    events = tree_to_notation(tree, SIG)
    assert [(e.kind, e.notated, e.tie_from, e.tie_to) for e in events] == [
        (NOTE, F(3, 8), False, False),  # dotted quarter
        (NOTE, F(1, 8), False, False),
        (NOTE, F(1, 4), False, False),
        (REST, F(1, 4), False, False),
    ]
    assert events[0].pitch == 60
    assert events[1].pitch == 62


def test_tuplet_notation():
    tree = split(split(note(60), note(62), note(64)), rest(), rest(), rest())
    events = tree_to_notation(tree, SIG)
    triplet = events[:3]
    assert all(e.timemod == (3, 2) for e in triplet)
    assert all(e.notated == F(1, 8) for e in triplet)
    assert len({e.tuplet_group for e in triplet}) == 1
    assert events[3].timemod is None


def test_unprintable_run_splits_into_tie():
    # note covering 5 sixteenths: quarter tied to sixteenth
    tree = split(
        split(split(note(60), continuation()), split(continuation(), continuation())),
        split(split(continuation(), rest()), rest()),
        rest(),
        rest(),
    )
    events = tree_to_notation(tree, SIG)
    notes = [e for e in events if e.kind == NOTE]
    assert [n.notated for n in notes] == [F(1, 4), F(1, 16)]
    assert notes[0].tie_to and notes[1].tie_from


def test_leading_continuation_needs_carried_pitch():
    tree = split(continuation(), rest(), rest(), rest())
    with pytest.raises(ValidationError):
        tree_to_notation(tree, SIG)
    events = tree_to_notation(tree, SIG, carried_pitch=57)
    assert events[0].kind == NOTE
    assert events[0].pitch == 57
    assert events[0].tie_from


def test_score_model_validation():
    with pytest.raises(ValidationError):
        ScoreModel(SIG, [])
    with pytest.raises(ValidationError):
        ScoreModel(SIG, [note(60)], tempo_marking=0)
    with pytest.raises(ValidationError):
        ScoreModel(SIG, [note(60)], anacrusis_beats=4)


def test_cross_measure_tie():
    m1 = split(rest(), rest(), rest(), note(60))
    m2 = split(continuation(), rest(), rest(), rest())
    score = ScoreModel(SIG, [m1, m2])
    measures = score.notated_measures()
    assert measures[0][-1].tie_to
    assert measures[1][0].tie_from
    assert measures[1][0].pitch == 60


def test_render_performance_exact_timing():
    m1 = split(note(60), note(62), split(note(64), note(65)), rest())
    score = ScoreModel(SIG, [m1], tempo_marking=120.0)
    perf = render_performance(score)
    assert [n.pitch for n in perf.notes] == [60, 62, 64, 65]
    assert perf.onsets() == [0.0, 0.5, 1.0, 1.25]
    assert perf.notes[3].duration == 0.25


def test_render_merges_tie_across_barline():
    m1 = split(rest(), rest(), rest(), note(60))
    m2 = split(continuation(), rest(), rest(), rest())
    perf = render_performance(ScoreModel(SIG, [m1, m2]), bpm=60.0)
    assert len(perf) == 1
    assert perf.notes[0].onset == 3.0
    assert perf.notes[0].duration == 2.0


def test_render_anacrusis_starts_at_zero():
    pickup = split(rest(), rest(), rest(), note(67))
    full = split(note(60), rest(), rest(), rest())
    score = ScoreModel(SIG, [pickup, full], tempo_marking=120.0,
                       anacrusis_beats=1)
    perf = render_performance(score)
    assert perf.onsets() == [0.0, 0.5]
    assert [n.pitch for n in perf.notes] == [67, 60]


def test_render_performance_output_is_monophonic():
    m = split(note(60), split(note(62), note(64)), note(65), rest())
    perf = render_performance(ScoreModel(SIG, [m, m]))
    assert perf.is_monophonic(tol=1e-9)
