"""Evaluation metrics: note F-measure, downbeat F-measure, rotation search,
score edit counts, and signal-level SDR.

All F-measures and rates are percentages.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .core import Performance
from .errors import ValidationError
from .trees import NOTE, REST, ScoreModel

DEFAULT_ONSET_TOLERANCE = 0.05
DEFAULT_BEAT_TOLERANCE = 0.07
ZERO_RESIDUAL_DB = 200.0


@dataclass(frozen=True)
class NoteMetrics:
    precision: float
    recall: float
    f_measure: float
    matched: int
    n_ref: int
    n_est: int


def _f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _max_matching(adjacency: list[list[int]], n_right: int) -> int:
    """Maximum bipartite matching size via augmenting paths."""
    match_right = [-1] * n_right

    def augment(u: int, seen: list[bool]) -> bool:
        for v in adjacency[u]:
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] == -1 or augment(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    size = 0
    for u in range(len(adjacency)):
        if augment(u, [False] * n_right):
            size += 1
    return size


def note_metrics(
    ref: Performance,
    est: Performance,
    onset_tolerance: float = DEFAULT_ONSET_TOLERANCE,
) -> NoteMetrics:
    """Match notes one-to-one on equal pitch and onset within tolerance."""
    if onset_tolerance < 0:
        raise ValidationError("onset_tolerance must be >= 0")
    n_ref, n_est = len(ref), len(est)
    if n_ref == 0 or n_est == 0:
        return NoteMetrics(0.0, 0.0, 0.0, 0, n_ref, n_est)
    adjacency = [
        [
            j
            for j, e in enumerate(est.notes)
            if e.pitch == r.pitch and abs(e.onset - r.onset) <= onset_tolerance
        ]
        for r in ref.notes
    ]
    matched = _max_matching(adjacency, n_est)
    precision = 100.0 * matched / n_est
    recall = 100.0 * matched / n_ref
    return NoteMetrics(precision, recall, _f_measure(precision, recall),
                       matched, n_ref, n_est)


def downbeat_fmeasure(
    ref_times,
    est_times,
    tolerance: float = DEFAULT_BEAT_TOLERANCE,
) -> float:
    """Greedy one-to-one event matching within a time window, as a percent."""
    if tolerance < 0:
        raise ValidationError("tolerance must be >= 0")
    ref = sorted(ref_times)
    est = sorted(est_times)
    if not ref or not est:
        return 0.0
    matched = 0
    i = j = 0
    while i < len(ref) and j < len(est):
        if abs(ref[i] - est[j]) <= tolerance:
            matched += 1
            i += 1
            j += 1
        elif est[j] < ref[i]:
            j += 1
        else:
            i += 1
    precision = 100.0 * matched / len(est)
    recall = 100.0 * matched / len(ref)
    return _f_measure(precision, recall)


def best_rotation_fmeasure(
    ref_downbeats,
    beat_times,
    beats_per_bar: int,
    tolerance: float = DEFAULT_BEAT_TOLERANCE,
) -> tuple[float, int]:
    """Score every downbeat rotation of a beat sequence; return (best F, phase).

    Ties resolve to the smallest phase so results are reproducible.
    """
    if beats_per_bar < 1:
        raise ValidationError("beats_per_bar must be >= 1")
    best_f, best_phase = -1.0, 0
    for phase in range(beats_per_bar):
        f = downbeat_fmeasure(ref_downbeats, beat_times[phase::beats_per_bar],
                              tolerance)
        if f > best_f:
            best_f, best_phase = f, phase
    return best_f, best_phase


# ---------------------------------------------------------------------------
# score edit metrics

@dataclass(frozen=True)
class EditMetrics:
    """Edit counts to turn the estimate into the reference.

    Insertions are reference events the estimate misses; deletions are
    estimate events with no reference counterpart.  Rates divide by the
    reference note count, so a noisy estimate can exceed 100%.
    """

    note_insertions: int
    note_deletions: int
    rest_insertions: int
    rest_deletions: int
    timesig_mismatches: int
    n_ref_notes: int

    @property
    def note_insertion_rate(self) -> float:
        return self._rate(self.note_insertions)

    @property
    def note_deletion_rate(self) -> float:
        return self._rate(self.note_deletions)

    @property
    def rest_insertion_rate(self) -> float:
        return self._rate(self.rest_insertions)

    @property
    def rest_deletion_rate(self) -> float:
        return self._rate(self.rest_deletions)

    @property
    def timesig_mismatch_rate(self) -> float:
        return self._rate(self.timesig_mismatches)

    @property
    def total_error_rate(self) -> float:
        return self._rate(
            self.note_insertions + self.note_deletions
            + self.rest_insertions + self.rest_deletions
            + self.timesig_mismatches
        )

    def _rate(self, count: int) -> float:
        if self.n_ref_notes == 0:
            return 0.0 if count == 0 else math.inf
        return 100.0 * count / self.n_ref_notes


def _measure_keys(score: ScoreModel):
    """Per measure: set of note keys (onset, pitch) and rest keys (onset)."""
    out = []
    for events in score.notated_measures():
        notes = set()
        rests = set()
        for ev in events:
            if ev.kind == NOTE and not ev.tie_from:
                notes.add((ev.onset, ev.pitch))
            elif ev.kind == REST:
                rests.add(ev.onset)
        out.append((notes, rests))
    return out


def score_edit_metrics(ref: ScoreModel, est: ScoreModel) -> EditMetrics:
    """Count the notes and rests to insert or delete to turn est into ref.

    Events are keyed by quantized position (and pitch for notes) within each
    measure, measures aligned by index.  A measure present in only one score
    counts as a time-signature mismatch.  Rates normalize by the reference
    note count, so scores with many spurious events can exceed 100%.
    """
    ref_keys = _measure_keys(ref)
    est_keys = _measure_keys(est)
    empty = (set(), set())
    n = max(len(ref_keys), len(est_keys))

    note_ins = note_del = rest_ins = rest_del = timesig = 0
    for i in range(n):
        if i >= len(ref_keys) or i >= len(est_keys):
            timesig += 1
        elif ref.time_signature != est.time_signature:
            timesig += 1
        ref_notes, ref_rests = ref_keys[i] if i < len(ref_keys) else empty
        est_notes, est_rests = est_keys[i] if i < len(est_keys) else empty
        note_ins += len(ref_notes - est_notes)
        note_del += len(est_notes - ref_notes)
        rest_ins += len(ref_rests - est_rests)
        rest_del += len(est_rests - ref_rests)

    n_ref_notes = sum(len(notes) for notes, _ in ref_keys)
    return EditMetrics(note_ins, note_del, rest_ins, rest_del, timesig,
                       n_ref_notes)


# ---------------------------------------------------------------------------
# signal-level SDR

def sdr(ref, est) -> float:
    """Signal-to-distortion ratio in dB; identical signals return 200.0."""
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValidationError(f"shape mismatch {ref.shape} vs {est.shape}")
    if ref.size == 0:
        raise ValidationError("empty reference signal")
    num = float(np.sum(ref * ref))
    if num == 0.0:
        raise ValidationError("silent reference signal")
    den = float(np.sum((ref - est) ** 2))
    if den == 0.0:
        return ZERO_RESIDUAL_DB
    return 10.0 * math.log10(num / den)


# ---------------------------------------------------------------------------
# reporting

def summarize(values) -> dict[str, float]:
    """Mean, population standard deviation, and max of a metric series."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("no values to summarize")
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=0)),
        "max": float(arr.max()),
    }


@dataclass
class EvalReport:
    """A named bundle of per-item metric values with summary statistics."""

    metrics: dict[str, list[float]]

    def summary(self) -> dict[str, dict[str, float]]:
        return {name: summarize(vals) for name, vals in self.metrics.items()}

    def to_json(self) -> str:
        payload = {
            "per_item": {k: list(v) for k, v in self.metrics.items()},
            "summary": self.summary(),
        }
        return json.dumps(payload, sort_keys=True, indent=2)
