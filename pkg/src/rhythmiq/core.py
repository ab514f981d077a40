"""Symbolic domain types: notes, performances, time signatures, beat grids.

All types are immutable after construction and validate their invariants in
``__post_init__``.  Times are seconds, pitches are MIDI numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError

ALLOWED_DENOMINATORS = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class NoteEvent:
    """A single played note.

    onset: seconds, >= 0.  duration: seconds, > 0.
    pitch: MIDI number 0..127.  velocity: 1..127.
    """

    onset: float
    duration: float
    pitch: int
    velocity: int = 64

    def __post_init__(self):
        if self.onset < 0:
            raise ValidationError(f"onset must be >= 0, got {self.onset}")
        if self.duration <= 0:
            raise ValidationError(f"duration must be > 0, got {self.duration}")
        if not 0 <= self.pitch <= 127:
            raise ValidationError(f"pitch must be in 0..127, got {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValidationError(f"velocity must be in 1..127, got {self.velocity}")

    @property
    def offset(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class Performance:
    """A sequence of played notes, kept sorted by (onset, pitch)."""

    notes: tuple[NoteEvent, ...]
    source_label: str = ""

    def __init__(self, notes, source_label: str = ""):
        ordered = tuple(sorted(notes, key=lambda n: (n.onset, n.pitch)))
        object.__setattr__(self, "notes", ordered)
        object.__setattr__(self, "source_label", source_label)

    def __len__(self) -> int:
        return len(self.notes)

    def onsets(self) -> list[float]:
        return [n.onset for n in self.notes]

    def is_monophonic(self, tol: float = 0.0) -> bool:
        return all(
            a.offset <= b.onset + tol
            for a, b in zip(self.notes, self.notes[1:])
        )


@dataclass(frozen=True)
class TimeSignature:
    numerator: int
    denominator: int

    def __post_init__(self):
        if self.numerator < 1:
            raise ValidationError(f"numerator must be >= 1, got {self.numerator}")
        if self.denominator not in ALLOWED_DENOMINATORS:
            raise ValidationError(
                f"denominator must be one of {ALLOWED_DENOMINATORS}, got {self.denominator}"
            )

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"

    @staticmethod
    def parse(text: str) -> "TimeSignature":
        num, _, den = text.partition("/")
        try:
            return TimeSignature(int(num), int(den))
        except ValueError as exc:
            raise ValidationError(f"bad time signature {text!r}") from exc


@dataclass(frozen=True)
class BeatGrid:
    """Beat times plus bar structure.

    ``phase`` is the index into ``beats`` of the first downbeat, so
    ``beats[phase::beats_per_bar]`` are the downbeat times.
    """

    beats: tuple[float, ...]
    beats_per_bar: int
    phase: int = 0
    time_signature: TimeSignature = field(default_factory=lambda: TimeSignature(4, 4))

    def __init__(self, beats, beats_per_bar, phase=0, time_signature=None):
        beats = tuple(float(b) for b in beats)
        if len(beats) < 2:
            raise ValidationError("a beat grid needs at least 2 beats")
        if any(b2 <= b1 for b1, b2 in zip(beats, beats[1:])):
            raise ValidationError("beat times must be strictly increasing")
        if beats_per_bar < 1:
            raise ValidationError(f"beats_per_bar must be >= 1, got {beats_per_bar}")
        if not 0 <= phase < beats_per_bar:
            raise ValidationError(
                f"phase must be in 0..{beats_per_bar - 1}, got {phase}"
            )
        if time_signature is None:
            time_signature = TimeSignature(beats_per_bar, 4)
        object.__setattr__(self, "beats", beats)
        object.__setattr__(self, "beats_per_bar", int(beats_per_bar))
        object.__setattr__(self, "phase", int(phase))
        object.__setattr__(self, "time_signature", time_signature)

    def downbeats(self) -> list[float]:
        return list(self.beats[self.phase :: self.beats_per_bar])

    def beat_position(self, index: int) -> int:
        """1-based position of beat ``index`` within its bar (1 = downbeat)."""
        return (index - self.phase) % self.beats_per_bar + 1


def enforce_monophony(perf: Performance) -> Performance:
    """Truncate overlapping notes so the performance is strictly monophonic.

    Each note is cut at the onset of its successor in (onset, pitch) order;
    notes whose truncated duration is <= 0 are dropped.  Idempotent.
    """
    out = []
    notes = perf.notes
    for i, n in enumerate(notes):
        duration = n.duration
        if i + 1 < len(notes):
            duration = min(duration, notes[i + 1].onset - n.onset)
        if duration > 0:
            if duration != n.duration:
                n = NoteEvent(n.onset, duration, n.pitch, n.velocity)
            out.append(n)
    return Performance(out, perf.source_label)


def load_beats(text: str) -> BeatGrid:
    """Parse a beat annotation CSV into a BeatGrid.

    Each data line is ``time_sec,beat_in_bar`` where beat_in_bar counts from 1
    at the downbeat.  Lines starting with ``#`` are comments; a non-numeric
    first line is treated as a header.
    """
    times: list[float] = []
    positions: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2:
            raise ValidationError(f"line {lineno}: expected 2 fields, got {len(fields)}")
        try:
            t = float(fields[0])
            b = int(float(fields[1]))
        except ValueError:
            if not times:
                continue  # header line
            raise ValidationError(f"line {lineno}: non-numeric beat record {line!r}")
        times.append(t)
        positions.append(b)
    if not times:
        raise ValidationError("no beat records found")
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValidationError("beat times must be strictly increasing")
    beats_per_bar = max(positions)
    if min(positions) < 1:
        raise ValidationError("beat positions count from 1")
    try:
        phase = positions.index(1)
    except ValueError:
        raise ValidationError("no downbeat (beat position 1) in annotation")
    return BeatGrid(times, beats_per_bar, phase)


def save_beats(grid: BeatGrid) -> str:
    """Serialize a BeatGrid back to beat CSV text."""
    lines = ["# time_sec,beat_in_bar"]
    for i, t in enumerate(grid.beats):
        lines.append(f"{t:.6f},{grid.beat_position(i)}")
    return "\n".join(lines) + "\n"
