"""Standard MIDI File reading and writing.

Supports format 0 and format 1 files with metrical (ticks-per-quarter)
division.  Reading honors the full tempo map when converting ticks to
seconds; writing emits a format 0 file at 480 ticks per quarter with a
single tempo event.
"""
from __future__ import annotations

import struct

from .core import NoteEvent, Performance
from .errors import EmptyInputError, FormatError

WRITE_TPQ = 480
DEFAULT_TEMPO = 500000  # microseconds per quarter, 120 bpm
MAX_TEMPO = 0xFFFFFF


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated MIDI data")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise FormatError("variable-length quantity longer than 4 bytes")

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


# data byte count for channel messages by high nibble
_CHANNEL_DATA_BYTES = {
    0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2,
}


def _parse_track(chunk: bytes):
    """Yield (tick, kind, payload) events from one MTrk chunk body."""
    r = _Reader(chunk)
    tick = 0
    running = None
    while not r.exhausted:
        tick += r.varlen()
        status = r.byte()
        if status < 0x80:
            if running is None:
                raise FormatError("data byte with no running status")
            r.pos -= 1
            status = running
        if status == 0xFF:
            meta_type = r.byte()
            length = r.varlen()
            payload = r.take(length)
            running = None
            if meta_type == 0x51:
                if length != 3:
                    raise FormatError("set-tempo meta event must carry 3 bytes")
                tempo = int.from_bytes(payload, "big")
                yield tick, "tempo", tempo
            elif meta_type == 0x2F:
                yield tick, "end", None
                return
        elif status in (0xF0, 0xF7):
            length = r.varlen()
            r.take(length)
            running = None
        elif status >= 0xF0:
            raise FormatError(f"unsupported system message 0x{status:02x}")
        else:
            running = status
            kind = status & 0xF0
            payload = r.take(_CHANNEL_DATA_BYTES[kind])
            channel = status & 0x0F
            if kind == 0x90 and payload[1] > 0:
                yield tick, "on", (channel, payload[0], payload[1])
            elif kind == 0x80 or (kind == 0x90 and payload[1] == 0):
                yield tick, "off", (channel, payload[0])


class _TempoMap:
    """Piecewise tick-to-seconds conversion from set-tempo events."""

    def __init__(self, tempo_events: list[tuple[int, int]], tpq: int):
        self.tpq = tpq
        events = sorted(tempo_events)
        if not events or events[0][0] > 0:
            events.insert(0, (0, DEFAULT_TEMPO))
        # anchors of (tick, seconds, us_per_quarter)
        self.anchors = [(events[0][0], 0.0, events[0][1])]
        for tick, tempo in events[1:]:
            prev_tick, prev_sec, prev_tempo = self.anchors[-1]
            sec = prev_sec + (tick - prev_tick) * prev_tempo / (tpq * 1e6)
            self.anchors.append((tick, sec, tempo))

    def seconds(self, tick: int) -> float:
        anchor = self.anchors[0]
        for cand in self.anchors:
            if cand[0] > tick:
                break
            anchor = cand
        a_tick, a_sec, a_tempo = anchor
        return a_sec + (tick - a_tick) * a_tempo / (self.tpq * 1e6)


def load_midi(data: bytes) -> Performance:
    """Parse a format 0 or 1 Standard MIDI File into a Performance.

    Note-on events with velocity 0 are treated as note-offs.  All tracks are
    merged; tempo events from any track contribute to the tempo map.
    """
    r = _Reader(data)
    if r.take(4) != b"MThd":
        raise FormatError("missing MThd header")
    if struct.unpack(">I", r.take(4))[0] != 6:
        raise FormatError("bad MThd length")
    fmt, ntracks, division = struct.unpack(">HHH", r.take(6))
    if fmt not in (0, 1):
        raise FormatError(f"unsupported MIDI format {fmt}")
    if division & 0x8000:
        raise FormatError("SMPTE division is not supported")
    if division == 0:
        raise FormatError("division must be positive")

    tracks = []
    for _ in range(ntracks):
        if r.take(4) != b"MTrk":
            raise FormatError("missing MTrk chunk")
        length = struct.unpack(">I", r.take(4))[0]
        tracks.append(list(_parse_track(r.take(length))))

    tempo_events = [
        (tick, payload)
        for track in tracks
        for tick, kind, payload in track
        if kind == "tempo"
    ]
    tmap = _TempoMap(tempo_events, division)

    notes = []
    for track in tracks:
        open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        last_tick = 0
        for tick, kind, payload in track:
            last_tick = max(last_tick, tick)
            if kind == "on":
                channel, pitch, velocity = payload
                open_notes.setdefault((channel, pitch), []).append((tick, velocity))
            elif kind == "off":
                channel, pitch = payload
                stack = open_notes.get((channel, pitch))
                if stack:
                    on_tick, velocity = stack.pop(0)
                    if tick > on_tick:
                        notes.append((on_tick, tick, pitch, velocity))
        # close anything left hanging at end of track
        for (channel, pitch), stack in open_notes.items():
            for on_tick, velocity in stack:
                if last_tick > on_tick:
                    notes.append((on_tick, last_tick, pitch, velocity))

    if not notes:
        raise EmptyInputError("MIDI file contains no notes")

    events = [
        NoteEvent(
            onset=tmap.seconds(on),
            duration=tmap.seconds(off) - tmap.seconds(on),
            pitch=pitch,
            velocity=max(1, velocity),
        )
        for on, off, pitch, velocity in notes
    ]
    return Performance(events)


def _write_varlen(value: int) -> bytes:
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(chunks))


def save_midi(perf: Performance, bpm: float) -> bytes:
    """Serialize a Performance to a format 0 MIDI file at a fixed tempo.

    Uses 480 ticks per quarter.  Onset and offset times round-trip through
    load_midi within one tick.
    """
    if not perf.notes:
        raise EmptyInputError("cannot write a MIDI file with no notes")
    if bpm <= 0:
        raise ValueError(f"bpm must be positive, got {bpm}")
    tempo = round(60e6 / bpm)
    if tempo > MAX_TEMPO:
        raise ValueError(f"bpm {bpm} too slow to encode (tempo field overflow)")

    ticks_per_sec = WRITE_TPQ * 1e6 / tempo
    events = []  # (tick, order, message bytes)
    for n in perf.notes:
        on_tick = round(n.onset * ticks_per_sec)
        off_tick = max(on_tick + 1, round(n.offset * ticks_per_sec))
        events.append((on_tick, 1, bytes((0x90, n.pitch, n.velocity))))
        events.append((off_tick, 0, bytes((0x80, n.pitch, 0))))
    events.sort(key=lambda e: (e[0], e[1]))

    body = bytearray()
    body += _write_varlen(0) + bytes((0xFF, 0x51, 0x03)) + tempo.to_bytes(3, "big")
    prev_tick = 0
    for tick, _, message in events:
        body += _write_varlen(tick - prev_tick) + message
        prev_tick = tick
    body += _write_varlen(0) + bytes((0xFF, 0x2F, 0x00))

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, WRITE_TPQ)
    track = b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    return header + track
