"""Tempo estimator robustness sweep.

Two experiments on synthetic performances:

  1. Isochronous quarter notes across the whole tempo range.  The estimator
     scores IOI clusters together with their integer multiples, so beyond a
     certain speed the doubled period collects more harmonic support and the
     estimate locks one metrical level down.  The sweep locates that boundary.

  2. Swung eighth notes at a fixed tempo, sweeping the long:short ratio at
     two stream lengths.  Mild and hard swing recover the beat tempo, but in
     a middle band of ratios a slower period divides both swing IOI classes
     near-exactly and wins the harmonic vote, an error that longer streams
     consolidate rather than fix.
"""
import argparse

from rhythmiq import NoteEvent, Performance, estimate_tempo_ioi


def isochronous(bpm: float, n: int) -> Performance:
    period = 60.0 / bpm
    return Performance([NoteEvent(period * k, 0.05, 60) for k in range(n)])


def swung(bpm: float, ratio: float, n_beats: int) -> Performance:
    period = 60.0 / bpm
    long = period * ratio / (1.0 + ratio)
    notes = []
    for k in range(n_beats):
        notes.append(NoteEvent(period * k, 0.05, 60))
        notes.append(NoteEvent(period * k + long, 0.05, 62))
    return Performance(notes)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--notes", type=int, default=24, help="events per trial")
    ap.add_argument("--step", type=float, default=10.0, help="bpm increment")
    args = ap.parse_args()

    print("isochronous pulse: estimate vs truth")
    print(f"{'true bpm':>9}  {'estimated':>9}  {'est/true':>8}  {'support':>7}")
    bpm = 40.0
    boundary = None
    while bpm <= 300.0:
        est = estimate_tempo_ioi(isochronous(bpm, args.notes))
        ratio = est.bpm / bpm
        flag = "" if abs(est.bpm - bpm) <= 0.5 else "  <- octave error"
        if flag and boundary is None:
            boundary = bpm
        print(f"{bpm:9.0f}  {est.bpm:9.1f}  {ratio:8.2f}  "
              f"{est.cluster_support:7d}{flag}")
        bpm += args.step
    if boundary is not None:
        print(f"\nestimate locks one level down from {boundary:.0f} bpm;"
              " slower pulses are recovered exactly")

    print("\nswung eighths at 120 bpm: estimate vs swing ratio")
    print(f"{'ratio':>6}  {'8 beats':>8}  {'24 beats':>9}")
    for tenths in range(10, 31, 2):
        ratio = tenths / 10.0
        short = estimate_tempo_ioi(swung(120.0, ratio, 8))
        long_ = estimate_tempo_ioi(swung(120.0, ratio, 24))
        print(f"{ratio:6.1f}  {short.bpm:8.1f}  {long_.bpm:9.1f}")


if __name__ == "__main__":
    main()
