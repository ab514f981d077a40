"""Command line interface.

Exit codes: 0 success, 1 bad input (I/O, format, validation), 2 insufficient
data, 3 grammar or configuration problems, 4 batch pairing failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .core import BeatGrid, load_beats
from .errors import (
    ConfigError,
    EmptyInputError,
    GrammarError,
    InsufficientDataError,
    NoTempoError,
    PairingError,
    RhythmiqError,
)
from .grammar import default_grammar, parse_grammar_file, serialize_grammar, train_grammar
from .metrics import (
    EditMetrics,
    downbeat_fmeasure,
    note_metrics,
    sdr,
    score_edit_metrics,
    summarize,
)
from .midi_io import load_midi
from .musicxml import emit_musicxml, parse_musicxml
from .quantize import QuantConfig, quantize_performance
from .tempo import TempoBounds, estimate_tempo_ioi, tempo_bounds


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable pipeline settings, overridable from a key=value config file."""

    alpha: float = 8.0
    rest_threshold: float = 0.5
    fallback_resolution: int = 4
    onset_tolerance: float = 0.05
    beat_tolerance: float = 0.07
    cluster_width: float = 0.025
    min_bpm: float = 40.0
    max_bpm: float = 350.0
    on_error: str = "fallback"
    rotation_mode: str = "all"  # which rotations to render: "all" or "best"
    fifths: int = 0

    def __post_init__(self):
        if self.on_error not in ("raise", "fallback"):
            raise ConfigError(f"on_error must be raise|fallback, got {self.on_error!r}")
        if self.rotation_mode not in ("all", "best"):
            raise ConfigError(
                f"rotation_mode must be all|best, got {self.rotation_mode!r}"
            )


def load_config(path: str | Path) -> PipelineConfig:
    """Read ``key = value`` lines (# comments allowed) into a PipelineConfig."""
    types = {f.name: f.type for f in fields(PipelineConfig)}
    casts = {"alpha": float, "rest_threshold": float, "fallback_resolution": int,
             "onset_tolerance": float, "beat_tolerance": float,
             "cluster_width": float, "min_bpm": float, "max_bpm": float,
             "on_error": str, "rotation_mode": str, "fifths": int}
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        try:
            overrides[key] = casts[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}")
    return replace(PipelineConfig(), **overrides)


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    for name in ("alpha", "fifths", "on_error", "rotation_mode"):
        value = getattr(args, name, None)
        if value is not None:
            cfg = replace(cfg, **{name: value})
    if getattr(args, "resolution", None) is not None:
        cfg = replace(cfg, fallback_resolution=args.resolution)
    if getattr(args, "tol", None) is not None:
        cfg = replace(cfg, onset_tolerance=args.tol, beat_tolerance=args.tol)
    return cfg


def _print_json(payload) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _round(x: float) -> float:
    return round(x, 4)


def _load_grammar(args):
    if getattr(args, "grammar", None):
        return parse_grammar_file(Path(args.grammar).read_text())
    return default_grammar()


def _load_downbeats(path: Path) -> list[float]:
    """Downbeat times from a beats CSV, or one time per line."""
    text = path.read_text()
    try:
        return load_beats(text).downbeats()
    except RhythmiqError:
        times = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            times.append(float(line.split(",")[0]))
        if not times:
            raise EmptyInputError(f"{path}: no downbeat times found")
        return times


def load_wav(path: str | Path) -> tuple[int, np.ndarray]:
    """Read a WAV file as float64 in [-1, 1], first channel only."""
    rate, data = wavfile.read(path)
    x = np.asarray(data)
    if x.ndim > 1:
        x = x[:, 0]
    if x.dtype == np.uint8:
        x = (x.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / float(np.iinfo(data.dtype).max + 1)
    else:
        x = x.astype(np.float64)
    return int(rate), x


# ---------------------------------------------------------------------------
# subcommands

def cmd_tempo(args) -> int:
    cfg = _config_from_args(args)
    perf = load_midi(Path(args.midi).read_bytes())
    estimate = estimate_tempo_ioi(
        perf,
        cluster_width=cfg.cluster_width,
        bpm_range=TempoBounds(cfg.min_bpm, cfg.max_bpm),
    )
    bounds = tempo_bounds(estimate)
    _print_json({
        "bpm": _round(estimate.bpm),
        "confidence": _round(estimate.confidence),
        "cluster_support": estimate.cluster_support,
        "min_bpm": _round(bounds.min_bpm),
        "max_bpm": _round(bounds.max_bpm),
    })
    return 0


def _quantize_to_xml(perf, grid, grammar, cfg: PipelineConfig, title=None):
    score, warnings = quantize_performance(
        perf, grid, grammar,
        QuantConfig(alpha=cfg.alpha, rest_threshold=cfg.rest_threshold),
        on_error=cfg.on_error,
        fallback_resolution=cfg.fallback_resolution,
    )
    xml = emit_musicxml(score, fifths=cfg.fifths, title=title)
    return xml, warnings


def cmd_quantize(args) -> int:
    cfg = _config_from_args(args)
    perf = load_midi(Path(args.midi).read_bytes())
    grid = load_beats(Path(args.beats).read_text())
    grammar = _load_grammar(args)
    xml, warnings = _quantize_to_xml(perf, grid, grammar, cfg, title=args.title)
    if args.out:
        out = Path(args.out)
        out.write_text(xml)
        if warnings:
            out.with_suffix(".warnings.txt").write_text("\n".join(warnings) + "\n")
    else:
        sys.stdout.write(xml)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_train_grammar(args) -> int:
    corpus = []
    for path in args.scores:
        score, _ = parse_musicxml(Path(path).read_text())
        corpus.append(score)
    grammar = train_grammar(corpus, smoothing=args.smoothing)
    text = serialize_grammar(grammar)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_rotations(args) -> int:
    cfg = _config_from_args(args)
    perf = load_midi(Path(args.midi).read_bytes())
    grid = load_beats(Path(args.beats).read_text())
    grammar = _load_grammar(args)
    ref = _load_downbeats(Path(args.ref)) if args.ref else None

    report = {"beats_per_bar": grid.beats_per_bar, "rotations": []}
    best = None
    entries = []
    for phase in range(grid.beats_per_bar):
        rotated = BeatGrid(grid.beats, grid.beats_per_bar, phase,
                           grid.time_signature)
        entry = {"phase": phase, "first_downbeat": rotated.downbeats()[0]}
        if ref is not None:
            f = downbeat_fmeasure(ref, rotated.downbeats(), cfg.beat_tolerance)
            entry["downbeat_f"] = _round(f)
            if best is None or f > best[0]:
                best = (f, phase)
        entries.append((entry, rotated))
        report["rotations"].append(entry)
    if best is not None:
        report["best_phase"] = best[1]
        report["best_downbeat_f"] = _round(best[0])
    if args.out_dir:
        keep = range(grid.beats_per_bar)
        if cfg.rotation_mode == "best":
            keep = [best[1] if best is not None else 0]
        for phase in keep:
            entry, rotated = entries[phase]
            xml, _ = _quantize_to_xml(perf, rotated, grammar, cfg)
            out = Path(args.out_dir) / f"{Path(args.midi).stem}.rot{phase}.musicxml"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(xml)
            entry["file"] = str(out)
    _print_json(report)
    return 0


# ---------------------------------------------------------------------------
# evaluation

def _pair_paths(ref: str, est: str, suffixes: tuple[str, ...]):
    rp, ep = Path(ref), Path(est)
    if rp.is_dir() != ep.is_dir():
        raise PairingError("reference and estimate must both be files or both directories")
    if not rp.is_dir():
        return [(rp.stem, rp, ep)]
    refs = {p.stem: p for p in sorted(rp.iterdir()) if p.suffix.lower() in suffixes}
    ests = {p.stem: p for p in sorted(ep.iterdir()) if p.suffix.lower() in suffixes}
    if not refs:
        raise PairingError(f"no {'/'.join(suffixes)} files in {rp}")
    unmatched_ref = sorted(set(refs) - set(ests))
    unmatched_est = sorted(set(ests) - set(refs))
    if unmatched_ref or unmatched_est:
        raise PairingError(
            f"unpaired stems; reference only: {unmatched_ref}, "
            f"estimate only: {unmatched_est}"
        )
    return [(stem, refs[stem], ests[stem]) for stem in sorted(refs)]


def _run_pairs(pairs, fn, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda pair: fn(pair[1], pair[2]), pairs))
    return [fn(r, e) for _, r, e in pairs]


def _emit_eval(pairs, results: list[dict]) -> None:
    if len(pairs) == 1:
        _print_json(results[0])
        return
    items = {stem: res for (stem, _, _), res in zip(pairs, results)}
    names = results[0].keys()
    summary = {
        name: {k: _round(v) for k, v in summarize([r[name] for r in results]).items()}
        for name in names
        if all(isinstance(r[name], (int, float)) for r in results)
    }
    _print_json({"items": items, "summary": summary})


def cmd_eval_notes(args) -> int:
    cfg = _config_from_args(args)
    pairs = _pair_paths(args.ref, args.est, (".mid", ".midi"))

    def one(ref_path: Path, est_path: Path) -> dict:
        ref = load_midi(ref_path.read_bytes())
        est = load_midi(est_path.read_bytes())
        m = note_metrics(ref, est, cfg.onset_tolerance)
        return {
            "precision": _round(m.precision),
            "recall": _round(m.recall),
            "f_measure": _round(m.f_measure),
            "matched": m.matched,
            "n_ref": m.n_ref,
            "n_est": m.n_est,
        }

    _emit_eval(pairs, _run_pairs(pairs, one, args.jobs))
    return 0


def cmd_eval_downbeats(args) -> int:
    cfg = _config_from_args(args)
    pairs = _pair_paths(args.ref, args.est, (".csv", ".txt"))

    def one(ref_path: Path, est_path: Path) -> dict:
        f = downbeat_fmeasure(
            _load_downbeats(ref_path), _load_downbeats(est_path),
            cfg.beat_tolerance,
        )
        return {"f_measure": _round(f)}

    _emit_eval(pairs, _run_pairs(pairs, one, args.jobs))
    return 0


def _edit_payload(m: EditMetrics) -> dict:
    return {
        "note_insertions": m.note_insertions,
        "note_deletions": m.note_deletions,
        "rest_insertions": m.rest_insertions,
        "rest_deletions": m.rest_deletions,
        "timesig_mismatches": m.timesig_mismatches,
        "note_insertion_rate": _round(m.note_insertion_rate),
        "note_deletion_rate": _round(m.note_deletion_rate),
        "rest_insertion_rate": _round(m.rest_insertion_rate),
        "rest_deletion_rate": _round(m.rest_deletion_rate),
        "timesig_mismatch_rate": _round(m.timesig_mismatch_rate),
        "total_error_rate": _round(m.total_error_rate),
        "n_ref_notes": m.n_ref_notes,
    }


def cmd_eval_score(args) -> int:
    pairs = _pair_paths(args.ref, args.est, (".musicxml", ".xml"))

    def one(ref_path: Path, est_path: Path) -> dict:
        ref, _ = parse_musicxml(ref_path.read_text())
        est, _ = parse_musicxml(est_path.read_text())
        return _edit_payload(score_edit_metrics(ref, est))

    _emit_eval(pairs, _run_pairs(pairs, one, args.jobs))
    return 0


def cmd_eval_sdr(args) -> int:
    pairs = _pair_paths(args.ref, args.est, (".wav",))

    def one(ref_path: Path, est_path: Path) -> dict:
        ref_rate, ref_sig = load_wav(ref_path)
        est_rate, est_sig = load_wav(est_path)
        if ref_rate != est_rate:
            raise RhythmiqError(
                f"sample rate mismatch: {ref_rate} vs {est_rate}"
            )
        return {"sdr_db": _round(sdr(ref_sig, est_sig))}

    _emit_eval(pairs, _run_pairs(pairs, one, args.jobs))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhythmiq",
        description="Monophonic performance-to-score transcription tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")

    p = sub.add_parser("tempo", parents=[common],
                       help="estimate tempo from note onsets")
    p.add_argument("midi")
    p.set_defaults(func=cmd_tempo)

    p = sub.add_parser("quantize", parents=[common],
                       help="quantize a performance against annotated beats")
    p.add_argument("midi")
    p.add_argument("--beats", required=True, help="beat annotation CSV")
    p.add_argument("--grammar", help="grammar file (default: built-in)")
    p.add_argument("--alpha", type=float, help="data-fit weight")
    p.add_argument("--resolution", type=int, help="fallback grid slots per beat")
    p.add_argument("--on-error", choices=("raise", "fallback"), dest="on_error")
    p.add_argument("--fifths", type=int, help="key signature for spelling")
    p.add_argument("--title", help="work title for the MusicXML output")
    p.add_argument("--out", help="output MusicXML path (default: stdout)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("train-grammar", parents=[common],
                       help="estimate grammar weights from MusicXML scores")
    p.add_argument("scores", nargs="+")
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--out", help="output grammar path (default: stdout)")
    p.set_defaults(func=cmd_train_grammar)

    p = sub.add_parser("rotations", parents=[common],
                       help="try every downbeat rotation of the beat grid")
    p.add_argument("midi")
    p.add_argument("--beats", required=True)
    p.add_argument("--grammar")
    p.add_argument("--alpha", type=float)
    p.add_argument("--ref", help="reference downbeat times (CSV)")
    p.add_argument("--tol", type=float, help="matching window in seconds")
    p.add_argument("--out-dir", dest="out_dir",
                   help="write rendered rotations here")
    p.add_argument("--rotations", choices=("all", "best"), dest="rotation_mode",
                   help="render every rotation or only the best-scoring one")
    p.set_defaults(func=cmd_rotations)

    ev = sub.add_parser("eval", help="evaluation metrics")
    evsub = ev.add_subparsers(dest="metric", required=True)

    p = evsub.add_parser("notes", parents=[common],
                         help="note precision/recall/F between MIDI files")
    p.add_argument("ref")
    p.add_argument("est")
    p.add_argument("--tol", type=float, help="onset window in seconds")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval_notes)

    p = evsub.add_parser("downbeats", parents=[common],
                         help="downbeat F-measure between annotation files")
    p.add_argument("ref")
    p.add_argument("est")
    p.add_argument("--tol", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval_downbeats)

    p = evsub.add_parser("score", parents=[common],
                         help="edit counts between MusicXML scores")
    p.add_argument("ref")
    p.add_argument("est")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval_score)

    p = evsub.add_parser("sdr", parents=[common],
                         help="signal-to-distortion ratio between WAV files")
    p.add_argument("ref")
    p.add_argument("est")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval_sdr)

    return parser


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (InsufficientDataError, NoTempoError, EmptyInputError)):
        return 2
    if isinstance(exc, (GrammarError, ConfigError)):
        return 3
    if isinstance(exc, PairingError):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RhythmiqError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
