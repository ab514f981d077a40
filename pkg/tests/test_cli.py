import json
import random

import numpy as np
import pytest
from scipy.io import wavfile

from rhythmiq import (
    BeatGrid,
    ConfigError,
    NoteEvent,
    Performance,
    default_grammar,
    emit_musicxml,
    parse_grammar_file,
    sample_score,
    save_beats,
    save_midi,
)
from rhythmiq.cli import PipelineConfig, load_config, main
from rhythmiq.musicxml import parse_musicxml

TINY_GRAMMAR = "maxdepth = 1\nstart 4/4 = S\nS -> note : 0.6\nS -> rest : 0.4\n"


def _quarters_midi(tmp_path, n=16, bpm=120.0, name="perf.mid"):
    period = 60.0 / bpm
    perf = Performance(
        [NoteEvent(k * period, period * 0.9, 60 + k % 12, 80) for k in range(n)]
    )
    path = tmp_path / name
    path.write_bytes(save_midi(perf, bpm))
    return path


def _beats_csv(tmp_path, n_beats, period=0.5, phase=0, name="beats.csv"):
    grid = BeatGrid([period * k for k in range(n_beats)], 4, phase)
    path = tmp_path / name
    path.write_text(save_beats(grid))
    return path


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


# --- config ------------------------------------------------------------------

def test_load_config_overrides(tmp_path):
    cfg_file = tmp_path / "pipeline.cfg"
    cfg_file.write_text(
        "# tuning\nalpha = 2.5\nfallback_resolution = 8\non_error = raise\n"
    )
    cfg = load_config(cfg_file)
    assert cfg.alpha == 2.5
    assert cfg.fallback_resolution == 8
    assert cfg.on_error == "raise"
    assert cfg.rest_threshold == 0.5


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 1\n")
    with pytest.raises(ConfigError, match="unknown setting"):
        load_config(bad)
    bad.write_text("alpha\n")
    with pytest.raises(ConfigError, match="expected key = value"):
        load_config(bad)
    bad.write_text("alpha = fast\n")
    with pytest.raises(ConfigError, match="bad value"):
        load_config(bad)


def test_pipeline_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(on_error="ignore")
    with pytest.raises(ConfigError):
        PipelineConfig(rotation_mode="none")


# --- tempo -------------------------------------------------------------------

def test_tempo_subcommand(tmp_path, capsys):
    midi = _quarters_midi(tmp_path)
    assert main(["tempo", str(midi)]) == 0
    payload = _json_out(capsys)
    assert abs(payload["bpm"] - 120.0) <= 0.5
    assert payload["min_bpm"] == pytest.approx(105.0)
    assert payload["max_bpm"] == pytest.approx(350.0)
    assert payload["cluster_support"] > 0


def test_tempo_insufficient_data_exits_2(tmp_path, capsys):
    midi = _quarters_midi(tmp_path, n=2)
    assert main(["tempo", str(midi)]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path, capsys):
    assert main(["tempo", str(tmp_path / "nope.mid")]) == 1
    assert "error:" in capsys.readouterr().err


# --- quantize ----------------------------------------------------------------

def test_quantize_writes_score(tmp_path, capsys):
    midi = _quarters_midi(tmp_path, n=8)
    beats = _beats_csv(tmp_path, 9)
    out = tmp_path / "score.musicxml"
    assert main(["quantize", str(midi), "--beats", str(beats),
                 "--out", str(out)]) == 0
    score, warnings = parse_musicxml(out.read_text())
    assert not warnings
    assert len(score.measures) == 2
    for m in score.measures:
        assert m.leaf_labels() == ["note"] * 4
    assert not (tmp_path / "score.warnings.txt").exists()
    assert capsys.readouterr().err == ""


def test_quantize_stdout_and_title(tmp_path, capsys):
    midi = _quarters_midi(tmp_path, n=4)
    beats = _beats_csv(tmp_path, 5)
    assert main(["quantize", str(midi), "--beats", str(beats),
                 "--title", "Now's the Time"]) == 0
    out = capsys.readouterr().out
    assert "score-partwise" in out
    assert "<work-title>Now&#x27;s the Time</work-title>" in out or \
        "<work-title>Now's the Time</work-title>" in out


def test_quantize_warning_sidecar(tmp_path, capsys):
    grammar = tmp_path / "tiny.grammar"
    grammar.write_text(TINY_GRAMMAR)
    perf = Performance([NoteEvent(0.0, 0.5, 60), NoteEvent(1.0, 0.5, 62)])
    midi = tmp_path / "two.mid"
    midi.write_bytes(save_midi(perf, 120.0))
    beats = _beats_csv(tmp_path, 5)
    out = tmp_path / "two.musicxml"
    assert main(["quantize", str(midi), "--beats", str(beats),
                 "--grammar", str(grammar), "--out", str(out)]) == 0
    sidecar = tmp_path / "two.warnings.txt"
    assert sidecar.exists()
    assert "fallback" in sidecar.read_text()
    assert "fallback" in capsys.readouterr().err


def test_quantize_on_error_raise_exits_1(tmp_path, capsys):
    grammar = tmp_path / "tiny.grammar"
    grammar.write_text(TINY_GRAMMAR)
    perf = Performance([NoteEvent(0.0, 0.5, 60), NoteEvent(1.0, 0.5, 62)])
    midi = tmp_path / "two.mid"
    midi.write_bytes(save_midi(perf, 120.0))
    beats = _beats_csv(tmp_path, 5)
    assert main(["quantize", str(midi), "--beats", str(beats),
                 "--grammar", str(grammar), "--on-error", "raise"]) == 1


def test_bad_config_exits_3(tmp_path, capsys):
    midi = _quarters_midi(tmp_path)
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["tempo", str(midi), "--config", str(cfg)]) == 3


# --- train-grammar -----------------------------------------------------------

def test_train_grammar_from_scores(tmp_path, capsys):
    rng = random.Random(5)
    paths = []
    for i in range(3):
        score = sample_score(default_grammar(), 4, rng)
        p = tmp_path / f"score{i}.musicxml"
        p.write_text(emit_musicxml(score))
        paths.append(str(p))
    out = tmp_path / "trained.grammar"
    assert main(["train-grammar", *paths, "--out", str(out)]) == 0
    trained = parse_grammar_file(out.read_text())
    assert "M4_4" in trained.nonterminals


# --- rotations ---------------------------------------------------------------

def _rotation_setup(tmp_path):
    # performance aligned so true downbeats sit at phase 2 of the grid
    midi = _quarters_midi(tmp_path, n=16)
    beats = _beats_csv(tmp_path, 17)
    grid_times = [0.5 * k for k in range(17)]
    ref = tmp_path / "ref_downbeats.txt"
    ref.write_text("\n".join(f"{t:.3f}" for t in grid_times[2::4]) + "\n")
    return midi, beats, ref


def test_rotations_report_finds_phase(tmp_path, capsys):
    midi, beats, ref = _rotation_setup(tmp_path)
    assert main(["rotations", str(midi), "--beats", str(beats),
                 "--ref", str(ref)]) == 0
    payload = _json_out(capsys)
    assert payload["beats_per_bar"] == 4
    assert len(payload["rotations"]) == 4
    assert payload["best_phase"] == 2
    assert payload["best_downbeat_f"] == 100.0


def test_rotations_render_all_vs_best(tmp_path, capsys):
    midi, beats, ref = _rotation_setup(tmp_path)
    all_dir = tmp_path / "all"
    best_dir = tmp_path / "best"
    assert main(["rotations", str(midi), "--beats", str(beats),
                 "--ref", str(ref), "--out-dir", str(all_dir)]) == 0
    capsys.readouterr()
    assert main(["rotations", str(midi), "--beats", str(beats),
                 "--ref", str(ref), "--out-dir", str(best_dir),
                 "--rotations", "best"]) == 0
    payload = _json_out(capsys)
    assert len(list(all_dir.glob("*.musicxml"))) == 4
    best_files = list(best_dir.glob("*.musicxml"))
    assert len(best_files) == 1
    assert best_files[0].name.endswith(".rot2.musicxml")
    parse_musicxml(best_files[0].read_text())
    assert payload["rotations"][2]["file"] == str(best_files[0])


def test_rotation_mode_flag_overrides_config(tmp_path, capsys):
    midi, beats, ref = _rotation_setup(tmp_path)
    cfg = tmp_path / "pipeline.cfg"
    cfg.write_text("rotation_mode = best\n")
    out_dir = tmp_path / "rendered"
    assert main(["rotations", str(midi), "--beats", str(beats),
                 "--ref", str(ref), "--config", str(cfg),
                 "--out-dir", str(out_dir), "--rotations", "all"]) == 0
    assert len(list(out_dir.glob("*.musicxml"))) == 4


# --- eval --------------------------------------------------------------------

def test_eval_notes_identical(tmp_path, capsys):
    midi = _quarters_midi(tmp_path)
    assert main(["eval", "notes", str(midi), str(midi)]) == 0
    payload = _json_out(capsys)
    assert payload["f_measure"] == 100.0
    assert payload["matched"] == payload["n_ref"] == payload["n_est"] == 16


def test_eval_notes_directory_batch(tmp_path, capsys):
    ref_dir = tmp_path / "ref"
    est_dir = tmp_path / "est"
    ref_dir.mkdir()
    est_dir.mkdir()
    for stem, n in [("alpha", 8), ("beta", 12)]:
        _quarters_midi(ref_dir, n=n, name=f"{stem}.mid")
        _quarters_midi(est_dir, n=n, name=f"{stem}.mid")
    assert main(["eval", "notes", str(ref_dir), str(est_dir), "--jobs", "2"]) == 0
    payload = _json_out(capsys)
    assert set(payload) == {"items", "summary"}
    assert set(payload["items"]) == {"alpha", "beta"}
    for stats in payload["summary"].values():
        assert set(stats) == {"mean", "std", "max"}
    assert payload["summary"]["f_measure"] == {"mean": 100.0, "std": 0.0, "max": 100.0}


def test_eval_unpaired_directories_exit_4(tmp_path, capsys):
    ref_dir = tmp_path / "ref"
    est_dir = tmp_path / "est"
    ref_dir.mkdir()
    est_dir.mkdir()
    _quarters_midi(ref_dir, name="only_ref.mid")
    _quarters_midi(est_dir, name="only_est.mid")
    assert main(["eval", "notes", str(ref_dir), str(est_dir)]) == 4
    assert "unpaired" in capsys.readouterr().err


def test_eval_mixed_file_and_directory_exit_4(tmp_path, capsys):
    midi = _quarters_midi(tmp_path)
    assert main(["eval", "notes", str(midi), str(tmp_path)]) == 4


def test_eval_downbeats(tmp_path, capsys):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("0.0\n2.0\n4.0\n")
    b.write_text("0.01\n2.0\n4.05\n")
    assert main(["eval", "downbeats", str(a), str(b)]) == 0
    assert _json_out(capsys)["f_measure"] == 100.0


def test_eval_score_identical(tmp_path, capsys):
    score = sample_score(default_grammar(), 4, random.Random(2))
    p = tmp_path / "s.musicxml"
    p.write_text(emit_musicxml(score))
    assert main(["eval", "score", str(p), str(p)]) == 0
    payload = _json_out(capsys)
    assert payload["total_error_rate"] == 0.0
    assert payload["timesig_mismatches"] == 0


def test_eval_sdr_identity(tmp_path, capsys):
    rate = 22050
    signal = (0.4 * np.sin(np.linspace(0, 40, rate)) * 32767).astype(np.int16)
    ref = tmp_path / "ref.wav"
    est = tmp_path / "est.wav"
    wavfile.write(ref, rate, signal)
    wavfile.write(est, rate, signal)
    assert main(["eval", "sdr", str(ref), str(est)]) == 0
    assert _json_out(capsys)["sdr_db"] == 200.0
