import numpy as np
import pytest

from lrasr.audio import AudioClip, write_wav
from lrasr.errors import DataError
from lrasr.manifest import (
    UtteranceRecord,
    build_manifest,
    read_manifest,
    wav_duration_s,
    write_manifest,
)

RATE = 16000


def make_wav(path, dur_s):
    write_wav(path, AudioClip(np.zeros(int(dur_s * RATE)) + 0.1, RATE))
    return str(path)


def records_for(tmp_path, n=3):
    out = []
    for i in range(n):
        p = make_wav(tmp_path / f"utt{i}.wav", 2.0 + i)
        out.append(UtteranceRecord(p, 2.0 + i, f"text {i}", "syn", "fixture"))
    return out


def test_round_trip_identity(tmp_path):
    recs = records_for(tmp_path)
    mpath = tmp_path / "m.jsonl"
    write_manifest(recs, mpath)
    assert read_manifest(mpath) == recs


def test_empty_manifest_header_only(tmp_path):
    mpath = tmp_path / "m.jsonl"
    write_manifest([], mpath)
    assert mpath.read_text().strip() == '{"version": 1}'
    assert read_manifest(mpath) == []


def test_unicode_text_preserved(tmp_path):
    p = make_wav(tmp_path / "u.wav", 1.5)
    rec = UtteranceRecord(p, 1.5, "アノ kotan 'ohta", "ain", "tapes")
    mpath = tmp_path / "m.jsonl"
    write_manifest([rec], mpath)
    assert "アノ" in mpath.read_text(encoding="utf-8")
    assert read_manifest(mpath)[0].text == "アノ kotan 'ohta"


def test_build_manifest_validates_and_writes(tmp_path):
    recs = records_for(tmp_path)
    mpath = tmp_path / "m.jsonl"
    build_manifest(recs, mpath)
    assert read_manifest(mpath) == recs


def test_build_manifest_rejects_duration_mismatch(tmp_path):
    recs = records_for(tmp_path)
    bad = UtteranceRecord(recs[0].audio_path, recs[0].duration_s + 1.0,
                          "x", "syn", "fixture")
    mpath = tmp_path / "m.jsonl"
    with pytest.raises(DataError) as exc:
        build_manifest([bad] + recs[1:], mpath)
    assert any("utt0.wav" in f for f in exc.value.failures)
    assert not mpath.exists()


def test_build_manifest_rejects_missing_file(tmp_path):
    rec = UtteranceRecord(str(tmp_path / "nope.wav"), 2.0, "x", "syn", "s")
    with pytest.raises(DataError) as exc:
        build_manifest([rec], tmp_path / "m.jsonl")
    assert "not found" in exc.value.failures[0]


def test_build_manifest_tolerates_10ms(tmp_path):
    p = make_wav(tmp_path / "a.wav", 2.0)
    rec = UtteranceRecord(p, 2.004, "x", "syn", "s")
    build_manifest([rec], tmp_path / "m.jsonl")  # within tolerance


def test_read_rejects_bad_header(tmp_path):
    mpath = tmp_path / "m.jsonl"
    mpath.write_text('{"version": 99}\n')
    with pytest.raises(DataError, match="unsupported"):
        read_manifest(mpath)
    mpath.write_text("")
    with pytest.raises(DataError, match="empty"):
        read_manifest(mpath)


def test_read_reports_line_numbers(tmp_path):
    mpath = tmp_path / "m.jsonl"
    mpath.write_text('{"version": 1}\nnot json\n')
    with pytest.raises(DataError, match=":2:"):
        read_manifest(mpath)


def test_record_invariants():
    with pytest.raises(DataError):
        UtteranceRecord("a.wav", 1.0, "x", "", "s")
    with pytest.raises(DataError):
        UtteranceRecord("a.wav", 0.0, "x", "syn", "s")


def test_wav_duration(tmp_path):
    p = make_wav(tmp_path / "d.wav", 3.25)
    assert wav_duration_s(p) == pytest.approx(3.25, abs=1e-6)


def test_utt_id_is_stem(tmp_path):
    rec = UtteranceRecord("/data/clips/utt_042.wav", 2.0, "x", "syn", "s")
    assert rec.utt_id == "utt_042"
