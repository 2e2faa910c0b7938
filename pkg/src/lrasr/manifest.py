"""Utterance manifests: JSON-lines, one object per clip, versioned header."""

import json
import wave
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import DataError

MANIFEST_VERSION = 1


@dataclass
class UtteranceRecord:
    """One audio clip with its transcript and provenance.

    ``text`` may be empty (pretraining-only data); ``lang`` must not be.
    """

    audio_path: str
    duration_s: float
    text: str
    lang: str
    source: str = ""

    def __post_init__(self):
        if not self.lang:
            raise DataError(f"{self.audio_path}: empty lang tag")
        if self.duration_s <= 0:
            raise DataError(f"{self.audio_path}: nonpositive duration")

    @property
    def utt_id(self) -> str:
        return Path(self.audio_path).stem


def wav_duration_s(path) -> float:
    """Clip duration from the WAV header alone."""
    with wave.open(str(path), "rb") as w:
        return w.getnframes() / w.getframerate()


def write_manifest(records, path) -> None:
    """Write records as JSON-lines under a {"version": 1} header."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"version": MANIFEST_VERSION}) + "\n")
        for r in records:
            f.write(json.dumps(asdict(r), ensure_ascii=False) + "\n")


def read_manifest(path, resolve_audio: bool = False) -> list[UtteranceRecord]:
    """Read a manifest; malformed lines are reported with their line numbers.

    With ``resolve_audio``, relative audio paths are resolved against the
    manifest's own directory, so manifests can sit next to their clips.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    if not lines:
        raise DataError(f"{path}: empty file, expected a manifest header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:1: bad header: {e}") from e
    if not isinstance(header, dict) or header.get("version") != MANIFEST_VERSION:
        raise DataError(f"{path}:1: unsupported manifest header {lines[0].strip()!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            record = UtteranceRecord(**obj)
        except (json.JSONDecodeError, TypeError) as e:
            raise DataError(f"{path}:{lineno}: bad record: {e}") from e
        if resolve_audio and not Path(record.audio_path).is_absolute():
            record.audio_path = str(Path(path).parent / record.audio_path)
        records.append(record)
    return records


def build_manifest(records, output_path, duration_tolerance_s: float = 0.010) -> None:
    """Validate records against their audio files, then write the manifest.

    Any missing file or duration mismatch beyond ``duration_tolerance_s``
    fails the whole build (nothing is written) with a per-record report.
    """
    failures = []
    for r in records:
        path = Path(r.audio_path)
        if not path.is_file():
            failures.append(f"{r.audio_path}: file not found")
            continue
        try:
            actual = wav_duration_s(path)
        except (wave.Error, EOFError) as e:
            failures.append(f"{r.audio_path}: unreadable WAV ({e})")
            continue
        if abs(actual - r.duration_s) > duration_tolerance_s:
            failures.append(
                f"{r.audio_path}: stated duration {r.duration_s:.3f}s "
                f"but file has {actual:.3f}s"
            )
    if failures:
        raise DataError(
            f"{len(failures)} of {len(records)} records failed validation",
            failures=failures,
        )
    write_manifest(records, output_path)
