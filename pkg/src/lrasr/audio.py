"""WAV I/O, downmixing, band-limited resampling, and silence segmentation.

Audio is RIFF/WAVE 16-bit signed little-endian PCM throughout.  Samples are
normalized to [-1, 1] by dividing by 32768 on read and written back with
round-and-clip, so a read-write cycle is bit-exact.
"""

import math
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample_poly

from .errors import DataError, UsageError

FRAME_MS = 20  # RMS analysis window for silence detection


@dataclass
class AudioClip:
    """PCM audio: ``samples`` is (n,) for mono or (n, channels) otherwise."""

    samples: np.ndarray
    sample_rate: int
    channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sample_rate


@dataclass
class SegmentationParams:
    silence_threshold_db: float = -40.0
    min_silence_ms: float = 300.0
    min_clip_s: float = 2.0
    max_clip_s: float = 15.0
    min_keep_s: float = 1.0

    def __post_init__(self):
        if not 0 < self.min_clip_s <= self.max_clip_s:
            raise UsageError("need 0 < min_clip_s <= max_clip_s")
        if self.min_keep_s > self.min_clip_s:
            raise UsageError("min_keep_s must not exceed min_clip_s")


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM WAV file."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getsampwidth() != 2:
                raise DataError(f"{path}: only 16-bit PCM supported, "
                                f"got {8 * w.getsampwidth()}-bit")
            channels = w.getnchannels()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as e:
        raise DataError(f"{path}: not a valid WAV file ({e})") from e
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        data = data.reshape(-1, channels)
    return AudioClip(data, rate, channels)


def write_wav(path, clip: AudioClip) -> None:
    """Write 16-bit PCM; samples are rounded and clipped to int16 range."""
    data = np.atleast_1d(clip.samples)
    if data.ndim == 1:
        channels = 1
    else:
        channels = data.shape[1]
    ints = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(ints.tobytes())


def downmix(clip: AudioClip) -> AudioClip:
    """Average channels to mono."""
    if clip.channels == 1:
        return clip
    return AudioClip(clip.samples.mean(axis=1), clip.sample_rate, 1)


def resample_mono(clip: AudioClip, target_rate: int) -> AudioClip:
    """Downmix to mono and resample with a polyphase Kaiser-windowed filter.

    Already-canonical input (mono at ``target_rate``) is returned unchanged,
    so the operation is idempotent.  Edge samples are extended (not
    zero-padded) before filtering, which keeps constant signals constant.
    """
    if not (isinstance(target_rate, (int, np.integer)) and target_rate > 0):
        raise UsageError(f"target rate must be a positive integer, got {target_rate!r}")
    mono = downmix(clip)
    if mono.sample_rate == target_rate:
        return mono
    if mono.samples.size == 0:
        return AudioClip(np.zeros(0), target_rate, 1)
    g = math.gcd(int(target_rate), int(mono.sample_rate))
    out = resample_poly(
        mono.samples,
        target_rate // g,
        mono.sample_rate // g,
        window=("kaiser", 14.0),
        padtype="edge",
    )
    return AudioClip(np.clip(out, -1.0, 1.0), int(target_rate), 1)


@dataclass
class Segment:
    """Half-open sample range [start, end) with its disposition."""

    start: int
    end: int
    kind: str  # "keep" | "discard" | "silence"

    @property
    def length(self) -> int:
        return self.end - self.start


def _frame_rms_db(samples: np.ndarray, rate: int) -> np.ndarray:
    """Per-frame RMS in dBFS over non-overlapping FRAME_MS windows.

    The trailing partial frame is included and measured over its true length.
    """
    frame_len = max(1, int(round(rate * FRAME_MS / 1000.0)))
    n_frames = (len(samples) + frame_len - 1) // frame_len
    db = np.empty(n_frames)
    for i in range(n_frames):
        chunk = samples[i * frame_len:(i + 1) * frame_len]
        rms = float(np.sqrt(np.mean(chunk**2)))
        db[i] = -np.inf if rms == 0.0 else 20.0 * np.log10(rms)
    return db


def _silence_intervals(samples, rate, params) -> list[tuple[int, int]]:
    """Sample ranges of silence: runs of >= min_silence_ms sub-threshold frames."""
    frame_len = max(1, int(round(rate * FRAME_MS / 1000.0)))
    db = _frame_rms_db(samples, rate)
    quiet = db < params.silence_threshold_db
    need = max(1, int(math.ceil(params.min_silence_ms / FRAME_MS)))
    intervals = []
    i = 0
    n = len(quiet)
    while i < n:
        if quiet[i]:
            j = i
            while j < n and quiet[j]:
                j += 1
            if j - i >= need:
                start = i * frame_len
                end = min(j * frame_len, len(samples))
                intervals.append((start, end))
            i = j
        else:
            i += 1
    return intervals


def segment_plan(clip: AudioClip, params: SegmentationParams) -> list[Segment]:
    """Partition the clip into keep/discard/silence segments.

    Speech spans between silence midpoints become clips when their duration
    lands in [min_clip_s, max_clip_s].  Shorter candidate spans absorb the
    following silence and speech (the cut at that silence is skipped).  Spans
    longer than max_clip_s with no usable silence are force-split at
    max_clip_s boundaries; any remaining span shorter than min_clip_s is
    discarded, so every emitted clip obeys the [min_clip_s, max_clip_s]
    bounds.  min_keep_s <= min_clip_s is the absolute exclusion floor; to
    keep clips down to it, lower min_clip_s.  The segments partition
    [0, len) exactly.
    """
    samples = clip.samples
    rate = clip.sample_rate
    n = len(samples)
    if n == 0:
        return []
    min_clip = int(round(params.min_clip_s * rate))
    max_clip = int(round(params.max_clip_s * rate))

    intervals = _silence_intervals(samples, rate, params)
    plan: list[Segment] = []

    # leading / trailing silence is stripped outright
    speech_start, speech_end = 0, n
    if intervals and intervals[0][0] == 0:
        speech_start = intervals[0][1]
        plan.append(Segment(0, speech_start, "silence"))
        intervals = intervals[1:]
    trailing = None
    if intervals and intervals[-1][1] == n:
        speech_end = intervals[-1][0]
        trailing = Segment(speech_end, n, "silence")
        intervals = intervals[:-1]
    if speech_start >= speech_end:
        if trailing is not None:
            # clip was entirely silence; merge the bookkeeping spans
            plan = [Segment(0, n, "silence")]
        return plan

    # interior silences are cut at their midpoint; each half stays attached
    # to its neighboring speech span
    cuts = [ (a + b) // 2 for a, b in intervals ]

    def emit_span(start: int, end: int) -> None:
        """Emit one speech span, force-splitting if it exceeds max_clip."""
        pos = start
        while end - pos > max_clip:
            cut = pos + max_clip
            plan.append(Segment(pos, cut, "keep"))
            pos = cut
        if end - pos >= min_clip:
            plan.append(Segment(pos, end, "keep"))
        elif end > pos:
            plan.append(Segment(pos, end, "discard"))

    # greedy accumulation: only cut at a silence midpoint once the span
    # reaches min_clip, so no emitted clip falls below it
    span_start = speech_start
    for cut in cuts:
        if cut - span_start >= min_clip:
            emit_span(span_start, cut)
            span_start = cut
    emit_span(span_start, speech_end)
    if trailing is not None:
        plan.append(trailing)
    return plan


def split_on_silence(clip: AudioClip, params: SegmentationParams) -> list[AudioClip]:
    """Segment a mono clip on silence; returns kept sub-clips in order."""
    return [
        AudioClip(clip.samples[seg.start:seg.end], clip.sample_rate, 1)
        for seg in segment_plan(clip, params)
        if seg.kind == "keep"
    ]
