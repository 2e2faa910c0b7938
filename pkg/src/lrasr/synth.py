"""Synthetic toy-language fixture generator.

The toy language has 8 symbols (``a``–``h``), each realized as a 100 ms
tone burst at a characteristic frequency with raised-cosine edge fades.
Every rendered instance is jittered — amplitude U(0.7, 1.0), frequency
±2%, random phase, small additive noise — so repeated symbols never
produce identical waveforms, while symbol classes stay spectrally
disjoint and separable.  Optional non-stationarity dials (``CHIRP_SPAN``,
``TREMOLO_DEPTH``, both 0 by default) can sweep each burst's frequency
and modulate its envelope to make the material more speech-like.  Words
come from a fixed 16-word lexicon of 1–4 symbols; transcripts are 2–4
words drawn uniformly with replacement.
Words are separated by 100 ms of silence and clips padded with 50 ms of
near-silence at both edges.  Audio is mono 16 kHz WAV.

``generate_fixture`` writes three manifests next to an ``audio/``
directory: a labeled training set, a labeled held-out set, and an
unlabeled set whose records carry empty transcripts (their audio still
renders real sampled sentences).  Audio paths in the manifests are
relative to the manifest location.
"""

from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav
from .manifest import UtteranceRecord, write_manifest

RATE = 16000
SYMBOLS = "abcdefgh"
TONES_HZ = (220.0, 330.0, 440.0, 587.0, 784.0, 1046.0, 1397.0, 1865.0)
SYMBOL_MS = 100
GAP_MS = 100
PAD_MS = 50
FADE_MS = 10
NOISE_FLOOR = 0.0005
# Optional non-stationarity dials (0 = stationary bursts).  CHIRP_SPAN is
# the total relative frequency sweep across one burst; TREMOLO_DEPTH the
# peak-to-trough amplitude-modulation depth at 15-45 Hz.
CHIRP_SPAN = 0.0
TREMOLO_DEPTH = 0.0

LEXICON = (
    "a", "e",
    "ba", "fe",
    "cag", "dah", "egb", "hfc",
    "bade", "fega", "chad", "gbef",
    "ahcd", "debc", "hgfa", "ecgh",
)

_FREQ = dict(zip(SYMBOLS, TONES_HZ))


def render_symbol(symbol: str, rng: np.random.Generator) -> np.ndarray:
    """One jittered 100 ms tone burst (chirp/tremolo dials optional)."""
    n = RATE * SYMBOL_MS // 1000
    base = _FREQ[symbol] * (1.0 + rng.uniform(-0.02, 0.02))
    amp = rng.uniform(0.7, 1.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    sweep = CHIRP_SPAN if rng.random() < 0.5 else -CHIRP_SPAN
    trem_rate = rng.uniform(15.0, 45.0)
    trem_phase = rng.uniform(0.0, 2.0 * np.pi)
    frac = np.arange(n) / n
    freq = base * (1.0 + sweep * (frac - 0.5))
    phi = phase + 2.0 * np.pi * np.cumsum(freq) / RATE
    t = np.arange(n) / RATE
    tremolo = 1.0 - 0.5 * TREMOLO_DEPTH * (
        1.0 + np.sin(2.0 * np.pi * trem_rate * t + trem_phase)
    )
    wave = amp * 0.5 * np.sin(phi) * tremolo
    n_fade = RATE * FADE_MS // 1000
    envelope = np.ones(n)
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_fade) / n_fade))
    envelope[:n_fade] = ramp
    envelope[-n_fade:] = ramp[::-1]
    return wave * envelope + rng.normal(0.0, 0.005, n)


def render_utterance(text: str, rng: np.random.Generator) -> np.ndarray:
    """Waveform for a space-separated transcript."""
    gap = np.zeros(RATE * GAP_MS // 1000)
    pad = np.zeros(RATE * PAD_MS // 1000)
    parts = [pad]
    for w, word in enumerate(text.split()):
        if w:
            parts.append(gap)
        parts.extend(render_symbol(ch, rng) for ch in word)
    parts.append(pad)
    samples = np.concatenate(parts)
    samples = samples + rng.normal(0.0, NOISE_FLOOR, len(samples))
    return np.clip(samples, -1.0, 1.0)


def sample_transcript(rng: np.random.Generator) -> str:
    n_words = int(rng.integers(2, 5))
    return " ".join(rng.choice(LEXICON, size=n_words))


def generate_fixture(out_dir, seed: int, n_train: int = 50,
                     n_heldout: int = 20, n_unlabeled: int = 500) -> dict:
    """Render the full fixture; returns the manifest and lexicon paths."""
    out = Path(out_dir)
    audio_dir = out / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    def render_split(prefix, count, labeled):
        records = []
        for i in range(count):
            text = sample_transcript(rng)
            samples = render_utterance(text, rng)
            rel = f"audio/{prefix}_{i:04d}.wav"
            write_wav(out / rel, AudioClip(samples, RATE))
            records.append(UtteranceRecord(
                audio_path=rel,
                duration_s=len(samples) / RATE,
                text=text if labeled else "",
                lang="toy",
                source="synth",
            ))
        path = out / f"{prefix}.jsonl"
        write_manifest(records, path)
        return str(path)

    paths = {
        "train": render_split("train", n_train, labeled=True),
        "heldout": render_split("heldout", n_heldout, labeled=True),
        "unlabeled": render_split("unlabeled", n_unlabeled, labeled=False),
    }
    lexicon_path = out / "lexicon.txt"
    with open(lexicon_path, "w", encoding="utf-8") as f:
        for word in LEXICON:
            f.write(word + "\n")
    paths["lexicon"] = str(lexicon_path)
    return paths
