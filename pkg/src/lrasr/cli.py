"""Command-line interface: the toolkit's single user-facing executable.

Subcommands cover the whole workflow::

    prepare        raw WAV recordings -> silence-split clips + manifest
    vocab          manifest(s) -> character vocabulary file
    mix            source manifests -> oversampled, shuffled manifest
    pretrain       manifest -> self-supervised checkpoints
    finetune       manifest + vocab -> CTC checkpoints (+ best.bin)
    lm-train       text / manifest corpus -> ARPA n-gram model
    lm-ppl         ARPA + corpus -> perplexity and OOV report
    decode         checkpoint + manifest -> hypotheses JSON-lines
    score          references + hypotheses -> CER/WER report
    synth-fixture  seed -> synthetic toy-language dataset

Configuration
-------------
Three layers feed every subcommand, lowest precedence first: a ``key=value``
file passed with ``--config``, environment variables (``LRASR_<KEY>``, e.g.
``LRASR_LEARNING_RATE``), and the long-form flags themselves.  Unknown keys
in a config file are rejected; keys that are recognized but irrelevant to
the current subcommand are ignored, so one file can drive a whole pipeline.
The merged ("effective") configuration is echoed before work starts, and
training subcommands also write it next to their checkpoints as
``config.txt`` — itself a valid ``--config`` file.  ``--help`` for each
subcommand lists every config key that affects it.

``LRASR_PURE_PY`` selects the kernel backend at import time and is not a
config key.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
``score`` exits 4 when an optional ``--max-cer``/``--max-wer`` threshold is
exceeded (for CI gating).
"""

import argparse
import dataclasses
import functools
import json
import os
import shutil
import sys
from pathlib import Path

from .errors import DataError, LrasrError, NumericalError, UsageError


# --------------------------------------------------------------------------
# Config key registry


@dataclasses.dataclass(frozen=True)
class ConfigKey:
    name: str
    kind: str  # int | float | optfloat | bool | str | layers
    default: object
    help: str
    commands: tuple
    choices: tuple = ()


def _layers_to_str(layers) -> str:
    return ";".join(",".join(str(int(x)) for x in row) for row in layers)


_DEFAULT_LAYERS = ((64, 10, 5), (64, 8, 4), (64, 8, 8))

_TRAIN = ("pretrain", "finetune")

_REGISTRY = [
    # corpus preparation
    ConfigKey("sample_rate", "int", 16000,
              "canonical sample rate in Hz for prepared clips", ("prepare",)),
    ConfigKey("silence_threshold_db", "float", -40.0,
              "frame RMS level (dBFS) below which audio counts as silence",
              ("prepare",)),
    ConfigKey("min_silence_ms", "float", 300.0,
              "minimum silence run length that triggers a split",
              ("prepare",)),
    ConfigKey("min_clip_s", "float", 2.0,
              "clips are grown/merged to at least this many seconds",
              ("prepare",)),
    ConfigKey("max_clip_s", "float", 15.0,
              "segments longer than this are force-split", ("prepare",)),
    ConfigKey("min_keep_s", "float", 1.0,
              "fragments shorter than this are discarded", ("prepare",)),
    # vocabulary
    ConfigKey("sharing_policy", "str", "shared_folded",
              "character transform defining the shared vocabulary",
              ("vocab",),
              choices=("shared_folded", "separate_by_case",
                       "separate_by_script")),
    # shared RNG seed
    ConfigKey("seed", "int", 0,
              "RNG seed (mixing shuffle / model init + training / synthesis)",
              ("mix", "pretrain", "finetune", "synth-fixture")),
    # trainer
    ConfigKey("learning_rate", "float", 1e-4, "peak Adam learning rate",
              _TRAIN),
    ConfigKey("max_updates", "int", 2000, "optimizer updates to run", _TRAIN),
    ConfigKey("batch_budget", "int", 160000,
              "audio samples per micro-batch", _TRAIN),
    ConfigKey("accumulation", "int", 1,
              "micro-batches accumulated per optimizer update", _TRAIN),
    ConfigKey("warmup_fraction", "float", 0.1,
              "fraction of the schedule spent in linear warmup", _TRAIN),
    ConfigKey("validate_every", "int", 200,
              "updates between validation passes / checkpoints", _TRAIN),
    ConfigKey("grad_clip_norm", "float", 5.0,
              "global gradient-norm clip (0 disables)", _TRAIN),
    ConfigKey("freeze_encoder", "bool", False,
              "freeze the convolutional encoder during fine-tuning",
              ("finetune",)),
    ConfigKey("quantizer_mode", "str", "soft",
              "contrastive-target construction: soft (deterministic "
              "softmax) or sampled (Gumbel straight-through)",
              ("pretrain",), choices=("soft", "sampled")),
    ConfigKey("finetune_mask_prob", "float", 0.0,
              "span-mask augmentation rate during fine-tuning "
              "(probability a latent frame starts a masked span)",
              ("finetune",)),
    # model architecture
    ConfigKey("encoder_layers", "layers", _DEFAULT_LAYERS,
              "conv stack as WIDTH,KERNEL,STRIDE;... triples", _TRAIN),
    ConfigKey("model_dim", "int", 64, "transformer width", _TRAIN),
    ConfigKey("ffn_dim", "int", 128, "transformer feed-forward width",
              _TRAIN),
    ConfigKey("num_heads", "int", 4, "attention heads", _TRAIN),
    ConfigKey("num_transformer_layers", "int", 2, "transformer layers",
              _TRAIN),
    ConfigKey("quantizer_groups", "int", 2, "codebook groups G", _TRAIN),
    ConfigKey("entries_per_group", "int", 16, "codebook entries per group V",
              _TRAIN),
    ConfigKey("codevector_dim", "int", 64, "quantized target width", _TRAIN),
    ConfigKey("mask_prob", "float", 0.15,
              "probability a frame starts a masked span", _TRAIN),
    ConfigKey("mask_span", "int", 4, "masked span length in frames", _TRAIN),
    ConfigKey("num_negatives", "int", 10,
              "distractors per masked frame", _TRAIN),
    ConfigKey("temperature", "float", 0.1, "contrastive temperature",
              _TRAIN),
    ConfigKey("diversity_weight", "float", 0.1,
              "weight of the codebook-diversity loss", _TRAIN),
    # language model
    ConfigKey("order", "int", 4, "n-gram order", ("lm-train",)),
    ConfigKey("smoothing", "str", "kn",
              "kn (modified Kneser-Ney, auto add-k fallback) or addk",
              ("lm-train",), choices=("kn", "addk")),
    ConfigKey("add_k", "float", 0.01,
              "additive constant for addk smoothing and the kn fallback",
              ("lm-train",)),
    # decoder
    ConfigKey("beam_width", "int", 50, "beam width", ("decode",)),
    ConfigKey("lm_weight", "float", 0.5, "LM fusion weight (alpha)",
              ("decode",)),
    ConfigKey("word_bonus", "optfloat", None,
              "word-insertion bonus (beta); default 1.0 with --lm, else 0.0",
              ("decode",)),
    ConfigKey("nbest", "int", 1, "hypotheses to emit per utterance",
              ("decode",)),
    ConfigKey("greedy", "bool", False,
              "best-path (argmax) decoding instead of beam search",
              ("decode",)),
    ConfigKey("allow_oov_words", "bool", False,
              "score out-of-LM-vocabulary words via <unk> instead of "
              "pruning them", ("decode",)),
    # scoring
    ConfigKey("romanize_kana", "bool", False,
              "romanize kana in refs and hyps before scoring", ("score",)),
    ConfigKey("case_fold", "bool", False,
              "lowercase refs and hyps before scoring", ("score",)),
    ConfigKey("cer_includes_spaces", "bool", False,
              "count inter-word spaces as CER characters", ("score",)),
    ConfigKey("max_cer", "optfloat", None,
              "exit 4 if corpus CER (percent) exceeds this", ("score",)),
    ConfigKey("max_wer", "optfloat", None,
              "exit 4 if corpus WER (percent) exceeds this", ("score",)),
    # synthetic fixture
    ConfigKey("n_train", "int", 50, "labeled training utterances",
              ("synth-fixture",)),
    ConfigKey("n_heldout", "int", 20, "labeled held-out utterances",
              ("synth-fixture",)),
    ConfigKey("n_unlabeled", "int", 500, "unlabeled utterances",
              ("synth-fixture",)),
]

_BY_NAME = {k.name: k for k in _REGISTRY}

_MODEL_KEYS = ("encoder_layers", "model_dim", "ffn_dim", "num_heads",
               "num_transformer_layers", "quantizer_groups",
               "entries_per_group", "codevector_dim", "mask_prob",
               "mask_span", "num_negatives", "temperature",
               "diversity_weight")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(key: ConfigKey, raw: str):
    raw = raw.strip()
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "optfloat":
            return None if raw.lower() == "none" else float(raw)
        if key.kind == "layers":
            layers = tuple(
                tuple(int(x) for x in row.split(","))
                for row in raw.split(";") if row.strip()
            )
            if not layers or any(len(row) != 3 for row in layers):
                raise ValueError
            return layers
    except ValueError:
        raise UsageError(
            f"{key.name}: cannot parse {raw!r} as {key.kind}"
        ) from None
    if key.kind == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise UsageError(f"{key.name}: cannot parse {raw!r} as bool")
    if key.choices and raw not in key.choices:
        raise UsageError(
            f"{key.name}: {raw!r} is not one of {', '.join(key.choices)}"
        )
    return raw


def _format_value(key: ConfigKey, value) -> str:
    if key.kind == "layers":
        return _layers_to_str(value)
    if key.kind == "bool":
        return "true" if value else "false"
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def _read_config_file(path) -> dict:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e}") from None
    values = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, eq, raw = line.partition("=")
        name = name.strip()
        if not eq or not name:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        if name not in _BY_NAME:
            raise UsageError(f"{path}:{lineno}: unknown config key {name!r}")
        values[name] = raw.strip()
    return values


def _resolve_config(ns, command):
    """Merge defaults < config file < environment < flags.

    Returns (effective values, provenance) over the keys relevant to
    ``command``; provenance records which layer supplied each value.
    """
    file_vals = _read_config_file(ns.config) if ns.config else {}
    effective, provenance = {}, {}
    for key in _REGISTRY:
        if command not in key.commands:
            continue
        value, source = key.default, "default"
        if key.name in file_vals:
            value, source = _parse_value(key, file_vals[key.name]), "file"
        env = os.environ.get("LRASR_" + key.name.upper())
        if env is not None:
            value, source = _parse_value(key, env), "environment"
        flag = getattr(ns, key.name)
        if flag is not None:
            value, source = flag, "flag"
        effective[key.name] = value
        provenance[key.name] = source
    return effective, provenance


def _echo_config(command: str, effective: dict) -> None:
    for name in sorted(effective):
        print(f"config {name} = {_format_value(_BY_NAME[name], effective[name])}")


def _write_config_file(path, effective: dict) -> None:
    lines = [
        f"{name} = {_format_value(_BY_NAME[name], effective[name])}"
        for name in sorted(effective)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    """Argument parser whose failures map to exit code 1, not argparse's 2."""

    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p, command: str) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="key=value overrides (lowest precedence)")
    for key in _REGISTRY:
        if command not in key.commands:
            continue
        flag = "--" + key.name.replace("_", "-")
        text = f"{key.help} [default: {_format_value(key, key.default)}]"
        if key.kind == "bool":
            p.add_argument(flag, action=argparse.BooleanOptionalAction,
                           default=None, help=text)
        else:
            p.add_argument(flag, type=functools.partial(_parse_value, key),
                           default=None, metavar=key.kind.upper(), help=text)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="lrasr",
        description="Adapt a self-supervised speech model to a new "
                    "low-resource language: corpus preparation, pretraining, "
                    "CTC fine-tuning, n-gram LMs, decoding, and scoring.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND",
                                required=True)

    p = sub.add_parser("prepare",
                       help="split raw recordings on silence into clips",
                       description="Convert recordings to mono 16-bit WAV at "
                                   "the canonical rate, split them on "
                                   "silence, and write clips plus a "
                                   "manifest.")
    p.add_argument("--audio", nargs="+", required=True, metavar="WAV",
                   help="input recordings (any rate/channel count)")
    p.add_argument("--out-dir", required=True,
                   help="output directory (clips/ and manifest.jsonl)")
    p.add_argument("--lang", required=True, help="language tag for records")
    p.add_argument("--source", default="", help="corpus name for records")
    _add_config_flags(p, "prepare")

    p = sub.add_parser("vocab", help="build a character vocabulary",
                       description="Collect transcript characters from "
                                   "manifests into a CTC vocabulary file "
                                   "(blank and word delimiter first).")
    p.add_argument("--manifest", action="append", required=True,
                   metavar="JSONL", help="transcribed manifest (repeatable)")
    p.add_argument("--out", required=True, help="vocabulary file to write")
    _add_config_flags(p, "vocab")

    p = sub.add_parser("mix", help="combine manifests with oversampling",
                       description="Combine source manifests into one "
                                   "shuffled manifest.  Each --source is "
                                   "PATH, PATH:factor=K (K exact copies per "
                                   "record), or PATH:fraction=F (replicate "
                                   "and trim so the source is a fraction F "
                                   "of the mixture, within one record).")
    p.add_argument("--source", action="append", required=True,
                   metavar="PATH[:factor=K|:fraction=F]",
                   help="source manifest with optional oversampling "
                        "(repeatable)")
    p.add_argument("--out", required=True, help="mixture manifest to write")
    _add_config_flags(p, "mix")

    p = sub.add_parser("pretrain", help="self-supervised pretraining",
                       description="Masked contrastive pretraining on "
                                   "unlabeled audio.  Writes checkpoints, "
                                   "last.bin, train_log.jsonl, "
                                   "checkpoints.jsonl, and config.txt to "
                                   "--out-dir.")
    p.add_argument("--manifest", required=True, metavar="JSONL",
                   help="training audio manifest (transcripts ignored)")
    p.add_argument("--out-dir", required=True, help="run directory")
    p.add_argument("--init-from", metavar="CKPT",
                   help="continue from an existing checkpoint (architecture "
                        "then comes from the checkpoint)")
    _add_config_flags(p, "pretrain")

    p = sub.add_parser("finetune", help="CTC fine-tuning",
                       description="Supervised CTC training.  Writes "
                                   "checkpoints, best.bin (lowest validation "
                                   "WER), last.bin (final step), "
                                   "train_log.jsonl, checkpoints.jsonl, and "
                                   "config.txt to --out-dir.")
    p.add_argument("--manifest", required=True, metavar="JSONL",
                   help="transcribed training manifest")
    p.add_argument("--vocab", required=True, metavar="FILE",
                   help="vocabulary file from `lrasr vocab`")
    p.add_argument("--out-dir", required=True, help="run directory")
    p.add_argument("--init-from", metavar="CKPT",
                   help="initialize from a pretrained checkpoint; the CTC "
                        "head is re-initialized when the vocabulary size "
                        "differs (architecture comes from the checkpoint)")
    _add_config_flags(p, "finetune")

    p = sub.add_parser("lm-train", help="train an ARPA n-gram model",
                       description="Train a back-off n-gram model on "
                                   "whitespace-tokenized text and write it "
                                   "in ARPA format.  Corpora may be plain "
                                   "text (one utterance per line) or "
                                   "manifests (transcripts are used).")
    p.add_argument("--corpus", action="append", required=True, metavar="FILE",
                   help="text file or manifest (repeatable)")
    p.add_argument("--out", required=True, help="ARPA file to write")
    _add_config_flags(p, "lm-train")

    p = sub.add_parser("lm-ppl", help="perplexity and OOV statistics",
                       description="Score a corpus with an ARPA model; "
                                   "reports perplexity including and "
                                   "excluding OOV positions plus the OOV "
                                   "rate.")
    p.add_argument("--lm", required=True, metavar="ARPA", help="ARPA model")
    p.add_argument("--corpus", action="append", required=True, metavar="FILE",
                   help="text file or manifest (repeatable)")
    _add_config_flags(p, "lm-ppl")

    p = sub.add_parser("decode", help="transcribe a manifest",
                       description="Run CTC prefix beam search (optionally "
                                   "with n-gram LM shallow fusion) or "
                                   "greedy decoding over a manifest and "
                                   "write hypotheses as JSON-lines "
                                   "{utt_id, rank, score, text}.")
    p.add_argument("--checkpoint", required=True, metavar="CKPT",
                   help="acoustic model checkpoint")
    p.add_argument("--manifest", required=True, metavar="JSONL",
                   help="audio manifest to transcribe")
    p.add_argument("--out", required=True, help="hypotheses file to write")
    p.add_argument("--lm", metavar="ARPA",
                   help="ARPA model for shallow fusion")
    p.add_argument("--vocab", metavar="FILE",
                   help="vocabulary file (defaults to the one embedded in "
                        "the checkpoint)")
    _add_config_flags(p, "decode")

    p = sub.add_parser("score", help="CER/WER scoring",
                       description="Score hypotheses against references.  "
                                   "Either side may be a manifest or a "
                                   "decode output (rank-1 hypotheses are "
                                   "used).  Prints a table plus a JSON "
                                   "report.")
    p.add_argument("--refs", required=True, metavar="FILE",
                   help="reference manifest or hypotheses file")
    p.add_argument("--hyps", required=True, metavar="FILE",
                   help="hypothesis manifest or hypotheses file")
    p.add_argument("--report", metavar="FILE",
                   help="write the JSON report here instead of stdout")
    _add_config_flags(p, "score")

    p = sub.add_parser("synth-fixture", help="generate the toy-language "
                                             "dataset",
                       description="Render the synthetic tone-language "
                                   "corpus (train/heldout/unlabeled splits "
                                   "plus lexicon) used by the acceptance "
                                   "tests.")
    p.add_argument("--out-dir", required=True, help="dataset directory")
    _add_config_flags(p, "synth-fixture")

    return parser


# --------------------------------------------------------------------------
# Shared helpers


def _is_manifest_header(line: str) -> bool:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return False
    return isinstance(obj, dict) and "version" in obj


def _read_corpus_file(path) -> list:
    """Sentences from a plain text file or a manifest's transcripts."""
    from .manifest import read_manifest

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines and _is_manifest_header(lines[0]):
        return [r.text for r in read_manifest(path) if r.text]
    return [line.strip() for line in lines if line.strip()]


def _read_texts(path) -> dict:
    """utt_id -> text from a manifest or a decode hypotheses file."""
    from .manifest import read_manifest

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    if _is_manifest_header(lines[0]):
        return {r.utt_id: r.text for r in read_manifest(path)}
    texts, ranks = {}, {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{lineno}: not JSON: {e}") from None
        if not isinstance(obj, dict) or "utt_id" not in obj or "text" not in obj:
            raise DataError(
                f"{path}:{lineno}: expected an object with utt_id and text"
            )
        uid, rank = obj["utt_id"], obj.get("rank", 1)
        if uid not in texts or rank < ranks[uid]:
            texts[uid], ranks[uid] = obj["text"], rank
    return texts


def _model_config(effective: dict):
    from .model import ModelConfig

    return ModelConfig(**{k: effective[k] for k in _MODEL_KEYS})


def _train_config(effective: dict):
    from .trainer import TrainConfig

    return TrainConfig(
        learning_rate=effective["learning_rate"],
        max_updates=effective["max_updates"],
        batch_budget=effective["batch_budget"],
        accumulation=effective["accumulation"],
        warmup_fraction=effective["warmup_fraction"],
        seed=effective["seed"],
        validate_every=effective["validate_every"],
        freeze_encoder=effective.get("freeze_encoder", False),
        grad_clip_norm=effective["grad_clip_norm"],
        quantizer_mode=effective.get("quantizer_mode", "soft"),
        finetune_mask_prob=effective.get("finetune_mask_prob", 0.0),
    )


def _norm_layers(value):
    return tuple(tuple(int(x) for x in row) for row in value)


def _check_arch_conflicts(provenance: dict, effective: dict, config) -> None:
    """Reject explicit architecture flags that contradict --init-from."""
    stored = config.to_dict()
    for name in _MODEL_KEYS:
        if provenance.get(name, "default") == "default":
            continue
        given, kept = effective[name], stored[name]
        if name == "encoder_layers":
            given, kept = _norm_layers(given), _norm_layers(kept)
        if given != kept:
            raise UsageError(
                f"--{name.replace('_', '-')} "
                f"{_format_value(_BY_NAME[name], effective[name])} conflicts "
                f"with the checkpoint architecture "
                f"({_format_value(_BY_NAME[name], stored[name])}); the "
                f"architecture comes from --init-from"
            )


def _with_vocab_size(base, vocab_size: int):
    """Same weights with the CTC head rebuilt for ``vocab_size`` outputs."""
    from .model import AcousticModel

    if base.vocab_size == vocab_size:
        return base
    fresh = AcousticModel(base.config, vocab_size)
    state = fresh.state_dict()
    for name, value in base.state_dict().items():
        if not name.startswith("ctc_head"):
            state[name] = value
    fresh.load_state_dict(state)
    return fresh


# --------------------------------------------------------------------------
# Subcommands


def _cmd_prepare(ns, eff, prov):
    from .audio import (SegmentationParams, downmix, read_wav, resample_mono,
                        split_on_silence, write_wav)
    from .manifest import UtteranceRecord, write_manifest

    params = SegmentationParams(
        silence_threshold_db=eff["silence_threshold_db"],
        min_silence_ms=eff["min_silence_ms"],
        min_clip_s=eff["min_clip_s"],
        max_clip_s=eff["max_clip_s"],
        min_keep_s=eff["min_keep_s"],
    )
    out = Path(ns.out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    records, used = [], set()
    for src in ns.audio:
        stem = Path(src).stem
        if stem in used:
            raise UsageError(
                f"duplicate input stem {stem!r}; rename the inputs so clip "
                f"names stay unique"
            )
        used.add(stem)
        clip = downmix(read_wav(src))
        if clip.sample_rate != eff["sample_rate"]:
            clip = resample_mono(clip, eff["sample_rate"])
        for k, piece in enumerate(split_on_silence(clip, params)):
            rel = f"clips/{stem}_{k:03d}.wav"
            write_wav(out / rel, piece)
            records.append(UtteranceRecord(
                audio_path=rel,
                duration_s=len(piece.samples) / piece.sample_rate,
                text="",
                lang=ns.lang,
                source=ns.source,
            ))
    manifest_path = out / "manifest.jsonl"
    write_manifest(records, manifest_path)
    total = sum(r.duration_s for r in records)
    print(f"prepare: {len(records)} clips, {total:.1f} s total "
          f"-> {manifest_path}")


def _cmd_vocab(ns, eff, prov):
    from .text import build_vocabulary

    vocab = build_vocabulary(ns.manifest, policy=eff["sharing_policy"])
    vocab.save(ns.out)
    print(f"vocab: {vocab.size} symbols -> {ns.out}")


def _parse_mix_source(spec: str):
    from .mixing import MixSource

    path, sep, opt = spec.partition(":")
    if not sep:
        return MixSource(path)
    name, eq, raw = opt.partition("=")
    if not eq:
        raise UsageError(
            f"bad source option {opt!r}; use PATH:factor=K or "
            f"PATH:fraction=F"
        )
    try:
        if name == "factor":
            return MixSource(path, factor=int(raw))
        if name == "fraction":
            return MixSource(path, target_fraction=float(raw))
    except ValueError:
        raise UsageError(f"cannot parse source option {opt!r}") from None
    raise UsageError(f"unknown source option {name!r}; "
                     f"use factor or fraction")


def _cmd_mix(ns, eff, prov):
    from .manifest import write_manifest
    from .mixing import build_mixture

    sources = [_parse_mix_source(s) for s in ns.source]
    records = build_mixture(sources, shuffle_seed=eff["seed"],
                            resolve_audio=True)
    out = Path(ns.out)
    base = out.resolve().parent
    rows = [
        dataclasses.replace(
            r, audio_path=os.path.relpath(Path(r.audio_path).resolve(), base)
        )
        for r in records
    ]
    write_manifest(rows, out)
    print(f"mix: {len(rows)} records from {len(sources)} sources -> {out}")


def _cmd_pretrain(ns, eff, prov):
    import torch

    from . import trainer
    from .checkpoint import load_checkpoint
    from .manifest import read_manifest
    from .model import AcousticModel

    records = read_manifest(ns.manifest, resolve_audio=True)
    cfg = _train_config(eff)
    torch.manual_seed(cfg.seed)
    if ns.init_from:
        model, _ = load_checkpoint(ns.init_from)
        _check_arch_conflicts(prov, eff, model.config)
    else:
        model = AcousticModel(_model_config(eff), vocab_size=2)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config_file(out / "config.txt", eff)
    series = trainer.pretrain(model, records, cfg, out)
    last = series[-1]
    shutil.copyfile(last.path, out / "last.bin")
    print(f"pretrain: {len(series)} checkpoints -> {out}")
    print(f"pretrain: final val loss {last.val_loss:.6f}; last checkpoint "
          f"copied to {out / 'last.bin'}")


def _cmd_finetune(ns, eff, prov):
    import torch

    from . import trainer
    from .checkpoint import load_checkpoint
    from .manifest import read_manifest
    from .model import AcousticModel
    from .text import CharVocabulary

    vocab = CharVocabulary.load(ns.vocab)
    records = read_manifest(ns.manifest, resolve_audio=True)
    cfg = _train_config(eff)
    torch.manual_seed(cfg.seed)
    if ns.init_from:
        base, _ = load_checkpoint(ns.init_from)
        _check_arch_conflicts(prov, eff, base.config)
        model = _with_vocab_size(base, vocab.size)
    else:
        model = AcousticModel(_model_config(eff), vocab.size)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config_file(out / "config.txt", eff)
    series, skipped = trainer.finetune(model, records, vocab, cfg, out)
    for item in skipped:
        print(f"finetune: skipped {item['utt_id']}: {item['reason']}",
              file=sys.stderr)
    best = trainer.select_best(series)
    shutil.copyfile(best.path, out / "best.bin")
    shutil.copyfile(series[-1].path, out / "last.bin")
    print(f"finetune: {len(series)} checkpoints -> {out}")
    print(f"finetune: best step {best.step} (val WER {best.val_wer:.2f}) "
          f"copied to best.bin; final step {series[-1].step} to last.bin")


def _cmd_lm_train(ns, eff, prov):
    from .lm import train_ngram, write_arpa

    corpus = []
    for path in ns.corpus:
        corpus.extend(_read_corpus_file(path))
    model = train_ngram(corpus, eff["order"], smoothing=eff["smoothing"],
                        k=eff["add_k"])
    write_arpa(model, ns.out)
    print(f"lm-train: order {model.order} ({model.smoothing}), "
          f"{len(model.vocab)} tokens -> {ns.out}")


def _cmd_lm_ppl(ns, eff, prov):
    from .lm import perplexity, read_arpa

    model = read_arpa(ns.lm)
    corpus = []
    for path in ns.corpus:
        corpus.extend(_read_corpus_file(path))
    report = perplexity(model, corpus)
    print(f"lm-ppl: perplexity {report.ppl_including_oov:.4f} including "
          f"OOVs, {report.ppl_excluding_oov:.4f} excluding; "
          f"OOV {report.oov_count}/{report.token_count}")
    print(json.dumps(dataclasses.asdict(report), sort_keys=True))


def _cmd_decode(ns, eff, prov):
    import numpy as np
    import torch

    from .beam import DecoderWeights, prefix_beam_search
    from .checkpoint import load_checkpoint
    from .ctc import greedy_decode
    from .lm import read_arpa
    from .manifest import read_manifest
    from .text import CharVocabulary
    from .trainer import AudioStore

    torch.set_num_threads(1)
    model, meta = load_checkpoint(ns.checkpoint)
    if ns.vocab:
        vocab = CharVocabulary.load(ns.vocab)
    elif meta and meta.get("vocab"):
        vocab = CharVocabulary(meta["vocab"])
    else:
        raise UsageError(
            "checkpoint carries no embedded vocabulary; pass --vocab"
        )
    if vocab.size != model.vocab_size:
        raise UsageError(
            f"vocabulary has {vocab.size} symbols but the checkpoint's CTC "
            f"head has {model.vocab_size}"
        )
    records = read_manifest(ns.manifest, resolve_audio=True)
    lm = read_arpa(ns.lm) if ns.lm else None
    weights = DecoderWeights(beam_width=eff["beam_width"],
                             lm_weight=eff["lm_weight"],
                             word_bonus=eff["word_bonus"])
    store = AudioStore()
    count = 0
    with open(ns.out, "w", encoding="utf-8") as f, torch.no_grad():
        for r in records:
            lattice = model.forward_ctc(store.samples(r))
            if eff["greedy"]:
                rows = [(1, float(np.max(lattice, axis=1).sum()),
                         greedy_decode(lattice, vocab).strip())]
            else:
                hyps = prefix_beam_search(
                    lattice, vocab, lm=lm, weights=weights,
                    allow_oov_words=eff["allow_oov_words"])
                rows = [(i + 1, float(h.score), h.text.strip())
                        for i, h in enumerate(hyps[:eff["nbest"]])]
            for rank, score, text in rows:
                f.write(json.dumps(
                    {"utt_id": r.utt_id, "rank": rank, "score": score,
                     "text": text},
                    ensure_ascii=False) + "\n")
            count += 1
    print(f"decode: {count} utterances -> {ns.out}")


def _cmd_score(ns, eff, prov):
    from .evaluate import RelaxationPolicy, format_report
    from .evaluate import score as score_texts

    refs = _read_texts(ns.refs)
    hyps = _read_texts(ns.hyps)
    policy = RelaxationPolicy(romanize_kana=eff["romanize_kana"],
                              case_fold=eff["case_fold"])
    report = score_texts(refs, hyps, policy,
                         cer_includes_spaces=eff["cer_includes_spaces"])
    print(format_report(report))
    doc = json.dumps(dataclasses.asdict(report), sort_keys=True,
                     ensure_ascii=False)
    if ns.report:
        Path(ns.report).write_text(doc + "\n", encoding="utf-8")
        print(f"score: JSON report -> {ns.report}")
    else:
        print(doc)
    exceeded = []
    if eff["max_cer"] is not None and report.cer > eff["max_cer"]:
        exceeded.append(f"CER {report.cer:.2f} > {eff['max_cer']:g}")
    if eff["max_wer"] is not None and report.wer > eff["max_wer"]:
        exceeded.append(f"WER {report.wer:.2f} > {eff['max_wer']:g}")
    if exceeded:
        print("score: threshold exceeded: " + "; ".join(exceeded),
              file=sys.stderr)
        return 4
    return 0


def _cmd_synth_fixture(ns, eff, prov):
    from .synth import generate_fixture

    paths = generate_fixture(ns.out_dir, seed=eff["seed"],
                             n_train=eff["n_train"],
                             n_heldout=eff["n_heldout"],
                             n_unlabeled=eff["n_unlabeled"])
    for split in ("train", "heldout", "unlabeled", "lexicon"):
        print(f"synth-fixture: {split} -> {paths[split]}")


_HANDLERS = {
    "prepare": _cmd_prepare,
    "vocab": _cmd_vocab,
    "mix": _cmd_mix,
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "lm-train": _cmd_lm_train,
    "lm-ppl": _cmd_lm_ppl,
    "decode": _cmd_decode,
    "score": _cmd_score,
    "synth-fixture": _cmd_synth_fixture,
}


# --------------------------------------------------------------------------
# Entry point


def _run(argv) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    effective, provenance = _resolve_config(ns, ns.command)
    if ns.command == "decode" and effective["word_bonus"] is None:
        effective["word_bonus"] = 1.0 if ns.lm else 0.0
    _echo_config(ns.command, effective)
    code = _HANDLERS[ns.command](ns, effective, provenance)
    return 0 if code is None else code


def main(argv=None) -> int:
    try:
        return _run(argv)
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        for line in e.failures:
            print(f"  {line}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except LrasrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
