"""Training orchestration: continued pretraining and CTC fine-tuning.

Batching is by sample budget: each micro-batch holds utterances whose
total sample count stays within ``batch_budget`` (always at least one),
and each update accumulates gradients over ``accumulation`` micro-batches.
Losses are averaged per utterance across the whole update, so splitting an
update into micro-batches leaves the applied gradient unchanged.

A stable 1% validation split is carved out by hashing each record's audio
file name (crc32 of the basename, mod 100 == 0); if no record hashes into
the split, the record with the smallest hash is held out instead. Hashing
the basename rather than the full path keeps the carve — and therefore
the training trajectory — identical no matter where the corpus directory
lives or how the manifest path was spelled.

All randomness derives from the config seed through named numpy
Generator streams, so identical seed + config + data reproduce identical
checkpoint bytes.
"""

import json
import math
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio import downmix, read_wav, resample_mono
from .checkpoint import save_checkpoint
from .ctc import greedy_decode, min_frames
from .errors import DataError, NumericalError, UsageError
from .evaluate import score
from .model import ctc_loss_torch, frame_count

CANONICAL_RATE = 16000
TAU_START, TAU_END = 2.0, 0.5


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    max_updates: int = 2000
    batch_budget: int = 160000
    accumulation: int = 1
    warmup_fraction: float = 0.1
    seed: int = 0
    validate_every: int = 200
    freeze_encoder: bool = False
    grad_clip_norm: float = 5.0
    quantizer_mode: str = "soft"
    finetune_mask_prob: float = 0.0

    def __post_init__(self):
        if self.quantizer_mode not in ("soft", "sampled"):
            raise UsageError(
                "quantizer_mode must be 'soft' or 'sampled', "
                f"got {self.quantizer_mode!r}"
            )
        if not 0.0 <= self.finetune_mask_prob < 1.0:
            raise UsageError("finetune_mask_prob must lie in [0, 1)")
        if self.learning_rate < 0:
            raise UsageError("learning_rate must be nonnegative")
        if self.grad_clip_norm < 0:
            raise UsageError("grad_clip_norm must be nonnegative (0 disables)")
        if self.max_updates < 0:
            raise UsageError("max_updates must be nonnegative")
        if self.batch_budget < 1:
            raise UsageError("batch_budget must be positive")
        if self.accumulation < 1:
            raise UsageError("accumulation must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise UsageError("warmup_fraction must lie in [0, 1)")
        if self.validate_every < 1:
            raise UsageError("validate_every must be positive")


@dataclass
class CheckpointMeta:
    step: int
    path: str
    val_wer: float = None
    val_cer: float = None
    val_loss: float = None


def select_best(series) -> CheckpointMeta:
    """Checkpoint with the lowest validation WER; ties go to the earliest
    step."""
    series = list(series)
    if not series:
        raise UsageError("no checkpoints to select from")
    scored = [m for m in series if m.val_wer is not None]
    if not scored:
        raise UsageError("checkpoints carry no validation WER")
    return min(scored, key=lambda m: (m.val_wer, m.step))


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Learning rate for 0-based update ``step``: linear warmup over
    ``warmup_fraction`` of training, then linear decay toward zero."""
    warmup = round(cfg.warmup_fraction * cfg.max_updates)
    if step < warmup:
        return cfg.learning_rate * (step + 1) / warmup
    remaining = max(1, cfg.max_updates - warmup)
    return cfg.learning_rate * (cfg.max_updates - step) / remaining


def tau_at(cfg: TrainConfig, step: int) -> float:
    """Gumbel temperature: geometric anneal from 2.0 down to 0.5."""
    if cfg.max_updates <= 1:
        return TAU_START
    frac = min(step, cfg.max_updates - 1) / (cfg.max_updates - 1)
    return TAU_START * (TAU_END / TAU_START) ** frac


def split_validation_indices(records):
    """Deterministic (train_indices, val_indices) carve.

    Hashes the audio file's basename so the split does not depend on
    whether ``audio_path`` was stored relative or already resolved.
    """
    def hash_of(r):
        return zlib.crc32(Path(r.audio_path).name.encode("utf-8"))

    val = [i for i, r in enumerate(records) if hash_of(r) % 100 == 0]
    if not val:
        pick = min(range(len(records)),
                   key=lambda i: (hash_of(records[i]),
                                  Path(records[i].audio_path).name))
        val = [pick]
    val_set = set(val)
    train = [i for i in range(len(records)) if i not in val_set]
    if not train:
        train = list(val)  # degenerate corpus: validate on the training data
    return train, val


class AudioStore:
    """Caches decoded audio as mono float32 at the canonical rate."""

    def __init__(self, rate: int = CANONICAL_RATE):
        self.rate = rate
        self._cache = {}

    def samples(self, record) -> np.ndarray:
        path = record.audio_path
        if path not in self._cache:
            clip = downmix(read_wav(path))
            if clip.sample_rate != self.rate:
                clip = resample_mono(clip, self.rate)
            self._cache[path] = clip.samples.astype(np.float32)
        return self._cache[path]


class _Cycler:
    """Infinite shuffled stream of record indices with budgeted batching."""

    def __init__(self, indices, lengths, rng):
        self.indices = list(indices)
        self.lengths = lengths
        self.rng = rng
        self.order = []
        self.pos = 0

    def _refill(self):
        self.order = [self.indices[k]
                      for k in self.rng.permutation(len(self.indices))]
        self.pos = 0

    def take_micro(self, budget):
        if self.pos >= len(self.order):
            self._refill()
        micro = [self.order[self.pos]]
        total = self.lengths[micro[0]]
        self.pos += 1
        while True:
            if self.pos >= len(self.order):
                self._refill()
            nxt = self.order[self.pos]
            if total + self.lengths[nxt] > budget:
                break
            micro.append(nxt)
            total += self.lengths[nxt]
            self.pos += 1
        return micro


def _make_optimizer(model, cfg):
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=cfg.learning_rate,
                            betas=(0.9, 0.98), eps=1e-6)


def _clip_gradients(model, cfg):
    if cfg.grad_clip_norm > 0:
        torch.nn.utils.clip_grad_norm_(
            [p for p in model.parameters() if p.requires_grad],
            cfg.grad_clip_norm,
        )


def _snapshot_and_raise(model, out_dir, step, detail):
    path = Path(out_dir) / f"diagnostic_step{step:06d}.bin"
    save_checkpoint(path, model, meta={"step": step, "diagnostic": detail})
    raise NumericalError(
        f"non-finite loss at update {step} ({detail}); "
        f"parameter snapshot written to {path}"
    )


class _RunLog:
    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.log_f = open(self.out / "train_log.jsonl", "w", encoding="utf-8")
        self.index_f = open(self.out / "checkpoints.jsonl", "w",
                            encoding="utf-8")

    def log(self, entry):
        self.log_f.write(json.dumps(entry) + "\n")
        self.log_f.flush()

    def index(self, meta: CheckpointMeta):
        self.index_f.write(json.dumps(meta.__dict__) + "\n")
        self.index_f.flush()

    def close(self):
        self.log_f.close()
        self.index_f.close()


def pretrain(model, records, cfg: TrainConfig, out_dir):
    """Self-supervised training; returns the checkpoint series (one entry
    per validation, each carrying the mean validation contrastive loss).

    ``cfg.quantizer_mode`` picks how contrastive targets are quantized:
    ``soft`` (default) uses the deterministic tempered softmax, which the
    tau anneal sharpens toward one-hot over training; ``sampled`` uses
    hard straight-through Gumbel samples.  At small batch sizes the
    sampled variant's targets are noise-dominated until the quantizer
    logits grow, and the contrastive task can stall at its chance floor
    (the model collapses every candidate similarity to the same value);
    soft targets are content-stable from the first step and avoid that
    cold start.
    """
    torch.set_num_threads(1)
    if not records:
        raise DataError("empty pretraining manifest")
    q_mode = "soft" if cfg.quantizer_mode == "soft" else "train"
    run = _RunLog(out_dir)
    train_idx, val_idx = split_validation_indices(records)
    store = AudioStore()
    lengths = {i: len(store.samples(records[i])) for i in set(train_idx)}
    cycler = _Cycler(train_idx, lengths,
                     np.random.default_rng([cfg.seed, 0]))
    optimizer = _make_optimizer(model, cfg)
    series = []

    def validate(step):
        losses = []
        with torch.no_grad():
            for j, i in enumerate(val_idx):
                rng = np.random.default_rng([cfg.seed, 1, step, j])
                out = model.pretrain_step(store.samples(records[i]), rng,
                                          tau_at(cfg, step), mode=q_mode)
                losses.append(float(out.contrastive_loss))
        val_loss = float(np.mean(losses))
        path = run.out / f"ckpt_{step:06d}.bin"
        save_checkpoint(path, model, meta={"step": step,
                                           "val_loss": val_loss})
        meta = CheckpointMeta(step=step, path=str(path), val_loss=val_loss)
        series.append(meta)
        run.index(meta)
        return meta

    try:
        validate(0)
        for step in range(cfg.max_updates):
            t0 = time.perf_counter()
            lr = lr_at(cfg, step)
            for group in optimizer.param_groups:
                group["lr"] = lr
            tau = tau_at(cfg, step)
            micros = [cycler.take_micro(cfg.batch_budget)
                      for _ in range(cfg.accumulation)]
            n_total = sum(len(m) for m in micros)
            optimizer.zero_grad()
            contrastive_sum = diversity_sum = 0.0
            j = 0
            for micro in micros:
                total = None
                for i in micro:
                    rng = np.random.default_rng([cfg.seed, 2, step, j])
                    j += 1
                    out = model.pretrain_step(store.samples(records[i]),
                                              rng, tau, mode=q_mode)
                    total = (out.total_loss if total is None
                             else total + out.total_loss)
                    contrastive_sum += float(out.contrastive_loss.detach())
                    diversity_sum += float(out.diversity_loss.detach())
                (total / n_total).backward()
            mean_contrastive = contrastive_sum / n_total
            mean_diversity = diversity_sum / n_total
            mean_loss = (mean_contrastive
                         + model.config.diversity_weight * mean_diversity)
            if not math.isfinite(mean_loss):
                _snapshot_and_raise(model, run.out, step + 1,
                                    f"loss={mean_loss}")
            _clip_gradients(model, cfg)
            optimizer.step()
            run.log({
                "step": step + 1,
                "loss": mean_loss,
                "contrastive": mean_contrastive,
                "diversity": mean_diversity,
                "lr": lr,
                "tau": tau,
                "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
            })
            if (step + 1) % cfg.validate_every == 0 \
                    or step + 1 == cfg.max_updates:
                validate(step + 1)
    finally:
        run.close()
    return series


def finetune(model, records, vocab, cfg: TrainConfig, out_dir):
    """CTC fine-tuning; returns (checkpoint series, skipped report).

    Every transcript must be encodable under ``vocab``.  Utterances whose
    audio cannot host their label sequence (or is shorter than the encoder
    receptive field) are skipped and reported.

    ``cfg.finetune_mask_prob > 0`` enables span-mask augmentation: each
    training forward hides random latent-frame spans behind the learned
    mask embedding while CTC supervision still covers them, forcing the
    model to fill the gaps from context.  On corpora of a few dozen
    utterances this is the difference between learning transferable
    features and memorizing per-clip idiosyncrasies.  Validation decoding
    is always unmasked.
    """
    torch.set_num_threads(1)
    if not records:
        raise DataError("empty fine-tuning manifest")
    if vocab.size != model.vocab_size:
        raise UsageError(
            f"vocabulary size {vocab.size} does not match the model's CTC "
            f"head ({model.vocab_size})"
        )
    targets = []
    for r in records:
        if not r.text:
            raise DataError(f"{r.utt_id}: empty transcript in fine-tuning "
                            f"data; use pretraining for unlabeled audio")
        targets.append(vocab.encode(r.text))

    run = _RunLog(out_dir)
    train_idx, val_idx = split_validation_indices(records)
    store = AudioStore()

    usable, skipped = [], []
    for i in train_idx:
        samples = store.samples(records[i])
        try:
            frames = frame_count(model.config, len(samples))
        except DataError:
            skipped.append({"utt_id": records[i].utt_id,
                            "reason": "shorter than the encoder receptive "
                                      "field"})
            continue
        need = min_frames(targets[i])
        if frames < need:
            skipped.append({"utt_id": records[i].utt_id,
                            "reason": f"target needs {need} frames but "
                                      f"audio yields {frames}"})
            continue
        usable.append(i)
    if not usable:
        run.close()
        raise DataError(
            "no feasible fine-tuning utterances",
            failures=[f"{s['utt_id']}: {s['reason']}" for s in skipped],
        )
    for entry in skipped:
        run.log({"skipped": entry})

    decodable_val = []
    for i in val_idx:
        try:
            frame_count(model.config, len(store.samples(records[i])))
            decodable_val.append(i)
        except DataError:
            continue
    if not decodable_val:
        decodable_val = usable[:1]

    if cfg.freeze_encoder:
        for conv in model.convs:
            conv.requires_grad_(False)
        model.post_conv_norm.requires_grad_(False)

    lengths = {i: len(store.samples(records[i])) for i in usable}
    cycler = _Cycler(usable, lengths, np.random.default_rng([cfg.seed, 0]))
    optimizer = _make_optimizer(model, cfg)
    series = []

    def validate(step):
        refs, hyps = {}, {}
        with torch.no_grad():
            for j, i in enumerate(decodable_val):
                key = f"v{j:04d}"
                refs[key] = records[i].text
                lattice = model.forward_ctc(store.samples(records[i]))
                hyps[key] = greedy_decode(lattice, vocab).strip()
        report = score(refs, hyps)
        path = run.out / f"ckpt_{step:06d}.bin"
        save_checkpoint(path, model, meta={"step": step,
                                           "val_wer": report.wer,
                                           "val_cer": report.cer,
                                           "vocab": list(vocab.symbols)})
        meta = CheckpointMeta(step=step, path=str(path),
                              val_wer=report.wer, val_cer=report.cer)
        series.append(meta)
        run.index(meta)
        return meta

    try:
        validate(0)
        for step in range(cfg.max_updates):
            t0 = time.perf_counter()
            lr = lr_at(cfg, step)
            for group in optimizer.param_groups:
                group["lr"] = lr
            micros = [cycler.take_micro(cfg.batch_budget)
                      for _ in range(cfg.accumulation)]
            n_total = sum(len(m) for m in micros)
            optimizer.zero_grad()
            loss_sum = 0.0
            mask_rng = (np.random.default_rng([cfg.seed, 3, step])
                        if cfg.finetune_mask_prob > 0.0 else None)
            for micro in micros:
                lattices = model.ctc_lattices(
                    [store.samples(records[i]) for i in micro],
                    mask_prob=cfg.finetune_mask_prob, rng=mask_rng,
                )
                total = None
                for lattice, i in zip(lattices, micro):
                    utt_loss = ctc_loss_torch(lattice, targets[i])
                    total = utt_loss if total is None else total + utt_loss
                    loss_sum += float(utt_loss.detach())
                (total / n_total).backward()
            mean_loss = loss_sum / n_total
            if not math.isfinite(mean_loss):
                _snapshot_and_raise(model, run.out, step + 1,
                                    f"loss={mean_loss}")
            _clip_gradients(model, cfg)
            optimizer.step()
            run.log({
                "step": step + 1,
                "loss": mean_loss,
                "lr": lr,
                "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
            })
            if (step + 1) % cfg.validate_every == 0 \
                    or step + 1 == cfg.max_updates:
                validate(step + 1)
    finally:
        run.close()
    return series, skipped
