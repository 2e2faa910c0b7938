"""Desk-scale self-supervised acoustic model.

A small wav2vec-2.0-style stack: a strided 1-D convolutional feature
encoder, a Gumbel-softmax product quantizer, a transformer context network
with span masking, an InfoNCE contrastive objective with a codebook
diversity regularizer, and a linear CTC head.

With the default configuration the encoder downsamples 16 kHz audio by a
total stride of 160 samples (100 frames per second) with a receptive field
of 185 samples (about 11.6 ms).

All stochastic choices (mask starts, Gumbel noise, distractor sampling)
are drawn from a caller-supplied ``numpy.random.Generator`` so that runs
are reproducible independently of global RNG state.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .ctc import ctc_loss as _ctc_loss_np
from .errors import DataError, UsageError

DEFAULT_ENCODER_LAYERS = ((64, 10, 5), (64, 8, 4), (64, 8, 8))


@dataclass
class ModelConfig:
    """Architecture and objective hyperparameters.

    ``encoder_layers`` is a sequence of (out_channels, kernel, stride)
    triples; the last width must equal ``model_dim``.
    """

    encoder_layers: tuple = DEFAULT_ENCODER_LAYERS
    model_dim: int = 64
    ffn_dim: int = 128
    num_heads: int = 4
    num_transformer_layers: int = 2
    quantizer_groups: int = 2
    entries_per_group: int = 16
    codevector_dim: int = 64
    mask_prob: float = 0.15
    mask_span: int = 4
    num_negatives: int = 10
    temperature: float = 0.1
    diversity_weight: float = 0.1

    def __post_init__(self):
        self.encoder_layers = tuple(
            tuple(int(v) for v in layer) for layer in self.encoder_layers
        )
        if not self.encoder_layers:
            raise UsageError("encoder_layers must not be empty")
        for layer in self.encoder_layers:
            if len(layer) != 3 or any(v < 1 for v in layer):
                raise UsageError(
                    f"encoder layer must be (out_channels, kernel, stride) of "
                    f"positive ints, got {layer!r}"
                )
        if self.encoder_layers[-1][0] != self.model_dim:
            raise UsageError(
                "last encoder layer width must equal model_dim "
                f"({self.encoder_layers[-1][0]} != {self.model_dim})"
            )
        if self.num_heads < 1 or self.model_dim % self.num_heads != 0:
            raise UsageError("model_dim must be divisible by num_heads")
        if self.num_transformer_layers < 0:
            raise UsageError("num_transformer_layers must be >= 0")
        if self.quantizer_groups < 1 or self.entries_per_group < 1:
            raise UsageError("quantizer must have >= 1 group and >= 1 entry")
        if self.codevector_dim % self.quantizer_groups != 0:
            raise UsageError(
                "codevector_dim must be divisible by quantizer_groups"
            )
        if not 0.0 < self.mask_prob < 1.0:
            raise UsageError("mask_prob must lie strictly between 0 and 1")
        if self.mask_span < 1:
            raise UsageError("mask_span must be >= 1")
        if self.num_negatives < 1:
            raise UsageError("num_negatives must be >= 1")
        if self.temperature <= 0:
            raise UsageError("temperature must be positive")
        if self.diversity_weight < 0:
            raise UsageError("diversity_weight must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def receptive_field(config: ModelConfig) -> int:
    """Input samples consumed by a single output frame."""
    rf, stride = 1, 1
    for _, kernel, s in config.encoder_layers:
        rf += (kernel - 1) * stride
        stride *= s
    return rf


def total_stride(config: ModelConfig) -> int:
    """Input samples advanced per output frame."""
    stride = 1
    for _, _, s in config.encoder_layers:
        stride *= s
    return stride


def frame_count(config: ModelConfig, n_samples: int) -> int:
    """Output frames for an input of ``n_samples``; each unpadded conv
    layer maps a length L to floor((L - kernel)/stride) + 1."""
    t = int(n_samples)
    for _, kernel, s in config.encoder_layers:
        if t < kernel:
            raise DataError(
                f"input of {n_samples} samples is shorter than the encoder "
                f"receptive field ({receptive_field(config)} samples)"
            )
        t = (t - kernel) // s + 1
    return t


def sample_mask_indices(n_frames: int, mask_prob: float, mask_span: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of length ``n_frames``: round(p*T) span starts drawn
    without replacement, each covering ``mask_span`` frames (clipped at the
    end; spans may overlap)."""
    if n_frames < mask_span:
        raise UsageError(
            f"sequence of {n_frames} frames is shorter than the mask span "
            f"{mask_span}"
        )
    mask = np.zeros(n_frames, dtype=bool)
    n_starts = int(round(mask_prob * n_frames))
    if n_starts > 0:
        starts = rng.choice(n_frames, size=n_starts, replace=False)
        for start in starts:
            mask[start:start + mask_span] = True
    return mask


def sinusoidal_positions(n_frames: int, dim: int,
                         dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(n_frames, dtype=dtype).unsqueeze(1)
    idx = torch.arange(0, dim, 2, dtype=dtype)
    angles = pos / torch.pow(torch.tensor(10000.0, dtype=dtype), idx / dim)
    pe = torch.zeros(n_frames, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(angles)
    pe[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return pe


def info_nce(context: torch.Tensor, candidates: torch.Tensor,
             kappa: float) -> torch.Tensor:
    """Mean InfoNCE loss: ``context`` is (N, D); ``candidates`` is
    (N, 1+K, D) with the true target at index 0.  Scores are cosine
    similarities divided by ``kappa``."""
    sims = F.cosine_similarity(context.unsqueeze(1), candidates, dim=-1)
    labels = torch.zeros(sims.shape[0], dtype=torch.long)
    return F.cross_entropy(sims / kappa, labels)


_ENTROPY_EPS = 1e-10


def codebook_perplexity(probs: torch.Tensor) -> torch.Tensor:
    """Per-group exp(entropy) of the mean code distribution; ``probs`` has
    shape (..., G, V).

    The log is epsilon-stabilized: with hard one-hot usages an unused code
    has exactly zero mean probability, where the entropy gradient would
    otherwise be infinite.
    """
    groups, entries = probs.shape[-2], probs.shape[-1]
    mean = probs.reshape(-1, groups, entries).mean(dim=0)
    entropy = -(mean * torch.log(mean + _ENTROPY_EPS)).sum(dim=-1)
    return torch.exp(entropy)


@dataclass
class PretrainStepOutput:
    contrastive_loss: torch.Tensor
    diversity_loss: torch.Tensor
    total_loss: torch.Tensor
    codebook_perplexity: tuple
    masked_indices: tuple
    distractors_replaced: bool


class _CTCFunction(torch.autograd.Function):
    @staticmethod
    def forward(ctx, log_probs, targets):
        lattice = log_probs.detach().cpu().double().numpy()
        loss, grad = _ctc_loss_np(
            lattice, np.asarray(targets, dtype=np.int64), grad=True
        )
        ctx.save_for_backward(
            torch.from_numpy(grad).to(dtype=log_probs.dtype)
        )
        return log_probs.new_tensor(loss)

    @staticmethod
    def backward(ctx, grad_output):
        (grad,) = ctx.saved_tensors
        return grad_output * grad, None


def ctc_loss_torch(log_probs: torch.Tensor, targets) -> torch.Tensor:
    """Differentiable CTC loss on a (T, V) log-probability lattice."""
    return _CTCFunction.apply(log_probs, tuple(int(t) for t in targets))


class AcousticModel(nn.Module):
    """Feature encoder + quantizer + context network + CTC head."""

    def __init__(self, config: ModelConfig, vocab_size: int):
        super().__init__()
        if vocab_size < 2:
            raise UsageError("vocab_size must be >= 2 (blank plus labels)")
        self.config = config
        self.vocab_size = int(vocab_size)
        convs = []
        in_channels = 1
        for out_channels, kernel, stride in config.encoder_layers:
            convs.append(nn.Conv1d(in_channels, out_channels, kernel,
                                   stride=stride))
            in_channels = out_channels
        self.convs = nn.ModuleList(convs)
        self.post_conv_norm = nn.LayerNorm(config.model_dim)
        self.mask_embedding = nn.Parameter(
            torch.randn(config.model_dim) * 0.1
        )
        self.quantizer_logits = nn.Linear(
            config.model_dim,
            config.quantizer_groups * config.entries_per_group,
        )
        self.codebook = nn.Parameter(
            torch.randn(
                config.quantizer_groups,
                config.entries_per_group,
                config.codevector_dim // config.quantizer_groups,
            ) * 0.1
        )
        self.context_to_codevector = nn.Linear(
            config.model_dim, config.codevector_dim
        )
        layer = nn.TransformerEncoderLayer(
            d_model=config.model_dim,
            nhead=config.num_heads,
            dim_feedforward=config.ffn_dim,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.transformer = nn.TransformerEncoder(
            layer,
            num_layers=config.num_transformer_layers,
            norm=nn.LayerNorm(config.model_dim),
            enable_nested_tensor=False,
        )
        self.ctc_head = nn.Linear(config.model_dim, self.vocab_size)

    def _param_dtype(self):
        return self.ctc_head.weight.dtype

    def encode_features(self, samples: torch.Tensor) -> torch.Tensor:
        """(B, L) waveform batch -> (B, T, model_dim) latent frames."""
        frame_count(self.config, samples.shape[-1])
        x = samples.unsqueeze(1)
        for conv in self.convs:
            x = F.gelu(conv(x))
        x = x.transpose(1, 2)
        return self.post_conv_norm(x)

    def apply_masking(self, z: torch.Tensor, mask) -> torch.Tensor:
        """Replace masked frames (bool vector over the T axis) with the
        learned mask embedding."""
        mask_t = torch.as_tensor(np.asarray(mask, dtype=bool))
        out = z.clone()
        out[..., mask_t, :] = self.mask_embedding.to(z.dtype)
        return out

    def quantize(self, z: torch.Tensor, tau: float, mode: str = "train",
                 rng: np.random.Generator = None):
        """Product-quantize latent frames.

        Returns (quantized, probs): ``quantized`` is (..., codevector_dim);
        ``probs`` is (..., G, V) — hard straight-through one-hots in
        ``train`` mode, argmax one-hots in ``infer`` mode, and plain
        tempered softmax in ``soft`` mode (fully differentiable).
        """
        if tau <= 0:
            raise UsageError("quantizer temperature must be positive")
        cfg = self.config
        logits = self.quantizer_logits(z).reshape(
            *z.shape[:-1], cfg.quantizer_groups, cfg.entries_per_group
        )
        if mode == "soft":
            probs = torch.softmax(logits / tau, dim=-1)
        elif mode in ("train", "infer"):
            if mode == "train":
                if rng is None:
                    raise UsageError(
                        "train-mode quantization requires a numpy Generator"
                    )
                noise = torch.from_numpy(
                    rng.gumbel(size=tuple(logits.shape))
                ).to(dtype=logits.dtype)
                soft = torch.softmax((logits + noise) / tau, dim=-1)
            else:
                soft = torch.softmax(logits / tau, dim=-1)
            index = soft.argmax(dim=-1, keepdim=True)
            hard = torch.zeros_like(soft).scatter_(-1, index, 1.0)
            probs = hard if mode == "infer" else hard - soft.detach() + soft
        else:
            raise UsageError(f"unknown quantizer mode {mode!r}")
        quantized = torch.einsum("...gv,gvd->...gd", probs, self.codebook)
        quantized = quantized.reshape(*z.shape[:-1], cfg.codevector_dim)
        return quantized, probs

    def contextualize(self, x: torch.Tensor,
                      key_padding_mask: torch.Tensor = None) -> torch.Tensor:
        pe = sinusoidal_positions(x.shape[-2], self.config.model_dim,
                                  dtype=x.dtype)
        return self.transformer(x + pe, src_key_padding_mask=key_padding_mask)

    def pretrain_step(self, samples: np.ndarray, rng: np.random.Generator,
                      tau: float, mode: str = "train") -> PretrainStepOutput:
        """Self-supervised loss for one utterance.

        Quantized targets come from the unmasked latent frames at masked
        positions; the context network sees the masked sequence.  Each
        masked position is scored against its own target plus K distractor
        targets drawn from the other masked positions (with replacement,
        flagged, when fewer than K others exist).
        """
        cfg = self.config
        x = torch.as_tensor(
            np.asarray(samples, dtype=np.float64), dtype=self._param_dtype()
        ).reshape(1, -1)
        z = self.encode_features(x)
        n_frames = z.shape[1]
        mask = sample_mask_indices(n_frames, cfg.mask_prob, cfg.mask_span, rng)
        masked_idx = np.flatnonzero(mask)
        if masked_idx.size < 2:
            raise DataError(
                "contrastive loss needs at least two masked frames "
                f"(got {masked_idx.size}); increase mask_prob or input length"
            )
        targets, probs = self.quantize(z[0, masked_idx], tau, mode, rng)
        context = self.contextualize(self.apply_masking(z, mask))
        projected = self.context_to_codevector(context[0, masked_idx])

        n_masked = masked_idx.size
        replace = (n_masked - 1) < cfg.num_negatives
        rows = []
        for i in range(n_masked):
            others = np.delete(np.arange(n_masked), i)
            rows.append(rng.choice(others, size=cfg.num_negatives,
                                   replace=replace))
        distractors = targets[torch.as_tensor(np.stack(rows), dtype=torch.long)]
        candidates = torch.cat([targets.unsqueeze(1), distractors], dim=1)
        contrastive = info_nce(projected, candidates, cfg.temperature)

        perplexity = codebook_perplexity(probs)
        n_codes = cfg.quantizer_groups * cfg.entries_per_group
        diversity = (n_codes - perplexity.sum()) / n_codes
        total = contrastive + cfg.diversity_weight * diversity
        return PretrainStepOutput(
            contrastive_loss=contrastive,
            diversity_loss=diversity,
            total_loss=total,
            codebook_perplexity=tuple(
                float(p) for p in perplexity.detach()
            ),
            masked_indices=tuple(int(i) for i in masked_idx),
            distractors_replaced=bool(replace),
        )

    def ctc_lattices(self, batch, mask_prob: float = 0.0,
                     rng: np.random.Generator = None) -> list:
        """Batched forward to per-utterance (T_i, vocab) log-softmax
        lattices (torch tensors carrying gradients).

        Zero-padding plus attention key-padding masks make each lattice
        independent of its batch companions: an unpadded conv frame sees
        only real samples, and padded frames are excluded from attention
        and sliced off the result.

        With ``mask_prob > 0`` (training-time augmentation), span masks
        are sampled over each utterance's real frames — the same geometry
        as pretraining, ``config.mask_span`` frames per span — and those
        frames are replaced by the learned mask embedding before the
        transformer.  CTC supervision still covers the masked frames, so
        the model must fill them from context.
        """
        waves = [np.asarray(s, dtype=np.float64).reshape(-1) for s in batch]
        if not waves:
            raise UsageError("ctc_lattices requires at least one utterance")
        frames = [frame_count(self.config, len(w)) for w in waves]
        max_len = max(len(w) for w in waves)
        dtype = self._param_dtype()
        padded = torch.zeros(len(waves), max_len, dtype=dtype)
        for i, w in enumerate(waves):
            padded[i, : len(w)] = torch.as_tensor(w, dtype=dtype)
        z = self.encode_features(padded)
        if mask_prob > 0.0:
            if rng is None:
                raise UsageError(
                    "masked lattices require a numpy Generator")
            span_mask = torch.zeros(z.shape[:2], dtype=torch.bool)
            for i, n in enumerate(frames):
                m = sample_mask_indices(n, mask_prob,
                                        self.config.mask_span, rng)
                span_mask[i, :n] = torch.as_tensor(np.asarray(m, dtype=bool))
            z = torch.where(span_mask.unsqueeze(-1),
                            self.mask_embedding.to(z.dtype), z)
        t_axis = torch.arange(z.shape[1])
        key_padding = t_axis.unsqueeze(0) >= torch.tensor(frames).unsqueeze(1)
        context = self.contextualize(z, key_padding_mask=key_padding)
        logits = self.ctc_head(context)
        return [
            F.log_softmax(logits[i, : frames[i]], dim=-1)
            for i in range(len(waves))
        ]

    def forward_ctc(self, samples: np.ndarray, vocab=None) -> np.ndarray:
        """Inference lattice for one utterance as a float64 (T, vocab)
        array of log probabilities (blank at column 0)."""
        if vocab is not None and vocab.size != self.vocab_size:
            raise UsageError(
                f"vocabulary size {vocab.size} does not match CTC head "
                f"size {self.vocab_size}"
            )
        with torch.no_grad():
            lattice = self.ctc_lattices([samples])[0]
        return lattice.double().numpy()
