"""CTC loss (forward-backward with analytic lattice gradient) and best-path decoding.

The dynamic program itself lives in :mod:`lrasr.kernels` (compiled extension
with a numpy fallback); this module adds validation, the feasibility check,
and the greedy decoder.
"""

import numpy as np

from .errors import InfeasibleTargetError
from .kernels import ctc_forward_backward

BLANK = 0


def min_frames(target) -> int:
    """Fewest frames that can emit ``target``: its length plus one separating
    blank per adjacent repeated label."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def check_feasible(num_frames: int, target) -> None:
    need = min_frames(target)
    if num_frames < need:
        raise InfeasibleTargetError(
            f"target of length {len(list(target))} needs >= {need} frames, "
            f"lattice has {num_frames}"
        )


def ctc_loss(logp, target, grad: bool = True):
    """Negative log probability of ``target`` under a log-prob lattice.

    Args:
        logp: (T, V) array of per-frame log probabilities, blank at column 0.
        target: label indices in [1, V-1], blank-free.
        grad: also return the exact (T, V) gradient w.r.t. ``logp``.

    Returns:
        loss, or (loss, gradient) when ``grad`` is true.

    Raises:
        InfeasibleTargetError: if the lattice is too short to emit the target.
        ValueError: on malformed inputs.
    """
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    if logp.ndim != 2:
        raise ValueError(f"lattice must be 2-D (T, V), got shape {logp.shape}")
    T, V = logp.shape
    labels = np.ascontiguousarray(target, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("target must be a flat index sequence")
    if labels.size and (labels.min() < 1 or labels.max() >= V):
        raise ValueError(
            f"target indices must lie in [1, {V - 1}], got "
            f"[{labels.min()}, {labels.max()}]"
        )
    check_feasible(T, labels)
    loss, gradient = ctc_forward_backward(logp, labels)
    if grad:
        return loss, gradient
    return loss


def greedy_path(logp):
    """Per-frame argmax indices (ties broken toward the lowest index)."""
    logp = np.asarray(logp)
    return np.argmax(logp, axis=1)


def collapse(path, blank: int = BLANK):
    """Collapse consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for idx in path:
        idx = int(idx)
        if idx != prev and idx != blank:
            out.append(idx)
        prev = idx
    return out


def greedy_decode(logp, vocab=None):
    """Best-path decode: argmax per frame, collapse repeats, remove blanks.

    With ``vocab`` (anything providing ``decode(indices) -> str``) returns the
    transcript; otherwise returns the collapsed index list.
    """
    indices = collapse(greedy_path(logp))
    if vocab is None:
        return indices
    return vocab.decode(indices)
