"""Numpy fallback for the CTC forward-backward kernel.

Same contract as the compiled extension in ``_ctc_core.pyx``.  The dynamic
program runs in log space; -inf is the uniform "impossible" sentinel and is
handled by the masked log-add below, so no special casing leaks out.

Vectorized over the augmented-label axis (length 2L+1), looping only over
frames, which keeps the fallback usable for real lattice sizes.
"""

import numpy as np

NEG_INF = -np.inf


def _logaddexp3(a, b, c):
    """Elementwise log(e^a + e^b + e^c) with -inf treated as zero mass."""
    m = np.maximum(np.maximum(a, b), c)
    out = np.full_like(m, NEG_INF)
    ok = m > NEG_INF
    if np.any(ok):
        mm = m[ok]
        out[ok] = mm + np.log(
            np.exp(a[ok] - mm) + np.exp(b[ok] - mm) + np.exp(c[ok] - mm)
        )
    return out


def _augment(labels):
    """Blank-interleaved label sequence: [b, l1, b, l2, ..., b]."""
    aug = np.zeros(2 * len(labels) + 1, dtype=np.int64)
    aug[1::2] = labels
    return aug


def ctc_forward_backward(logp, labels):
    """CTC loss and its gradient w.r.t. the log-probability lattice.

    Args:
        logp: (T, V) float64 array of per-frame log probabilities,
            blank at column 0.
        labels: (L,) integer array of target indices in [1, V-1],
            no blanks.

    Returns:
        (loss, grad): negative log probability of the target (float) and
        the (T, V) float64 gradient of the loss w.r.t. ``logp``.

    The caller guarantees feasibility (T >= L + #adjacent-repeats).
    """
    logp = np.asarray(logp, dtype=np.float64)
    T, V = logp.shape
    labels = np.asarray(labels, dtype=np.int64)
    aug = _augment(labels)
    S = len(aug)

    # skip transition s-2 -> s allowed when the target symbol differs from
    # the one two slots back (and is not blank)
    can_skip = np.zeros(S, dtype=bool)
    if S > 2:
        can_skip[2::2] = False
        can_skip[3::2] = aug[3::2] != aug[1:-2:2]

    emit = logp[:, aug]  # (T, S)

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    shifted1 = np.empty(S)
    shifted2 = np.empty(S)
    for t in range(1, T):
        prev = alpha[t - 1]
        shifted1[0] = NEG_INF
        shifted1[1:] = prev[:-1]
        shifted2[:2] = NEG_INF
        shifted2[2:] = np.where(can_skip[2:], prev[:-2], NEG_INF)
        alpha[t] = emit[t] + _logaddexp3(prev, shifted1, shifted2)

    if S > 1:
        log_p_total = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_p_total = alpha[T - 1, S - 1]
    if log_p_total == NEG_INF:
        raise FloatingPointError("CTC total probability underflowed to zero")

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        shifted1[-1] = NEG_INF
        shifted1[:-1] = nxt[1:]
        shifted2[:] = NEG_INF
        shifted2[:-2] = np.where(can_skip[2:], nxt[2:], NEG_INF)
        beta[t] = emit[t] + _logaddexp3(nxt, shifted1, shifted2)

    # occupancy of augmented state s at frame t, in log space; alpha and
    # beta both include the frame-t emission, so divide it out once.  States
    # with -inf alpha or beta have zero occupancy (guard avoids -inf + inf
    # when the emission itself is -inf).
    log_gamma = np.full((T, S), NEG_INF)
    ok = (alpha > NEG_INF) & (beta > NEG_INF)
    log_gamma[ok] = alpha[ok] + beta[ok] - emit[ok] - log_p_total
    grad = np.zeros((T, V))
    occ = np.exp(log_gamma)
    for t in range(T):
        np.add.at(grad[t], aug, -occ[t])

    return float(-log_p_total), grad
