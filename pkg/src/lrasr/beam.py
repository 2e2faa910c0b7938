"""CTC prefix beam search with optional n-gram LM shallow fusion.

Hypotheses are merged by labeling prefix, each carrying separate blank /
non-blank path masses.  The LM contributes alpha * log p(word) whenever the
word delimiter closes a word, and once more at end of utterance for a final
partial word; beta adds a flat per-word insertion bonus.  With a closed LM
vocabulary (the default), closing an out-of-LM-vocabulary word scores -inf,
which is what forces in-vocabulary outputs.

Acoustic and LM scores are combined in natural log; ARPA log10 scores are
converted on the fly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .lm import BOS, score as lm_score

NEG_INF = float("-inf")
LN10 = math.log(10.0)


@dataclass
class DecoderWeights:
    beam_width: int = 50
    lm_weight: float = 0.5
    word_bonus: float = 1.0

    def __post_init__(self):
        if self.beam_width < 1:
            raise UsageError("beam_width must be >= 1")


@dataclass
class BeamHypothesis:
    prefix: tuple
    log_p_blank: float
    log_p_nonblank: float
    lm_log: float  # natural-log LM mass of completed words
    word_count: int
    score: float
    text: str = ""


def _lse(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = a if a > b else b
    return m + math.log(math.exp(a - m) + math.exp(b - m))


class _LmFusion:
    """Word-level LM bookkeeping keyed by labeling prefix."""

    def __init__(self, lm, vocab, allow_oov):
        self.lm = lm
        self.vocab = vocab
        self.allow_oov = allow_oov
        self.start_ctx = (BOS,) if lm is not None and lm.order >= 2 else ()

    def word_of(self, prefix, start, end):
        return "".join(self.vocab.symbols[i] for i in prefix[start:end])

    def score_word(self, word, ctx):
        if self.lm is None or not word:
            return 0.0
        if self.lm.is_oov(word) and not self.allow_oov:
            return NEG_INF
        return LN10 * lm_score(self.lm, word, ctx)

    def advance(self, ctx, word):
        if self.lm is None or self.lm.order < 2:
            return ()
        return (ctx + (word,))[-(self.lm.order - 1):]


def prefix_beam_search(logp, vocab, lm=None, weights=None, allow_oov_words=False):
    """Decode one lattice; returns hypotheses sorted best-first.

    Args:
        logp: (T, V) natural-log probability lattice, blank at column 0.
        vocab: CharVocabulary (blank 0, word delimiter 1).
        lm: optional NGramModel fused at word boundaries.
        weights: DecoderWeights; defaults to beam 50, alpha 0.5, beta 1.0.
        allow_oov_words: score out-of-LM-vocabulary words through <unk>
            instead of pruning them.

    If every final hypothesis has -inf combined score (closed-vocabulary LM
    with nothing in vocabulary reachable), ranking falls back to the
    acoustic-only score so a transcript is still produced.
    """
    logp = np.asarray(logp, dtype=np.float64)
    if logp.ndim != 2:
        raise UsageError(f"lattice must be 2-D (T, V), got shape {logp.shape}")
    T, V = logp.shape
    weights = weights or DecoderWeights()
    alpha, beta = weights.lm_weight, weights.word_bonus
    delim = vocab.space_index
    fusion = _LmFusion(lm, vocab, allow_oov_words)

    # per-prefix path mass [p_blank, p_nonblank]
    beams = {(): [0.0, NEG_INF]}
    # per-prefix LM state: (lm_log, word_count, context, last_word_start)
    aux = {(): (0.0, 0, fusion.start_ctx, 0)}

    def rank_score(prefix, pb, pnb):
        lm_log, n_words, _, _ = aux[prefix]
        return _lse(pb, pnb) + alpha * lm_log + beta * n_words

    for t in range(T):
        row = logp[t]
        nxt = {}

        def add(prefix, which, value):
            entry = nxt.get(prefix)
            if entry is None:
                entry = [NEG_INF, NEG_INF]
                nxt[prefix] = entry
            entry[which] = _lse(entry[which], value)

        for prefix, (pb, pnb) in beams.items():
            ptot = _lse(pb, pnb)
            add(prefix, 0, ptot + row[0])  # blank keeps the prefix
            last = prefix[-1] if prefix else None
            for c in range(1, V):
                p_c = row[c]
                if p_c == NEG_INF:
                    continue
                if c == last:
                    add(prefix, 1, pnb + p_c)  # same emission run
                    extended = pb + p_c  # repeat needs a blank in between
                else:
                    extended = ptot + p_c
                if extended == NEG_INF:
                    continue
                new_prefix = prefix + (c,)
                if new_prefix not in aux:
                    aux[new_prefix] = _extend_aux(aux[prefix], new_prefix, c,
                                                  delim, fusion)
                add(new_prefix, 1, extended)

        ranked = sorted(
            nxt.items(),
            key=lambda kv: (-rank_score(kv[0], kv[1][0], kv[1][1]), kv[0]),
        )
        beams = dict(ranked[:weights.beam_width])
        aux = {p: aux[p] for p in beams}

    return _finalize(beams, aux, vocab, alpha, beta, fusion)


def _extend_aux(parent_aux, new_prefix, symbol, delim, fusion):
    lm_log, n_words, ctx, word_start = parent_aux
    if symbol != delim:
        return (lm_log, n_words, ctx, word_start)
    word = fusion.word_of(new_prefix, word_start, len(new_prefix) - 1)
    if not word:  # leading or doubled delimiter: nothing to score
        return (lm_log, n_words, ctx, len(new_prefix))
    return (
        lm_log + fusion.score_word(word, ctx),
        n_words + 1,
        fusion.advance(ctx, word),
        len(new_prefix),
    )


def _finalize(beams, aux, vocab, alpha, beta, fusion):
    hyps = []
    for prefix, (pb, pnb) in beams.items():
        lm_log, n_words, ctx, word_start = aux[prefix]
        final_word = fusion.word_of(prefix, word_start, len(prefix))
        if final_word:
            lm_log = lm_log + fusion.score_word(final_word, ctx)
            n_words += 1
        acoustic = _lse(pb, pnb)
        score = acoustic + alpha * lm_log + beta * n_words
        hyps.append(BeamHypothesis(
            prefix=prefix,
            log_p_blank=pb,
            log_p_nonblank=pnb,
            lm_log=lm_log,
            word_count=n_words,
            score=score,
            text=vocab.decode(prefix),
        ))
    if hyps and all(h.score == NEG_INF for h in hyps):
        hyps.sort(key=lambda h: (-_lse(h.log_p_blank, h.log_p_nonblank), h.prefix))
    else:
        hyps.sort(key=lambda h: (-h.score, h.prefix))
    return hyps
