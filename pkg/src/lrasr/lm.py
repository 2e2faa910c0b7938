"""Back-off n-gram language models: interpolated modified Kneser-Ney training
with an add-k fallback for degenerate corpora, ARPA serialization, back-off
scoring, and perplexity/OOV reporting.

Probabilities are log10 throughout (ARPA convention).  Sentence markers <s>
and </s> are used for order >= 2; unigram models score bare tokens.
"""

import math
import warnings
from dataclasses import dataclass, field

from .errors import DataError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
ADD_K = 0.01
LOG10_ZERO = -99.0  # ARPA convention for "probability zero" (used for <s>)


@dataclass
class NGramModel:
    order: int
    # tables[n] maps an n-token tuple to [log10 prob, log10 backoff-weight];
    # backoff 0.0 when the gram is not a context
    tables: dict = field(default_factory=dict)
    smoothing: str = "kn"
    _vocab: set = field(default=None, init=False, repr=False, compare=False)

    @property
    def vocab(self) -> set:
        """Predictable tokens: every unigram except <s>.

        Cached; models are immutable after training.
        """
        if self._vocab is None:
            self._vocab = {g[0] for g in self.tables.get(1, {}) if g[0] != BOS}
        return self._vocab

    def is_oov(self, token: str) -> bool:
        return token not in self.vocab or token == UNK


@dataclass
class PerplexityReport:
    ppl_including_oov: float
    ppl_excluding_oov: float
    oov_count: int
    token_count: int


def _as_sentences(corpus):
    """Accept strings or pre-tokenized sequences; drop empty sentences."""
    sentences = []
    for sent in corpus:
        tokens = sent.split() if isinstance(sent, str) else list(sent)
        if tokens:
            sentences.append(tokens)
    if not sentences:
        raise DataError("empty corpus: nothing to train a language model on")
    return sentences


def _count_ngrams(sentences, order):
    """Raw counts for all orders 1..order over <s>/</s>-padded sentences
    (no padding for unigram models)."""
    raw = {n: {} for n in range(1, order + 1)}
    for words in sentences:
        seq = words if order == 1 else [BOS] + words + [EOS]
        for n in range(1, order + 1):
            table = raw[n]
            for i in range(len(seq) - n + 1):
                g = tuple(seq[i:i + n])
                table[g] = table.get(g, 0) + 1
    return raw


def _adjusted_counts(raw, order):
    """Continuation counts for orders < N; raw counts for order N and for
    grams starting with <s> (which can never be left-extended)."""
    adj = {order: dict(raw[order])}
    for n in range(order - 1, 0, -1):
        cont = {}
        for key in raw[n + 1]:
            suffix = key[1:]
            cont[suffix] = cont.get(suffix, 0) + 1  # keys are distinct types
        adj[n] = {
            g: (raw[n][g] if g[0] == BOS else cont.get(g, 0))
            for g in raw[n]
        }
    return adj


class _Discounts:
    """Modified Kneser-Ney discounts D1, D2, D3+ for one order."""

    def __init__(self, counts):
        t = [0, 0, 0, 0, 0]  # t[k] = number of grams with adjusted count k
        maxc = 0
        for c in counts:
            maxc = max(maxc, c)
            if 1 <= c <= 4:
                t[c] += 1
        t1, t2, t3, t4 = t[1], t[2], t[3], t[4]
        self.degenerate = (
            t1 == 0
            or (maxc >= 2 and t2 == 0)
            or (maxc >= 3 and t3 == 0)
        )
        if self.degenerate:
            self.d = (0.0, 0.0, 0.0, 0.0)
            return
        y = t1 / (t1 + 2.0 * t2)
        d1 = 1.0 - 2.0 * y * t2 / t1
        d2 = 2.0 - 3.0 * y * t3 / t2 if maxc >= 2 else 0.0
        d3 = 3.0 - 4.0 * y * t4 / t3 if maxc >= 3 else 0.0
        self.d = (0.0, d1, d2, d3)
        if any(dd < 0 for dd in self.d):
            self.degenerate = True

    def __call__(self, count: int) -> float:
        return self.d[min(count, 3)]


def train_ngram(corpus, order: int, smoothing: str = "kn", k: float = ADD_K) -> NGramModel:
    """Train a back-off model.

    ``smoothing`` is "kn" (modified Kneser-Ney, falling back to add-k with a
    warning when the counts-of-counts cannot support the discount formulas)
    or "addk" (force additive smoothing with constant ``k``).
    """
    if order < 1:
        raise DataError(f"order must be >= 1, got {order}")
    if smoothing not in ("kn", "addk"):
        raise DataError(f"unknown smoothing {smoothing!r}")
    sentences = _as_sentences(corpus)
    raw = _count_ngrams(sentences, order)

    if smoothing == "kn":
        adj = _adjusted_counts(raw, order)
        discounts = {}
        degenerate = False
        for n in range(1, order + 1):
            counts = [c for g, c in adj[n].items() if g != (BOS,)]
            discounts[n] = _Discounts(counts)
            degenerate = degenerate or discounts[n].degenerate
        if not degenerate:
            return _train_kn(adj, order, discounts)
        warnings.warn(
            "counts-of-counts too sparse for modified Kneser-Ney discounts; "
            f"falling back to add-k smoothing (k={k})"
        )
    return _train_addk(raw, order, k)


def _vocab_from_counts(table1):
    """Predicted token inventory: word types, </s> when padded, <unk>."""
    vocab = {g[0] for g in table1 if g[0] != BOS}
    vocab.add(UNK)
    return vocab


def _train_kn(adj, order, discounts) -> NGramModel:
    vocab = _vocab_from_counts(adj[1])
    V = len(vocab)

    # unigrams: interpolate the discounted distribution with uniform 1/V
    D = discounts[1]
    denom = sum(c for g, c in adj[1].items() if g != (BOS,))
    gamma_uni = sum(D(c) for g, c in adj[1].items() if g != (BOS,)) / denom
    prob = {1: {}}
    for w in vocab:
        c = adj[1].get((w,), 0)
        prob[1][(w,)] = (c - D(c)) / denom + gamma_uni / V

    backoff = {n: {} for n in range(1, order)}
    for n in range(2, order + 1):
        D = discounts[n]
        by_context = {}
        for g, c in adj[n].items():
            by_context.setdefault(g[:-1], {})[g[-1]] = c
        prob[n] = {}
        for h, entries in by_context.items():
            total = sum(entries.values())
            gamma = sum(D(c) for c in entries.values()) / total
            backoff[n - 1][h] = gamma
            for w, c in entries.items():
                prob[n][h + (w,)] = (c - D(c)) / total + gamma * prob[n - 1][h[1:] + (w,)]

    return _assemble(prob, backoff, order, smoothing="kn")


def _train_addk(raw, order, k) -> NGramModel:
    vocab = _vocab_from_counts(raw[1])
    V = len(vocab)

    prob = {1: {}}
    denom = sum(c for g, c in raw[1].items() if g != (BOS,))
    for w in vocab:
        prob[1][(w,)] = (raw[1].get((w,), 0) + k) / (denom + k * V)

    backoff = {n: {} for n in range(1, order)}
    for n in range(2, order + 1):
        by_context = {}
        for g, c in raw[n].items():
            by_context.setdefault(g[:-1], {})[g[-1]] = c
        prob[n] = {}
        for h, entries in by_context.items():
            total = sum(entries.values())
            seen_mass = 0.0
            lower_seen = 0.0
            for w, c in entries.items():
                p = (c + k) / (total + k * V)
                prob[n][h + (w,)] = p
                seen_mass += p
                lower_seen += prob[n - 1][h[1:] + (w,)]
            # route the leftover mass through the lower order (Katz-style)
            backoff[n - 1][h] = (1.0 - seen_mass) / max(1.0 - lower_seen, 1e-12)

    return _assemble(prob, backoff, order, smoothing="addk")


def _assemble(prob, backoff, order, smoothing) -> NGramModel:
    tables = {n: {} for n in range(1, order + 1)}
    for n in range(1, order + 1):
        for g, p in prob[n].items():
            logp = LOG10_ZERO if p <= 10.0**LOG10_ZERO else math.log10(p)
            bow = backoff.get(n, {}).get(g, None)
            logbow = 0.0 if bow is None else math.log10(max(bow, 10.0**LOG10_ZERO))
            tables[n][g] = [logp, logbow]
    if order >= 2:
        # <s> is context-only: probability "zero", but it carries its backoff
        bos_bow = backoff.get(1, {}).get((BOS,), None)
        logbow = 0.0 if bos_bow is None else math.log10(max(bos_bow, 10.0**LOG10_ZERO))
        tables[1][(BOS,)] = [LOG10_ZERO, logbow]
    return NGramModel(order=order, tables=tables, smoothing=smoothing)


def score(model: NGramModel, word: str, context=()) -> float:
    """log10 p(word | context) via the standard back-off chain."""
    w = word if word in model.vocab else UNK
    h = tuple(context)
    if len(h) >= model.order:
        h = h[-(model.order - 1):] if model.order > 1 else ()
    return _score(model, h, w)


def _score(model, h, w):
    g = h + (w,)
    entry = model.tables.get(len(g), {}).get(g)
    if entry is not None:
        return entry[0]
    if not h:
        raise DataError(f"token {w!r} missing from the unigram table")
    ctx = model.tables.get(len(h), {}).get(h)
    bow = ctx[1] if ctx is not None else 0.0
    return bow + _score(model, h[1:], w)


def sentence_scores(model: NGramModel, words):
    """Per-position (token, log10 p, is_oov) for one sentence.

    For order >= 2 the context starts at <s> and </s> is scored as the final
    position; unigram models score bare tokens.
    """
    out = []
    h = (BOS,) if model.order >= 2 else ()
    for w in words:
        out.append((w, score(model, w, h), model.is_oov(w)))
        mapped = w if w in model.vocab else UNK
        h = (h + (mapped,))[-(model.order - 1):] if model.order > 1 else ()
    if model.order >= 2:
        out.append((EOS, score(model, EOS, h), False))
    return out


def perplexity(model: NGramModel, corpus) -> PerplexityReport:
    """Perplexity including and excluding OOV positions, plus OOV counts.

    ``token_count`` counts corpus word tokens (not </s>); the perplexity
    denominators additionally include the scored </s> positions.
    """
    sentences = _as_sentences(corpus)
    total_incl = total_excl = 0.0
    n_incl = n_excl = 0
    oov = tokens = 0
    for words in sentences:
        tokens += len(words)
        for w, lp, is_oov in sentence_scores(model, words):
            total_incl += lp
            n_incl += 1
            if is_oov and w != EOS:
                oov += 1
            else:
                total_excl += lp
                n_excl += 1
    ppl_incl = 10.0 ** (-total_incl / n_incl) if n_incl else float("inf")
    ppl_excl = 10.0 ** (-total_excl / n_excl) if n_excl else float("inf")
    return PerplexityReport(ppl_incl, ppl_excl, oov, tokens)


def write_arpa(model: NGramModel, path) -> None:
    """Serialize in ARPA text form (log10, tab-separated fields)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        for n in range(1, model.order + 1):
            f.write(f"ngram {n}={len(model.tables.get(n, {}))}\n")
        f.write("\n")
        for n in range(1, model.order + 1):
            f.write(f"\\{n}-grams:\n")
            for g in sorted(model.tables.get(n, {})):
                logp, bow = model.tables[n][g]
                line = f"{logp:.7f}\t{' '.join(g)}"
                if bow != 0.0:
                    line += f"\t{bow:.7f}"
                f.write(line + "\n")
            f.write("\n")
        f.write("\\end\\\n")


def read_arpa(path) -> NGramModel:
    """Parse an ARPA file; count mismatches and dangling contexts are errors."""
    declared = {}
    tables = {}
    state = "preamble"
    current = None
    lineno = 0
    with open(path, encoding="utf-8") as f:
        for lineno, rawline in enumerate(f, start=1):
            line = rawline.strip()
            if state == "preamble":
                if line == "\\data\\":
                    state = "counts"
                continue
            if state == "counts":
                if not line:
                    continue
                if line.startswith("ngram "):
                    try:
                        n, cnt = line[len("ngram "):].split("=")
                        declared[int(n)] = int(cnt)
                    except ValueError as e:
                        raise DataError(f"{path}:{lineno}: bad count line {line!r}") from e
                    continue
                state = "sections"
            if state == "sections":
                if not line:
                    continue
                if line == "\\end\\":
                    state = "done"
                    continue
                if line.startswith("\\") and line.endswith("-grams:"):
                    _check_section(path, lineno, declared, tables, current)
                    try:
                        current = int(line[1:-len("-grams:")])
                    except ValueError as e:
                        raise DataError(f"{path}:{lineno}: bad section header {line!r}") from e
                    if current not in declared:
                        raise DataError(f"{path}:{lineno}: section {current} not in \\data\\")
                    tables[current] = {}
                    continue
                if current is None:
                    raise DataError(f"{path}:{lineno}: entry outside any section")
                fields = line.split("\t")
                if len(fields) == 1:  # tolerate space-separated files
                    fields = line.split()
                    if len(fields) < current + 1:
                        raise DataError(f"{path}:{lineno}: malformed entry {line!r}")
                    logp, toks = fields[0], fields[1:current + 1]
                    rest = fields[current + 1:]
                    bow = rest[0] if rest else None
                else:
                    if len(fields) not in (2, 3):
                        raise DataError(f"{path}:{lineno}: malformed entry {line!r}")
                    logp, toks = fields[0], fields[1].split()
                    bow = fields[2] if len(fields) == 3 else None
                if len(toks) != current:
                    raise DataError(
                        f"{path}:{lineno}: expected {current} tokens, got {len(toks)}"
                    )
                try:
                    entry = [float(logp), float(bow) if bow is not None else 0.0]
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: bad number in {line!r}") from e
                tables[current][tuple(toks)] = entry
    if state != "done":
        raise DataError(f"{path}: missing \\data\\ or \\end\\ marker")
    _check_section(path, lineno, declared, tables, current)
    for n in declared:
        if n not in tables:
            raise DataError(f"{path}: declared {n}-gram section missing")
    order = max(declared) if declared else 0
    if order == 0:
        raise DataError(f"{path}: no n-gram sections")
    model = NGramModel(order=order, tables=tables)
    for n in range(2, order + 1):
        for g in tables[n]:
            if g[:-1] not in tables[n - 1]:
                raise DataError(
                    f"{path}: {n}-gram {' '.join(g)!r} has no {n-1}-gram context"
                )
    return model


def _check_section(path, lineno, declared, tables, current):
    if current is not None and len(tables[current]) != declared[current]:
        raise DataError(
            f"{path}:{lineno}: \\data\\ declared {declared[current]} "
            f"{current}-grams but section listed {len(tables[current])}"
        )
