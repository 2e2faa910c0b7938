"""Edit-distance scoring: CER/WER with substitution/insertion/deletion
breakdowns, optional script relaxation (kana romanization, case folding),
and corpus-level pooling."""

from dataclasses import dataclass, field

from .errors import DataError
from .text import transliterate


@dataclass
class RelaxationPolicy:
    romanize_kana: bool = False
    case_fold: bool = False

    def apply(self, text: str) -> str:
        if self.romanize_kana:
            text = transliterate(text)
        if self.case_fold:
            text = text.lower()
        return text


@dataclass
class UtteranceScore:
    utt_id: str
    char_distance: int
    char_s: int
    char_i: int
    char_d: int
    ref_chars: int
    word_distance: int
    word_s: int
    word_i: int
    word_d: int
    ref_words: int


@dataclass
class EvalReport:
    cer: float
    wer: float
    char_s: int
    char_i: int
    char_d: int
    word_s: int
    word_i: int
    word_d: int
    ref_chars: int
    ref_words: int
    per_utterance: list = field(default_factory=list)


def edit_distance(ref, hyp):
    """Minimal unit-cost edit distance between token sequences.

    Returns (distance, substitutions, insertions, deletions) where an
    insertion is a hypothesis token with no reference counterpart.  Among
    minimal alignments the traceback prefers the diagonal, so a mismatch
    counts as one substitution rather than an insert+delete pair.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        ri = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                prev[j - 1] + (ri != hyp[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )
    s = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return dist[n][m], s, ins, dele


def _char_seq(text: str, include_spaces: bool) -> list:
    return list(text) if include_spaces else [c for c in text if c != " "]


def score(refs: dict, hyps: dict,
          relaxation: RelaxationPolicy = RelaxationPolicy(),
          cer_includes_spaces: bool = False) -> EvalReport:
    """Score hypotheses against references keyed by utterance id.

    The relaxation is applied identically to both sides.  CER is computed
    over characters with inter-word spaces removed unless
    ``cer_includes_spaces``; WER over whitespace tokens.  Corpus rates pool
    total distance over total reference length.
    """
    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing or extra:
        raise DataError(
            "utterance ids do not align: "
            f"missing from hypotheses {missing}; unmatched hypotheses {extra}"
        )
    per_utt = []
    for utt_id in sorted(refs):
        ref = relaxation.apply(refs[utt_id])
        hyp = relaxation.apply(hyps[utt_id])
        cd, cs, ci, cdel = edit_distance(
            _char_seq(ref, cer_includes_spaces), _char_seq(hyp, cer_includes_spaces)
        )
        wd, ws, wi, wdel = edit_distance(ref.split(), hyp.split())
        per_utt.append(UtteranceScore(
            utt_id, cd, cs, ci, cdel, len(_char_seq(ref, cer_includes_spaces)),
            wd, ws, wi, wdel, len(ref.split()),
        ))
    ref_chars = sum(u.ref_chars for u in per_utt)
    ref_words = sum(u.ref_words for u in per_utt)
    char_dist = sum(u.char_distance for u in per_utt)
    word_dist = sum(u.word_distance for u in per_utt)
    return EvalReport(
        cer=_rate(char_dist, ref_chars),
        wer=_rate(word_dist, ref_words),
        char_s=sum(u.char_s for u in per_utt),
        char_i=sum(u.char_i for u in per_utt),
        char_d=sum(u.char_d for u in per_utt),
        word_s=sum(u.word_s for u in per_utt),
        word_i=sum(u.word_i for u in per_utt),
        word_d=sum(u.word_d for u in per_utt),
        ref_chars=ref_chars,
        ref_words=ref_words,
        per_utterance=per_utt,
    )


def _rate(distance: int, length: int) -> float:
    if length == 0:
        return 0.0 if distance == 0 else float("inf")
    return 100.0 * distance / length


def format_report(report: EvalReport) -> str:
    lines = [
        f"CER {report.cer:6.2f}%  (S={report.char_s} I={report.char_i} "
        f"D={report.char_d} over {report.ref_chars} chars)",
        f"WER {report.wer:6.2f}%  (S={report.word_s} I={report.word_i} "
        f"D={report.word_d} over {report.ref_words} words)",
    ]
    return "\n".join(lines)
