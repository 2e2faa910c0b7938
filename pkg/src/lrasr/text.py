"""Transcript normalization, kana-to-Latin transliteration, character
vocabularies under the three sharing policies, and typological language
distance."""

import re
import unicodedata
import warnings
from dataclasses import dataclass, field

from .errors import DataError, UsageError

MISSING = None

# editorial-annotation spans removed by metadata stripping
_BRACKET_RE = re.compile(
    r"\([^()]*\)|\[[^\[\]]*\]|\{[^{}]*\}|（[^（）]*）|［[^［］]*］|｛[^｛｝]*｝"
)


@dataclass
class NormalizationPolicy:
    strip_punctuation: bool = True
    strip_metadata: bool = True
    case_fold: str = "lower"  # none | lower | upper
    collapse_whitespace: bool = True

    def __post_init__(self):
        if self.case_fold not in ("none", "lower", "upper"):
            raise UsageError(f"case_fold must be none|lower|upper, got {self.case_fold!r}")


def _is_punctuation(ch: str) -> bool:
    # apostrophe marks the glottal stop and is never punctuation here
    return ch != "'" and unicodedata.category(ch).startswith("P")


def normalize(text: str, policy: NormalizationPolicy = NormalizationPolicy()) -> str:
    """Apply the normalization policy; idempotent by construction."""
    if policy.strip_metadata:
        prev = None
        while prev != text:  # innermost-out, so nesting unwinds
            prev = text
            text = _BRACKET_RE.sub(" ", text)
    if policy.strip_punctuation:
        text = "".join(ch for ch in text if not _is_punctuation(ch))
    if policy.case_fold == "lower":
        text = text.lower()
    elif policy.case_fold == "upper":
        text = text.upper()
    if policy.collapse_whitespace:
        text = " ".join(text.split())
    return text


@dataclass
class TransliterationTable:
    """Longest-match-first grapheme-cluster mapping.

    ``sokuon`` (gemination mark) and ``long_mark`` (vowel lengthener) are
    context-sensitive and handled outside the plain table lookup.
    """

    entries: dict
    direction: str = ""
    sokuon: str = ""
    long_mark: str = ""
    max_cluster_len: int = field(init=False)

    def __post_init__(self):
        self.max_cluster_len = max((len(k) for k in self.entries), default=1)

    @classmethod
    def from_tsv(cls, path, **kwargs):
        entries = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected source<TAB>target")
                entries[parts[0]] = parts[1]
        return cls(entries, **kwargs)

    def extended(self, extra: dict) -> "TransliterationTable":
        merged = dict(self.entries)
        merged.update(extra)
        return TransliterationTable(merged, self.direction, self.sokuon, self.long_mark)


def _build_kana_table() -> dict:
    rows = {
        "": "ア イ ウ エ オ",
        "k": "カ キ ク ケ コ",
        "s": "サ シ ス セ ソ",
        "t": "タ チ ツ テ ト",
        "n": "ナ ニ ヌ ネ ノ",
        "h": "ハ ヒ フ ヘ ホ",
        "m": "マ ミ ム メ モ",
        "r": "ラ リ ル レ ロ",
        "g": "ガ ギ グ ゲ ゴ",
        "z": "ザ ジ ズ ゼ ゾ",
        "d": "ダ ヂ ヅ デ ド",
        "b": "バ ビ ブ ベ ボ",
        "p": "パ ピ プ ペ ポ",
    }
    irregular = {
        "シ": "shi", "チ": "chi", "ツ": "tsu", "フ": "fu",
        "ジ": "ji", "ヂ": "ji", "ヅ": "zu",
    }
    table = {}
    vowels = "aiueo"
    for cons, kana in rows.items():
        for k, v in zip(kana.split(), vowels):
            table[k] = irregular.get(k, cons + v)
    table.update({
        "ヤ": "ya", "ユ": "yu", "ヨ": "yo",
        "ワ": "wa", "ヲ": "o", "ン": "n", "ヴ": "vu",
    })
    # yōon digraphs: consonant-i kana + small ya/yu/yo
    digraph_bases = {
        "キ": "ky", "シ": "sh", "チ": "ch", "ニ": "ny", "ヒ": "hy",
        "ミ": "my", "リ": "ry", "ギ": "gy", "ジ": "j", "ヂ": "j",
        "ビ": "by", "ピ": "py",
    }
    for kana, base in digraph_bases.items():
        for small, v in zip("ャュョ", ("a", "u", "o")):
            table[kana + small] = base + v
    # small vowels, both alone and in the foreign/Ainu combinations
    for small, v in zip("ァィゥェォ", "aiueo"):
        table[small] = v
    table.update({
        "ウィ": "wi", "ウェ": "we", "ウォ": "wo",
        "ティ": "ti", "トゥ": "tu", "ディ": "di", "ドゥ": "du",
        "ファ": "fa", "フィ": "fi", "フェ": "fe", "フォ": "fo",
        "チェ": "che", "シェ": "she", "ジェ": "je", "イェ": "ye",
    })
    # small final-consonant kana (U+31F0 block, used for Ainu codas)
    finals = {
        "ㇰ": "k", "ㇱ": "s", "ㇲ": "s", "ㇳ": "t", "ㇴ": "n",
        "ㇵ": "h", "ㇶ": "h", "ㇷ": "h", "ㇸ": "h", "ㇹ": "h",
        "ㇺ": "m", "ㇻ": "r", "ㇼ": "r", "ㇽ": "r", "ㇾ": "r", "ㇿ": "r",
    }
    table.update(finals)
    table["ㇷ゚"] = "p"  # small pu: U+31F7 + combining handakuten
    return table


KANA_TO_ROMAJI = TransliterationTable(
    _build_kana_table(), direction="kana->latin", sokuon="ッ", long_mark="ー"
)

_VOWELS = set("aiueo")


def transliterate(text: str, table: TransliterationTable = KANA_TO_ROMAJI) -> str:
    """Greedy longest-match transliteration; unmapped characters pass through."""
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if table.sokuon and ch == table.sokuon:
            nxt = _match(text, i + 1, table)
            if nxt is not None and nxt[1] and nxt[1][0] not in _VOWELS:
                # Hepburn writes the geminate of ch- as t- (matchi, not macchi)
                out.append("t" if nxt[1].startswith("ch") else nxt[1][0])
            else:
                warnings.warn(
                    f"sokuon at position {i} has no following consonant; dropped"
                )
            i += 1
            continue
        if table.long_mark and ch == table.long_mark:
            last = out[-1][-1] if out and out[-1] else ""
            out.append(last if last in _VOWELS else ch)
            i += 1
            continue
        m = _match(text, i, table)
        if m is None:
            out.append(ch)
            i += 1
        else:
            out.append(m[1])
            i += m[0]
    return "".join(out)


def _match(text, i, table):
    """Longest table entry starting at i, as (length, target), or None."""
    for length in range(min(table.max_cluster_len, len(text) - i), 0, -1):
        cluster = text[i:i + length]
        if cluster in table.entries:
            return length, table.entries[cluster]
    return None


BLANK_SYMBOL = "<blank>"
SPACE_SYMBOL = "<space>"

SHARING_POLICIES = ("shared_folded", "separate_by_case", "separate_by_script")


def apply_sharing_policy(text: str, policy: str) -> str:
    """Case/script transform that defines each vocabulary-sharing policy."""
    if policy == "shared_folded":
        return transliterate(text).lower()
    if policy == "separate_by_case":
        return transliterate(text)
    if policy == "separate_by_script":
        return text.lower()
    raise UsageError(f"unknown sharing policy {policy!r}; choose from {SHARING_POLICIES}")


@dataclass
class CharVocabulary:
    """Ordered CTC output inventory: blank at 0, word delimiter at 1."""

    symbols: list

    def __post_init__(self):
        if len(self.symbols) < 3:
            raise DataError("vocabulary needs blank, space, and at least one symbol")
        if self.symbols[0] != BLANK_SYMBOL or self.symbols[1] != SPACE_SYMBOL:
            raise DataError(f"vocabulary must start with {BLANK_SYMBOL}, {SPACE_SYMBOL}")
        if len(set(self.symbols)) != len(self.symbols):
            raise DataError("duplicate vocabulary symbols")
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank_index(self) -> int:
        return 0

    @property
    def space_index(self) -> int:
        return 1

    def encode(self, text: str) -> list:
        out = []
        for ch in text:
            if ch == " ":
                out.append(self.space_index)
            elif ch in self._index:
                out.append(self._index[ch])
            else:
                raise DataError(f"character {ch!r} not in vocabulary")
        return out

    def decode(self, indices) -> str:
        out = []
        for i in indices:
            i = int(i)
            if i == self.blank_index:
                continue
            if i == self.space_index:
                out.append(" ")
            else:
                out.append(self.symbols[i])
        return "".join(out)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for s in self.symbols:
                f.write(s + "\n")

    @classmethod
    def load(cls, path) -> "CharVocabulary":
        with open(path, encoding="utf-8") as f:
            symbols = [line.rstrip("\n") for line in f]
        return cls([s for s in symbols if s])


def vocab_from_texts(texts, policy: str = "shared_folded") -> CharVocabulary:
    """Vocabulary over all characters of the policy-transformed texts."""
    chars = set()
    for text in texts:
        chars.update(apply_sharing_policy(text, policy))
    chars.discard(" ")
    if not chars:
        raise DataError("empty corpus: no characters to build a vocabulary from")
    return CharVocabulary([BLANK_SYMBOL, SPACE_SYMBOL] + sorted(chars))


def build_vocabulary(manifest_paths, policy: str = "shared_folded") -> CharVocabulary:
    from .manifest import read_manifest

    texts = []
    for path in manifest_paths:
        texts.extend(r.text for r in read_manifest(path) if r.text)
    return vocab_from_texts(texts, policy)


@dataclass
class LanguageFeatureVector:
    feature_names: list
    feature_values: list  # entries in [0, 1] or MISSING (None)

    def __post_init__(self):
        if len(self.feature_names) != len(self.feature_values):
            raise DataError("feature names and values must align")
        for name, v in zip(self.feature_names, self.feature_values):
            if v is not MISSING and not 0.0 <= v <= 1.0:
                raise DataError(f"feature {name}: value {v} outside [0, 1]")


def language_distance(a: LanguageFeatureVector, b: LanguageFeatureVector) -> float:
    """Mean absolute difference over features defined in both vectors."""
    if a.feature_names != b.feature_names:
        raise DataError("feature inventories differ; vectors are incomparable")
    diffs = [
        abs(x - y)
        for x, y in zip(a.feature_values, b.feature_values)
        if x is not MISSING and y is not MISSING
    ]
    if not diffs:
        raise DataError("no feature is defined in both vectors; distance undefined")
    return sum(diffs) / len(diffs)
