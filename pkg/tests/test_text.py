import numpy as np
import pytest

from lrasr.errors import DataError, UsageError
from lrasr.text import (
    MISSING,
    CharVocabulary,
    LanguageFeatureVector,
    NormalizationPolicy,
    TransliterationTable,
    language_distance,
    normalize,
    transliterate,
    vocab_from_texts,
)


def test_normalize_keeps_glottal_stop_drops_punctuation():
    assert (
        normalize("sine, sine.. 'oyanruru kotan 'ohta")
        == "sine sine 'oyanruru kotan 'ohta"
    )


def test_normalize_case_fold_and_empty():
    assert normalize("ABC Def") == "abc def"
    assert normalize("") == ""
    assert normalize("ab", NormalizationPolicy(case_fold="upper")) == "AB"


def test_normalize_strips_metadata_brackets():
    assert normalize("kotan [laughs] ohta (note)") == "kotan ohta"
    assert normalize("a ［メモ］ b") == "a b"
    assert normalize("x {y {z}} w") == "x w"  # nested
    assert normalize("pirka（注）") == "pirka"


def test_normalize_japanese_punctuation():
    assert normalize("アノ、コタン。「ホシ」") == "アノコタンホシ"


def test_normalize_idempotent():
    samples = [
        "sine, sine.. 'oyanruru kotan 'ohta",
        "A (b) [c] {d}  E。、F",
        " multiple   spaces\tand\ttabs ",
        "アノ ジンkoy（メモ）",
    ]
    for s in samples:
        once = normalize(s)
        assert normalize(once) == once


def test_normalize_policy_validation():
    with pytest.raises(UsageError):
        NormalizationPolicy(case_fold="title")


def test_transliterate_paper_examples():
    assert transliterate("アノ") == "ano"
    assert transliterate("ソ") == "so"
    assert transliterate("tanna abc") == "tanna abc"
    assert transliterate("ソ'oヤw") == "so'oyaw"


def test_transliterate_digraphs_and_voicing():
    assert transliterate("キャク") == "kyaku"
    assert transliterate("ジャ") == "ja"
    assert transliterate("シチツフ") == "shichitsufu"
    assert transliterate("ガギグゲゴ") == "gagigugego"
    assert transliterate("パン") == "pan"


def test_transliterate_long_vowel_mark_doubles():
    assert transliterate("ソー") == "soo"
    assert transliterate("レーコー") == "reekoo"
    assert transliterate("ー") == "ー"  # nothing to lengthen: pass through


def test_transliterate_sokuon_geminates():
    assert transliterate("カッパ") == "kappa"
    assert transliterate("マッチ") == "matchi"  # Hepburn t-gemination for ch


def test_transliterate_final_sokuon_warns_and_drops():
    with pytest.warns(UserWarning, match="sokuon"):
        assert transliterate("アッ") == "a"


def test_transliterate_ainu_small_finals():
    assert transliterate("コタㇴ") == "kotan"
    assert transliterate("イタㇰ") == "itak"
    assert transliterate("ㇷ゚") == "p"


def test_transliterate_small_vowel_combinations():
    assert transliterate("トゥ") == "tu"
    assert transliterate("ウェ") == "we"
    assert transliterate("ティ") == "ti"


def test_transliterate_idempotent_and_passthrough_count():
    text = "アxノ yzー1"
    once = transliterate(text)
    assert transliterate(once) == once
    for ch in "xyz1 ":  # unmapped characters survive exactly
        assert once.count(ch) == text.count(ch)


def test_transliterate_custom_table_and_tsv(tmp_path):
    table = TransliterationTable({"ab": "X", "a": "y"})
    assert transliterate("aba", table) == "Xy"  # longest match first
    tsv = tmp_path / "t.tsv"
    tsv.write_text("ab\tX\na\ty\n", encoding="utf-8")
    loaded = TransliterationTable.from_tsv(tsv)
    assert transliterate("aba", loaded) == "Xy"
    extended = loaded.extended({"b": "Z"})
    assert transliterate("b", extended) == "Z"


def test_vocab_sharing_policy_sizes():
    corpus = ["ab", "Ab"]
    shared = vocab_from_texts(corpus, "shared_folded")
    assert shared.symbols == ["<blank>", "<space>", "a", "b"]
    assert shared.size == 4
    by_case = vocab_from_texts(corpus, "separate_by_case")
    assert by_case.symbols == ["<blank>", "<space>", "A", "a", "b"]
    assert by_case.size == 5


def test_vocab_script_policies():
    corpus = ["アノ", "ano"]
    folded = vocab_from_texts(corpus, "shared_folded")
    assert folded.symbols == ["<blank>", "<space>", "a", "n", "o"]
    by_script = vocab_from_texts(corpus, "separate_by_script")
    assert set(by_script.symbols) >= {"ア", "ノ", "a", "n", "o"}


def test_shared_never_larger_than_by_case():
    rng = np.random.default_rng(3)
    letters = "abcdeABCDE アノソ"
    for _ in range(20):
        corpus = [
            "".join(rng.choice(list(letters), size=rng.integers(1, 12)))
            for _ in range(5)
        ]
        try:
            shared = vocab_from_texts(corpus, "shared_folded")
            by_case = vocab_from_texts(corpus, "separate_by_case")
        except DataError:
            continue  # corpus happened to be all-space
        assert shared.size <= by_case.size


def test_vocab_encode_decode_round_trip():
    vocab = vocab_from_texts(["kotan 'ohta"], "shared_folded")
    text = "kotan 'ohta"
    ids = vocab.encode(text)
    assert vocab.decode(ids) == text
    assert all(i >= 1 for i in ids)
    assert vocab.decode([0, *ids, 0]) == text  # blanks are dropped


def test_vocab_unknown_char_rejected():
    vocab = vocab_from_texts(["ab"])
    with pytest.raises(DataError, match="not in vocabulary"):
        vocab.encode("abc")


def test_vocab_save_load_round_trip(tmp_path):
    vocab = vocab_from_texts(["kotan 'ohta"], "shared_folded")
    p = tmp_path / "vocab.txt"
    vocab.save(p)
    assert p.read_text(encoding="utf-8").splitlines()[:2] == ["<blank>", "<space>"]
    assert CharVocabulary.load(p).symbols == vocab.symbols


def test_vocab_empty_corpus_rejected():
    with pytest.raises(DataError, match="empty corpus"):
        vocab_from_texts([])
    with pytest.raises(DataError, match="empty corpus"):
        vocab_from_texts(["   "])


def test_language_distance_examples():
    names = ["f1", "f2", "f3"]
    a = LanguageFeatureVector(names, [1.0, 0.0, MISSING])
    b = LanguageFeatureVector(names, [1.0, 1.0, 0.0])
    assert language_distance(a, b) == pytest.approx(0.5)
    same = LanguageFeatureVector(names, [0.3, 0.7, 0.1])
    assert language_distance(same, same) == 0.0
    zeros = LanguageFeatureVector(names, [0.0, 0.0, 0.0])
    ones = LanguageFeatureVector(names, [1.0, 1.0, 1.0])
    assert language_distance(zeros, ones) == 1.0


def test_language_distance_errors():
    a = LanguageFeatureVector(["f1", "f2"], [1.0, MISSING])
    b = LanguageFeatureVector(["f1", "f2"], [MISSING, 0.0])
    with pytest.raises(DataError, match="no feature"):
        language_distance(a, b)
    c = LanguageFeatureVector(["g1", "g2"], [0.5, 0.5])
    with pytest.raises(DataError, match="inventories"):
        language_distance(a, c)
    with pytest.raises(DataError):
        LanguageFeatureVector(["f1"], [1.5])
