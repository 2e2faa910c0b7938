import collections

import pytest

from lrasr.errors import DataError, UsageError
from lrasr.manifest import UtteranceRecord, write_manifest
from lrasr.mixing import MixSource, build_mixture


def make_manifest(tmp_path, name, n, lang="xx"):
    records = [
        UtteranceRecord(f"{name}_{i:03d}.wav", 1.0, f"text {i}", lang)
        for i in range(n)
    ]
    path = tmp_path / f"{name}.jsonl"
    write_manifest(records, path)
    return str(path)


def test_single_factor_one_is_a_permutation(tmp_path):
    path = make_manifest(tmp_path, "a", 12)
    mix = build_mixture([MixSource(path)], shuffle_seed=0)
    assert sorted(r.audio_path for r in mix) == sorted(
        f"a_{i:03d}.wav" for i in range(12)
    )


def test_factor_counting(tmp_path):
    a = make_manifest(tmp_path, "a", 3)
    b = make_manifest(tmp_path, "b", 30)
    mix = build_mixture([MixSource(a, factor=10), MixSource(b)],
                        shuffle_seed=1)
    assert len(mix) == 60
    counts = collections.Counter(r.audio_path for r in mix)
    for i in range(3):
        assert counts[f"a_{i:03d}.wav"] == 10
    for i in range(30):
        assert counts[f"b_{i:03d}.wav"] == 1


def test_target_fraction_half(tmp_path):
    a = make_manifest(tmp_path, "a", 10)
    b = make_manifest(tmp_path, "b", 990)
    mix = build_mixture(
        [MixSource(a, target_fraction=0.5), MixSource(b)], shuffle_seed=2
    )
    n_a = sum(1 for r in mix if r.audio_path.startswith("a_"))
    assert abs(n_a - 990) <= 1
    assert abs(n_a / len(mix) - 0.5) < 0.001


def test_target_fraction_non_integer_share(tmp_path):
    a = make_manifest(tmp_path, "a", 7)
    b = make_manifest(tmp_path, "b", 20)
    mix = build_mixture(
        [MixSource(a, target_fraction=0.3), MixSource(b)], shuffle_seed=3
    )
    n_a = sum(1 for r in mix if r.audio_path.startswith("a_"))
    exact = 0.3 / 0.7 * 20
    assert abs(n_a - exact) <= 1


def test_fraction_trim_subsamples_uniformly(tmp_path):
    # Every original record should still appear at least once after the
    # trim when the replication head-room is small.
    a = make_manifest(tmp_path, "a", 4)
    b = make_manifest(tmp_path, "b", 12)
    mix = build_mixture(
        [MixSource(a, target_fraction=0.5), MixSource(b)], shuffle_seed=4
    )
    counts = collections.Counter(
        r.audio_path for r in mix if r.audio_path.startswith("a_")
    )
    assert sum(counts.values()) == 12
    assert max(counts.values()) - min(counts.values()) <= 1


def test_validation_errors(tmp_path):
    a = make_manifest(tmp_path, "a", 2)
    b = make_manifest(tmp_path, "b", 2)
    with pytest.raises(UsageError):
        MixSource(a, factor=0)
    with pytest.raises(UsageError):
        MixSource(a, target_fraction=1.5)
    with pytest.raises(UsageError):
        build_mixture(
            [MixSource(a, target_fraction=0.4),
             MixSource(b, target_fraction=0.4)],
            shuffle_seed=0,
        )
    with pytest.raises(UsageError):
        build_mixture([MixSource(a, target_fraction=0.4)], shuffle_seed=0)
    with pytest.raises(UsageError):
        build_mixture([], shuffle_seed=0)


def test_empty_source_manifest_rejected(tmp_path):
    empty = tmp_path / "empty.jsonl"
    write_manifest([], empty)
    with pytest.raises(DataError):
        build_mixture([MixSource(str(empty))], shuffle_seed=0)


def test_deterministic_given_seed(tmp_path):
    a = make_manifest(tmp_path, "a", 5)
    b = make_manifest(tmp_path, "b", 40)
    srcs = lambda: [MixSource(a, target_fraction=0.3), MixSource(b)]
    m1 = build_mixture(srcs(), shuffle_seed=9)
    m2 = build_mixture(srcs(), shuffle_seed=9)
    m3 = build_mixture(srcs(), shuffle_seed=10)
    assert [r.audio_path for r in m1] == [r.audio_path for r in m2]
    assert [r.audio_path for r in m1] != [r.audio_path for r in m3]


def test_oversampled_records_share_audio_path(tmp_path):
    a = make_manifest(tmp_path, "a", 2)
    mix = build_mixture([MixSource(a, factor=5)], shuffle_seed=0)
    groups = collections.defaultdict(list)
    for r in mix:
        groups[r.audio_path].append(r)
    assert set(len(g) for g in groups.values()) == {5}
    for path, group in groups.items():
        assert all(r.audio_path is group[0].audio_path for r in group)
