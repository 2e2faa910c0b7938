import numpy as np
import pytest
import torch

from lrasr.checkpoint import load_checkpoint, read_meta, save_checkpoint
from lrasr.errors import DataError
from lrasr.model import AcousticModel, ModelConfig

TOY = dict(
    encoder_layers=((8, 10, 5), (8, 4, 2)),
    model_dim=8,
    ffn_dim=16,
    num_heads=2,
    num_transformer_layers=1,
    quantizer_groups=2,
    entries_per_group=4,
    codevector_dim=8,
)


def make_model(seed=0):
    torch.manual_seed(seed)
    return AcousticModel(ModelConfig(**TOY), vocab_size=5)


def test_round_trip_restores_every_parameter(tmp_path):
    model = make_model()
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model, meta={"step": 7})
    loaded, meta = load_checkpoint(path)
    assert meta == {"step": 7}
    assert loaded.vocab_size == model.vocab_size
    assert loaded.config == model.config
    for k in model.state_dict():
        assert torch.equal(loaded.state_dict()[k], model.state_dict()[k])


def test_save_load_save_is_byte_identical(tmp_path):
    model = make_model()
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_checkpoint(p1, model, meta={"note": "first"})
    loaded, _ = load_checkpoint(p1)
    save_checkpoint(p2, loaded, meta={"note": "first"})
    assert p1.read_bytes() == p2.read_bytes()


def test_forward_reproduced_bit_identically(tmp_path):
    model = make_model()
    samples = np.random.default_rng(0).normal(size=500) * 0.1
    before = model.forward_ctc(samples)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model)
    loaded, _ = load_checkpoint(path)
    after = loaded.forward_ctc(samples)
    assert np.array_equal(before, after)


def test_meta_survives_unicode_and_nesting(tmp_path):
    model = make_model()
    meta = {"vocab": ["<blank>", "<space>", "ア", "ン"], "nested": {"k": 1.5}}
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model, meta=meta)
    assert read_meta(path) == meta


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    model = make_model()
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model)
    clipped = tmp_path / "clipped.bin"
    clipped.write_bytes(path.read_bytes()[:200])
    with pytest.raises(DataError):
        load_checkpoint(clipped)


def test_tampered_array_name_rejected(tmp_path):
    model = make_model()
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model)
    data = path.read_bytes()
    tampered = data.replace(b"ctc_head.weight", b"ctc_head.weirdo", 1)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(tampered)
    with pytest.raises(DataError):
        load_checkpoint(bad)
