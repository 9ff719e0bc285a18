import numpy as np
import pytest

from hypersparse.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from hypersparse.errors import FormatError
from hypersparse.nn import ModelSpec, init_params
from hypersparse.pruning import magnitude_prune


@pytest.fixture
def params():
    p = init_params(ModelSpec(5, (7,), 3), seed=2)
    p["fc1.bias"].values[...] = np.float32(np.pi)
    p["fc1.weight"].values[0, 0] = np.float32(-0.0)
    return p


def test_round_trip_bitwise(tmp_path, params):
    mask = magnitude_prune(params, 0.6)
    save_checkpoint(tmp_path / "c.ckpt", params, mask)
    loaded, m = load_checkpoint(tmp_path / "c.ckpt")
    assert loaded.equals(params)
    assert np.array_equal(m.bits, mask.bits)
    assert m.kappa == pytest.approx((params.num_prunable - mask.kept) / params.num_prunable)
    assert [l.prunable for l in loaded] == [l.prunable for l in params]


def test_without_mask(params):
    loaded, m = decode_checkpoint(encode_checkpoint(params))
    assert m is None and loaded.equals(params)


def test_layout(params):
    buf = encode_checkpoint(params)
    assert buf[:4] == b"HSNW"
    assert int.from_bytes(buf[4:8], "little") == 1
    assert int.from_bytes(buf[8:12], "little") == 4
    name_len = int.from_bytes(buf[12:16], "little")
    assert buf[16:16 + name_len] == b"fc1.weight"


def test_truncation_and_corruption(params):
    buf = encode_checkpoint(params, magnitude_prune(params, 0.5))
    for cut in (2, 10, 30, len(buf) - 1):
        with pytest.raises(FormatError):
            decode_checkpoint(buf[:cut])
    with pytest.raises(FormatError):
        decode_checkpoint(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        decode_checkpoint(buf[:4] + (2).to_bytes(4, "little") + buf[8:])
    with pytest.raises(FormatError):
        decode_checkpoint(buf + b"\x00")
