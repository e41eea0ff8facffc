import numpy as np
import pytest

from fusseg.io import (FormatError, FusStack, RunConfig, SoftSegmentation, TernaryLabelMap,
                       read_label_map, read_tensor, write_label_map, write_tensor)


def test_tensor_round_trip_zeros(tmp_path):
    write_tensor(tmp_path / "z.f32", np.zeros((2, 2)))
    arr, meta = read_tensor(tmp_path / "z.f32")
    assert arr.shape == (2, 2) and not arr.any()
    assert meta == {}


def test_tensor_payload_bytes(tmp_path):
    p = tmp_path / "one.f32"
    write_tensor(p, np.array([1.0]), {"k": "v"})
    blob = p.read_bytes()
    header, payload = blob.split(b"\n", 1)
    assert header == b'{"dtype":"f32le","shape":[1],"meta":{"k":"v"}}'
    # IEEE-754 single 1.0 = sign 0, exponent 127 (0x7F << 23) -> 0x3F800000, little-endian
    assert payload == bytes([0x00, 0x00, 0x80, 0x3F])


def test_tensor_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        write_tensor(tmp_path / "x.f32", np.array([1.0, np.nan]))


def test_tensor_random_round_trip_bitwise(tmp_path, rng):
    a = rng.normal(size=(3, 4, 5)).astype(np.float32)
    write_tensor(tmp_path / "r.f32", a, {"subject": "s0"})
    b, meta = read_tensor(tmp_path / "r.f32")
    assert b.tobytes() == a.tobytes()
    assert meta == {"subject": "s0"}


def test_tensor_truncated_payload(tmp_path):
    p = tmp_path / "t.f32"
    write_tensor(p, np.ones((4, 4)))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_shape_payload_mismatch(tmp_path):
    p = tmp_path / "m.f32"
    p.write_bytes(b'{"dtype":"f32le","shape":[2,2],"meta":{}}\n' + bytes(12))  # needs 16
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_malformed_header(tmp_path):
    p = tmp_path / "h.f32"
    p.write_bytes(b"{not json\n" + bytes(4))
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_big_endian_input_stored_little_endian(tmp_path):
    a = np.array([1.0, 2.0], dtype=">f4")
    write_tensor(tmp_path / "be.f32", a)
    payload = (tmp_path / "be.f32").read_bytes().split(b"\n", 1)[1]
    assert payload == np.array([1.0, 2.0], dtype="<f4").tobytes()


def test_label_map_background_bytes(tmp_path):
    p = tmp_path / "b.pgm"
    write_label_map(p, TernaryLabelMap(np.zeros((2, 2), dtype=int)))
    blob = p.read_bytes()
    assert blob.startswith(b"P5\n2 2\n2\n")
    assert blob.endswith(b"\x00\x00\x00\x00")
    assert len(blob) == len(b"P5\n2 2\n2\n") + 4


def test_label_map_round_trip(tmp_path, rng):
    lab = TernaryLabelMap(rng.integers(0, 3, size=(7, 9)))
    write_label_map(tmp_path / "l.pgm", lab)
    back = read_label_map(tmp_path / "l.pgm")
    assert back.shape == (7, 9)
    np.testing.assert_array_equal(back.labels, lab.labels)


def test_label_map_rejects_value_above_two(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P5\n2 1\n255\n" + bytes([0, 7]))
    with pytest.raises(FormatError):
        read_label_map(p)


def test_label_map_reads_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n2\n" + bytes([1, 2]))
    np.testing.assert_array_equal(read_label_map(p).labels, [[1, 2]])


def test_fus_stack_invariants():
    with pytest.raises(ValueError):
        FusStack(np.ones((1, 4, 8)))
    with pytest.raises(ValueError):
        FusStack(-np.ones((1, 8, 8)))
    assert len(FusStack(np.ones((3, 8, 8)))) == 3


def test_soft_segmentation_simplex():
    p = np.full((3, 2, 2), 1 / 3)
    assert SoftSegmentation(p).hard().labels.tolist() == [[0, 0], [0, 0]]  # ties -> background
    with pytest.raises(ValueError):
        SoftSegmentation(np.full((3, 2, 2), 0.5))


def test_one_hot_partition(rng):
    lab = TernaryLabelMap(rng.integers(0, 3, size=(5, 6)))
    np.testing.assert_array_equal(lab.one_hot().sum(axis=0), np.ones((5, 6)))


def test_run_config_validation_and_round_trip():
    cfg = RunConfig(architecture="unet", loss="dice_ce", frames=10)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        RunConfig(alpha=1.5)
    with pytest.raises(ValueError):
        RunConfig(frames=0)
    with pytest.raises(ValueError):
        RunConfig(architecture="transunet")
    with pytest.raises(ValueError):
        RunConfig.from_dict({"learning_rate": 1})
