"""PFM format: header layout, round trips, error cases."""

import numpy as np
import pytest

from crossnorm.pfm import PfmFormatError, read_pfm, write_pfm


def test_single_channel_round_trip(tmp_path, rng):
    arr = rng.normal(size=(1, 2, 2)).astype(np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(arr, path)
    back = read_pfm(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_three_channel_round_trip(tmp_path, rng):
    arr = rng.normal(size=(3, 5, 7)).astype(np.float32)
    path = tmp_path / "x.pfm"
    write_pfm(arr, path)
    assert np.array_equal(read_pfm(path), arr)


def test_header_bytes_exact(tmp_path):
    arr = np.arange(4, dtype=np.float32).reshape(1, 2, 2)
    path = tmp_path / "g.pfm"
    write_pfm(arr, path)
    blob = path.read_bytes()
    assert blob[:12] == b"Pf\n2 2\n-1.0\n"
    assert len(blob) == 12 + 16


def test_bottom_to_top_scanlines(tmp_path):
    arr = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)  # row 0 = top
    path = tmp_path / "g.pfm"
    write_pfm(arr, path)
    payload = np.frombuffer(path.read_bytes()[12:], dtype="<f4")
    assert payload.tolist() == [3.0, 4.0, 1.0, 2.0]


def test_negatives_and_subnormals_lossless(tmp_path):
    vals = np.array([-1.5, np.float32(1e-42), -np.float32(1e-42), 0.0], dtype=np.float32)
    arr = vals.reshape(1, 2, 2)
    path = tmp_path / "s.pfm"
    write_pfm(arr, path)
    assert read_pfm(path).tobytes() == arr.tobytes()


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.pfm"
    p.write_bytes(b"PX\n2 2\n-1.0\n" + b"\x00" * 16)
    with pytest.raises(PfmFormatError, match="magic"):
        read_pfm(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.pfm"
    p.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\x00" * 8)
    with pytest.raises(PfmFormatError, match="truncated"):
        read_pfm(p)


def test_big_endian_unsupported(tmp_path):
    p = tmp_path / "b.pfm"
    p.write_bytes(b"Pf\n2 2\n1.0\n" + b"\x00" * 16)
    with pytest.raises(PfmFormatError, match="big-endian"):
        read_pfm(p)


def test_non_finite_rejected(tmp_path):
    arr = np.array([[[np.nan]]], dtype=np.float32)
    with pytest.raises(PfmFormatError, match="finite"):
        write_pfm(arr, tmp_path / "n.pfm")


def test_wrong_channel_count_rejected(tmp_path):
    with pytest.raises(PfmFormatError):
        write_pfm(np.zeros((2, 2, 2), dtype=np.float32), tmp_path / "c.pfm")
