import numpy as np
import pytest

from ictriage.container import MAGIC, load_container, save_container, sniff_container
from ictriage.errors import FormatError, IntegrityError
from ictriage.recording import Montage, Recording


def make_rec(n_channels=2, n_samples=4, seed=0):
    rng = np.random.default_rng(seed)
    names = ["C3", "C4", "O1", "O2"][:n_channels]
    # float32-representable values so data survives the container's float32 body
    data = rng.standard_normal((n_channels, n_samples)).astype(np.float32).astype(np.float64)
    return Recording(
        data=data,
        sfreq=250.0,
        channel_names=names,
        montage=Montage.standard_1020(names),
        meta={"dataset_id": "fix", "subject": "s01"},
    )


def test_minimal_two_channel_four_sample(tmp_path):
    rec = make_rec(2, 4)
    path = tmp_path / "mini.icvrec"
    save_container(rec, path)
    back = load_container(path)
    assert back.data.shape == (2, 4)
    assert back.channel_names == ["C3", "C4"]


def test_round_trip_is_byte_identical(tmp_path):
    rec = make_rec(4, 1000, seed=3)
    p1 = tmp_path / "a.icvrec"
    p2 = tmp_path / "b.icvrec"
    save_container(rec, p1)
    save_container(load_container(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_preserves_everything(tmp_path):
    rec = make_rec(3, 123, seed=9)
    path = tmp_path / "r.icvrec"
    save_container(rec, path)
    back = load_container(path)
    assert np.array_equal(back.data, rec.data)
    assert back.sfreq == rec.sfreq
    assert back.channel_names == rec.channel_names
    assert back.meta == rec.meta
    assert np.allclose(back.montage.positions, rec.montage.positions)


def test_truncated_data_section_names_byte_counts(tmp_path):
    rec = make_rec(2, 100)
    path = tmp_path / "t.icvrec"
    save_container(rec, path)
    blob = path.read_bytes()
    # expected data bytes: 2 channels x 100 samples x 4 bytes
    truncated = blob[: len(blob) - 40]
    bad = tmp_path / "bad.icvrec"
    bad.write_bytes(truncated)
    with pytest.raises(IntegrityError) as err:
        load_container(bad)
    msg = str(err.value)
    assert "760" in msg  # actual bytes present
    assert "800" in msg  # expected bytes


def test_bad_magic_is_format_error(tmp_path):
    path = tmp_path / "x.icvrec"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(FormatError, match="magic"):
        load_container(path)
    assert not sniff_container(path)


def test_header_channel_mismatch_is_integrity_error(tmp_path):
    import json
    import struct

    header = {
        "channel_names": ["a", "b", "c"],
        "sfreq": 100.0,
        "n_samples": 2,
        "montage": {"labels": ["a", "b"], "positions": [[1, 0, 0], [0, 1, 0]]},
        "meta": {},
    }
    doc = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = MAGIC + struct.pack("<Q", len(doc)) + doc + b"\x00" * 24
    path = tmp_path / "mis.icvrec"
    path.write_bytes(blob)
    with pytest.raises(IntegrityError, match="montage"):
        load_container(path)


def test_sniff_container(tmp_path):
    rec = make_rec()
    path = tmp_path / "ok.icvrec"
    save_container(rec, path)
    assert sniff_container(path)
    assert not sniff_container(tmp_path / "missing.icvrec")


def test_round_trip_many_random_recordings(tmp_path):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n_ch = int(rng.integers(1, 6))
        n_s = int(rng.integers(2, 500))
        rec = make_rec(min(n_ch, 4), n_s, seed=seed)
        path = tmp_path / f"r{seed}.icvrec"
        save_container(rec, path)
        back = load_container(path)
        assert np.array_equal(back.data, rec.data)
