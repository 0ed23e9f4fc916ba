import numpy as np
import pytest

from earncast.embfile import (
    MAGIC,
    MODALITY_IMAGE,
    MODALITY_TEXT,
    EmbeddingFormatError,
    read_embeddings,
    write_embeddings,
)


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(12, 256)).astype(np.float32)
    path = tmp_path / "img.emb"
    write_embeddings(path, rows, MODALITY_IMAGE)
    got, modality = read_embeddings(path)
    assert modality == MODALITY_IMAGE
    assert got.dtype == np.float32
    np.testing.assert_array_equal(got, rows)


def test_single_row_text(tmp_path):
    path = tmp_path / "t.emb"
    write_embeddings(path, np.ones(64, dtype=np.float32), MODALITY_TEXT)
    rows, modality = read_embeddings(path)
    assert rows.shape == (1, 64)
    assert modality == MODALITY_TEXT


def test_header_layout(tmp_path):
    path = tmp_path / "t.emb"
    write_embeddings(path, np.zeros((2, 3), dtype=np.float32), MODALITY_TEXT)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    assert int.from_bytes(raw[8:12], "little") == 2
    assert int.from_bytes(raw[12:16], "little") == 3
    assert raw[16] == MODALITY_TEXT
    assert len(raw) == 17 + 2 * 3 * 4


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(EmbeddingFormatError, match="magic"):
        read_embeddings(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.emb"
    write_embeddings(path, np.ones((4, 8), dtype=np.float32), MODALITY_TEXT)
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(EmbeddingFormatError, match="bytes"):
        read_embeddings(path)


def test_non_finite_rejected_on_write_and_read(tmp_path):
    path = tmp_path / "t.emb"
    with pytest.raises(EmbeddingFormatError):
        write_embeddings(path, np.array([[np.nan, 1.0]], dtype=np.float32), MODALITY_TEXT)
    write_embeddings(path, np.ones((1, 2), dtype=np.float32), MODALITY_TEXT)
    data = bytearray(path.read_bytes())
    data[17:21] = np.array([np.inf], dtype="<f4").tobytes()
    path.write_bytes(bytes(data))
    with pytest.raises(EmbeddingFormatError, match="non-finite"):
        read_embeddings(path)


def test_empty_rows_rejected(tmp_path):
    with pytest.raises(EmbeddingFormatError):
        write_embeddings(tmp_path / "e.emb", np.zeros((0, 4), dtype=np.float32), MODALITY_TEXT)


def test_unknown_modality_rejected(tmp_path):
    with pytest.raises(EmbeddingFormatError):
        write_embeddings(tmp_path / "m.emb", np.ones((1, 2)), 7)


def test_no_temp_file_left_behind(tmp_path):
    path = tmp_path / "t.emb"
    write_embeddings(path, np.ones((1, 4), dtype=np.float32), MODALITY_TEXT)
    assert [p.name for p in tmp_path.iterdir()] == ["t.emb"]
