import json

import numpy as np
import pytest

from timbrebridge.checkpoint import (
    CHECKPOINT_MAGIC,
    load_checkpoint,
    save_checkpoint,
)
from timbrebridge.clip import LatentClip, read_clip, write_clip
from timbrebridge.dataset import CorpusSpec, build_corpus, load_corpus, save_corpus
from timbrebridge.errors import DataError


def test_clip_file_roundtrip(tmp_path, rng):
    clip = LatentClip(rng.standard_normal((4, 6)), domain_label="x")
    write_clip(tmp_path / "a.clip", clip)
    back = read_clip(tmp_path / "a.clip", domain_label="x")
    assert back.data == pytest.approx(clip.data, abs=1e-6)  # float32 storage
    assert back.shape == (4, 6)


def test_clip_file_rejects_garbage(tmp_path):
    (tmp_path / "bad.clip").write_bytes(b"NOTACLIPxxxx")
    with pytest.raises(DataError):
        read_clip(tmp_path / "bad.clip")
    (tmp_path / "trunc.clip").write_bytes(
        b"TBRCLIP1" + np.array([2, 3], dtype="<u4").tobytes() + b"\x00" * 8
    )
    with pytest.raises(DataError):
        read_clip(tmp_path / "trunc.clip")


def test_clip_rejects_non_finite():
    bad = np.zeros((2, 2))
    bad[0, 0] = np.inf
    with pytest.raises(DataError):
        LatentClip(bad)


def test_checkpoint_roundtrip(tmp_path, rng):
    arrays = {"a/w": rng.standard_normal((3, 4)), "b": np.arange(5.0)}
    save_checkpoint(tmp_path / "x.tbc", "denoiser", {"k": 1, "s": "v"}, arrays)
    kind, meta, back = load_checkpoint(tmp_path / "x.tbc")
    assert kind == "denoiser" and meta == {"k": 1, "s": "v"}
    for key in arrays:
        assert back[key] == pytest.approx(arrays[key], abs=1e-6)
    sidecar = json.loads((tmp_path / "x.tbc.json").read_text())
    assert sidecar["kind"] == "denoiser" and sidecar["version"] == 1


def test_checkpoint_rejects_bad_magic_and_version(tmp_path):
    path = tmp_path / "x.tbc"
    save_checkpoint(path, "denoiser", {}, {"w": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.tbc"
    bad.write_bytes(b"WRONGMAG" + bytes(raw[8:]))
    with pytest.raises(DataError):
        load_checkpoint(bad)
    raw2 = bytearray(raw)
    raw2[8] = 99  # version field
    bad2 = tmp_path / "badv.tbc"
    bad2.write_bytes(bytes(raw2))
    with pytest.raises(DataError):
        load_checkpoint(bad2)
    assert raw[:8] == CHECKPOINT_MAGIC


def test_corpus_roundtrip(tmp_path, codec):
    corpus = build_corpus(CorpusSpec("flute_like", n_train=6, n_test=2, seed=1), codec)
    save_corpus(tmp_path / "ds", corpus)
    assert (tmp_path / "ds" / "manifest.json").exists()
    assert (tmp_path / "ds" / "stats.json").exists()
    back = load_corpus(tmp_path / "ds")
    assert back.spec.instrument == "flute_like"
    assert len(back.clips("train")) == 6 and len(back.clips("test")) == 2
    assert back.stats.mean == pytest.approx(corpus.stats.mean)
    assert back.records[0].melody == corpus.records[0].melody
    assert back.records[0].clip.data == pytest.approx(
        corpus.records[0].clip.data, abs=1e-5
    )


def test_corpus_deterministic(codec):
    a = build_corpus(CorpusSpec("violin_like", n_train=4, n_test=1, seed=9), codec)
    b = build_corpus(CorpusSpec("violin_like", n_train=4, n_test=1, seed=9), codec)
    for ra, rb in zip(a.records, b.records):
        assert ra.melody == rb.melody
        assert np.array_equal(ra.clip.data, rb.clip.data)


def test_corpus_augmentation_recorded(codec):
    from timbrebridge.synthdata import ShiftAugmentation

    spec = CorpusSpec(
        "flute_like",
        n_train=40,
        n_test=4,
        seed=5,
        augmentation=ShiftAugmentation(probability=1.0, min_shift=3, max_shift=3),
    )
    corpus = build_corpus(spec, codec)
    train_shifts = [r.shift for r in corpus.records if r.split == "train"]
    test_shifts = [r.shift for r in corpus.records if r.split == "test"]
    assert all(s == -3 for s in train_shifts)
    assert all(s == 0 for s in test_shifts)


def test_load_corpus_missing_dir(tmp_path):
    with pytest.raises(DataError):
        load_corpus(tmp_path / "nope")
