import struct

import numpy as np
import pytest

from aiqt.data import (
    SampleSet,
    load_cifar,
    load_csv_series,
    load_mnist,
    load_sampleset,
    save_sampleset,
    synthetic_corpus,
    window_timeseries,
)
from aiqt.encoding import RULE_TOPK, batch_pipeline
from aiqt.errors import DegenerateInputError, InvalidArgumentError
from aiqt.model import fsl_model
from aiqt.training import LossConfig, tail_loss


def test_sampleset_validation():
    with pytest.raises(InvalidArgumentError):
        SampleSet(np.ones((2, 6)), np.array(["train", "train"]))  # not a power of two
    with pytest.raises(InvalidArgumentError):
        SampleSet(np.ones((2, 8)), np.array(["train"]))  # tag count mismatch
    with pytest.raises(DegenerateInputError):
        SampleSet(np.zeros((1, 8)), np.array(["train"]))  # zero norm
    bad = np.ones((1, 8))
    bad[0, 0] = np.nan
    with pytest.raises(InvalidArgumentError):
        SampleSet(bad, np.array(["train"]))


def test_window_timeseries_chronological_split():
    series = np.arange(100, dtype=float) + 1.0
    ss = window_timeseries([series], N=16, stride=4)
    cut = 80
    # training windows end at or before the cut; validation windows extend past it
    starts = {tuple(w): i for i, w in enumerate(ss.samples)}  # noqa: F841
    for w, tag in zip(ss.samples, ss.splits):
        start = int(w[0] - 1)
        if tag == "train":
            assert start + 16 <= cut
        else:
            assert start + 16 > cut
    assert ss.train.shape[0] > 0 and ss.validation.shape[0] > 0


def test_window_timeseries_skips_short_series():
    ss = window_timeseries([np.arange(8, dtype=float) + 1, np.arange(64.0) + 1],
                           N=16, stride=8)
    assert any("skipped" in w for w in ss.warnings)
    with pytest.raises(InvalidArgumentError):
        window_timeseries([np.arange(64.0) + 1], N=16, stride=0)
    with pytest.raises(DegenerateInputError):
        window_timeseries([np.arange(4.0)], N=16, stride=1)


def test_load_csv_series(tmp_path):
    p = tmp_path / "prices.csv"
    p.write_text(
        "timestamp,instrument,close\n"
        "2024-01-02,AAA,10.5\n"
        "2024-01-01,AAA,10.0\n"
        "2024-01-01,BBB,5.0\n"
    )
    series = load_csv_series(str(p), "close")
    assert set(series) == {"AAA", "BBB"}
    assert list(series["AAA"]) == [10.0, 10.5]  # sorted by timestamp


def test_load_csv_series_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,instrument,close\n2024-01-01,AAA,oops\n")
    with pytest.raises(InvalidArgumentError, match="non-numeric"):
        load_csv_series(str(p), "close")
    q = tmp_path / "cols.csv"
    q.write_text("timestamp,close\n2024-01-01,3\n")
    with pytest.raises(InvalidArgumentError, match="missing columns"):
        load_csv_series(str(q), "close")
    with pytest.raises(InvalidArgumentError):
        load_csv_series(str(tmp_path / "nope.csv"), "close")


def _write_idx(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, images.shape[0], 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def test_load_mnist_zero_pad(tmp_path, rng):
    imgs = rng.integers(0, 256, (10, 28, 28), dtype=np.uint8)
    path = str(tmp_path / "images.idx")
    _write_idx(path, imgs)
    ss = load_mnist(path)
    assert ss.N == 1024
    img0 = None
    # zero-pad keeps the original pixels centered with a 2-pixel border
    for row, tag in zip(ss.samples, ss.splits):
        grid = row.reshape(32, 32)
        if np.allclose(grid[2:30, 2:30] * 255, imgs[0]):
            img0 = grid
    assert img0 is not None
    assert np.all(img0[:2] == 0) and np.all(img0[:, :2] == 0)
    assert ss.samples.max() <= 1.0


def test_load_mnist_bilinear_and_errors(tmp_path, rng):
    imgs = rng.integers(0, 256, (4, 28, 28), dtype=np.uint8)
    path = str(tmp_path / "images.idx")
    _write_idx(path, imgs)
    ss = load_mnist(path, resize="bilinear")
    assert ss.N == 1024
    with pytest.raises(InvalidArgumentError):
        load_mnist(path, resize="nearest")
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 28, 28) + b"\0" * 784)
    with pytest.raises(InvalidArgumentError, match="magic"):
        load_mnist(str(bad))


def test_load_cifar_modes(tmp_path, rng):
    records = rng.integers(0, 256, (6, 3073), dtype=np.uint8)
    records[:, 1:] += 1  # avoid all-zero images
    path = str(tmp_path / "batch.bin")
    records.astype(np.uint8).tofile(path)
    bw = load_cifar(path, mode="bw")
    assert bw.samples.shape == (6, 1024)
    rgb = load_cifar(path, mode="rgb")
    assert rgb.samples.shape == (18, 1024)
    with pytest.raises(InvalidArgumentError):
        load_cifar(path, mode="hsv")
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(b"\0" * 100)
    with pytest.raises(InvalidArgumentError):
        load_cifar(str(trunc))


def test_synthetic_corpora_shapes_and_determinism():
    for kind in ("bandlimited", "piecewise", "low-rank-mixture"):
        a = synthetic_corpus(kind, 6, 25, seed=9)
        b = synthetic_corpus(kind, 6, 25, seed=9)
        assert a.samples.shape == (25, 64)
        assert np.array_equal(a.samples, b.samples)
        assert np.array_equal(a.splits, b.splits)
    c = synthetic_corpus("piecewise", 6, 25, seed=10)
    assert not np.array_equal(a.samples, c.samples)
    with pytest.raises(InvalidArgumentError):
        synthetic_corpus("piecewise", 13, 5)
    with pytest.raises(InvalidArgumentError):
        synthetic_corpus("weird", 6, 5)


def test_bandlimited_is_fourier_compact():
    ss = synthetic_corpus("bandlimited", 7, 30, seed=3, max_pairs=6)
    # 6 pairs + DC = 13 coefficients at most; k = 2*6+1 captures everything
    out = batch_pipeline(ss.samples, fsl_model(7), RULE_TOPK, 13)
    assert out["tail"].max() < 1e-12


def test_piecewise_is_not_fourier_compact():
    ss = synthetic_corpus("piecewise", 8, 100, seed=4)
    assert tail_loss(ss.samples, fsl_model(8), LossConfig(k=64)) > 1e-3


def test_sampleset_cache_roundtrip(tmp_path):
    ss = synthetic_corpus("piecewise", 5, 12, seed=1)
    path = str(tmp_path / "corpus.bin")
    save_sampleset(ss, path)
    back = load_sampleset(path)
    assert np.array_equal(back.samples, ss.samples)
    assert np.array_equal(back.splits, ss.splits)
    assert back.provenance == ss.provenance
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + b"\0" * 16)
    with pytest.raises(InvalidArgumentError):
        load_sampleset(str(bad))
