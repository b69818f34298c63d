"""Dataset construction: windowed time series, image binaries, synthetic
corpora, and a flat binary cache format.

Every emitted sample is a length ``N = 2**n`` real vector with nonzero
norm; splits are tagged "train" / "validation".
"""

from __future__ import annotations

import csv
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

log = logging.getLogger("aiqt.data")

TRAIN = "train"
VALIDATION = "validation"

_CACHE_MAGIC = b"AIQTSS01"
_CACHE_VERSION = 1


@dataclass
class SampleSet:
    """Immutable container of real samples plus split tags and provenance."""

    samples: np.ndarray           # (count, N) float64
    splits: np.ndarray            # (count,) array of "train"/"validation"
    provenance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.splits = np.asarray(self.splits)
        if self.samples.ndim != 2:
            raise InvalidArgumentError("SampleSet: samples must be 2-D")
        N = self.samples.shape[1]
        if N & (N - 1) != 0 or N == 0:
            raise InvalidArgumentError("SampleSet: sample length must be a power of two")
        if self.splits.shape != (self.samples.shape[0],):
            raise InvalidArgumentError("SampleSet: one split tag per sample")
        norms = np.linalg.norm(self.samples, axis=1)
        if np.any(norms <= 0.0):
            raise DegenerateInputError("SampleSet: zero-norm sample")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidArgumentError("SampleSet: non-finite sample values")

    @property
    def N(self) -> int:
        return self.samples.shape[1]

    def split(self, tag: str) -> np.ndarray:
        return self.samples[self.splits == tag]

    @property
    def train(self) -> np.ndarray:
        return self.split(TRAIN)

    @property
    def validation(self) -> np.ndarray:
        return self.split(VALIDATION)


def _concat_sets(parts: list[tuple[np.ndarray, str]], provenance: dict,
                 warnings: list | None = None) -> SampleSet:
    samples = np.vstack([p[0] for p in parts]) if parts else np.empty((0, 0))
    tags = np.concatenate([[p[1]] * p[0].shape[0] for p in parts]) if parts else np.empty(0)
    return SampleSet(samples, tags, provenance, warnings or [])


# ---------------------------------------------------------------------------
# time series
# ---------------------------------------------------------------------------

def window_timeseries(series_list, N: int, stride: int,
                      train_fraction: float = 0.8) -> SampleSet:
    """Overlapping windows with a chronological per-series split.

    Windows [i*stride, i*stride + N) for all full windows.  The cut point
    is ``floor(train_fraction * len(series))``; a window is a training
    sample iff it ends at or before the cut, so training windows use no
    data past the cut and boundary-straddling windows go to validation.
    Series shorter than N are skipped with a warning record; zero-norm
    windows are dropped.
    """
    if stride < 1:
        raise InvalidArgumentError("window_timeseries: stride must be >= 1")
    if isinstance(series_list, np.ndarray) and series_list.ndim == 1:
        series_list = [series_list]
    parts = []
    warnings = []
    for si, series in enumerate(series_list):
        series = np.asarray(series, dtype=np.float64)
        L = series.shape[0]
        if L < N:
            warnings.append(f"series {si}: length {L} < window {N}, skipped")
            log.warning("window_timeseries: %s", warnings[-1])
            continue
        cut = int(np.floor(train_fraction * L))
        count = (L - N) // stride + 1
        tr, va = [], []
        for i in range(count):
            w = series[i * stride : i * stride + N]
            if np.linalg.norm(w) <= 0.0:
                continue
            (tr if i * stride + N <= cut else va).append(w)
        if tr:
            parts.append((np.array(tr), TRAIN))
        if va:
            parts.append((np.array(va), VALIDATION))
    if not parts:
        raise DegenerateInputError("window_timeseries: no usable windows")
    prov = {"source": "timeseries", "window": N, "stride": stride,
            "train_fraction": train_fraction}
    return _concat_sets(parts, prov, warnings)


def load_csv_series(path: str, column: str) -> dict[str, np.ndarray]:
    """One real sequence per instrument, rows ordered by timestamp.

    Expects a header with ``timestamp``, ``instrument`` and price columns;
    non-numeric cells are rejected with a row-level error report.
    """
    if not os.path.exists(path):
        raise InvalidArgumentError(f"load_csv_series: no such file {path}")
    rows: dict[str, list[tuple[str, float]]] = {}
    errors = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise InvalidArgumentError("load_csv_series: empty file")
        required = {"timestamp", "instrument", column}
        missing = required - set(reader.fieldnames)
        if missing:
            raise InvalidArgumentError(f"load_csv_series: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                value = float(row[column])
            except (TypeError, ValueError):
                errors.append(f"line {lineno}: non-numeric {column}={row[column]!r}")
                continue
            rows.setdefault(row["instrument"], []).append((row["timestamp"], value))
    if errors:
        raise InvalidArgumentError(
            "load_csv_series: bad cells: " + "; ".join(errors[:10])
        )
    if not rows:
        raise InvalidArgumentError("load_csv_series: no data rows")
    out = {}
    for name, pairs in rows.items():
        pairs.sort(key=lambda p: p[0])
        seq = np.array([v for _, v in pairs])
        if seq.size == 0:
            raise InvalidArgumentError(f"load_csv_series: empty series {name!r}")
        out[name] = seq
    return out


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def _read_idx_images(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16:
            raise InvalidArgumentError("load_mnist: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != 0x00000803:
            raise InvalidArgumentError(f"load_mnist: bad IDX magic 0x{magic:08x}")
        payload = f.read(count * rows * cols)
    if len(payload) != count * rows * cols:
        raise InvalidArgumentError("load_mnist: truncated IDX payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def _pad_to_32(img: np.ndarray) -> np.ndarray:
    """Center a 28x28 image in a 32x32 zero canvas."""
    out = np.zeros((32, 32), dtype=np.float64)
    out[2:30, 2:30] = img
    return out


def _bilinear_to_32(img: np.ndarray) -> np.ndarray:
    from PIL import Image

    return np.asarray(
        Image.fromarray(img.astype(np.uint8)).resize((32, 32), Image.BILINEAR),
        dtype=np.float64,
    )


def load_mnist(path: str, resize: str = "zero-pad", seed: int = 0,
               limit: int | None = None) -> SampleSet:
    """IDX image file -> 32x32 samples, pixels scaled to [0, 1].

    ``resize`` is "zero-pad" (default, exact) or "bilinear" (sensitivity
    checks).  All-black images are dropped; 80/20 random split under the
    seed.
    """
    imgs = _read_idx_images(path)
    if limit is not None:
        imgs = imgs[:limit]
    if resize == "zero-pad":
        resized = [( _pad_to_32(im) if im.shape != (32, 32) else im.astype(np.float64))
                   for im in imgs]
    elif resize == "bilinear":
        resized = [_bilinear_to_32(im) if im.shape != (32, 32) else im.astype(np.float64)
                   for im in imgs]
    else:
        raise InvalidArgumentError(f"load_mnist: unknown resize {resize!r}")
    flat = np.array([r.ravel() / 255.0 for r in resized])
    keep = np.linalg.norm(flat, axis=1) > 0.0
    flat = flat[keep]
    prov = {"source": "mnist", "resize": resize, "seed": seed, "path": path}
    return _random_split(flat, seed, prov)


def load_cifar(path: str, mode: str = "bw", seed: int = 0,
               limit: int | None = None) -> SampleSet:
    """CIFAR-10 binary batch -> length-1024 samples.

    mode "bw": luma conversion 0.299R + 0.587G + 0.114B, one sample per
    image; mode "rgb": each color channel is an independent sample.
    """
    if mode not in ("bw", "rgb"):
        raise InvalidArgumentError(f"load_cifar: unknown mode {mode!r}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % 3073 != 0:
        raise InvalidArgumentError("load_cifar: file size is not a multiple of 3073")
    records = raw.reshape(-1, 3073)
    if limit is not None:
        records = records[:limit]
    planes = records[:, 1:].reshape(-1, 3, 1024).astype(np.float64) / 255.0
    if mode == "bw":
        flat = 0.299 * planes[:, 0] + 0.587 * planes[:, 1] + 0.114 * planes[:, 2]
    else:
        flat = planes.reshape(-1, 1024)
    flat = flat[np.linalg.norm(flat, axis=1) > 0.0]
    prov = {"source": "cifar", "mode": mode, "seed": seed, "path": path}
    return _random_split(flat, seed, prov)


def _random_split(samples: np.ndarray, seed: int, provenance: dict,
                  train_fraction: float = 0.8) -> SampleSet:
    if samples.shape[0] == 0:
        raise DegenerateInputError("no usable samples")
    rng = np.random.default_rng(seed)
    order = rng.permutation(samples.shape[0])
    n_train = int(np.floor(train_fraction * samples.shape[0]))
    tags = np.empty(samples.shape[0], dtype=object)
    tags[order[:n_train]] = TRAIN
    tags[order[n_train:]] = VALIDATION
    return SampleSet(samples, tags.astype(str), provenance)


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

def synthetic_corpus(kind: str, n: int, count: int, seed: int = 0,
                     max_pairs: int = 8) -> SampleSet:
    """Deterministic desk-scale corpora.

    "bandlimited": real signals with at most ``max_pairs`` active
    conjugate frequency pairs (compact in a Fourier basis).
    "piecewise": step levels plus spikes and short exponential transients
    (deliberately non-compact in a Fourier basis).
    "low-rank-mixture": nonnegative mixtures of a few fixed smooth
    prototypes plus small noise.
    """
    if n > 12:
        raise InvalidArgumentError("synthetic_corpus: n must be <= 12")
    if count < 1:
        raise InvalidArgumentError("synthetic_corpus: count must be >= 1")
    N = 1 << n
    rng = np.random.default_rng(seed)
    if kind == "bandlimited":
        samples = np.array([_bandlimited_sample(rng, N, max_pairs) for _ in range(count)])
    elif kind == "piecewise":
        samples = np.array([_piecewise_sample(rng, N) for _ in range(count)])
    elif kind == "low-rank-mixture":
        rank = 5
        t = np.arange(N) / N
        protos = np.array([
            np.sin(2 * np.pi * rng.integers(1, 6) * t + rng.uniform(0, 2 * np.pi))
            * np.exp(-((t - rng.uniform(0.2, 0.8)) ** 2) / rng.uniform(0.05, 0.4))
            for _ in range(rank)
        ])
        weights = rng.uniform(0.0, 1.0, (count, rank))
        samples = weights @ protos + 0.003 * rng.standard_normal((count, N))
    else:
        raise InvalidArgumentError(f"synthetic_corpus: unknown kind {kind!r}")
    prov = {"source": "synthetic", "kind": kind, "n": n, "seed": seed}
    return _random_split(samples, seed + 1, prov)


def _bandlimited_sample(rng, N: int, max_pairs: int) -> np.ndarray:
    npairs = int(rng.integers(1, max_pairs + 1))
    freqs = rng.choice(np.arange(1, N // 2), size=npairs, replace=False)
    spec = np.zeros(N, dtype=np.complex128)
    amps = rng.uniform(0.2, 1.0, npairs) * np.exp(1j * rng.uniform(0, 2 * np.pi, npairs))
    spec[freqs] = amps
    spec[N - freqs] = np.conj(amps)
    spec[0] = rng.uniform(0.5, 2.0)
    x = np.fft.ifft(spec).real
    return x


def _piecewise_sample(rng, N: int) -> np.ndarray:
    """Steps on a recursively halved grid, plus spikes and transients.

    Segment boundaries come from recursive interval halving, so the step
    structure lives at a hierarchy of scales.  Spikes and short one-sided
    exponential transients add content no step basis captures exactly,
    and a small noise floor keeps per-sample energy profiles full-rank.
    """
    stack = [(0, N)]
    leaves = []
    while stack:
        a, b = stack.pop()
        w = b - a
        if w > 2 and rng.random() < (0.85 if w >= N // 8 else 0.45):
            m = (a + b) // 2
            stack += [(a, m), (m, b)]
        else:
            leaves.append((a, b))
    x = np.zeros(N)
    for a, b in leaves:
        x[a:b] = rng.uniform(-1.0, 1.0)
    t = np.arange(N)
    for _ in range(int(rng.integers(1, 4))):  # narrow spikes
        pos = int(rng.integers(0, N - 2))
        width = int(rng.integers(1, 4))
        x[pos : pos + width] += rng.uniform(-1.2, 1.2)
    for _ in range(int(rng.integers(1, 4))):  # exponential transients
        level = int(rng.integers(2, max(3, N.bit_length() - 2)))
        start = int(rng.integers(0, 1 << level)) * (N >> level)
        x[start:] += rng.uniform(-0.3, 0.3) * np.exp(
            -(t[start:] - start) / rng.uniform(4.0, 24.0)
        )
    x += 0.01 * rng.standard_normal(N)
    x += 1.5  # baseline offset, keeps norms well away from zero
    return x


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------

def save_sampleset(ss: SampleSet, path: str) -> None:
    """Flat binary container plus a JSON sidecar with provenance."""
    count, N = ss.samples.shape
    header = _CACHE_MAGIC + struct.pack("<IIQ", _CACHE_VERSION, N, count)
    payload = ss.samples.astype("<f8").tobytes()
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d)
    with os.fdopen(fd, "wb") as f:
        f.write(header)
        f.write(payload)
    os.replace(tmp, path)
    sidecar = {
        "provenance": ss.provenance,
        "splits": ss.splits.tolist(),
        "warnings": list(ss.warnings),
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f)


def load_sampleset(path: str) -> SampleSet:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _CACHE_MAGIC:
            raise InvalidArgumentError("load_sampleset: bad magic")
        version, N, count = struct.unpack("<IIQ", f.read(16))
        if version != _CACHE_VERSION:
            raise InvalidArgumentError(f"load_sampleset: unsupported version {version}")
        payload = f.read(count * N * 8)
    if len(payload) != count * N * 8:
        raise InvalidArgumentError("load_sampleset: truncated payload")
    samples = np.frombuffer(payload, dtype="<f8").reshape(count, N)
    with open(path + ".json") as f:
        sidecar = json.load(f)
    return SampleSet(samples.copy(), np.array(sidecar["splits"]),
                     sidecar.get("provenance", {}), sidecar.get("warnings", []))
