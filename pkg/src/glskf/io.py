"""File formats, image bridging and data generation.

Two tiny binary formats cover tensors and masks:

DTEN: magic "DTEN", version byte 1, ndim byte, ndim little-endian uint64
extents, then the payload as little-endian float64 in first-index-fastest
order. DMSK is identical except the magic and a uint8 payload restricted to
0/1. Long-format CSV uses one row per observed cell: D one-based indices
followed by the value; a blank value field means the cell is missing even
though the row exists.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor
from .errors import DataFormatError
from .model import ObservationMask

__all__ = [
    "read_tensor",
    "write_tensor",
    "read_mask",
    "write_mask",
    "CsvData",
    "read_csv_long",
    "image_to_tensor",
    "tensor_to_image",
    "make_random_mask",
    "SyntheticData",
    "make_synthetic",
]

_TENSOR_MAGIC = b"DTEN"
_MASK_MAGIC = b"DMSK"
_VERSION = 1
_SYNTH_MAX_CELLS = 1_000_000


def _write_header(fh, magic: bytes, shape: tuple[int, ...]) -> None:
    if not 1 <= len(shape) <= 255:
        raise DataFormatError("tensor order must be between 1 and 255")
    fh.write(magic)
    fh.write(bytes((_VERSION, len(shape))))
    fh.write(struct.pack(f"<{len(shape)}Q", *shape))


def _read_header(buf: bytes, magic: bytes, path: str) -> tuple[tuple[int, ...], int]:
    if len(buf) < 6:
        raise DataFormatError(f"{path}: file too short for a header")
    if buf[:4] != magic:
        raise DataFormatError(f"{path}: bad magic {buf[:4]!r}, expected {magic!r}")
    version, ndim = buf[4], buf[5]
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if ndim < 1:
        raise DataFormatError(f"{path}: tensor order must be at least 1")
    header_end = 6 + 8 * ndim
    if len(buf) < header_end:
        raise DataFormatError(f"{path}: truncated extent table")
    shape = struct.unpack(f"<{ndim}Q", buf[6:header_end])
    if any(s < 1 for s in shape):
        raise DataFormatError(f"{path}: zero extent in shape {shape}")
    return tuple(int(s) for s in shape), header_end


def write_tensor(path: str, t: np.ndarray) -> None:
    t = np.asarray(t, dtype=np.float64)
    with open(path, "wb") as fh:
        _write_header(fh, _TENSOR_MAGIC, t.shape)
        fh.write(np.ravel(t, order="F").astype("<f8").tobytes())


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    shape, off = _read_header(buf, _TENSOR_MAGIC, path)
    n = 1
    for s in shape:
        n *= s
    expected = off + 8 * n
    if len(buf) != expected:
        raise DataFormatError(
            f"{path}: payload holds {len(buf) - off} bytes, shape {shape} needs {8 * n}"
        )
    flat = np.frombuffer(buf, dtype="<f8", offset=off).astype(np.float64)
    return tensor.devectorize(flat, shape)


def write_mask(path: str, mask: ObservationMask) -> None:
    with open(path, "wb") as fh:
        _write_header(fh, _MASK_MAGIC, mask.shape)
        fh.write(np.ravel(mask.indicator, order="F").astype(np.uint8).tobytes())


def read_mask(path: str) -> ObservationMask:
    with open(path, "rb") as fh:
        buf = fh.read()
    shape, off = _read_header(buf, _MASK_MAGIC, path)
    n = 1
    for s in shape:
        n *= s
    if len(buf) != off + n:
        raise DataFormatError(
            f"{path}: payload holds {len(buf) - off} bytes, shape {shape} needs {n}"
        )
    flat = np.frombuffer(buf, dtype=np.uint8, offset=off)
    bad = (flat > 1).sum()
    if bad:
        raise DataFormatError(f"{path}: {bad} mask bytes are neither 0 nor 1")
    return ObservationMask(tensor.devectorize(flat.astype(bool), shape))


class CsvData(NamedTuple):
    values: np.ndarray
    mask: ObservationMask
    duplicates: int


def read_csv_long(path: str, shape: tuple[int, ...]) -> CsvData:
    """Read one-row-per-cell CSV data into a tensor plus observation mask.

    Rows carry D one-based indices and a value. A blank value field marks the
    cell as missing. Duplicate cells keep the last value seen; the count of
    overwritten rows is returned and a warning is emitted.
    """
    shape = tuple(int(s) for s in shape)
    ndim = len(shape)
    values = np.zeros(shape, order="F")
    seen = np.zeros(shape, dtype=bool, order="F")
    duplicates = 0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != ndim + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {ndim + 1} fields, got {len(row)}"
                )
            try:
                idx = tuple(int(f) for f in row[:ndim])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise DataFormatError(f"{path}:{lineno}: non-integer index") from None
            for d, (i, s) in enumerate(zip(idx, shape)):
                if not 1 <= i <= s:
                    raise DataFormatError(
                        f"{path}:{lineno}: index {i} out of range for mode {d} (extent {s})"
                    )
            cell = tuple(i - 1 for i in idx)
            raw = row[ndim].strip()
            if not raw:
                continue  # explicit missing
            try:
                val = float(raw)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric value {raw!r}") from None
            if seen[cell]:
                duplicates += 1
            seen[cell] = True
            values[cell] = val
    if duplicates:
        warnings.warn(f"{path}: {duplicates} duplicate cells, last value kept")
    return CsvData(values, ObservationMask(seen), duplicates)


def image_to_tensor(path: str) -> np.ndarray:
    """Load an 8-bit grayscale or RGB image as a (width, height, channels)
    tensor scaled to [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.uint8)
        else:
            raise DataFormatError(
                f"{path}: unsupported image mode {im.mode!r}; only 8-bit L and RGB"
            )
    # PIL gives rows x columns; tensor modes are column (x), row (y), channel
    return arr.transpose(1, 0, 2).astype(np.float64) / 255.0


def tensor_to_image(t: np.ndarray, path: str) -> None:
    """Write a (width, height, 1 or 3) tensor in [0, 1] as an 8-bit image;
    values are clipped and rounded."""
    from PIL import Image

    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3 or t.shape[2] not in (1, 3):
        raise ValueError("expected a (width, height, channels) tensor with 1 or 3 channels")
    arr = np.rint(np.clip(t, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 0, 2)
    if arr.shape[2] == 1:
        im = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        im = Image.fromarray(arr, mode="RGB")
    im.save(path)


def make_random_mask(shape: tuple[int, ...], sample_rate: float, seed: int = 0) -> ObservationMask:
    """Uniform random mask observing round(sample_rate * N) cells exactly.

    The observed set is the positions of the k smallest entries of a length-N
    uniform draw from a seeded PCG64 stream, so the same seed reproduces the
    same mask on any platform.
    """
    if not 0.0 <= sample_rate <= 1.0:
        raise ValueError("sample_rate must lie in [0, 1]")
    shape = tuple(int(s) for s in shape)
    n = int(np.prod(shape, dtype=np.int64))
    k = int(round(sample_rate * n))
    rng = np.random.Generator(np.random.PCG64(seed))
    if k == 0:
        idx = np.empty(0, dtype=np.int64)
    elif k == n:
        idx = np.arange(n)
    else:
        draws = rng.random(n)
        idx = np.sort(np.argpartition(draws, k)[:k])
    return ObservationMask.from_linear(shape, idx)


@dataclass
class SyntheticData:
    values: np.ndarray
    smooth: np.ndarray
    local: np.ndarray
    factors: list[np.ndarray]


def make_synthetic(
    shape: tuple[int, ...],
    rank: int,
    factor_kernels: list | None = None,
    local_kernels: list | None = None,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> SyntheticData:
    """Draw a ground-truth tensor from the additive model.

    Factor columns are Gaussian with the per-mode factor covariance, the
    local field is Gaussian with the Kronecker product of the per-mode local
    covariances (omitted when ``local_kernels`` is None), and white noise is
    added on top. Sampling goes through dense Cholesky factors per mode, so
    the total size is capped.
    """
    from .model import _as_specs  # shared kernel-list normalization

    shape = tuple(int(s) for s in shape)
    n = int(np.prod(shape, dtype=np.int64))
    if n > _SYNTH_MAX_CELLS:
        raise ValueError(f"shape {shape} is too large for dense synthesis (cap {_SYNTH_MAX_CELLS})")
    if rank < 1:
        raise ValueError("rank must be at least 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    ndim = len(shape)
    f_specs = _as_specs(factor_kernels, ndim, "factor_kernels")
    l_specs = _as_specs(local_kernels, ndim, "local_kernels") if local_kernels is not None else None
    for spec in f_specs + (l_specs or []):
        if spec.family in ("empirical", "qv"):
            raise ValueError(f"{spec.family} kernels cannot be sampled from")

    rng = np.random.default_rng(seed)
    factors = []
    for d in range(ndim):
        chol = f_specs[d].build(shape[d]).cholesky_lower()
        factors.append(chol @ rng.standard_normal((shape[d], rank)))
    smooth = tensor.cp_reconstruct(factors)

    local = np.zeros(shape)
    if l_specs is not None:
        chols = [l_specs[d].build(shape[d]).cholesky_lower() for d in range(ndim)]
        e = rng.standard_normal(n)
        local = tensor.devectorize(tensor.kron_mvm(chols, e, shape), shape)

    values = smooth + local
    if noise_sd > 0:
        values = values + noise_sd * rng.standard_normal(shape)
    return SyntheticData(values=values, smooth=smooth, local=local, factors=factors)
