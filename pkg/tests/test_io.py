"""File formats, CSV ingestion, image conversion and data generators."""

import struct
import warnings

import numpy as np
import pytest

from glskf import io as gio
from glskf.errors import DataFormatError
from glskf.model import ObservationMask


# ---------------------------------------------------------------------------
# binary tensor and mask files


def test_tensor_file_layout(tmp_path):
    path = tmp_path / "t.dten"
    t = np.arange(6, dtype=np.float64).reshape(2, 3)
    gio.write_tensor(str(path), t)
    buf = path.read_bytes()
    assert buf[:4] == b"DTEN"
    assert buf[4] == 1 and buf[5] == 2  # version, order
    assert struct.unpack("<2Q", buf[6:22]) == (2, 3)
    payload = np.frombuffer(buf[22:], dtype="<f8")
    assert np.array_equal(payload, np.ravel(t, order="F"))


def test_tensor_roundtrip_random_shapes(tmp_path):
    rng = np.random.default_rng(0)
    for i, shape in enumerate([(7,), (3, 5), (4, 3, 2), (2, 2, 3, 2)]):
        path = tmp_path / f"t{i}.dten"
        t = rng.standard_normal(shape)
        gio.write_tensor(str(path), t)
        back = gio.read_tensor(str(path))
        assert back.shape == shape
        assert back.tobytes() == t.tobytes()


def test_mask_file_layout_and_roundtrip(tmp_path):
    path = tmp_path / "m.dmsk"
    ind = np.array([[True, False, True], [False, True, False]])
    gio.write_mask(str(path), ObservationMask(ind))
    buf = path.read_bytes()
    assert buf[:4] == b"DMSK"
    assert np.array_equal(np.frombuffer(buf[22:], dtype=np.uint8),
                          np.ravel(ind, order="F").astype(np.uint8))
    back = gio.read_mask(str(path))
    assert np.array_equal(back.indicator, ind)


def test_read_tensor_rejects_corruption(tmp_path):
    path = tmp_path / "t.dten"
    gio.write_tensor(str(path), np.zeros((2, 2)))
    good = path.read_bytes()

    (tmp_path / "short.dten").write_bytes(good[:3])
    with pytest.raises(DataFormatError):
        gio.read_tensor(str(tmp_path / "short.dten"))

    (tmp_path / "magic.dten").write_bytes(b"XXXX" + good[4:])
    with pytest.raises(DataFormatError):
        gio.read_tensor(str(tmp_path / "magic.dten"))

    (tmp_path / "vers.dten").write_bytes(good[:4] + bytes([9]) + good[5:])
    with pytest.raises(DataFormatError):
        gio.read_tensor(str(tmp_path / "vers.dten"))

    (tmp_path / "trunc.dten").write_bytes(good[:-8])
    with pytest.raises(DataFormatError):
        gio.read_tensor(str(tmp_path / "trunc.dten"))

    (tmp_path / "extra.dten").write_bytes(good + b"\x00" * 8)
    with pytest.raises(DataFormatError):
        gio.read_tensor(str(tmp_path / "extra.dten"))

    with pytest.raises(FileNotFoundError):
        gio.read_tensor(str(tmp_path / "missing.dten"))


def test_read_mask_rejects_stray_bytes(tmp_path):
    path = tmp_path / "m.dmsk"
    gio.write_mask(str(path), ObservationMask(np.ones((2, 2), dtype=bool)))
    buf = bytearray(path.read_bytes())
    buf[-1] = 2
    path.write_bytes(bytes(buf))
    with pytest.raises(DataFormatError):
        gio.read_mask(str(path))


def test_mask_magic_is_not_interchangeable(tmp_path):
    tpath = tmp_path / "t.dten"
    gio.write_tensor(str(tpath), np.zeros((2, 2)))
    with pytest.raises(DataFormatError):
        gio.read_mask(str(tpath))


# ---------------------------------------------------------------------------
# long CSV


def _write_csv(path, text):
    path.write_text(text)
    return str(path)


def test_read_csv_long_basic(tmp_path):
    p = _write_csv(tmp_path / "d.csv",
                   "i,j,value\n1,1,5.0\n2,3,-1.5\n1,2,\n2,1,0.25\n")
    data = gio.read_csv_long(p, (2, 3))
    assert data.duplicates == 0
    assert data.mask.n_observed == 3
    assert data.values[0, 0] == 5.0
    assert data.values[1, 2] == -1.5
    assert data.values[1, 0] == 0.25
    assert not data.mask.indicator[0, 1]  # blank value field means missing


def test_read_csv_long_duplicates_keep_last(tmp_path):
    p = _write_csv(tmp_path / "d.csv", "1,1,1.0\n1,1,2.0\n2,2,3.0\n1,1,4.0\n")
    with pytest.warns(UserWarning, match="duplicate"):
        data = gio.read_csv_long(p, (2, 2))
    assert data.duplicates == 2
    assert data.values[0, 0] == 4.0
    assert data.mask.n_observed == 2


def test_read_csv_long_header_only_on_first_line(tmp_path):
    p = _write_csv(tmp_path / "d.csv", "1,1,1.0\nrow,col,val\n")
    with pytest.raises(DataFormatError):
        gio.read_csv_long(p, (2, 2))


def test_read_csv_long_rejects_malformed(tmp_path):
    with pytest.raises(DataFormatError):  # wrong field count
        gio.read_csv_long(_write_csv(tmp_path / "a.csv", "1,1,1,5.0\n"), (2, 2))
    with pytest.raises(DataFormatError):  # zero index (table is one-based)
        gio.read_csv_long(_write_csv(tmp_path / "b.csv", "0,1,5.0\n"), (2, 2))
    with pytest.raises(DataFormatError):  # out of range
        gio.read_csv_long(_write_csv(tmp_path / "c.csv", "3,1,5.0\n"), (2, 2))
    with pytest.raises(DataFormatError):  # non-numeric value
        gio.read_csv_long(_write_csv(tmp_path / "d.csv", "1,1,abc\n"), (2, 2))


def test_read_csv_long_skips_blank_lines(tmp_path):
    p = _write_csv(tmp_path / "d.csv", "\n1,1,2.0\n\n2,2,3.0\n")
    data = gio.read_csv_long(p, (2, 2))
    assert data.mask.n_observed == 2


# ---------------------------------------------------------------------------
# images


def test_image_roundtrip_rgb(tmp_path):
    from PIL import Image

    rng = np.random.default_rng(1)
    raw = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)  # rows x cols x ch
    src = tmp_path / "in.png"
    Image.fromarray(raw, mode="RGB").save(src)

    t = gio.image_to_tensor(str(src))
    assert t.shape == (7, 9, 3)  # width, height, channels
    assert t.min() >= 0.0 and t.max() <= 1.0
    assert t[3, 2, 1] == raw[2, 3, 1] / 255.0

    dst = tmp_path / "out.png"
    gio.tensor_to_image(t, str(dst))
    with Image.open(dst) as im:
        assert np.array_equal(np.asarray(im), raw)


def test_image_roundtrip_grayscale(tmp_path):
    from PIL import Image

    raw = np.arange(20, dtype=np.uint8).reshape(4, 5) * 12
    src = tmp_path / "g.png"
    Image.fromarray(raw, mode="L").save(src)
    t = gio.image_to_tensor(str(src))
    assert t.shape == (5, 4, 1)
    dst = tmp_path / "g2.png"
    gio.tensor_to_image(t, str(dst))
    with Image.open(dst) as im:
        assert np.array_equal(np.asarray(im), raw)


def test_image_mode_and_shape_validation(tmp_path):
    from PIL import Image

    src = tmp_path / "p.png"
    Image.new("RGBA", (4, 4)).save(src)
    with pytest.raises(DataFormatError):
        gio.image_to_tensor(str(src))
    with pytest.raises(ValueError):
        gio.tensor_to_image(np.zeros((4, 4, 2)), str(tmp_path / "x.png"))
    with pytest.raises(ValueError):
        gio.tensor_to_image(np.zeros((4, 4)), str(tmp_path / "x.png"))


def test_tensor_to_image_clips_and_rounds(tmp_path):
    from PIL import Image

    t = np.array([[[-0.5]], [[0.5]], [[1.5]]])  # (3, 1, 1)
    dst = tmp_path / "c.png"
    gio.tensor_to_image(t, str(dst))
    with Image.open(dst) as im:
        assert np.asarray(im).ravel().tolist() == [0, 128, 255]


# ---------------------------------------------------------------------------
# generators


def test_make_random_mask_counts_and_determinism():
    shape = (11, 7, 3)
    n = 11 * 7 * 3
    for sr in (0.0, 0.1, 0.5, 1.0):
        mask = gio.make_random_mask(shape, sr, seed=9)
        assert mask.n_observed == round(sr * n)
    a = gio.make_random_mask(shape, 0.3, seed=4)
    b = gio.make_random_mask(shape, 0.3, seed=4)
    c = gio.make_random_mask(shape, 0.3, seed=5)
    assert np.array_equal(a.indicator, b.indicator)
    assert not np.array_equal(a.indicator, c.indicator)
    with pytest.raises(ValueError):
        gio.make_random_mask(shape, 1.5)


def test_make_random_mask_picks_smallest_draws():
    shape = (6, 5)
    n = 30
    k = round(0.4 * n)
    draws = np.random.Generator(np.random.PCG64(12)).random(n)
    expected = np.sort(np.argsort(draws)[:k])
    mask = gio.make_random_mask(shape, 0.4, seed=12)
    assert np.array_equal(mask.observed_linear(), expected)


def test_make_synthetic_components_add_up():
    shape = (10, 8, 3)
    data = gio.make_synthetic(
        shape, rank=2,
        factor_kernels=["matern32(l=4)", "matern32(l=3)", "identity"],
        local_kernels=["matern32(l=2)*bohman(4)", "matern32(l=2)*bohman(4)", "identity"],
        noise_sd=0.0, seed=3,
    )
    assert data.values.shape == shape
    assert np.allclose(data.values, data.smooth + data.local, atol=1e-12)
    assert len(data.factors) == 3
    assert data.factors[0].shape == (10, 2)
    # the smooth part is exactly the factor reconstruction
    from glskf.tensor import cp_reconstruct

    assert np.allclose(data.smooth, cp_reconstruct(data.factors), atol=1e-12)


def test_make_synthetic_noise_and_reproducibility():
    shape = (6, 6)
    a = gio.make_synthetic(shape, rank=2, noise_sd=0.1, seed=7)
    b = gio.make_synthetic(shape, rank=2, noise_sd=0.1, seed=7)
    c = gio.make_synthetic(shape, rank=2, noise_sd=0.1, seed=8)
    assert a.values.tobytes() == b.values.tobytes()
    assert not np.array_equal(a.values, c.values)
    noisy = a.values - a.smooth - a.local
    assert 0.0 < np.abs(noisy).max() < 1.0


def test_make_synthetic_smoothness_tracks_lengthscale():
    # longer factor lengthscales give smoother draws along that mode
    rough = gio.make_synthetic((40, 3), rank=1, seed=0,
                               factor_kernels=["matern32(l=0.5)", "identity"])
    smooth = gio.make_synthetic((40, 3), rank=1, seed=0,
                                factor_kernels=["matern32(l=15)", "identity"])

    def wiggle(t):
        return float(np.mean(np.abs(np.diff(t, axis=0)))) / (float(np.std(t)) + 1e-12)

    assert wiggle(smooth.smooth) < wiggle(rough.smooth)


def test_make_synthetic_validation():
    with pytest.raises(ValueError):
        gio.make_synthetic((4, 4), rank=0)
    with pytest.raises(ValueError):
        gio.make_synthetic((4, 4), rank=1, noise_sd=-0.1)
    with pytest.raises(ValueError):
        gio.make_synthetic((4, 4), rank=1, local_kernels=["empirical", "identity"])
    with pytest.raises(ValueError):
        gio.make_synthetic((4, 4), rank=1, factor_kernels=["qv", "identity"])
    with pytest.raises(ValueError):
        gio.make_synthetic((2000, 2000), rank=1)
