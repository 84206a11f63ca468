import numpy as np
import pytest

from gelforce.image import Image, ImageError, load_image, resize_bilinear, save_image


def test_load_1x1_rgb_max_min_bytes(tmp_path):
    save_image(Image(np.array([[[1.0, 0.0, 0.0]]], dtype=np.float32)), tmp_path / "px.png")
    img = load_image(tmp_path / "px.png")
    assert img.width == 1 and img.height == 1 and img.channels == 3
    assert img.data[0, 0].tolist() == [1.0, 0.0, 0.0]


def test_load_2x2_gray_zeros(tmp_path):
    save_image(Image(np.zeros((2, 2, 1), dtype=np.float32)), tmp_path / "z.png")
    img = load_image(tmp_path / "z.png")
    assert img.channels == 1
    assert np.count_nonzero(img.data) == 0 and img.data.size == 4


def test_load_sensor_sized_rgb(tmp_path):
    rng = np.random.default_rng(0)
    src = Image(rng.random((240, 320, 3)).astype(np.float32))
    save_image(src, tmp_path / "f.png")
    img = load_image(tmp_path / "f.png")
    assert (img.width, img.height, img.channels) == (320, 240, 3)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_image("/nonexistent/nope.png")


def test_roundtrip_white(tmp_path):
    src = Image(np.ones((1, 1, 3), dtype=np.float32))
    save_image(src, tmp_path / "w.png")
    assert np.array_equal(load_image(tmp_path / "w.png").data, src.data)


def test_quantization_round_half_up(tmp_path):
    src = Image(np.full((1, 1, 1), 0.5, dtype=np.float32))
    save_image(src, tmp_path / "h.png")
    back = load_image(tmp_path / "h.png")
    assert np.floor(back.data[0, 0, 0] * 255 + 0.5) == 128


def test_save_load_preserves_channels(tmp_path):
    src = Image(np.random.default_rng(1).random((4, 5, 3)).astype(np.float32))
    save_image(src, tmp_path / "c.png")
    assert load_image(tmp_path / "c.png").channels == 3


def test_roundtrip_identity_on_quantized(tmp_path):
    rng = np.random.default_rng(2)
    bytes_ = rng.integers(0, 256, size=(7, 9, 3), dtype=np.uint8)
    src = Image((bytes_ / 255.0).astype(np.float32))
    save_image(src, tmp_path / "q.png")
    back = load_image(tmp_path / "q.png")
    assert np.array_equal(np.floor(back.data * 255 + 0.5), bytes_)


def test_resize_constant_stays_constant():
    src = Image(np.full((240, 320, 3), 0.3, dtype=np.float32))
    out = resize_bilinear(src, 160, 120)
    assert (out.width, out.height) == (160, 120)
    assert np.allclose(out.data, 0.3, atol=1e-7)


def test_resize_identity_bitwise():
    src = Image(np.random.default_rng(3).random((6, 8, 1)).astype(np.float32))
    out = resize_bilinear(src, 8, 6)
    assert np.array_equal(out.data, src.data)


def test_resize_monotone_row_matches_hand_formula():
    src = Image(np.array([[[0.0], [1.0]]], dtype=np.float32))
    out = resize_bilinear(src, 4, 1)
    row = out.data[0, :, 0]
    assert np.all(np.diff(row) >= 0)
    # hand-evaluated bilinear with half-pixel centres: src_x = (i+0.5)*0.5-0.5
    expected = [0.0, 0.25, 0.75, 1.0]
    assert np.allclose(row, expected, atol=1e-7)


def test_resize_preserves_range():
    rng = np.random.default_rng(4)
    src = Image((0.2 + 0.6 * rng.random((13, 17, 3))).astype(np.float32))
    out = resize_bilinear(src, 40, 8)
    assert out.data.min() >= src.data.min() - 1e-7
    assert out.data.max() <= src.data.max() + 1e-7


def test_resize_rejects_zero_dimension():
    src = Image(np.zeros((2, 2, 1), dtype=np.float32))
    with pytest.raises(ImageError):
        resize_bilinear(src, 0, 2)


def test_image_validation():
    with pytest.raises(ImageError):
        Image(np.zeros((2, 2, 4), dtype=np.float32))
    with pytest.raises(ImageError):
        Image(np.full((2, 2, 1), 1.5, dtype=np.float32))


def test_images_are_immutable():
    img = Image(np.zeros((2, 2, 1), dtype=np.float32))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0
