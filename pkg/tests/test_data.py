import struct

import numpy as np
import pytest

from shieldlab.data import Dataset, load_idx, synth_shapes
from shieldlab.errors import IdxFormatError, ShapeError


def write_idx_pair(tmp_path, pixels, labels, h, w):
    """Author an IDX image/label fixture byte by byte."""
    count = len(labels)
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, count, h, w))
        fh.write(bytes(pixels))
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, count))
        fh.write(bytes(labels))
    return images_path, labels_path


def test_load_idx_hand_written_fixture(tmp_path):
    h = w = 3
    pixels = []
    for value in (0, 85, 170, 255):
        pixels.extend([value] * (h * w))
    labels = [3, 1, 4, 1]
    images_path, labels_path = write_idx_pair(tmp_path, pixels, labels, h, w)
    ds = load_idx(images_path, labels_path)
    assert ds.images.shape == (4, 1, 3, 3)
    assert ds.labels.tolist() == labels
    assert np.allclose(ds.images[1], 85 / 255.0)
    assert ds.images[0].max() == 0.0 and ds.images[3].min() == 1.0


def test_load_idx_truncated_pixels(tmp_path):
    images_path, labels_path = write_idx_pair(tmp_path, [7] * (2 * 4), [0, 1], 2, 2)
    raw = images_path.read_bytes()
    images_path.write_bytes(raw[:-3])
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(images_path, labels_path)


def test_load_idx_truncated_header(tmp_path):
    images_path = tmp_path / "images.idx"
    images_path.write_bytes(struct.pack(">II", 0x00000803, 4))
    labels_path = tmp_path / "labels.idx"
    labels_path.write_bytes(struct.pack(">II", 0x00000801, 4) + bytes(4))
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(images_path, labels_path)


def test_load_idx_bad_magic(tmp_path):
    images_path, labels_path = write_idx_pair(tmp_path, [0] * 8, [0, 1], 2, 2)
    raw = bytearray(images_path.read_bytes())
    raw[:4] = struct.pack(">I", 0x12345678)
    images_path.write_bytes(bytes(raw))
    with pytest.raises(IdxFormatError, match="magic"):
        load_idx(images_path, labels_path)


def test_load_idx_count_mismatch(tmp_path):
    images_path, _ = write_idx_pair(tmp_path, [0] * 8, [0, 1], 2, 2)
    labels_path = tmp_path / "short_labels.idx"
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, 3))
        fh.write(bytes([0, 1, 0]))
    with pytest.raises(IdxFormatError, match="match"):
        load_idx(images_path, labels_path)


def test_load_idx_all_zero_pixels(tmp_path):
    images_path, labels_path = write_idx_pair(tmp_path, [0] * 18, [0, 1], 3, 3)
    ds = load_idx(images_path, labels_path)
    assert np.all(ds.images == 0.0)


def test_synth_shapes_deterministic():
    a = synth_shapes(10, classes=("bar", "ring"), size=16, noise=0.08, seed=3)
    b = synth_shapes(10, classes=("bar", "ring"), size=16, noise=0.08, seed=3)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    c = synth_shapes(10, classes=("bar", "ring"), size=16, noise=0.08, seed=4)
    assert not np.array_equal(a.images, c.images)


def test_synth_shapes_counts_and_range():
    ds = synth_shapes(50, classes=("bar", "cross", "blob"), size=16, noise=0.1, seed=0)
    assert len(ds) == 150
    assert ds.num_classes == 3
    assert np.bincount(ds.labels).tolist() == [50, 50, 50]
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


def test_synth_shapes_nearest_centroid_separates_disjoint_classes():
    ds = synth_shapes(40, classes=("bar", "blob"), size=16, noise=0.0, seed=5)
    flat = ds.images.reshape(len(ds), -1)
    centroids = np.stack([flat[ds.labels == c].mean(axis=0) for c in range(2)])
    distances = ((flat[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    assert np.array_equal(distances.argmin(axis=1), ds.labels)


def test_synth_shapes_validation():
    with pytest.raises(ValueError, match="size"):
        synth_shapes(5, size=4)
    with pytest.raises(ValueError, match="noise"):
        synth_shapes(5, noise=-0.1)
    with pytest.raises(ValueError, match="shape kind"):
        synth_shapes(5, classes=("triangle",))


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset("bad", np.zeros((3, 4, 4)), np.zeros(3, dtype=int))
    with pytest.raises(ValueError, match="labels"):
        Dataset("bad", np.zeros((3, 1, 4, 4)), np.array([0, 1, 5]), num_classes=2)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        Dataset("bad", np.full((2, 1, 4, 4), 1.5), np.array([0, 1]))


def test_dataset_subset_preserves_metadata():
    ds = synth_shapes(10, classes=("bar", "blob"), seed=1)
    sub = ds.subset([0, 10, 3])
    assert len(sub) == 3
    assert sub.num_classes == 2
    assert sub.labels.tolist() == [0, 1, 0]
