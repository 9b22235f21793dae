"""
Unit tests for IDX files, the binary digit subset and prepared datasets
"""
import gzip
import os
import struct

import numpy as np
import pytest

from backdoor_cert.data.dataset import TrainingSet, binarize, make_binary_subset
from backdoor_cert.data.idx import IMAGE_MAGIC, LABEL_MAGIC, encode_idx, load_idx, read_idx, write_idx
from backdoor_cert.data.prepared import load_prepared, save_prepared
from backdoor_cert.errors import DataError, DimensionError, DomainError, FormatError, SymbolDomainError
from backdoor_cert.models.schemas import DatasetManifest
from backdoor_cert.utils.files import sha256_file


class TestReadIdx:
    """Test IDX parsing"""

    def test_round_trip_images(self, tmp_path):
        """Test that written images read back unchanged"""
        images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
        path = os.path.join(tmp_path, "images")
        write_idx(path, images)
        np.testing.assert_array_equal(read_idx(path, IMAGE_MAGIC), images)

    def test_gzip(self, tmp_path):
        """Test reading a gzipped IDX file"""
        labels = np.array([1, 7, 7, 1], dtype=np.uint8)
        path = os.path.join(tmp_path, "labels.gz")
        with gzip.open(path, "wb") as f:
            f.write(encode_idx(labels))
        np.testing.assert_array_equal(read_idx(path, LABEL_MAGIC), labels)

    def test_wrong_magic(self, tmp_path):
        """Test that a label file is not accepted as images"""
        path = os.path.join(tmp_path, "labels")
        write_idx(path, np.array([1, 2, 3], dtype=np.uint8))
        with pytest.raises(FormatError) as exc_info:
            read_idx(path, IMAGE_MAGIC)
        assert "0x00000803" in str(exc_info.value)
        assert exc_info.value.offset == 0

    def test_truncated_payload(self, tmp_path):
        """Test that a short payload reports the byte offset"""
        path = os.path.join(tmp_path, "images")
        data = encode_idx(np.zeros((2, 3, 3), dtype=np.uint8))
        with open(path, "wb") as f:
            f.write(data[:-5])
        with pytest.raises(FormatError) as exc_info:
            read_idx(path, IMAGE_MAGIC)
        assert exc_info.value.offset == len(data) - 5
        assert exc_info.value.path == path

    def test_truncated_dimensions(self, tmp_path):
        """Test a header cut inside the dimension table"""
        path = os.path.join(tmp_path, "images")
        with open(path, "wb") as f:
            f.write(struct.pack(">I", IMAGE_MAGIC) + struct.pack(">I", 2))
        with pytest.raises(FormatError):
            read_idx(path, IMAGE_MAGIC)

    def test_trailing_bytes(self, tmp_path):
        """Test that extra bytes after the payload are rejected"""
        path = os.path.join(tmp_path, "labels")
        with open(path, "wb") as f:
            f.write(encode_idx(np.array([1, 2], dtype=np.uint8)) + b"\x00")
        with pytest.raises(FormatError):
            read_idx(path, LABEL_MAGIC)

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a data error naming the path"""
        path = os.path.join(tmp_path, "nope")
        with pytest.raises(DataError) as exc_info:
            read_idx(path, LABEL_MAGIC)
        assert path in str(exc_info.value)


class TestLoadIdx:
    """Test load_idx"""

    def test_loads_pair(self, idx_files, raw_digits):
        """Test loading synthetic images with their labels"""
        raw = load_idx(*idx_files)
        assert len(raw) == len(raw_digits)
        assert raw.image_shape == (8, 8)
        np.testing.assert_array_equal(raw.labels, raw_digits.labels)

    def test_count_mismatch(self, tmp_path):
        """Test that image and label counts must agree"""
        images_path = os.path.join(tmp_path, "images")
        labels_path = os.path.join(tmp_path, "labels")
        write_idx(images_path, np.zeros((3, 2, 2), dtype=np.uint8))
        write_idx(labels_path, np.zeros(2, dtype=np.uint8))
        with pytest.raises(FormatError):
            load_idx(images_path, labels_path)


class TestBinarize:
    """Test pixel binarization"""

    def test_threshold(self):
        """Test that 127 maps to 0 and 128 to 1"""
        np.testing.assert_array_equal(binarize(np.array([0, 127, 128, 255])), [0, 0, 1, 1])


class TestMakeBinarySubset:
    """Test make_binary_subset"""

    def test_sizes_and_domains(self, raw_digits):
        """Test split sizes, feature count and domains"""
        train, test = make_binary_subset(raw_digits, (1, 7), 20, 15, seed=0)
        assert (len(train), len(test)) == (20, 15)
        assert train.num_features == 64
        assert (train.feature_domain, train.num_classes) == (2, 2)

    def test_only_requested_digits(self, raw_digits):
        """Test that other digits are dropped and labels relabelled"""
        train, test = make_binary_subset(raw_digits, (1, 7), 30, 30, seed=1)
        features = np.concatenate([train.features, test.features])
        labels = np.concatenate([train.labels, test.labels])
        assert set(labels.tolist()) == {0, 1}
        # All 60 examples of digits 1 and 7 are used, none of digit 3
        assert np.sum(labels == 0) == 30 and np.sum(labels == 1) == 30
        assert features.max() <= 1

    def test_splits_are_disjoint(self, raw_digits):
        """Test that training and test examples come from different raw indices"""
        train, test = make_binary_subset(raw_digits, (1, 7), 30, 30, seed=2)
        pool = binarize(raw_digits.images[np.isin(raw_digits.labels, (1, 7))].reshape(60, -1))
        # Every pool row is used exactly once across the two splits
        combined = np.concatenate([train.features, test.features])
        assert sorted(map(bytes, combined.astype(np.uint8))) == sorted(map(bytes, pool.astype(np.uint8)))

    def test_deterministic(self, raw_digits):
        """Test that the same seed gives identical splits"""
        assert make_binary_subset(raw_digits, (1, 7), 10, 10, 5) == make_binary_subset(raw_digits, (1, 7), 10, 10, 5)

    def test_seed_changes_split(self, raw_digits):
        """Test that a different seed gives a different split"""
        a, _ = make_binary_subset(raw_digits, (1, 7), 10, 10, 5)
        b, _ = make_binary_subset(raw_digits, (1, 7), 10, 10, 6)
        assert a != b

    def test_insufficient_examples(self, raw_digits):
        """Test that requesting more examples than exist is a data error"""
        with pytest.raises(DataError):
            make_binary_subset(raw_digits, (1, 7), 50, 20, seed=0)

    def test_same_digit_twice(self, raw_digits):
        """Test that the two digits must differ"""
        with pytest.raises(DomainError):
            make_binary_subset(raw_digits, (1, 1), 5, 5, seed=0)


class TestTrainingSet:
    """Test TrainingSet validation"""

    def test_read_only(self, tiny_set):
        """Test that features cannot be modified in place"""
        with pytest.raises(ValueError):
            tiny_set.features[0, 0] = 1

    def test_label_out_of_range(self):
        """Test that labels must lie in [0, c)"""
        with pytest.raises(SymbolDomainError):
            TrainingSet([[0, 1]], [2], feature_domain=2, num_classes=2)

    def test_label_count(self):
        """Test that every example needs one label"""
        with pytest.raises(DimensionError):
            TrainingSet([[0, 1], [1, 0]], [1], feature_domain=2, num_classes=2)

    def test_replace(self, tiny_set):
        """Test copying with new labels"""
        flipped = tiny_set.replace(labels=1 - tiny_set.labels)
        np.testing.assert_array_equal(flipped.features, tiny_set.features)
        np.testing.assert_array_equal(flipped.labels, [1, 0, 1, 0])


class TestPreparedDataset:
    """Test save_prepared and load_prepared"""

    def _manifest(self, train, test):
        return DatasetManifest(
            digits=(1, 7),
            train_size=len(train),
            test_size=len(test),
            seed=0,
            feature_domain=2,
            num_classes=2,
            image_shape=(8, 8),
        )

    def test_round_trip(self, tmp_path, digit_sets):
        """Test that a saved dataset loads back equal"""
        train, test = digit_sets
        save_prepared(str(tmp_path), train, test, self._manifest(train, test))
        loaded_train, loaded_test, manifest = load_prepared(str(tmp_path))
        assert loaded_train == train
        assert loaded_test == test
        assert manifest.image_shape == (8, 8)

    def test_hash_equal_rerun(self, tmp_path, digit_sets):
        """Test that saving twice produces identical files"""
        train, test = digit_sets
        first, second = os.path.join(tmp_path, "a"), os.path.join(tmp_path, "b")
        for out in (first, second):
            save_prepared(out, train, test, self._manifest(train, test))
        for name in sorted(os.listdir(os.path.join(first, "dataset"))):
            assert sha256_file(os.path.join(first, "dataset", name)) == sha256_file(
                os.path.join(second, "dataset", name)
            )

    def test_missing(self, tmp_path):
        """Test that loading without prepare is a data error"""
        with pytest.raises(DataError):
            load_prepared(str(tmp_path))
