"""
Reader and writer for the IDX container used by MNIST.

Layout (big endian):
  offset 0   u8 0, u8 0, u8 type code (0x08 = unsigned byte), u8 ndim
  offset 4   ndim x u32 dimension sizes
  then       prod(dims) unsigned bytes, row-major
Images are IDX3 (magic 0x00000803, count x rows x cols), labels IDX1
(magic 0x00000801, count). Files ending in .gz are read through gzip.
"""

import gzip
import logging
import struct
from typing import Tuple

import numpy as np

from backdoor_cert.errors import DataError, FormatError
from backdoor_cert.utils.files import atomic_write_bytes

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
UNSIGNED_BYTE = 0x08


class RawDataset:
    """Raw images (count x rows x cols, 0-255) and labels (0-9)"""

    def __init__(self, images: np.ndarray, labels: np.ndarray):
        if images.ndim != 3:
            raise FormatError(f"images must be count x rows x cols, got shape {images.shape}")
        if len(images) != len(labels):
            raise FormatError(f"{len(images)} images but {len(labels)} labels")
        self.images = images
        self.labels = labels

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> Tuple[int, int]:
        return int(self.images.shape[1]), int(self.images.shape[2])


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rb") as f:
            return f.read()
    except FileNotFoundError:
        raise DataError(f"File not found: {path}")
    except (OSError, EOFError) as e:
        raise FormatError(f"Cannot read IDX file: {e}", path=str(path), offset=0)


def read_idx(path: str, expected_magic: int) -> np.ndarray:
    """Parse one IDX file whose magic number must equal expected_magic"""
    data = _read_bytes(path)
    if len(data) < 4:
        raise FormatError("Truncated IDX header", path=str(path), offset=len(data))

    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise FormatError(
            f"Bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}",
            path=str(path),
            offset=0,
        )

    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise FormatError("Truncated IDX dimensions", path=str(path), offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_end])

    expected = int(np.prod(dims, dtype=np.int64))
    available = len(data) - header_end
    if available < expected:
        raise FormatError(
            f"Truncated IDX payload: {available} of {expected} bytes",
            path=str(path),
            offset=len(data),
        )
    if available > expected:
        raise FormatError(
            "Trailing bytes after IDX payload", path=str(path), offset=header_end + expected
        )
    return np.frombuffer(data, dtype=np.uint8, count=expected, offset=header_end).reshape(dims)


def load_idx(images_path: str, labels_path: str) -> RawDataset:
    """Load an IDX3 image file and its IDX1 label file"""
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if len(images) != len(labels):
        raise FormatError(
            f"Image count {len(images)} does not match label count {len(labels)}",
            path=str(labels_path),
            offset=4,
        )
    logger.info(f"Loaded {len(images)} images of {images.shape[1]}x{images.shape[2]}")
    return RawDataset(images, labels)


def encode_idx(array: np.ndarray) -> bytes:
    """IDX bytes for an unsigned-byte array of any rank up to 255"""
    array = np.asarray(array)
    if array.size and (array.min() < 0 or array.max() > 255):
        raise FormatError("IDX payload must fit in unsigned bytes")
    header = struct.pack(">BBBB", 0, 0, UNSIGNED_BYTE, array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=np.uint8).tobytes()


def write_idx(path: str, array: np.ndarray) -> None:
    atomic_write_bytes(path, encode_idx(array))
