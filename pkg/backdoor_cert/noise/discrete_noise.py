"""
Integer-symbol data encoding and the discrete smoothing noise channel.

A coordinate with domain size d holds a symbol in {0, ..., d-1}; symbol k
stands for the fractional value k/d. Perturbations and noise are symbol
vectors over the same domain, combined by addition modulo d.
"""

import numpy as np

from backdoor_cert.errors import DimensionError, SymbolDomainError
from backdoor_cert.models.schemas import NoiseSpec
from backdoor_cert.noise.seeds import make_rng

SYMBOL_DTYPE = np.int64


class EncodedVector:
    """Immutable vector of symbols over a domain of size d"""

    __slots__ = ("_symbols", "_domain_size")

    def __init__(self, symbols, domain_size: int):
        if domain_size < 2:
            raise SymbolDomainError(f"domain_size must be at least 2, got {domain_size}")
        array = np.array(symbols, dtype=SYMBOL_DTYPE)
        if array.ndim != 1:
            raise DimensionError(f"symbols must be one-dimensional, got shape {array.shape}")
        if array.size and (array.min() < 0 or array.max() >= domain_size):
            raise SymbolDomainError(f"symbols must lie in [0, {domain_size})")
        array.setflags(write=False)
        self._symbols = array
        self._domain_size = int(domain_size)

    @property
    def symbols(self) -> np.ndarray:
        return self._symbols

    @property
    def domain_size(self) -> int:
        return self._domain_size

    def __len__(self) -> int:
        return int(self._symbols.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EncodedVector):
            return NotImplemented
        return self._domain_size == other._domain_size and np.array_equal(
            self._symbols, other._symbols
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"EncodedVector(d={self._domain_size}, symbols={self._symbols.tolist()!r})"


def _check_compatible(v: EncodedVector, delta: EncodedVector) -> None:
    if len(v) != len(delta):
        raise DimensionError(f"length mismatch: {len(v)} != {len(delta)}")
    if v.domain_size != delta.domain_size:
        raise SymbolDomainError(
            f"domain_size mismatch: {v.domain_size} != {delta.domain_size}"
        )


def modular_add(v: EncodedVector, delta: EncodedVector) -> EncodedVector:
    """Per-coordinate (v_j + delta_j) mod d"""
    _check_compatible(v, delta)
    return EncodedVector((v.symbols + delta.symbols) % v.domain_size, v.domain_size)


def negate(delta: EncodedVector) -> EncodedVector:
    """The perturbation that undoes delta: delta_j -> (d - delta_j) mod d"""
    return EncodedVector((delta.domain_size - delta.symbols) % delta.domain_size, delta.domain_size)


def hamming_distance(a, b) -> int:
    """Number of coordinates where two equal-shape symbol arrays differ"""
    a = a.symbols if isinstance(a, EncodedVector) else np.asarray(a)
    b = b.symbols if isinstance(b, EncodedVector) else np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} != {b.shape}")
    return int(np.count_nonzero(a != b))


def draw_noise_symbols(rng: np.random.Generator, spec: NoiseSpec, shape) -> np.ndarray:
    """
    Noise symbols of the given shape: 0 with probability beta, each of
    1..d-1 with probability theta. One uniform draw per coordinate.
    """
    uniforms = rng.random(shape)
    moved = np.floor((uniforms - spec.beta) / spec.theta).astype(SYMBOL_DTYPE) + 1
    np.clip(moved, 1, spec.domain_size - 1, out=moved)
    return np.where(uniforms < spec.beta, 0, moved).astype(SYMBOL_DTYPE)


def sample_noise(spec: NoiseSpec, length: int, seed: int) -> EncodedVector:
    """Noise vector of the given length, fully determined by (spec, length, seed)"""
    if length < 0:
        raise DimensionError(f"length must be nonnegative, got {length}")
    return EncodedVector(draw_noise_symbols(make_rng(seed), spec, length), spec.domain_size)


def apply_noise(v: EncodedVector, spec: NoiseSpec, seed: int) -> EncodedVector:
    """The noisy vector v + epsilon with epsilon drawn from seed"""
    if v.domain_size != spec.domain_size:
        raise SymbolDomainError(
            f"vector domain {v.domain_size} does not match noise domain {spec.domain_size}"
        )
    return modular_add(v, sample_noise(spec, len(v), seed))


def apply_noise_matrix(matrix: np.ndarray, spec: NoiseSpec, seed: int) -> np.ndarray:
    """Noise applied to every entry of a symbol array in one draw"""
    matrix = np.asarray(matrix, dtype=SYMBOL_DTYPE)
    if matrix.size and (matrix.min() < 0 or matrix.max() >= spec.domain_size):
        raise SymbolDomainError(f"symbols must lie in [0, {spec.domain_size})")
    noise = draw_noise_symbols(make_rng(seed), spec, matrix.shape)
    return (matrix + noise) % spec.domain_size
