"""
Binary adapter files.

Layout (all little-endian):
    header   magic "SVFT", version u16, kind u8, flags u8, d1 u32, d2 u32, effective_rank u32
    pattern  kind u8, n_params u8, params u64 * n_params, n_indices u32, (i u32, j u32) * n_indices
    values   f64 * n_indices
    checksum u64 FNV-1a over the base (rows u32, cols u32, data f64 row-major)
"""
import logging
import struct
from pathlib import Path

import numpy as np

from adapters.patterns import PatternKind, SparsityPattern, banded, plain, random_pattern, restrict, top_k
from adapters.svft import SVFTAdapter
from numerics.decompositions import svd
from numerics.errors import (
    AdapterFormatError,
    ChecksumMismatchError,
    PatternError,
    UnsupportedVersionError,
)
from numerics.matrix import as_matrix

logger = logging.getLogger(__name__)

MAGIC = b"SVFT"
VERSION = 1
KIND_SVFT = 1
FLAG_TRUNCATE_BASE = 0x01

HEADER = struct.Struct("<4sHBBIII")
PATTERN_HEAD = struct.Struct("<BB")
COUNT = struct.Struct("<I")
CHECKSUM = struct.Struct("<Q")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def canonical_bytes(w0: np.ndarray) -> bytes:
    rows, cols = w0.shape
    return struct.pack("<II", rows, cols) + np.ascontiguousarray(w0, dtype="<f8").tobytes()


def base_checksum(w0) -> int:
    return fnv1a_64(canonical_bytes(as_matrix(w0, "base")))


def encode_adapter(adapter: SVFTAdapter, w0) -> bytes:
    w0 = as_matrix(w0, "base")
    if w0.shape != (adapter.d1, adapter.d2):
        raise AdapterFormatError(f"Base is {w0.shape[0]}x{w0.shape[1]}, adapter is {adapter.d1}x{adapter.d2}")
    pattern = adapter.pattern
    flags = FLAG_TRUNCATE_BASE if adapter.truncate_base else 0
    parts = [
        HEADER.pack(MAGIC, VERSION, KIND_SVFT, flags, adapter.d1, adapter.d2, adapter.effective_rank),
        PATTERN_HEAD.pack(int(pattern.kind), len(pattern.params)),
        struct.pack(f"<{len(pattern.params)}Q", *pattern.params),
        COUNT.pack(len(pattern)),
        np.column_stack([pattern.rows, pattern.cols]).astype("<u4").tobytes(),
        np.ascontiguousarray(adapter.values, dtype="<f8").tobytes(),
        CHECKSUM.pack(base_checksum(w0)),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise AdapterFormatError(f"Truncated adapter file: {what} needs {size} bytes at offset {self.offset}")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple:
        return fmt.unpack(self.take(fmt.size, what))


def _expected_pattern(kind: PatternKind, params: tuple[int, ...], d1: int, d2: int, factors) -> SparsityPattern:
    if kind == PatternKind.PLAIN:
        return plain(d1, d2)
    if kind == PatternKind.BANDED:
        return banded(d1, d2, *params)
    if kind == PatternKind.RANDOM:
        return random_pattern(d1, d2, *params)
    return top_k(factors, *params)


def decode_adapter(data: bytes, w0) -> SVFTAdapter:
    """Parse adapter bytes and pair them with the base they were trained on"""
    w0 = as_matrix(w0, "base")
    reader = _Reader(data)
    magic, version, kind, flags, d1, d2, rank = reader.unpack(HEADER, "header")
    if magic != MAGIC:
        raise AdapterFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version > VERSION:
        raise UnsupportedVersionError(f"Adapter file version {version} is newer than supported version {VERSION}")
    if kind != KIND_SVFT:
        raise AdapterFormatError(f"Unknown adapter kind {kind}")

    pattern_kind, n_params = reader.unpack(PATTERN_HEAD, "pattern header")
    try:
        pattern_kind = PatternKind(pattern_kind)
    except ValueError:
        raise AdapterFormatError(f"Unknown pattern kind {pattern_kind}") from None
    params = struct.unpack(f"<{n_params}Q", reader.take(8 * n_params, "pattern params"))
    (n_indices,) = reader.unpack(COUNT, "index count")
    pairs = np.frombuffer(reader.take(8 * n_indices, "pattern indices"), dtype="<u4").reshape(-1, 2)
    values = np.frombuffer(reader.take(8 * n_indices, "values"), dtype="<f8").astype(np.float64)
    (checksum,) = reader.unpack(CHECKSUM, "checksum")
    if reader.offset != len(data):
        raise AdapterFormatError(f"{len(data) - reader.offset} trailing bytes after checksum")

    expected = base_checksum(w0)
    if checksum != expected:
        raise ChecksumMismatchError(
            f"Adapter was saved against a different base (checksum {checksum:016x}, supplied base {expected:016x})"
        )
    if w0.shape != (d1, d2):
        raise AdapterFormatError(f"Adapter is {d1}x{d2} but the base is {w0.shape[0]}x{w0.shape[1]}")

    factors = svd(w0)
    try:
        pattern = SparsityPattern(d1, d2, tuple((int(i), int(j)) for i, j in pairs), pattern_kind, params)
        regenerated = _expected_pattern(pattern_kind, params, d1, d2, factors)
        if rank < factors.min_dim:
            regenerated = restrict(regenerated, rank)
    except (PatternError, ValueError, TypeError) as e:
        raise AdapterFormatError(f"Inconsistent pattern block: {e}") from e
    if regenerated.indices != pattern.indices:
        raise AdapterFormatError(f"Stored indices do not match {pattern_kind.name.lower()}{params}")

    return SVFTAdapter(
        factors=factors,
        pattern=pattern,
        values=values,
        effective_rank=rank,
        truncate_base=bool(flags & FLAG_TRUNCATE_BASE),
    )


def save_adapter(path: str | Path, adapter: SVFTAdapter, w0) -> None:
    data = encode_adapter(adapter, w0)
    Path(path).write_bytes(data)
    logger.info("Saved %s adapter (%d values) to %s", adapter.pattern.describe(), adapter.num_trainable, path)


def load_adapter(path: str | Path, w0) -> SVFTAdapter:
    adapter = decode_adapter(Path(path).read_bytes(), w0)
    logger.info("Loaded %s adapter from %s", adapter.pattern.describe(), path)
    return adapter
