"""Latent-embedding containers, spatial pooling, file formats and a toy encoder.

The toy encoder stands in for a real backbone so corruption-to-detection
pipelines can run end to end without a neural network: it summarizes an
image by per-cell per-channel means over a g x g grid plus three global
per-channel standard deviations, which makes fog, noise and occlusion
corruptions measurably shift the embedding.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .images import ImageBuffer, _frozen_array

EMBED_MAGIC = b"CCEMB1"
EMBED_VERSION = 1
FMAP_MAGIC = b"CCFMP1"
FMAP_VERSION = 1

MANIFEST_ROLES = ("id_train", "id_test", "ood")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMap:
    """Pre-pooling encoder output stored channel-major: data is (C, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 3:
            raise ValidationError(f"feature map must be (C, H, W), got {arr.shape}")
        if min(arr.shape) < 1:
            raise ValidationError("feature map dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("feature map contains non-finite values")
        object.__setattr__(self, "data", _frozen_array(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class EmbeddingVector:
    """A pooled latent vector tagged with a sample identifier."""

    id: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).reshape(-1)
        if arr.size < 1:
            raise ValidationError("embedding vector must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"embedding {self.id!r} contains non-finite values")
        object.__setattr__(self, "values", _frozen_array(arr))

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class EmbeddingSet:
    """An ordered collection of embeddings sharing one dimensionality.

    An empty set (dim 0) is loadable but rejected by every fitting
    operation; validation happens at the consumer.
    """

    dim: int
    records: tuple = field(default_factory=tuple)

    def __post_init__(self):
        records = tuple(self.records)
        seen = set()
        for rec in records:
            if rec.dim != self.dim:
                raise ValidationError(
                    f"record {rec.id!r} has dim {rec.dim}, set has dim {self.dim}"
                )
            if rec.id in seen:
                raise ValidationError(f"duplicate embedding id {rec.id!r}")
            seen.add(rec.id)
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    def matrix(self) -> np.ndarray:
        """Stack records into an (n, dim) array."""
        if not self.records:
            return np.zeros((0, self.dim))
        return np.stack([rec.values for rec in self.records])

    @classmethod
    def from_matrix(cls, ids, matrix) -> "EmbeddingSet":
        matrix = np.asarray(matrix, dtype=float)
        ids = list(ids)
        if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
            raise ValidationError("ids and matrix rows must correspond")
        records = tuple(
            EmbeddingVector(id=str(i), values=row) for i, row in zip(ids, matrix)
        )
        return cls(dim=matrix.shape[1], records=records)


@dataclass(frozen=True)
class DatasetManifest:
    """Named pointer to an embedding file or an image directory."""

    name: str
    role: str
    path: str

    def __post_init__(self):
        if self.role not in MANIFEST_ROLES:
            raise ValidationError(
                f"manifest role must be one of {MANIFEST_ROLES}, got {self.role!r}"
            )
        if not self.path:
            raise ValidationError("manifest path must be non-empty")


# ---------------------------------------------------------------------------
# pooling and the toy encoder
# ---------------------------------------------------------------------------


def pool_spatial_mean(fm: FeatureMap, sample_id: str = "") -> EmbeddingVector:
    """Average each channel over its spatial extent.

    Component c of the result is the mean of fm.data[c] over all (i, j).
    """
    return EmbeddingVector(id=sample_id, values=fm.data.mean(axis=(1, 2)))


def toy_encode(img: ImageBuffer, grid: int = 4, sample_id: str = "") -> EmbeddingVector:
    """Deterministic image embedding of length 3*grid*grid + 3.

    Features are per-cell per-channel means over a grid x grid partition
    (remainder rows/columns absorbed by the last cell), followed by the
    three global per-channel standard deviations.
    """
    if grid < 1:
        raise ValidationError("grid must be a positive integer")
    h, w = img.height, img.width
    if h < grid or w < grid:
        raise ValidationError(
            f"image {h}x{w} too small for a {grid}x{grid} encoding grid"
        )
    row_step, col_step = h // grid, w // grid
    feats = []
    for r in range(grid):
        r0 = r * row_step
        r1 = (r + 1) * row_step if r < grid - 1 else h
        for c in range(grid):
            c0 = c * col_step
            c1 = (c + 1) * col_step if c < grid - 1 else w
            feats.extend(img.pixels[r0:r1, c0:c1].mean(axis=(0, 1)))
    feats.extend(img.pixels.std(axis=(0, 1)))
    return EmbeddingVector(id=sample_id, values=np.array(feats))


# ---------------------------------------------------------------------------
# embedding file formats
# ---------------------------------------------------------------------------


def _format_real(v: float) -> str:
    return format(v, ".9g")


def save_embeddings(es: EmbeddingSet, path, fmt: str = "binary") -> None:
    """Write an embedding set as JSON-lines text or the binary container."""
    path = Path(path)
    if fmt == "text":
        lines = []
        for rec in es.records:
            vec = ", ".join(_format_real(v) for v in rec.values)
            lines.append(f'{{"id": {json.dumps(rec.id)}, "vec": [{vec}]}}\n')
        path.write_text("".join(lines), encoding="utf-8")
    elif fmt == "binary":
        parts = [
            EMBED_MAGIC,
            struct.pack("<HIQ", EMBED_VERSION, es.dim, len(es.records)),
        ]
        for rec in es.records:
            ident = rec.id.encode("utf-8")
            if len(ident) > 0xFFFF:
                raise ValidationError(f"id {rec.id!r} too long for binary format")
            parts.append(struct.pack("<H", len(ident)))
            parts.append(ident)
            parts.append(rec.values.astype("<f4").tobytes())
        path.write_bytes(b"".join(parts))
    else:
        raise ValidationError(f"unknown embedding format {fmt!r}")


def _load_embeddings_text(path: Path) -> EmbeddingSet:
    records = []
    dim = None
    seen = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                ident = obj["id"]
                vec = obj["vec"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad embedding record ({exc})") from exc
            if not isinstance(ident, str) or not isinstance(vec, list) or not vec:
                raise FormatError(f"{path}:{lineno}: bad embedding record")
            values = np.asarray(vec, dtype=float)
            if not np.all(np.isfinite(values)):
                raise FormatError(f"{path}:{lineno}: non-finite value in record {ident!r}")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise FormatError(
                    f"{path}:{lineno}: record {ident!r} has dim {values.size}, "
                    f"expected {dim}"
                )
            if ident in seen:
                raise FormatError(f"{path}:{lineno}: duplicate id {ident!r}")
            seen.add(ident)
            records.append(EmbeddingVector(id=ident, values=values))
    return EmbeddingSet(dim=dim or 0, records=tuple(records))


def _load_embeddings_binary(path: Path) -> EmbeddingSet:
    data = path.read_bytes()
    if data[:6] != EMBED_MAGIC:
        raise FormatError(f"{path}: bad magic bytes, not an embedding file")
    if len(data) < 6 + 14:
        raise FormatError(f"{path}: truncated embedding header")
    version, dim, count = struct.unpack_from("<HIQ", data, 6)
    if version != EMBED_VERSION:
        raise FormatError(
            f"{path}: file version {version}, supported version {EMBED_VERSION}"
        )
    pos = 6 + 14
    records = []
    seen = set()
    for _ in range(count):
        if pos + 2 > len(data):
            raise FormatError(f"{path}: truncated record header")
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + id_len + 4 * dim > len(data):
            raise FormatError(f"{path}: truncated record payload")
        ident = data[pos : pos + id_len].decode("utf-8")
        pos += id_len
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(float)
        pos += 4 * dim
        if not np.all(np.isfinite(values)):
            raise FormatError(f"{path}: non-finite value in record {ident!r}")
        if ident in seen:
            raise FormatError(f"{path}: duplicate id {ident!r}")
        seen.add(ident)
        records.append(EmbeddingVector(id=ident, values=values))
    return EmbeddingSet(dim=dim if records else 0, records=tuple(records))


def load_embeddings(path, fmt: str | None = None) -> EmbeddingSet:
    """Load an embedding set; fmt None sniffs binary magic vs text."""
    path = Path(path)
    if fmt is None:
        with path.open("rb") as fh:
            fmt = "binary" if fh.read(6) == EMBED_MAGIC else "text"
    if fmt == "text":
        return _load_embeddings_text(path)
    if fmt == "binary":
        return _load_embeddings_binary(path)
    raise ValidationError(f"unknown embedding format {fmt!r}")


# ---------------------------------------------------------------------------
# feature-map container (single-tensor files, e.g. exported uncertainty maps)
# ---------------------------------------------------------------------------


def save_feature_map(fm: FeatureMap, path) -> None:
    """Write a feature map as a little-endian f32 tensor container."""
    header = FMAP_MAGIC + struct.pack(
        "<HIII", FMAP_VERSION, fm.channels, fm.height, fm.width
    )
    Path(path).write_bytes(header + fm.data.astype("<f4").tobytes())


def load_feature_map(path) -> FeatureMap:
    data = Path(path).read_bytes()
    if data[:6] != FMAP_MAGIC:
        raise FormatError(f"{path}: bad magic bytes, not a feature-map file")
    if len(data) < 6 + 14:
        raise FormatError(f"{path}: truncated feature-map header")
    version, channels, height, width = struct.unpack_from("<HIII", data, 6)
    if version != FMAP_VERSION:
        raise FormatError(
            f"{path}: file version {version}, supported version {FMAP_VERSION}"
        )
    expect = channels * height * width
    values = np.frombuffer(data, dtype="<f4", count=-1, offset=20)
    if values.size != expect:
        raise FormatError(f"{path}: payload has {values.size} values, expected {expect}")
    return FeatureMap(data=values.astype(float).reshape(channels, height, width))
