"""Evidential (Dirichlet) machinery and mean-uncertainty aggregation.

The mean-uncertainty score is negated so that all scoring methods share
one thresholding convention (larger score = more in-distribution).
Aggregation treats pixel uncertainties as independent; no spatial
statistic beyond the mean is computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import ScoreRecord
from .embeddings import FMAP_MAGIC, load_feature_map
from .errors import FormatError, ValidationError
from .images import _frozen_array, read_png

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class DirichletParams:
    """Concentration parameters of a Dirichlet over K >= 2 classes."""

    kappa: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.kappa, dtype=float).reshape(-1)
        if arr.size < 2:
            raise ValidationError("need at least 2 concentration parameters")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise ValidationError("concentration parameters must be positive and finite")
        object.__setattr__(self, "kappa", _frozen_array(arr))

    @property
    def num_classes(self) -> int:
        return self.kappa.size


@dataclass(frozen=True)
class UncertaintyMap:
    """Pixel-wise uncertainty in [0, 1]; values is (H, W)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValidationError(f"uncertainty map must be (H, W), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("uncertainty map contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("uncertainty values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen_array(arr))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _validate_simplex(params: DirichletParams, p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != params.num_classes:
        raise ValidationError(
            f"probability vector has {p.size} entries, expected {params.num_classes}"
        )
    if not np.all(np.isfinite(p)) or np.any(p < 0.0):
        raise ValidationError("probability vector must be non-negative and finite")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"probability vector sums to {p.sum()!r}, not 1")
    return p


def dirichlet_pdf(params: DirichletParams, p) -> float:
    """Dirichlet density at a point of the probability simplex.

    Evaluated in log space and exponentiated. On the simplex boundary
    (some p_k = 0) the density is 0 when kappa_k > 1, the factor is 1
    when kappa_k = 1, and the result is +inf when kappa_k < 1 (the
    distinguished overflow value).
    """
    p = _validate_simplex(params, p)
    kappa = params.kappa
    zero = p == 0.0
    if np.any(zero & (kappa < 1.0)):
        return math.inf
    log_norm = math.lgamma(kappa.sum()) - sum(math.lgamma(k) for k in kappa)
    active = ~zero & (kappa != 1.0)
    if np.any(zero & (kappa > 1.0)):
        return 0.0
    log_terms = ((kappa[active] - 1.0) * np.log(p[active])).sum()
    return float(math.exp(log_norm + log_terms))


def dirichlet_pdf_batch(params: DirichletParams, P: np.ndarray) -> np.ndarray:
    """Vectorized dirichlet_pdf over rows of P (same boundary rules)."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[1] != params.num_classes:
        raise ValidationError("P must be (n, K) with K matching the parameters")
    kappa = params.kappa
    log_norm = math.lgamma(kappa.sum()) - sum(math.lgamma(k) for k in kappa)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = (kappa - 1.0)[None, :] * np.log(P)
    # kappa == 1 contributes factor 1 even at p == 0
    logs[:, kappa == 1.0] = 0.0
    out = np.exp(log_norm + logs.sum(axis=1))
    inf_rows = ((P == 0.0) & (kappa < 1.0)[None, :]).any(axis=1)
    out[inf_rows] = np.inf
    zero_rows = ((P == 0.0) & (kappa > 1.0)[None, :]).any(axis=1) & ~inf_rows
    out[zero_rows] = 0.0
    return out


def dirichlet_uncertainty(params: DirichletParams) -> float:
    """Evidential uncertainty K / sum(kappa); scale-inverse in kappa."""
    return params.num_classes / float(params.kappa.sum())


def mean_uncertainty(umap: UncertaintyMap, sample_id: str = "") -> ScoreRecord:
    """Aggregate a pixel-wise map into one score.

    Returns the negated mean so the module-wide orientation (larger
    score = more in-distribution) holds.
    """
    mean = float(umap.values.mean())
    return ScoreRecord(id=sample_id, score=-mean, method="mean_uncertainty")


def load_uncertainty_map(path) -> UncertaintyMap:
    """Read a map from a 16-bit grayscale PNG (value/65535) or a
    single-channel feature-map container."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(6)
    if magic == FMAP_MAGIC:
        fm = load_feature_map(path)
        if fm.channels != 1:
            raise FormatError(
                f"{path}: uncertainty tensor must have 1 channel, got {fm.channels}"
            )
        values = fm.data[0]
        if values.min() < 0.0 or values.max() > 1.0:
            raise FormatError(f"{path}: uncertainty values must lie in [0, 1]")
        return UncertaintyMap(values=values)
    arr = read_png(path)
    if arr.ndim != 2 or arr.dtype != np.uint16:
        raise FormatError(f"{path}: expected a 16-bit single-channel PNG")
    return UncertaintyMap(values=arr.astype(float) / 65535.0)
