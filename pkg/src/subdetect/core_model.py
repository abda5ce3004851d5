"""Problem shapes, planted means and seeded sampling of observations.

Every observation is ``Y = X + E`` where ``E`` has i.i.d. standard normal
entries and ``X`` is either zero (the null) or equal to ``mu`` on a
product support of ``s1`` rows and ``s2`` columns.

Random streams come from numpy's counter-based Philox bit generator keyed
through :class:`numpy.random.SeedSequence`.  Replicate ``r`` of a root seed
uses the spawn key ``(r,)``, so any replicate can be regenerated on its own
and in any order.  Gaussian variates are produced by numpy's ziggurat
sampler (``Generator.standard_normal``), which is fixed for a given numpy
release.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ShapeError",
    "ProblemShape",
    "PlantedMean",
    "Observation",
    "SeedSpec",
    "derive_seed",
    "generator_for",
    "make_planted_mean",
    "sample_random_support",
    "sample_observation",
]

_UINT64_MAX = 2**64 - 1


class ShapeError(ValueError):
    """Raised for invalid dimensions, sparsities or supports."""


@dataclass(frozen=True)
class ProblemShape:
    """Matrix dimensions ``(d1, d2)`` and block sparsities ``(s1, s2)``."""

    d1: int
    d2: int
    s1: int
    s2: int

    def __post_init__(self):
        for name in ("d1", "d2", "s1", "s2"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ShapeError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.d1 < 1 or self.d2 < 1:
            raise ShapeError(f"dimensions must be positive, got ({self.d1}, {self.d2})")
        if not 1 <= self.s1 <= self.d1:
            raise ShapeError(f"s1={self.s1} must lie in [1, d1={self.d1}]")
        if not 1 <= self.s2 <= self.d2:
            raise ShapeError(f"s2={self.s2} must lie in [1, d2={self.d2}]")

    def transpose(self) -> "ProblemShape":
        return ProblemShape(self.d2, self.d1, self.s2, self.s1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.d1, self.d2, self.s1, self.s2)


def _check_support(indices, size: int, bound: int, label: str) -> tuple[int, ...]:
    support = tuple(int(i) for i in indices)
    if len(support) != size:
        raise ShapeError(f"{label} support has {len(support)} indices, expected {size}")
    if any(i < 0 or i >= bound for i in support):
        raise ShapeError(f"{label} support indices must lie in [0, {bound})")
    if any(a >= b for a, b in zip(support, support[1:])):
        raise ShapeError(f"{label} support must be strictly increasing")
    return support


@dataclass(frozen=True)
class PlantedMean:
    """Constant elevated block ``mu`` on ``row_support x col_support``."""

    shape: ProblemShape
    row_support: tuple[int, ...]
    col_support: tuple[int, ...]
    mu: float

    def matrix(self) -> np.ndarray:
        x = np.zeros((self.shape.d1, self.shape.d2))
        x[np.ix_(self.row_support, self.col_support)] = self.mu
        return x

    def transpose(self) -> "PlantedMean":
        return PlantedMean(self.shape.transpose(), self.col_support, self.row_support, self.mu)


def make_planted_mean(shape: ProblemShape, row_support, col_support, mu: float) -> PlantedMean:
    """Build a planted mean after validating supports and ``mu``.

    Supports may be given in any order; they are stored sorted.  Duplicates
    and out-of-range indices raise :class:`ShapeError`.
    """
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise ShapeError(f"mu must be finite and nonnegative, got {mu}")
    rows = _check_support(sorted(row_support), shape.s1, shape.d1, "row")
    cols = _check_support(sorted(col_support), shape.s2, shape.d2, "column")
    return PlantedMean(shape, rows, cols, mu)


@dataclass(frozen=True)
class SeedSpec:
    """Root seed plus replicate index; the pair fully determines a stream."""

    root_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.root_seed) <= _UINT64_MAX:
            raise ValueError("root_seed must be a 64-bit unsigned integer")
        if int(self.stream_index) < 0:
            raise ValueError("stream_index must be nonnegative")
        object.__setattr__(self, "root_seed", int(self.root_seed))
        object.__setattr__(self, "stream_index", int(self.stream_index))

    def with_index(self, index: int) -> "SeedSpec":
        return SeedSpec(self.root_seed, index)


def derive_seed(root_seed: int, *keys: int) -> int:
    """Child root seed for a labelled sub-experiment (pure function of inputs)."""
    seq = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def generator_for(seed: SeedSpec) -> np.random.Generator:
    seq = np.random.SeedSequence(seed.root_seed, spawn_key=(seed.stream_index,))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class Observation:
    """A sampled matrix with the mean it was drawn under and its seed."""

    shape: ProblemShape
    values: np.ndarray
    mean: PlantedMean | None = None
    seed: SeedSpec | None = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, order="C")
        if values.shape != (self.shape.d1, self.shape.d2):
            raise ShapeError(f"values have shape {values.shape}, expected {(self.shape.d1, self.shape.d2)}")
        if not np.all(np.isfinite(values)):
            raise ValueError("observation contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def is_null(self) -> bool:
        return self.mean is None


def sample_random_support(shape: ProblemShape, seed: SeedSpec) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Independent uniform row and column supports of sizes ``s1`` and ``s2``."""
    rng = generator_for(seed)
    rows = np.sort(rng.choice(shape.d1, size=shape.s1, replace=False))
    cols = np.sort(rng.choice(shape.d2, size=shape.s2, replace=False))
    return tuple(int(i) for i in rows), tuple(int(j) for j in cols)


def noise_matrix(d1: int, d2: int, seed: SeedSpec) -> np.ndarray:
    return generator_for(seed).standard_normal((d1, d2))


def sample_observation(mean: PlantedMean | ProblemShape, seed: SeedSpec) -> Observation:
    """Draw ``Y = X + E``.

    Parameters
    ----------
    mean : PlantedMean or ProblemShape
        A planted mean for the alternative, or a bare shape for the null.
    seed : SeedSpec
        Stream selector; equal seeds give bit-identical matrices.
    """
    if isinstance(mean, ProblemShape):
        shape, planted = mean, None
    else:
        shape, planted = mean.shape, mean
    values = noise_matrix(shape.d1, shape.d2, seed)
    if planted is not None and planted.mu != 0.0:
        values[np.ix_(planted.row_support, planted.col_support)] += planted.mu
    return Observation(shape, values, planted, seed)
