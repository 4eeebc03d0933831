"""Shared domain types: grids, split complex signals, measurement models and
tracker configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class GridGeometry:
    """A regular 1-D or 2-D grid with row-major linear indexing.

    Parameters
    ----------
    dims : tuple of int
        Axis lengths, one or two entries.
    spacing : tuple of float, optional
        Physical spacing per axis; defaults to 1.0 on every axis.
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        if len(dims) not in (1, 2):
            raise ValueError(f"grid must be 1-D or 2-D, got dims={dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"axis lengths must be positive, got {dims}")
        spacing = tuple(float(s) for s in np.atleast_1d(self.spacing)) if len(self.spacing) else (1.0,) * len(dims)
        if len(spacing) != len(dims):
            raise ValueError("spacing must have one entry per axis")
        if any(not s > 0 for s in spacing):
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def coordinate(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise IndexError(f"index {i} out of range for grid of size {self.size}")
        idx = np.unravel_index(int(i), self.dims)
        return np.array([k * h for k, h in zip(idx, self.spacing)], dtype=float)

    def index(self, coord: Sequence[float]) -> int:
        """Inverse of :meth:`coordinate` for points lying on the grid."""
        coord = np.atleast_1d(np.asarray(coord, dtype=float))
        idx = tuple(int(round(c / h)) for c, h in zip(coord, self.spacing))
        if any(not 0 <= k < d for k, d in zip(idx, self.dims)):
            raise IndexError(f"coordinate {tuple(coord)} lies outside the grid")
        return int(np.ravel_multi_index(idx, self.dims))

    def coordinates(self) -> np.ndarray:
        """All cell coordinates as an (N, D) array in linear-index order."""
        axes = [np.arange(d) * h for d, h in zip(self.dims, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def coordinate(grid: GridGeometry, i: int) -> np.ndarray:
    return grid.coordinate(i)


def as_nonneg(values, name="signal") -> np.ndarray:
    """Validate and return a nonnegative real vector."""
    x = np.asarray(values, dtype=float).ravel()
    if np.any(x < 0):
        raise ValueError(f"{name} must be nonnegative (min={x.min():.3g})")
    return x


@dataclass(frozen=True)
class NonnegSignal:
    """A nonnegative vector, optionally tied to the grid it lives on."""

    values: np.ndarray
    grid: GridGeometry | None = None

    def __post_init__(self):
        x = as_nonneg(self.values)
        if self.grid is not None and x.size != self.grid.size:
            raise ValueError("signal length does not match the grid")
        object.__setattr__(self, "values", x)

    def mass(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class ComplexSignal:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex).ravel())

    def split(self) -> "ComplexSplit":
        return canonical_split(self.values)


class ComplexSplit(NamedTuple):
    """Four nonnegative parts of a complex vector."""

    re_pos: np.ndarray
    re_neg: np.ndarray
    im_pos: np.ndarray
    im_neg: np.ndarray

    def recompose(self) -> np.ndarray:
        return (self.re_pos - self.re_neg) + 1j * (self.im_pos - self.im_neg)

    def stacked(self) -> np.ndarray:
        return np.concatenate(self)

    @classmethod
    def from_stacked(cls, zp) -> "ComplexSplit":
        zp = np.asarray(zp, dtype=float)
        if zp.size % 4:
            raise ValueError("stacked split length must be a multiple of 4")
        return cls(*np.split(zp, 4))

    def cancel_overlap(self) -> "ComplexSplit":
        """Remove the common part of each positive/negative pair."""
        r = np.minimum(self.re_pos, self.re_neg)
        m = np.minimum(self.im_pos, self.im_neg)
        return ComplexSplit(self.re_pos - r, self.re_neg - r, self.im_pos - m, self.im_neg - m)


def canonical_split(z) -> ComplexSplit:
    z = np.asarray(z, dtype=complex).ravel()
    re, im = z.real, z.imag
    return ComplexSplit(np.maximum(re, 0.0), -np.minimum(re, 0.0), np.maximum(im, 0.0), -np.minimum(im, 0.0))


def l1_magnitude_proxy(split: ComplexSplit) -> np.ndarray:
    """Per-element magnitude proxy Re+ + Re- + Im+ + Im-.

    For a disjoint split this lies between |z| and sqrt(2)|z|.
    """
    return split.re_pos + split.re_neg + split.im_pos + split.im_neg


def realify_operator(A) -> np.ndarray:
    """Complex operator [A, -A, iA, -iA] acting on a stacked split."""
    A = np.asarray(A)
    return np.hstack([A, -A, 1j * A, -1j * A])


def real_stack(B, y=None):
    """Stack real and imaginary parts so that ||y - Bv||^2 becomes a real
    least-squares term. Purely real inputs pass through unchanged."""
    B = np.asarray(B)
    if not np.iscomplexobj(B) and (y is None or not np.iscomplexobj(y)):
        return (B.astype(float), None if y is None else np.asarray(y, dtype=float))
    B = B.astype(complex)
    H = np.vstack([B.real, B.imag])
    if y is None:
        return H, None
    y = np.asarray(y, dtype=complex)
    return H, np.concatenate([y.real, y.imag])


@dataclass(frozen=True)
class MeasurementModel:
    matrix: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix))
        if A.shape[0] < 1:
            raise ValueError("measurement matrix needs at least one row")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        object.__setattr__(self, "matrix", A)

    @property
    def shape(self):
        return self.matrix.shape

    def realified(self) -> np.ndarray:
        return realify_operator(self.matrix)


@dataclass(frozen=True)
class TrackerConfig:
    """Regularization weights and solver settings shared by all trackers.

    ``mu=None`` resolves to ``0.1 * lam``.
    """

    lam: float = 0.1
    gamma: float = 0.1
    mu: float | None = None
    xi: float = 0.1
    beta: float = 1.0
    eta: float = 0.1
    q: int = 1
    rwl1_iters: int = 3
    nonneg: bool = False
    tol: float = 1e-6
    max_iter: int = 50_000
    method: str = "conic"
    support_tol: float = 1e-6
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0 or (self.mu is not None and self.mu < 0):
            raise ValueError("lam, gamma and mu must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.rwl1_iters < 1:
            raise ValueError("rwl1_iters must be at least 1")

    @property
    def mu_value(self) -> float:
        return 0.1 * self.lam if self.mu is None else self.mu

    def with_(self, **changes) -> "TrackerConfig":
        return replace(self, **changes)
