"""Periodic spectral grid primitives.

The big torus has ``cells`` copies of the 2*pi unit cell, each sampled with
``points_per_cell`` points.  Features:

* spectral derivatives of any order and the mean-free antiderivative
* Sobolev norms with the (1 + k^2)^s weight
* products with 2/3-rule dealiasing
* the discrete Bloch transform, its inverse and the Bloch-space convolution

The Bloch numbers are the ``cells`` values ``q / cells`` folded into
(-1/2, 1/2], which makes the Bloch transform a pure re-indexing of the
length-N discrete Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import NonZeroMean

__all__ = [
    "SpectralGrid",
    "GridField",
    "BlochField",
    "spectral_derivative",
    "antiderivative",
    "sobolev_norm",
    "dealiased_product",
    "bloch_forward",
    "bloch_inverse",
    "bloch_convolve",
]

MEAN_TOL = 1e-10


def _first_bloch_index(cells: int) -> int:
    """Smallest integer q with q / cells in (-1/2, 1/2]."""
    return -((cells - 1) // 2) if cells % 2 else -(cells // 2) + 1


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform grid on the torus [0, 2*pi*cells).

    Parameters
    ----------
    cells : int
        Number of 2*pi cells in the torus.
    points_per_cell : int
        Even number of samples per cell.
    """

    cells: int
    points_per_cell: int

    def __post_init__(self):
        if int(self.cells) != self.cells or self.cells < 1:
            raise ValueError(f"cells must be a positive integer, got {self.cells}")
        if (int(self.points_per_cell) != self.points_per_cell or self.points_per_cell < 2
                or self.points_per_cell % 2):
            raise ValueError(f"points_per_cell must be a positive even integer, "
                             f"got {self.points_per_cell}")

    # geometry -----------------------------------------------------------
    @property
    def n(self) -> int:
        return self.cells * self.points_per_cell

    @property
    def h(self) -> float:
        return 2.0 * np.pi / self.points_per_cell

    @property
    def length(self) -> float:
        return 2.0 * np.pi * self.cells

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers in numpy FFT order, spaced by 1/cells."""
        return sfft.fftfreq(self.n, d=1.0 / self.n) / self.cells

    @cached_property
    def k_r(self) -> np.ndarray:
        """Wavenumbers of the half spectrum used for real fields."""
        return sfft.rfftfreq(self.n, d=1.0 / self.n) / self.cells

    @cached_property
    def keep(self) -> np.ndarray:
        """2/3-rule mask on the full spectrum."""
        idx = np.abs(sfft.fftfreq(self.n, d=1.0 / self.n))
        return idx <= self.n // 3

    @cached_property
    def keep_r(self) -> np.ndarray:
        idx = sfft.rfftfreq(self.n, d=1.0 / self.n)
        return idx <= self.n // 3

    @cached_property
    def bloch_numbers(self) -> np.ndarray:
        """The cells Bloch numbers in (-1/2, 1/2], ascending."""
        q0 = _first_bloch_index(self.cells)
        return (q0 + np.arange(self.cells)) / self.cells

    @cached_property
    def _bloch_index(self) -> tuple[np.ndarray, np.ndarray]:
        # map each numpy-ordered DFT index to (Bloch row, cell-mode column)
        m = sfft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        q0 = _first_bloch_index(self.cells)
        q = np.mod(m - q0, self.cells) + q0
        j = (m - q) // self.cells
        return q - q0, np.mod(j, self.points_per_cell)

    # array-level operators -----------------------------------------------
    def _symbol(self, k: np.ndarray, order: int) -> np.ndarray:
        sym = (1j * k) ** order
        if order % 2:
            # the Nyquist mode has no odd derivative on an even grid
            sym = sym.copy()
            sym[np.abs(np.abs(k) - self.points_per_cell / 2) < 1e-12] = 0.0
        return sym

    def diff(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral derivative along the last axis."""
        if order == 0:
            return np.array(values, copy=True)
        if np.isrealobj(values):
            spec = sfft.rfft(values, axis=-1) * self._symbol(self.k_r, order)
            return sfft.irfft(spec, n=self.n, axis=-1)
        spec = sfft.fft(values, axis=-1) * self._symbol(self.k, order)
        return sfft.ifft(spec, axis=-1)

    def antidiff(self, values: np.ndarray) -> np.ndarray:
        """Mean-free antiderivative; the caller checks the mean."""
        real = np.isrealobj(values)
        k = self.k_r if real else self.k
        spec = sfft.rfft(values, axis=-1) if real else sfft.fft(values, axis=-1)
        inv = np.zeros_like(k, dtype=complex)
        nz = k != 0
        inv[nz] = 1.0 / (1j * k[nz])
        inv[np.abs(np.abs(k) - self.points_per_cell / 2) < 1e-12] = 0.0
        spec = spec * inv
        return sfft.irfft(spec, n=self.n, axis=-1) if real else sfft.ifft(spec, axis=-1)

    def truncate(self, values: np.ndarray) -> np.ndarray:
        """Zero every mode outside the 2/3-rule band."""
        if np.isrealobj(values):
            return sfft.irfft(sfft.rfft(values, axis=-1) * self.keep_r, n=self.n, axis=-1)
        return sfft.ifft(sfft.fft(values, axis=-1) * self.keep, axis=-1)

    def product(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Dealiased pointwise product."""
        return self.truncate(self.truncate(f) * self.truncate(g))

    def norm(self, values: np.ndarray, s: float = 0.0) -> float:
        """Sobolev H^s norm on the torus."""
        spec = sfft.fft(values) / self.n
        weight = (1.0 + self.k ** 2) ** s
        return float(np.sqrt(self.length * np.sum(weight * np.abs(spec) ** 2)))

    def mean(self, values: np.ndarray) -> float:
        return float(np.mean(values).real) if np.isrealobj(values) else complex(np.mean(values))

    def rms(self, values: np.ndarray) -> float:
        return float(np.sqrt(np.mean(np.abs(values) ** 2)))


@dataclass(frozen=True)
class GridField:
    """Samples of a function on a :class:`SpectralGrid`."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def is_real(self) -> bool:
        return np.isrealobj(self.values)

    @classmethod
    def from_function(cls, grid: SpectralGrid, fn) -> "GridField":
        return cls(grid, np.asarray(fn(grid.x)))


@dataclass(frozen=True)
class BlochField:
    """Discrete Bloch transform of a grid field.

    ``coeffs[r, j]`` is the coefficient of the cell mode ``exp(i j x)`` of
    ``u~(l_r, .)`` with ``l_r = grid.bloch_numbers[r]``; the cell-mode axis is
    in numpy FFT order.  The scaling makes the transform an isometry:
    ``||u||^2 = sum_r ||u~(l_r, .)||^2_{L^2(0, 2 pi)} / cells``.
    """

    grid: SpectralGrid
    coeffs: np.ndarray
    real: bool = False

    def __post_init__(self):
        shape = (self.grid.cells, self.grid.points_per_cell)
        if np.shape(self.coeffs) != shape:
            raise ValueError(f"expected Bloch coefficients of shape {shape}")

    @property
    def bloch_numbers(self) -> np.ndarray:
        return self.grid.bloch_numbers

    @property
    def cell_modes(self) -> np.ndarray:
        p = self.grid.points_per_cell
        return sfft.fftfreq(p, d=1.0 / p)

    def cell_values(self) -> np.ndarray:
        """u~(l_r, x_p) on the cell grid, shape (cells, points_per_cell)."""
        return sfft.ifft(self.coeffs, axis=1) * self.grid.points_per_cell

    @classmethod
    def from_cell_values(cls, grid: SpectralGrid, values: np.ndarray,
                         real: bool = False) -> "BlochField":
        return cls(grid, sfft.fft(values, axis=1) / grid.points_per_cell, real)

    def cell_norms(self) -> np.ndarray:
        """L^2(0, 2 pi) norm of each u~(l_r, .)."""
        return np.sqrt(2.0 * np.pi * np.sum(np.abs(self.coeffs) ** 2, axis=1))


def spectral_derivative(f: GridField, order: int) -> GridField:
    """Spectral derivative of ``f`` of the given non-negative order."""
    if order < 0:
        raise ValueError("order must be non-negative")
    return GridField(f.grid, f.grid.diff(f.values, order))


def antiderivative(f: GridField) -> GridField:
    """Mean-free antiderivative, the inverse of d/dx on mean-free fields.

    Raises
    ------
    NonZeroMean
        If the mean of ``f`` exceeds ``1e-10`` times its rms value.
    """
    grid = f.grid
    mean = abs(np.mean(f.values))
    if mean > MEAN_TOL * grid.rms(f.values):
        raise NonZeroMean(f"mean {mean:.3e} exceeds tolerance; project first")
    return GridField(grid, grid.antidiff(f.values))


def sobolev_norm(f: GridField, s: float) -> float:
    """H^s norm ``(L * sum |f_k|^2 (1 + k^2)^s)^(1/2)`` over the torus."""
    if s < 0:
        raise ValueError("s must be non-negative")
    return f.grid.norm(f.values, s)


def dealiased_product(f: GridField, g: GridField) -> GridField:
    """Pointwise product with 2/3-rule truncation of inputs and output."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return GridField(f.grid, f.grid.product(f.values, g.values))


def bloch_forward(f: GridField) -> BlochField:
    """Discrete Bloch transform (exact re-indexing of the DFT)."""
    grid = f.grid
    rows, cols = grid._bloch_index
    spec = sfft.fft(f.values) / grid.n
    coeffs = np.zeros((grid.cells, grid.points_per_cell), dtype=complex)
    coeffs[rows, cols] = grid.cells * spec
    return BlochField(grid, coeffs, real=f.is_real)


def bloch_inverse(b: BlochField) -> GridField:
    """Inverse discrete Bloch transform."""
    grid = b.grid
    rows, cols = grid._bloch_index
    spec = b.coeffs[rows, cols] / grid.cells
    values = sfft.ifft(spec * grid.n)
    return GridField(grid, values.real if b.real else values)


def _continued(values: np.ndarray, grid: SpectralGrid, d: int) -> np.ndarray:
    """Cell values of u~ at Bloch index offset d (any integer).

    Uses the continuation u~(l + n, x) = u~(l, x) exp(-i n x).
    """
    q0 = _first_bloch_index(grid.cells)
    wrapped = (d - q0) % grid.cells + q0
    n_shift = (d - wrapped) // grid.cells
    row = wrapped - q0
    if n_shift == 0:
        return values[row]
    xc = np.arange(grid.points_per_cell) * grid.h
    return values[row] * np.exp(-1j * n_shift * xc)


def bloch_convolve(b1: BlochField, b2: BlochField) -> BlochField:
    """Bloch-space convolution, the transform of the pointwise product.

    Computes ``(1/cells) * sum_m u~(l - m, x) v~(m, x)`` on the cell grid,
    continuing ``u~`` past the Brillouin zone where ``|l - m| > 1/2``.
    """
    if b1.grid != b2.grid:
        raise ValueError("fields live on different grids")
    grid = b1.grid
    v1 = b1.cell_values()
    v2 = b2.cell_values()
    q0 = _first_bloch_index(grid.cells)
    q = q0 + np.arange(grid.cells)
    out = np.zeros_like(v1)
    for r2, q2 in enumerate(q):
        for r, q1 in enumerate(q):
            out[r] += _continued(v1, grid, q1 - q2) * v2[r2]
    out /= grid.cells
    return BlochField.from_cell_values(grid, out, real=b1.real and b2.real)
