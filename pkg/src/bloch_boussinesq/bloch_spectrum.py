"""Bloch operator, band eigenpairs and first-band projection on the unit cell.

The cell operator for Bloch number ``l`` is

    L_l = -(d + il)(a (d + il) .) + (d + il)^2 (b (d + il)^2 .)

discretized by Fourier-Galerkin truncation.  On the cell mode basis
``exp(i j x)`` its matrix has entries

    (j + l)(j' + l) a_{j-j'} + (j + l)^2 (j' + l)^2 b_{j-j'}

where ``a_m``, ``b_m`` are the Fourier coefficients of the media.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateBranch, GapViolation, NonZeroMean
from .spectral_core import BlochField

__all__ = [
    "PeriodicCoefficients",
    "CellFunction",
    "BlochOperatorMatrix",
    "BlochBand",
    "assemble_bloch_matrix",
    "bloch_matrix_on_modes",
    "band_eigenpairs",
    "dispersion_curve",
    "cell_solve_L0",
    "project_first_band",
    "GAP_TOL",
]

GAP_TOL = 1e-3
DEGENERACY_TOL = 1e-8
MEAN_TOL = 1e-10


def _as_centered(coefs: Sequence[complex], size: int) -> np.ndarray:
    """Pad a centered coefficient array (modes -m..m) to modes -size..size."""
    coefs = np.asarray(coefs, dtype=complex)
    m = (len(coefs) - 1) // 2
    out = np.zeros(2 * size + 1, dtype=complex)
    out[size - m:size + m + 1] = coefs
    return out


def _cosine_to_centered(series: Sequence[float]) -> np.ndarray:
    """f0 + sum_k f_k cos(kx)  ->  centered complex coefficients."""
    series = np.atleast_1d(np.asarray(series, dtype=float))
    m = len(series) - 1
    out = np.zeros(2 * m + 1, dtype=complex)
    out[m] = series[0]
    out[m + 1:] = series[1:] / 2.0
    out[:m] = series[1:][::-1] / 2.0
    return out


@dataclass(frozen=True)
class PeriodicCoefficients:
    """The 2*pi-periodic media a, b, c as centered Fourier coefficients.

    Each array holds modes ``-max_mode..max_mode``.  Construction checks that
    the functions are real and that ``a`` and ``b`` are bounded below by a
    positive constant on a dense grid.
    """

    a_hat: np.ndarray
    b_hat: np.ndarray
    c_hat: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        size = max((len(np.atleast_1d(v)) - 1) // 2 for v in (self.a_hat, self.b_hat, self.c_hat))
        for attr in ("a_hat", "b_hat", "c_hat"):
            arr = np.atleast_1d(np.asarray(getattr(self, attr), dtype=complex))
            if len(arr) % 2 == 0:
                raise ValueError(f"{attr} must have odd length (modes -m..m)")
            arr = _as_centered(arr, size)
            if np.max(np.abs(arr - np.conj(arr[::-1]))) > 1e-12 * max(1.0, np.max(np.abs(arr))):
                raise ValueError(f"{attr} does not describe a real function")
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if self.min_a <= 0.0:
            raise ValueError(f"a must be positive, min over the cell is {self.min_a:.3g}")
        if self.min_b <= 0.0:
            raise ValueError(f"b must be positive, min over the cell is {self.min_b:.3g}")

    # constructors ---------------------------------------------------------
    @classmethod
    def from_cosine_series(cls, a: Sequence[float], b: Sequence[float] = (1.0,),
                           c: Sequence[float] = (1.0,), name: str = "custom"):
        """Build from cosine series ``f(x) = f0 + sum_k f_k cos(k x)``."""
        return cls(_cosine_to_centered(a), _cosine_to_centered(b), _cosine_to_centered(c), name)

    @classmethod
    def constant(cls, a: float = 1.0, b: float = 1.0, c: float = 1.0):
        return cls.from_cosine_series([a], [b], [c], name="constant")

    # metadata ---------------------------------------------------------------
    @property
    def max_mode(self) -> int:
        return (len(self.a_hat) - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.max_mode, self.max_mode + 1)

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values of (a, b, c) at the points ``x``."""
        phase = np.exp(1j * np.multiply.outer(np.asarray(x, dtype=float), self.modes))
        return tuple((phase @ arr).real for arr in (self.a_hat, self.b_hat, self.c_hat))

    @cached_property
    def _dense_values(self):
        return self.evaluate(np.linspace(0.0, 2 * np.pi, 1024, endpoint=False))

    @property
    def min_a(self) -> float:
        return float(self._dense_values[0].min())

    @property
    def min_b(self) -> float:
        return float(self._dense_values[1].min())

    @property
    def max_a(self) -> float:
        return float(self._dense_values[0].max())

    @property
    def max_b(self) -> float:
        return float(self._dense_values[1].max())

    @property
    def even_symmetric(self) -> bool:
        """True when a, b, c are even in x (real Fourier coefficients)."""
        return all(np.max(np.abs(arr.imag)) < 1e-12 for arr in (self.a_hat, self.b_hat, self.c_hat))

    @property
    def is_constant(self) -> bool:
        m = self.max_mode
        return all(np.max(np.abs(np.delete(arr, m)), initial=0.0) < 1e-14
                   for arr in (self.a_hat, self.b_hat, self.c_hat))

    def fourier(self, which: str, m: np.ndarray) -> np.ndarray:
        """Coefficients of ``which`` in {"a", "b", "c"} at integer modes ``m`` (zero outside)."""
        arr = {"a": self.a_hat, "b": self.b_hat, "c": self.c_hat}[which]
        m = np.asarray(m)
        idx = m + self.max_mode
        inside = (idx >= 0) & (idx < len(arr))
        out = np.zeros(m.shape, dtype=complex)
        out[inside] = arr[idx[inside]]
        return out

    def digest(self) -> str:
        """Stable hash of the coefficient data, used as a cache key."""
        h = hashlib.sha256()
        for arr in (self.a_hat, self.b_hat, self.c_hat):
            h.update(np.round(arr, 14).astype(np.complex128).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"name": self.name,
                **{k: [[float(z.real), float(z.imag)] for z in getattr(self, k + "_hat")]
                   for k in ("a", "b", "c")}}

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicCoefficients":
        arrs = [np.array([complex(r, i) for r, i in data[k]]) for k in ("a", "b", "c")]
        return cls(*arrs, name=data.get("name", "custom"))


@dataclass(frozen=True)
class CellFunction:
    """A 2*pi-periodic cell function stored by centered Fourier coefficients."""

    coeffs: np.ndarray

    @property
    def max_mode(self) -> int:
        return (len(self.coeffs) - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.max_mode, self.max_mode + 1)

    @property
    def mean(self) -> complex:
        return complex(self.coeffs[self.max_mode])

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        vals = np.exp(1j * np.multiply.outer(np.asarray(x, dtype=float), self.modes)) @ self.coeffs
        return vals.real if self.is_real else vals

    @property
    def is_real(self) -> bool:
        return bool(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1])), initial=0.0)
                    <= 1e-13 * max(1.0, np.max(np.abs(self.coeffs), initial=0.0)))

    def derivative(self, order: int = 1) -> "CellFunction":
        return CellFunction((1j * self.modes) ** order * self.coeffs)

    def norm(self) -> float:
        """L^2(0, 2 pi) norm."""
        return float(np.sqrt(2 * np.pi * np.sum(np.abs(self.coeffs) ** 2)))

    @classmethod
    def from_samples(cls, values: np.ndarray, max_mode: int) -> "CellFunction":
        """Interpolate samples on the uniform cell grid and keep modes up to ``max_mode``."""
        n = len(values)
        spec = np.fft.fft(values) / n
        m = np.arange(-max_mode, max_mode + 1)
        return cls(spec[m % n])


@dataclass(frozen=True)
class BlochOperatorMatrix:
    """Galerkin matrix of L_l on the cell modes ``-M..M``."""

    bloch_number: float
    cell_cutoff: int
    entries: np.ndarray

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.cell_cutoff, self.cell_cutoff + 1)


def bloch_matrix_on_modes(coeffs: PeriodicCoefficients, l: float, modes: np.ndarray) -> np.ndarray:
    """Matrix of L_l on an arbitrary set of integer cell modes."""
    modes = np.asarray(modes)
    kl = modes + l
    diff = np.subtract.outer(modes, modes)
    a_t = coeffs.fourier("a", diff)
    b_t = coeffs.fourier("b", diff)
    outer1 = np.outer(kl, kl)
    mat = outer1 * a_t + outer1 ** 2 * b_t
    # enforce exact Hermitian symmetry against rounding in the products
    return 0.5 * (mat + mat.conj().T)


def assemble_bloch_matrix(coeffs: PeriodicCoefficients, l: float, M: int | None = None) -> BlochOperatorMatrix:
    """Assemble the Galerkin matrix of L_l on the modes ``-M..M``.

    Parameters
    ----------
    coeffs : PeriodicCoefficients
        The media.
    l : float
        Bloch number, ``|l| <= 1/2``.
    M : int, optional
        Cell cutoff; defaults to ``max(16, 4 * coeffs.max_mode)``.
    """
    if abs(l) > 0.5 + 1e-14:
        raise ValueError(f"Bloch number {l} outside [-1/2, 1/2]")
    if M is None:
        M = max(16, 4 * coeffs.max_mode)
    if M < 2 * coeffs.max_mode:
        raise ValueError(f"M={M} too small for coefficient bandwidth {coeffs.max_mode}")
    modes = np.arange(-M, M + 1)
    return BlochOperatorMatrix(float(l), int(M), bloch_matrix_on_modes(coeffs, l, modes))


def _fix_phase(vec: np.ndarray, mean_index: int) -> np.ndarray:
    """Rotate so the cell mean is real positive, or the largest entry if the mean vanishes."""
    pivot = vec[mean_index]
    if abs(pivot) < 1e-8:
        pivot = vec[np.argmax(np.abs(vec))]
    return vec * (abs(pivot) / pivot)


def band_eigenpairs(matrix: BlochOperatorMatrix, n_max: int,
                    require_gap: bool = False) -> list[tuple[float, np.ndarray]]:
    """Lowest ``n_max`` eigenpairs of a Bloch matrix, ascending.

    Eigenvectors are orthonormal and phase-fixed so that the cell mean is real
    and positive.  Eigenvalues are refined by the Rayleigh quotient, which is
    accurate relative to the eigenvalue itself rather than to ``||L_l||``.

    Raises
    ------
    DegenerateBranch
        If ``require_gap`` is set and ``lambda_2 - lambda_1 < 1e-8``.
    """
    size = matrix.entries.shape[0]
    if not 1 <= n_max <= size:
        raise ValueError(f"n_max must lie in [1, {size}]")
    vals, vecs = sla.eigh(matrix.entries, subset_by_index=[0, n_max - 1])
    out = []
    mean_index = matrix.cell_cutoff
    for n in range(n_max):
        v = _fix_phase(vecs[:, n], mean_index)
        lam = float(np.real(np.vdot(v, matrix.entries @ v)))
        out.append((lam, v))
    if require_gap and n_max >= 2 and out[1][0] - out[0][0] < DEGENERACY_TOL:
        raise DegenerateBranch(f"lambda_2 - lambda_1 = {out[1][0] - out[0][0]:.3e} "
                               f"at l = {matrix.bloch_number}")
    return out


@dataclass(frozen=True)
class BlochBand:
    """Sampled band data.

    ``eigenvalues[i, n]`` is lambda_{n+1}(l_i); ``eigenfunctions[i]`` holds the
    centered cell coefficients of the selected band's eigenfunction at l_i,
    scaled to unit cell mean for the first band.
    """

    band: int
    coeffs: PeriodicCoefficients
    cell_cutoff: int
    l: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    gap_margin: float
    gap_tol: float = GAP_TOL
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.cell_cutoff, self.cell_cutoff + 1)

    def lam(self, n: int | None = None) -> np.ndarray:
        return self.eigenvalues[:, (self.band if n is None else n) - 1]

    def eigenpair(self, l: float, modes: np.ndarray | None = None) -> tuple[float, CellFunction]:
        """lambda_1(l) and w_1(l, .) with unit cell mean, computed on demand."""
        key = (float(l), None if modes is None else tuple(modes))
        if key not in self._cache:
            mat = assemble_bloch_matrix(self.coeffs, l, self.cell_cutoff)
            lam, vec = band_eigenpairs(mat, 1)[0]
            self._cache[key] = (lam, CellFunction(vec / vec[self.cell_cutoff]))
        return self._cache[key]

    def to_csv(self, path: str | Path) -> Path:
        """Write columns ``l, lambda_1, ..., lambda_n``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["l"] + [f"lambda_{n + 1}" for n in range(self.eigenvalues.shape[1])])
            for li, row in zip(self.l, self.eigenvalues):
                writer.writerow([repr(float(li))] + [repr(float(v)) for v in row])
        return path


def _gap_margin(l: np.ndarray, lam1: np.ndarray, lam2: np.ndarray, tol: float) -> float:
    order = np.argsort(np.abs(l), kind="stable")
    margin = 0.0
    for i in order:
        if lam2[i] - lam1[i] <= tol:
            break
        margin = abs(float(l[i]))
    return margin


def dispersion_curve(coeffs: PeriodicCoefficients, n: int, l_samples: Sequence[float],
                     M: int | None = None, gap_tol: float = GAP_TOL) -> BlochBand:
    """Sample the first ``max(n, 2)`` bands at the given Bloch numbers.

    The gap margin is the largest sampled ``|l|`` such that every sample with
    smaller ``|l|`` has ``lambda_2 - lambda_1 > gap_tol``.
    """
    l_arr = np.asarray(l_samples, dtype=float)
    if np.any(np.abs(l_arr) > 0.5 + 1e-14):
        raise ValueError("Bloch samples must lie in (-1/2, 1/2]")
    if M is None:
        M = max(16, 4 * coeffs.max_mode)
    nb = max(n, 2)
    vals = np.zeros((len(l_arr), nb))
    funcs = np.zeros((len(l_arr), 2 * M + 1), dtype=complex)
    for i, li in enumerate(l_arr):
        pairs = band_eigenpairs(assemble_bloch_matrix(coeffs, li, M), nb)
        vals[i] = [p[0] for p in pairs]
        vec = pairs[n - 1][1]
        # the cell mean vanishes only at band crossings, where no gauge applies
        funcs[i] = vec / vec[M] if n == 1 and abs(vec[M]) > 1e-12 else vec
    margin = _gap_margin(l_arr, vals[:, 0], vals[:, 1], gap_tol)
    return BlochBand(n, coeffs, int(M), l_arr, vals, funcs, margin, gap_tol)


def _l0_system(coeffs: PeriodicCoefficients, M: int):
    modes = np.arange(-M, M + 1)
    mat = bloch_matrix_on_modes(coeffs, 0.0, modes)
    keep = modes != 0
    return modes, keep, mat[np.ix_(keep, keep)]


def cell_solve_L0(coeffs: PeriodicCoefficients, rhs: CellFunction, M: int | None = None) -> CellFunction:
    """Zero-mean solution of ``L_0 u = rhs``.

    Raises
    ------
    NonZeroMean
        If the cell mean of ``rhs`` exceeds ``1e-10`` times its norm.
    """
    if M is None:
        M = max(16, 4 * coeffs.max_mode, rhs.max_mode)
    scale = np.sqrt(np.sum(np.abs(rhs.coeffs) ** 2))
    if abs(rhs.mean) > MEAN_TOL * max(scale, 1e-300):
        raise NonZeroMean(f"rhs cell mean {abs(rhs.mean):.3e} is not zero")
    modes, keep, sub = _l0_system(coeffs, M)
    full = np.zeros(2 * M + 1, dtype=complex)
    r = rhs.max_mode
    lo = max(-M, -r)
    hi = min(M, r)
    full[lo + M:hi + M + 1] = rhs.coeffs[lo + r:hi + r + 1]
    sol = np.zeros_like(full)
    if scale > 0:
        sol[keep] = sla.solve(sub, full[keep], assume_a="her")
    if rhs.is_real:
        sol = 0.5 * (sol + np.conj(sol[::-1]))
    return CellFunction(sol)


def project_first_band(b: BlochField, band: BlochBand, delta: float):
    """Split a Bloch field into its first-band part and the remainder.

    Parameters
    ----------
    b : BlochField
        Field to project.
    band : BlochBand
        First band; its media and cutoff define w_1.
    delta : float
        Half-width of the Bloch interval on which the band part is kept.

    Returns
    -------
    amplitude : ndarray
        ``<w_1, u~(l)> / <w_1, w_1>`` for ``|l| <= delta``, zero elsewhere.
    remainder : BlochField
        ``b`` minus the band part; orthogonal to w_1 for ``|l| <= delta``.
    """
    if delta > band.gap_margin + 1e-14:
        raise GapViolation(f"delta={delta} exceeds gap margin {band.gap_margin}")
    grid = b.grid
    p = grid.points_per_cell
    amp = np.zeros(grid.cells, dtype=complex)
    rem = b.coeffs.copy()
    for r, l in enumerate(grid.bloch_numbers):
        if abs(l) > delta + 1e-14:
            continue
        _, w1 = band.eigenpair(float(l))
        w_vec = np.zeros(p, dtype=complex)
        sel = np.abs(w1.modes) < p // 2
        w_vec[w1.modes[sel] % p] = w1.coeffs[sel]
        coef = np.vdot(w_vec, b.coeffs[r]) / np.vdot(w_vec, w_vec)
        amp[r] = coef
        rem[r] = b.coeffs[r] - coef * w_vec
    return amp, BlochField(grid, rem, real=b.real)
