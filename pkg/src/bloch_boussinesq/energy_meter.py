"""Error energies for the scaled approximation error and their audits.

The operator ``B = (a + 2 c eps^alpha Psi) - d_x (b d_x)`` is positive for a
long-wave ``Psi`` of moderate size.  With ``A = B^(1/2)`` the error energy is

    E = 1/2 ( |R_t|^2 + |A^-1 d_x^-1 R_t|^2 + |R|^2 + |A d_x R|^2 ).

Only ``B`` itself and solves with ``B`` are needed to evaluate ``E``, so large
grids use a matrix-free conjugate-gradient path; the dense eigendecomposition
(and hence ``A`` explicitly) is kept for grids up to ``DENSE_LIMIT`` points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .bloch_spectrum import PeriodicCoefficients
from .errors import NonZeroMean, NotPositiveDefinite
from .spectral_core import GridField, SpectralGrid

__all__ = [
    "DENSE_LIMIT",
    "EnergyOperator",
    "ErrorState",
    "build_energy_operator",
    "error_energy",
    "hamiltonian",
    "homogeneous_energy",
    "energy_components",
    "GronwallReport",
    "gronwall_audit",
    "fit_drift_exponent",
    "relative_drift_rate",
]

DENSE_LIMIT = 4096
MEAN_TOL = 1e-10


def _require_mean_free(values: np.ndarray, name: str) -> None:
    scale = float(np.sqrt(np.mean(values ** 2)))
    if abs(float(np.mean(values))) > MEAN_TOL * max(scale, 1e-300):
        raise NonZeroMean(f"{name} has mean {np.mean(values):.3e} (rms {scale:.3e})")


@dataclass(frozen=True)
class ErrorState:
    """Scaled error ``R`` and its time derivative ``Rt`` on the big torus."""

    R: GridField
    Rt: GridField

    def __post_init__(self):
        if self.R.grid != self.Rt.grid:
            raise ValueError("R and Rt live on different grids")
        if not (self.R.is_real and self.Rt.is_real):
            raise ValueError("error fields must be real")

    @property
    def grid(self) -> SpectralGrid:
        return self.R.grid

    @property
    def mean_free(self) -> tuple[bool, bool]:
        out = []
        for f in (self.R.values, self.Rt.values):
            scale = float(np.sqrt(np.mean(f ** 2)))
            out.append(abs(float(np.mean(f))) <= MEAN_TOL * max(scale, 1e-300))
        return tuple(out)

    @classmethod
    def from_difference(cls, u: GridField, ut: GridField, psi: GridField, psi_t: GridField,
                        eps: float, alpha: int) -> "ErrorState":
        """``R = eps^{-(3+2 alpha)/2} (u - eps^alpha Psi)``; ``psi`` already carries ``eps^alpha``.

        The spatial mean of the difference is removed; it is conserved by the
        flow and set to zero by well-prepared data, so what remains is
        round-off.
        """
        scale = eps ** (-(3 + 2 * alpha) / 2)
        r = scale * (u.values - psi.values)
        rt = scale * (ut.values - psi_t.values)
        return cls(GridField(u.grid, r - r.mean()), GridField(u.grid, rt - rt.mean()))


class EnergyOperator:
    """``B = m(x) - d_x (b(x) d_x)`` with ``m = a + 2 c eps^alpha Psi`` at a frozen time.

    Parameters
    ----------
    grid : SpectralGrid
    multiplier : ndarray
        Samples of ``m``.
    stiffness : ndarray
        Samples of ``b``.
    dense : bool, optional
        Assemble the matrix and its eigendecomposition.  Defaults to
        ``grid.n <= DENSE_LIMIT``.
    """

    def __init__(self, grid: SpectralGrid, multiplier: np.ndarray, stiffness: np.ndarray,
                 dense: bool | None = None, rtol: float = 1e-12):
        self.grid = grid
        self.multiplier = np.asarray(multiplier, dtype=float)
        self.stiffness = np.asarray(stiffness, dtype=float)
        self.dense = grid.n <= DENSE_LIMIT if dense is None else bool(dense)
        if self.dense and grid.n > DENSE_LIMIT:
            raise ValueError(f"dense assembly is capped at {DENSE_LIMIT} points")
        self.rtol = rtol
        self._ik = 1j * grid.k_r
        self._ik[np.abs(np.abs(grid.k_r) - grid.points_per_cell / 2) < 1e-12] = 0.0
        self.cg_iterations: list[int] = []
        self._check_positive()

    # building blocks -------------------------------------------------------
    def _dx(self, f: np.ndarray) -> np.ndarray:
        return sfft.irfft(self._ik * sfft.rfft(f), n=self.grid.n)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``B f`` by collocation."""
        return self.multiplier * f - self._dx(self.stiffness * self._dx(f))

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense symmetric matrix of ``B`` acting on grid values."""
        n = self.grid.n
        eye = np.eye(n)
        dmat = sfft.irfft(self._ik[:, None] * sfft.rfft(eye, axis=0), n=n, axis=0)
        mat = np.diag(self.multiplier) + dmat.T @ (self.stiffness[:, None] * dmat)
        return 0.5 * (mat + mat.T)

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        vals, vecs = sla.eigh(self.matrix)
        return vals, vecs

    @cached_property
    def sqrt_matrix(self) -> np.ndarray:
        """Dense ``A = B^(1/2)``."""
        vals, vecs = self.eig
        return (vecs * np.sqrt(vals)) @ vecs.T

    @cached_property
    def inv_sqrt_matrix(self) -> np.ndarray:
        vals, vecs = self.eig
        return (vecs / np.sqrt(vals)) @ vecs.T

    def _check_positive(self) -> None:
        if np.min(self.multiplier) > 0 and np.min(self.stiffness) > 0:
            return
        lowest = self.lowest_eigenvalue()
        if lowest <= 0:
            raise NotPositiveDefinite(f"smallest eigenvalue of B is {lowest:.3e}")

    def lowest_eigenvalue(self) -> float:
        if self.dense:
            return float(self.eig[0][0])
        n = self.grid.n
        op = spla.LinearOperator((n, n), matvec=self.apply, dtype=float)
        val = spla.eigsh(op, k=1, which="SA", tol=1e-10, maxiter=20 * n)[0]
        return float(val[0])

    # functional calculus ---------------------------------------------------
    def _preconditioner(self):
        m0 = max(float(np.mean(self.multiplier)), 1e-12)
        b0 = float(np.mean(self.stiffness))
        sym = 1.0 / (m0 + b0 * self.grid.k_r ** 2)
        n = self.grid.n
        return spla.LinearOperator((n, n), matvec=lambda f: sfft.irfft(sym * sfft.rfft(f), n=n),
                                   dtype=float)

    def solve(self, f: np.ndarray) -> np.ndarray:
        """``B^{-1} f``."""
        if self.dense:
            vals, vecs = self.eig
            return vecs @ ((vecs.T @ f) / vals)
        n = self.grid.n
        op = spla.LinearOperator((n, n), matvec=self.apply, dtype=float)
        count = [0]

        def tick(_):
            count[0] += 1

        out, info = spla.cg(op, f, rtol=self.rtol, atol=0.0, M=self._preconditioner(),
                            maxiter=10 * n, callback=tick)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
        self.cg_iterations.append(count[0])
        return out

    def quad(self, f: np.ndarray) -> float:
        """``|A f|^2 = <f, B f>``."""
        return float(np.dot(f, self.apply(f)) * self.grid.h)

    def inv_quad(self, f: np.ndarray) -> float:
        """``|A^{-1} f|^2 = <f, B^{-1} f>``."""
        return float(np.dot(f, self.solve(f)) * self.grid.h)

    def sqrt_apply(self, f: np.ndarray) -> np.ndarray:
        """``A f`` (dense path only)."""
        if not self.dense:
            raise ValueError("A is only formed on the dense path")
        return self.sqrt_matrix @ f

    def sqrt_residual(self) -> float:
        """Relative operator-norm residual of ``A^2 - B``."""
        sq = self.sqrt_matrix @ self.sqrt_matrix
        return float(np.linalg.norm(sq - self.matrix, 2) / np.linalg.norm(self.matrix, 2))


def build_energy_operator(coeffs: PeriodicCoefficients, psi: GridField, eps: float, alpha: int,
                          dense: bool | None = None) -> EnergyOperator:
    """Freeze ``B`` at a snapshot of the amplitude-scaled approximation ``Psi``.

    ``psi`` holds ``Psi`` itself; it is multiplied by ``eps**alpha`` here.

    Raises
    ------
    NotPositiveDefinite
        If ``B`` has a non-positive eigenvalue (``Psi`` too large).
    """
    a, b, c = coeffs.evaluate(psi.grid.x)
    m = a + 2.0 * c * eps ** alpha * np.real(psi.values)
    return EnergyOperator(psi.grid, m, b, dense=dense)


def energy_components(state: ErrorState, op: EnergyOperator) -> dict:
    """The four squared norms entering ``E``."""
    grid = state.grid
    r, rt = state.R.values, state.Rt.values
    _require_mean_free(r, "R")
    _require_mean_free(rt, "Rt")
    rx = grid.diff(r, 1)
    return {
        "rt": float(np.sum(rt ** 2) * grid.h),
        "inv": op.inv_quad(grid.antidiff(rt)),
        "r": float(np.sum(r ** 2) * grid.h),
        "grad": op.quad(rx),
    }


def error_energy(state: ErrorState, op: EnergyOperator) -> float:
    """``E = (|Rt|^2 + |A^-1 d_x^-1 Rt|^2 + |R|^2 + |A d_x R|^2) / 2``.

    Raises
    ------
    NonZeroMean
        If ``R`` or ``Rt`` is not mean-free.
    """
    return 0.5 * sum(energy_components(state, op).values())


def hamiltonian(state: ErrorState, op: EnergyOperator) -> float:
    """``H = (|Rt|^2 + |A d_x R|^2) / 2``."""
    grid = state.grid
    rt = state.Rt.values
    return 0.5 * (float(np.sum(rt ** 2) * grid.h) + op.quad(grid.diff(state.R.values, 1)))


def homogeneous_energy(state: ErrorState, psi: GridField, eps: float, alpha: int,
                       include_eps_terms: bool = True) -> float:
    """Energy of the constant medium ``a = b = c = 1``.

    ``int (d_x^-1 Rt)^2 + R^2 + R_x^2 + 2 eps^alpha Psi R^2 + 2 eps^{(3+2 alpha)/2} R^3 / 3``.
    """
    grid = state.grid
    r, rt = state.R.values, state.Rt.values
    _require_mean_free(r, "R")
    _require_mean_free(rt, "Rt")
    dens = grid.antidiff(rt) ** 2 + r ** 2 + grid.diff(r, 1) ** 2
    if include_eps_terms:
        dens = dens + 2 * eps ** alpha * np.real(psi.values) * r ** 2 \
            + 2 * eps ** ((3 + 2 * alpha) / 2) * r ** 3 / 3
    return float(np.sum(dens) * grid.h)


@dataclass
class GronwallReport:
    """Outcome of one energy audit.

    ``growth_rate`` is the smallest ``gamma`` with
    ``E(t) <= E(0) + gamma eps^(1+alpha) t (1 + sup E)`` on the samples, and
    ``drift_rate`` the analogous constant for ``|H(t) - H(0)|`` without the
    ``eps`` factor (its ``eps`` dependence is fitted across a sweep).
    """

    eps: float
    alpha: int
    T0: float
    sup_energy: float
    bound: float
    finite: bool
    growth_rate: float
    drift_rate: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "alpha": self.alpha, "T0": self.T0,
                "sup_energy": self.sup_energy, "bound": self.bound, "finite": self.finite,
                "growth_rate": self.growth_rate, "drift_rate": self.drift_rate,
                "passed": self.passed, **self.extra}


def gronwall_audit(times, energy, eps: float, alpha: int, T0: float, bound: float = 1e2,
                   hamiltonian_trace=None) -> GronwallReport:
    """Check ``sup E <= bound`` and fit the growth and drift rates.

    Parameters
    ----------
    times, energy : array_like
        Samples of ``E`` on ``[0, T0 / eps^(1+alpha)]``.
    hamiltonian_trace : array_like, optional
        Samples of ``H`` at the same times.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energy, dtype=float)
    if t.shape != e.shape or t.size < 2:
        raise ValueError("need matching time and energy samples")
    window = T0 / eps ** (1 + alpha)
    if t[-1] < window * (1 - 1e-9):
        raise ValueError(f"energy sampled up to t={t[-1]:.6g}, window ends at {window:.6g}")
    finite = bool(np.all(np.isfinite(e)))
    sup_e = float(np.max(e)) if finite else float("inf")
    pos = t > 0
    scale = 1.0 + sup_e
    growth = float(np.max(np.maximum(e[pos] - e[0], 0.0) / (eps ** (1 + alpha) * t[pos] * scale))) \
        if finite else float("inf")
    drift = float("nan")
    if hamiltonian_trace is not None:
        h = np.asarray(hamiltonian_trace, dtype=float)
        drift = float(np.max(np.abs(h[pos] - h[0]) / (t[pos] * scale)))
    return GronwallReport(eps, alpha, T0, sup_e, bound, finite, growth, drift,
                          finite and sup_e <= bound)


def relative_drift_rate(times, hamiltonian_trace) -> float:
    """Largest sampled ``|dH/dt|`` divided by ``sup |H|``.

    Its inverse is the time scale on which ``H`` changes, so across an
    ``eps`` sweep it should scale like ``eps^(1+alpha)``.
    """
    t = np.asarray(times, dtype=float)
    h = np.asarray(hamiltonian_trace, dtype=float)
    peak = float(np.max(np.abs(h)))
    if peak == 0.0:
        return 0.0
    return float(np.max(np.abs(np.diff(h)) / np.diff(t)) / peak)


def fit_drift_exponent(eps_values, drift_rates) -> float:
    """Least-squares slope of ``log drift`` against ``log eps``."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(drift_rates, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
