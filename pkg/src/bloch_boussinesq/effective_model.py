"""Long-wave effective data of the first Bloch band.

Computes the corrector ``g1``, the wave speed, the dispersion coefficient
``lambda_1''''(0)``, the nonlinear coefficient ``nu2``, the Whitham flux, and
the nonlinear interaction kernels used to cross-check them.

The Whitham flux comes from the static cell problem: for a slowly varying
amplitude ``A`` the effective stiffness is ``1 / <phi_A>`` with

    ((a + 2 c A) - d(b d .)) phi_A = 1

whose Taylor coefficients at ``A = 0`` reproduce ``c^2`` and ``s2 = -2 nu2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import chebyshev as cheb

from .bloch_spectrum import (BlochBand, CellFunction, PeriodicCoefficients, assemble_bloch_matrix,
                             band_eigenpairs, bloch_matrix_on_modes, cell_solve_L0,
                             dispersion_curve)
from .errors import StencilOutsideGap

__all__ = [
    "EffectiveModel",
    "AmplitudeCoefficients",
    "compute_g1",
    "compute_g2",
    "compute_nu2",
    "compute_dispersion_derivatives",
    "homogenized_stiffness",
    "kernel_s11_1",
    "kernel_s11_v",
    "kernel_svv_1",
    "build_effective_model",
    "assemble_amplitude_coefficients",
]

QUAD_POINTS = 256
FLUX_DEGREE = 24


def _default_cutoff(coeffs: PeriodicCoefficients) -> int:
    return max(16, 4 * coeffs.max_mode)


def _cell_values(f: CellFunction, n: int = QUAD_POINTS) -> np.ndarray:
    return f.evaluate(np.arange(n) * 2 * np.pi / n)


def compute_g1(coeffs: PeriodicCoefficients, M: int | None = None) -> CellFunction:
    """Odd zero-mean corrector solving ``L_0 g1 = a'``."""
    M = _default_cutoff(coeffs) if M is None else M
    m = coeffs.modes
    rhs = CellFunction(1j * m * coeffs.a_hat)
    return cell_solve_L0(coeffs, rhs, M)


def compute_g2(band: BlochBand, h: float = 0.02) -> CellFunction:
    """Second-order shape corrector from the eigenfunction expansion.

    With unit cell-mean normalization ``w1(l) = 1 + i l g1 + (i l)^2 g2 + ...``,
    so ``g2`` is the even part of ``w1`` divided by ``-l^2``.  Two step sizes
    are combined by Richardson extrapolation.  Used as a parity check only.
    """
    def even_part(step):
        _, wp = band.eigenpair(step)
        _, wm = band.eigenpair(-step)
        coef = (wp.coeffs + wm.coeffs - 2 * np.eye(1, len(wp.coeffs), band.cell_cutoff)[0]) / 2
        return -coef / step ** 2

    g_h, g_h2 = even_part(h), even_part(h / 2)
    return CellFunction((4 * g_h2 - g_h) / 3)


def compute_nu2(coeffs: PeriodicCoefficients, g1: CellFunction) -> float:
    """``nu2 = -<c (1 + g1')^2>`` by cell quadrature."""
    x = np.arange(QUAD_POINTS) * 2 * np.pi / QUAD_POINTS
    _, _, c = coeffs.evaluate(x)
    strain = 1.0 + np.real(g1.derivative().evaluate(x))
    return float(-np.mean(c * strain ** 2))


def _lambda1(coeffs: PeriodicCoefficients, l: float, M: int) -> float:
    return band_eigenpairs(assemble_bloch_matrix(coeffs, l, M), 1)[0][0]


def _even_fit(coeffs, M, h):
    # lambda(kh) - lambda(0) = A (kh)^2 + B (kh)^4 + C (kh)^6 for k = 1, 2, 3
    base = _lambda1(coeffs, 0.0, M)
    ks = np.array([1.0, 2.0, 3.0])
    rows = np.stack([(ks * h) ** 2, (ks * h) ** 4, (ks * h) ** 6], axis=1)
    vals = np.array([0.5 * (_lambda1(coeffs, k * h, M) + _lambda1(coeffs, -k * h, M)) for k in ks])
    sol = np.linalg.solve(rows, vals - base)
    return 2.0 * sol[0], 24.0 * sol[1]


def compute_dispersion_derivatives(band: BlochBand, h: float = 0.01):
    """``lambda_1''(0)`` and ``lambda_1''''(0)`` by even polynomial stencils.

    Fits ``lambda(kh) - lambda(0)`` on ``k = 1, 2, 3`` with an even sextic at
    steps ``h`` and ``h/2`` and Richardson-combines the two.

    Returns
    -------
    (lambda2, lambda4, err2, err4)
        Derivatives and step-halving error estimates.

    Raises
    ------
    StencilOutsideGap
        If ``3 h`` exceeds the band's gap margin.
    """
    if 3 * h > band.gap_margin + 1e-14:
        raise StencilOutsideGap(f"stencil 3h={3 * h} exceeds gap margin {band.gap_margin}")
    l2_h, l4_h = _even_fit(band.coeffs, band.cell_cutoff, h)
    l2_h2, l4_h2 = _even_fit(band.coeffs, band.cell_cutoff, h / 2)
    # leading truncation errors are O(h^6) for lambda2 and O(h^4) for lambda4
    l2 = (64 * l2_h2 - l2_h) / 63
    l4 = (16 * l4_h2 - l4_h) / 15
    return l2, l4, abs(l2_h2 - l2_h), abs(l4_h2 - l4_h)


def _stiffness_system(coeffs: PeriodicCoefficients, M: int):
    modes = np.arange(-M, M + 1)
    diff = np.subtract.outer(modes, modes)
    a_t = coeffs.fourier("a", diff)
    c_t = coeffs.fourier("c", diff)
    b_t = np.outer(modes, modes) * coeffs.fourier("b", diff)
    unit = np.zeros(2 * M + 1, dtype=complex)
    unit[M] = 1.0
    return a_t, b_t, c_t, unit


def homogenized_stiffness(coeffs: PeriodicCoefficients, amplitude, M: int | None = None) -> np.ndarray:
    """Effective stiffness ``1 / <phi_A>`` of the static cell problem.

    Parameters
    ----------
    coeffs : PeriodicCoefficients
        The media.
    amplitude : float or array_like
        Values of the slow amplitude ``A``; ``a + 2 c A`` must stay positive.
    """
    M = _default_cutoff(coeffs) if M is None else M
    a_t, b_t, c_t, unit = _stiffness_system(coeffs, M)
    amps = np.atleast_1d(np.asarray(amplitude, dtype=float))
    out = np.empty(amps.shape)
    for i, amp in enumerate(amps.flat):
        phi = sla.solve(a_t + 2 * amp * c_t + b_t, unit, assume_a="her")
        out.flat[i] = 1.0 / phi[M].real
    return out if np.ndim(amplitude) else float(out[0])


def _stiffness_taylor(coeffs: PeriodicCoefficients, M: int):
    """Stiffness value and first two derivatives at ``A = 0``."""
    a_t, b_t, c_t, unit = _stiffness_system(coeffs, M)
    op = a_t + b_t
    phi = sla.solve(op, unit, assume_a="her")
    m0 = phi[M].real
    src = 2 * c_t @ phi
    m1 = -np.vdot(phi, src).real
    m2 = 2 * np.vdot(src, sla.solve(op, src, assume_a="her")).real
    k0 = 1 / m0
    k1 = -m1 / m0 ** 2
    k2 = -m2 / m0 ** 2 + 2 * m1 ** 2 / m0 ** 3
    return k0, k1, k2


def _shift_to_zone(l: float) -> tuple[float, int]:
    n = int(np.round(l))
    if l - n <= -0.5:
        n -= 1
    return l - n, n


def _w1_continued(band: BlochBand, l: float) -> np.ndarray:
    """Centered coefficients of w1(l, .) for any real l via continuation."""
    lz, n = _shift_to_zone(l)
    _, w1 = band.eigenpair(lz)
    # u~(lz + n, x) = u~(lz, x) exp(-i n x): shift mode index by -n
    return np.roll(w1.coeffs, -n) if n else w1.coeffs


def _nonlinear_cell(coeffs: PeriodicCoefficients, l: float, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """(d + il)(c (d + il)(f g)) in centered coefficients (length of f)."""
    size = len(f)
    M = (size - 1) // 2
    prod = np.convolve(f, g)[M:M + size]
    modes = np.arange(-M, M + 1)
    step = 1j * (modes + l) * prod
    cm = coeffs.fourier("c", np.subtract.outer(modes, modes))
    return 1j * (modes + l) * (cm @ step)


def kernel_s11_1(coeffs: PeriodicCoefficients, band: BlochBand, l: float, m: float) -> complex:
    """``<w1(l), (d + il)(c (d + il)(w1(l - m) w1(m)))>`` as a cell mean."""
    f = _w1_continued(band, l - m)
    g = _w1_continued(band, m)
    out = _nonlinear_cell(coeffs, l, f, g)
    return complex(np.vdot(_w1_continued(band, l), out))


def _stable_projector(band: BlochBand, l: float) -> np.ndarray:
    _, w1 = band.eigenpair(l)
    w = w1.coeffs
    return np.eye(len(w)) - np.outer(w, w.conj()) / np.vdot(w, w)


def kernel_s11_v(coeffs: PeriodicCoefficients, band: BlochBand, l: float, m: float) -> CellFunction:
    """Stable-part image of the band-1 pair interaction, as a cell function."""
    f = _w1_continued(band, l - m)
    g = _w1_continued(band, m)
    out = _nonlinear_cell(coeffs, l, f, g)
    return CellFunction(_stable_projector(band, l) @ out)


def kernel_svv_1(coeffs: PeriodicCoefficients, band: BlochBand, l: float,
                 v1: CellFunction, v2: CellFunction) -> complex:
    """Band-1 component of the interaction of two stable cell functions."""
    size = 2 * band.cell_cutoff + 1
    f = np.zeros(size, dtype=complex)
    g = np.zeros(size, dtype=complex)
    for dst, src in ((f, v1), (g, v2)):
        r = min(src.max_mode, band.cell_cutoff)
        dst[band.cell_cutoff - r:band.cell_cutoff + r + 1] = src.coeffs[src.max_mode - r:src.max_mode + r + 1]
    out = _nonlinear_cell(coeffs, l, f, g)
    return complex(np.vdot(_w1_continued(band, l), out))


@dataclass(frozen=True)
class AmplitudeCoefficients:
    """Coefficients of a normalized amplitude equation.

    kdv and burgers: ``A_T + dispersion A_XXX + nonlinearity (A^2)_X = 0``
    in the frame moving with ``speed``.  whitham: ``A_TT = (flux_linear A +
    flux_quadratic A^2)_XX``.
    """

    kind: str
    speed: float = 0.0
    dispersion: float = 0.0
    nonlinearity: float = 0.0
    flux_linear: float = 0.0
    flux_quadratic: float = 0.0


@dataclass(frozen=True)
class EffectiveModel:
    """Effective long-wave data of a periodic medium."""

    wave_speed: float
    lambda2: float
    lambda4: float
    nu2: float
    whitham_s2: float
    flux_cubic: float
    g1: CellFunction
    gap: float
    coeffs: PeriodicCoefficients
    cell_cutoff: int
    fd_step: float
    lambda2_err: float = 0.0
    lambda4_err: float = 0.0
    flux_range: float = 0.0
    flux_cheb: tuple = ()
    extra: dict = field(default_factory=dict, compare=False)

    # Whitham flux ---------------------------------------------------------
    def stiffness(self, A, kind: str = "quadratic"):
        """Flux derivative ``H'(A)``; ``kind`` is quadratic, cubic or full."""
        A = np.asarray(A, dtype=float)
        base = self.lambda2 / 2 + self.whitham_s2 * A
        if kind == "quadratic":
            return base
        if kind == "cubic":
            return base + 3 * self.flux_cubic * A ** 2
        if kind == "full":
            self._check_range(A)
            return cheb.chebval(A / self.flux_range, np.asarray(self.flux_cheb))
        raise ValueError(f"unknown flux kind {kind!r}")

    def flux(self, A, kind: str = "quadratic"):
        """Whitham flux ``H(A)`` with ``H(0) = 0``."""
        A = np.asarray(A, dtype=float)
        base = self.lambda2 / 2 * A + self.whitham_s2 / 2 * A ** 2
        if kind == "quadratic":
            return base
        if kind == "cubic":
            return base + self.flux_cubic * A ** 3
        if kind == "full":
            self._check_range(A)
            anti = cheb.chebint(np.asarray(self.flux_cheb)) * self.flux_range
            return cheb.chebval(A / self.flux_range, anti) - cheb.chebval(0.0, anti)
        raise ValueError(f"unknown flux kind {kind!r}")

    def _check_range(self, A):
        if np.max(np.abs(A), initial=0.0) > self.flux_range:
            raise ValueError(f"amplitude {np.max(np.abs(A)):.3g} outside the fitted flux "
                             f"range {self.flux_range:.3g}")

    # serialization ----------------------------------------------------------
    def to_json(self) -> str:
        data = {
            "schema": 1,
            "wave_speed": self.wave_speed, "lambda2": self.lambda2, "lambda4": self.lambda4,
            "nu2": self.nu2, "whitham_s2": self.whitham_s2, "flux_cubic": self.flux_cubic,
            "gap": self.gap, "cell_cutoff": self.cell_cutoff, "fd_step": self.fd_step,
            "lambda2_err": self.lambda2_err, "lambda4_err": self.lambda4_err,
            "flux_range": self.flux_range, "flux_cheb": [float(v) for v in self.flux_cheb],
            "g1": [[float(z.real), float(z.imag)] for z in self.g1.coeffs],
            "coeffs": self.coeffs.to_dict(),
        }
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EffectiveModel":
        data = json.loads(text)
        g1 = CellFunction(np.array([complex(r, i) for r, i in data.pop("g1")]))
        coeffs = PeriodicCoefficients.from_dict(data.pop("coeffs"))
        data.pop("schema", None)
        data["flux_cheb"] = tuple(data["flux_cheb"])
        return cls(g1=g1, coeffs=coeffs, **data)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EffectiveModel":
        return cls.from_json(Path(path).read_text())


def build_effective_model(coeffs: PeriodicCoefficients, M: int | None = None, fd_step: float = 0.01,
                          n_samples: int = 101, flux_range: float | None = None) -> EffectiveModel:
    """Compute every effective coefficient of the first band.

    Parameters
    ----------
    coeffs : PeriodicCoefficients
        The media.
    M : int, optional
        Galerkin cell cutoff.
    fd_step : float
        Base step of the dispersion stencil.
    n_samples : int
        Number of Bloch samples used to locate the gap margin.
    flux_range : float, optional
        Half-width of the amplitude interval of the fitted Whitham flux;
        defaults to half the positivity limit of ``a + 2 c A``.
    """
    M = _default_cutoff(coeffs) if M is None else M
    band = dispersion_curve(coeffs, 1, np.linspace(-0.5, 0.5, n_samples), M)
    lam2, lam4, err2, err4 = compute_dispersion_derivatives(band, fd_step)
    g1 = compute_g1(coeffs, M)
    nu2 = compute_nu2(coeffs, g1)
    k0, k1, k2 = _stiffness_taylor(coeffs, M)
    if flux_range is None:
        x = np.linspace(0, 2 * np.pi, 512, endpoint=False)
        a, _, c = coeffs.evaluate(x)
        cmax = np.max(np.abs(c))
        flux_range = 0.5 * float(np.min(a)) / (2 * cmax) if cmax > 0 else 1.0
    nodes = np.cos(np.pi * (np.arange(FLUX_DEGREE + 1) + 0.5) / (FLUX_DEGREE + 1))
    stiff = homogenized_stiffness(coeffs, nodes * flux_range, M)
    cheb_coefs = cheb.chebfit(nodes, stiff, FLUX_DEGREE)
    extra = {"stiffness_c2": k0, "stiffness_s2": k1}
    return EffectiveModel(
        wave_speed=float(np.sqrt(lam2 / 2)), lambda2=float(lam2), lambda4=float(lam4),
        nu2=nu2, whitham_s2=-2.0 * nu2, flux_cubic=float(k2 / 6), g1=g1,
        gap=band.gap_margin, coeffs=coeffs, cell_cutoff=int(M), fd_step=fd_step,
        lambda2_err=float(err2), lambda4_err=float(err4), flux_range=float(flux_range),
        flux_cheb=tuple(float(v) for v in cheb_coefs), extra=extra)


def assemble_amplitude_coefficients(model: EffectiveModel, kind: str) -> AmplitudeCoefficients:
    """Normalized coefficients of the KdV, Burgers or Whitham equation."""
    c = model.wave_speed
    if kind == "kdv":
        return AmplitudeCoefficients("kdv", speed=c, dispersion=model.lambda4 / (48 * c),
                                     nonlinearity=model.nu2 / (2 * c))
    if kind == "burgers":
        return AmplitudeCoefficients("burgers", speed=c, nonlinearity=model.nu2 / (2 * c))
    if kind == "whitham":
        return AmplitudeCoefficients("whitham", flux_linear=model.lambda2 / 2,
                                     flux_quadratic=model.whitham_s2 / 2)
    raise ValueError(f"unknown amplitude equation {kind!r}")
