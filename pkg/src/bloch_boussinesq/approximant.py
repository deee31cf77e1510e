"""Physical-space approximations built from amplitude trajectories.

The first-band part is synthesized in Bloch space,

    u~_1(l, x, t) = eps^alpha A^(K, T) exp(i sigma l c t) w_1(l, x),  l = eps K,

and the improved versions add a stable-part correction ``v`` solving

    v = Q [ N(Psi_c + v) - d_t^2 v ]

where ``Q`` inverts the Bloch operator away from the first band near
``l = 0`` (and everywhere else).  All fields are carried as Taylor jets in
``t`` so time derivatives are exact consequences of the amplitude equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from . import jets
from .amplitude_sim import SlowGrid, Trajectory
from .bloch_spectrum import PeriodicCoefficients, bloch_matrix_on_modes
from .boussinesq_sim import BoussinesqOperator
from .effective_model import EffectiveModel
from .errors import ConfigError, CutoffViolation, GapViolation, NoContraction
from .spectral_core import GridField, SpectralGrid

__all__ = [
    "ALPHA",
    "Approximant",
    "build_approximant",
    "improve_kdv",
    "improve_burgers",
    "improve_whitham",
    "plain_comparison",
    "ansatz_error",
    "make_grids",
]

ALPHA = {"kdv": 2, "burgers": 1, "whitham": 0}
DEFAULT_ITERATIONS = {"kdv": 2, "burgers": 3, "whitham": 20}
CUTOFF_TOL = 1e-8
JET_ORDER = 6


def make_grids(eps: float, slow_cells: int, points_per_cell: int, slow_points: int = 256):
    """Big torus and slow grid with ``cells * eps = slow_cells`` exactly.

    Raises
    ------
    ConfigError
        If ``slow_cells / eps`` is not an integer.
    """
    cells = slow_cells / eps
    if abs(cells - round(cells)) > 1e-9:
        raise ConfigError(f"slow_cells/eps = {cells:.6g} must be an integer")
    grid = SpectralGrid(int(round(cells)), points_per_cell)
    return grid, SlowGrid(2 * np.pi * slow_cells, slow_points)


class _CellSolver:
    """Per-Bloch-number eigendata of L_l on the grid's cell modes."""

    def __init__(self, coeffs: PeriodicCoefficients, grid: SpectralGrid, gap: float):
        p = grid.points_per_cell
        self.modes = sfft.fftfreq(p, d=1.0 / p).astype(int)
        self.grid = grid
        self.gap = gap
        self.w1 = np.zeros((grid.cells, p), dtype=complex)
        self.q = np.zeros((grid.cells, p, p), dtype=complex)
        for r, l in enumerate(grid.bloch_numbers):
            mat = bloch_matrix_on_modes(coeffs, float(l), self.modes)
            vals, vecs = sla.eigh(mat)
            v1 = vecs[:, 0]
            mean = v1[0]
            if abs(l) <= gap / 2 + 1e-14:
                # first band near l = 0 is resonant: drop it from the inverse
                self.w1[r] = v1 / mean
                self.q[r] = (vecs[:, 1:] / vals[1:]) @ vecs[:, 1:].conj().T
            else:
                self.w1[r] = v1 / mean if abs(mean) > 1e-12 else v1
                self.q[r] = (vecs / vals) @ vecs.conj().T

    def apply_q(self, coeffs: np.ndarray) -> np.ndarray:
        """Apply Q row by row to Bloch coefficients (..., cells, P)."""
        return np.einsum("rij,...rj->...ri", self.q, coeffs)

    def band_part(self, coeffs: np.ndarray, delta: float) -> np.ndarray:
        """First-band projection coefficient per Bloch row for |l| <= delta."""
        out = np.zeros(coeffs.shape[:-1], dtype=complex)
        for r, l in enumerate(self.grid.bloch_numbers):
            if abs(l) <= delta + 1e-14:
                w = self.w1[r]
                out[..., r] = (coeffs[..., r, :] @ w.conj()) / np.vdot(w, w)
        return out


@dataclass
class Approximant:
    """Band-1 ansatz (leading or improved) tied to an amplitude trajectory.

    Parameters
    ----------
    kind : {"kdv", "burgers", "whitham"}
    level : {"leading", "improved"}
    eps : float
    model : EffectiveModel
    grid : SpectralGrid
        Big torus; ``grid.cells * eps`` must equal the slow length over 2 pi.
    trajectory : Trajectory
        Amplitude snapshots; their times are the available evaluation times.
    frame : int
        +1 for the frame ``x + c t`` (phase ``exp(i l c t)``), -1 for ``x - c t``.
    """

    kind: str
    level: str
    eps: float
    model: EffectiveModel
    grid: SpectralGrid
    trajectory: Trajectory
    frame: int = 1
    iterations: int | None = None
    jet_order: int = JET_ORDER
    max_ratio: float = 0.5
    cutoff_fraction: float = 0.25
    _cache: dict = field(default_factory=dict, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ALPHA:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.level not in ("leading", "improved"):
            raise ValueError(f"unknown level {self.level!r}")
        if self.frame not in (1, -1):
            raise ValueError("frame must be +1 or -1")
        slow = self.trajectory.grid
        if abs(slow.length - 2 * np.pi * self.grid.cells * self.eps) > 1e-9 * slow.length:
            raise ConfigError("slow length must equal 2 pi * cells * eps")
        if self.iterations is None:
            self.iterations = DEFAULT_ITERATIONS[self.kind]
        self.constant = self.model.coeffs.is_constant
        self.alpha = ALPHA[self.kind]
        self.speed = 0.0 if self.kind == "whitham" else self.model.wave_speed
        self.operator = BoussinesqOperator(self.model.coeffs, self.grid)
        if not self.constant:
            self.solver = _CellSolver(self.model.coeffs, self.grid, self.model.gap)

    # time bookkeeping ------------------------------------------------------
    @property
    def time_scale(self) -> float:
        """``T = time_scale * t``."""
        return self.eps ** (1 + self.alpha)

    @property
    def times(self) -> np.ndarray:
        """Fast times at which the approximant can be evaluated exactly."""
        return self.trajectory.times / self.time_scale

    def _index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        return idx

    # band-1 synthesis ------------------------------------------------------
    def _amplitude_jet(self, i: int) -> np.ndarray:
        eq = self.trajectory.equation
        state = self.trajectory.states[i]
        tj = eq.taylor(state, self.jet_order)
        amp = tj[0]
        if self.kind == "burgers" and self.level == "improved":
            if len(tj) < 2:
                raise ConfigError("improved Burgers approximant needs the corrector trajectory")
            amp = amp + self.eps * tj[1]
        return jets.rescale(amp, self.time_scale)

    def _band_jet_hat(self, i: int):
        """Slow-mode amplitudes ``eps^alpha A^_m`` times the phase, as t-jets."""
        amp = self._amplitude_jet(i)
        slow = self.trajectory.grid
        n_x = slow.n
        a_hat = sfft.fft(amp, axis=-1) / n_x
        m = sfft.fftfreq(n_x, d=1.0 / n_x).astype(int)
        l = m / self.grid.cells
        t0 = self.times[i]
        freq = 1j * self.frame * l * self.speed
        order = self.jet_order
        phase = np.empty((order + 1, n_x), dtype=complex)
        phase[0] = np.exp(freq * t0)
        for n in range(1, order + 1):
            phase[n] = phase[n - 1] * freq / n
        return m, l, self.eps ** self.alpha * jets.cauchy(a_hat, phase)

    def _band_bloch(self, i: int) -> np.ndarray:
        """First-band Bloch coefficients (jet levels, cells, P) for periodic media."""
        m, l, amp = self._band_jet_hat(i)
        cut = self.cutoff_fraction * self.model.gap
        inside = np.abs(l) <= cut + 1e-14
        total = np.sum(np.abs(amp[0]) ** 2)
        leak = np.sum(np.abs(amp[0][~inside]) ** 2)
        if total > 0 and leak > CUTOFF_TOL * total:
            raise CutoffViolation(f"amplitude spectrum beyond l={cut:.3g} carries "
                                  f"{leak / total:.2e} of the mass")
        grid = self.grid
        q0 = int(round(grid.bloch_numbers[0] * grid.cells))
        out = np.zeros((amp.shape[0], grid.cells, grid.points_per_cell), dtype=complex)
        for idx in np.nonzero(inside)[0]:
            r = m[idx] - q0
            out[:, r, :] += grid.cells * amp[:, idx, None] * self.solver.w1[r][None, :]
        return out

    def _bloch_to_physical(self, b: np.ndarray) -> np.ndarray:
        grid = self.grid
        rows, cols = grid._bloch_index
        spec = b[..., rows, cols] / grid.cells
        return np.real(sfft.ifft(spec * grid.n, axis=-1))

    def _physical_to_bloch(self, f: np.ndarray) -> np.ndarray:
        grid = self.grid
        rows, cols = grid._bloch_index
        spec = sfft.fft(f, axis=-1) / grid.n
        out = np.zeros(f.shape[:-1] + (grid.cells, grid.points_per_cell), dtype=complex)
        out[..., rows, cols] = grid.cells * spec
        return out

    def _band_physical(self, i: int) -> np.ndarray:
        if self.constant:
            m, _, amp = self._band_jet_hat(i)
            n = self.grid.n
            if np.max(np.abs(m)) >= n // 2:
                raise ConfigError("slow grid finer than the big grid")
            spec = np.zeros((amp.shape[0], n), dtype=complex)
            spec[:, m % n] = amp
            return np.real(sfft.ifft(spec * n, axis=-1))
        return self._bloch_to_physical(self._band_bloch(i))

    # nonlinearity and correction ------------------------------------------
    def _nonlinear_jet(self, u: np.ndarray) -> np.ndarray:
        sq = jets.cauchy(u, u, self.grid.product)
        op = self.operator
        c = op.c
        out = np.empty_like(sq)
        for n in range(sq.shape[0]):
            out[n] = self.grid.diff(c * self.grid.diff(sq[n], 1), 1)
        return out

    def _correction(self, band: np.ndarray, i: int) -> np.ndarray:
        v = np.zeros_like(band)
        prev = None
        history = []
        for it in range(self.iterations):
            src = self._nonlinear_jet(band + v) - jets.dt2(v)
            new = self._bloch_to_physical(self.solver.apply_q(self._physical_to_bloch(src)))
            change = float(np.max(np.abs(new[0] - v[0])))
            history.append(change)
            if prev is not None and prev > 0:
                ratio = change / prev
                if ratio > self.max_ratio and change > 1e-14 * max(1.0, np.max(np.abs(new[0]))):
                    raise NoContraction(f"fixed-point ratio {ratio:.3f} at iteration {it}")
            v = new
            if self.kind == "whitham" and change <= 1e-13 * max(np.max(np.abs(v[0])), 1e-300):
                break
            prev = change
        self.info.setdefault("fixed_point", {})[i] = history
        return v

    def jet(self, i: int) -> np.ndarray:
        """Physical t-jet of the approximant at sample ``i``, shape (J+1, N)."""
        if i not in self._cache:
            band = self._band_physical(i)
            if self.level == "improved" and not self.constant:
                band = band + self._correction(band, i)
            self._cache[i] = band
        return self._cache[i]

    def correction_jet(self, i: int) -> np.ndarray:
        """Stable-part correction alone (zero for leading or constant media)."""
        if self.level != "improved" or self.constant:
            return np.zeros((self.jet_order + 1, self.grid.n))
        return self.jet(i) - self._band_physical(i)

    # public evaluation -----------------------------------------------------
    def _eval(self, t: float, k: int) -> GridField:
        i = self._index(t)
        s = t - self.times[i]
        jet = self.jet(i)
        deriv = jet[k:] * np.array([np.prod(np.arange(n + 1, n + k + 1)) for n in range(jet.shape[0] - k)])[:, None]
        return GridField(self.grid, jets.evaluate(deriv, s))

    def synthesize(self, t: float) -> GridField:
        """Psi(., t); exact at sample times, Taylor-extrapolated nearby."""
        return self._eval(t, 0)

    def synthesize_dt(self, t: float) -> GridField:
        return self._eval(t, 1)

    def synthesize_dt2(self, t: float) -> GridField:
        return self._eval(t, 2)

    def band_amplitude(self, t: float) -> np.ndarray:
        """First-band Bloch coefficient per Bloch row of Psi(., t) for |l| <= gap/2."""
        if self.constant:
            raise ValueError("band amplitudes are defined for periodic media only")
        b = self._physical_to_bloch(self.synthesize(t).values)
        return self.solver.band_part(b, self.model.gap / 2)


def build_approximant(kind: str, model: EffectiveModel, grid: SpectralGrid, trajectory: Trajectory,
                      eps: float, level: str = "leading", frame: int = 1, **kw) -> Approximant:
    """Construct a leading or improved approximant."""
    return Approximant(kind, level, eps, model, grid, trajectory, frame, **kw)


def _improved(approx: Approximant, kind: str) -> Approximant:
    if approx.kind != kind:
        raise ValueError(f"expected a {kind} approximant, got {approx.kind}")
    if approx.model.gap <= 0:
        raise GapViolation("no spectral gap around l = 0")
    return Approximant(approx.kind, "improved", approx.eps, approx.model, approx.grid,
                       approx.trajectory, approx.frame, None, approx.jet_order, approx.max_ratio,
                       approx.cutoff_fraction)


def improve_kdv(approx: Approximant) -> Approximant:
    """Improved KdV approximant with stable-part corrections."""
    return _improved(approx, "kdv")


def improve_burgers(approx: Approximant) -> Approximant:
    """Improved Burgers approximant (corrector B plus stable-part corrections)."""
    return _improved(approx, "burgers")


def improve_whitham(approx: Approximant) -> Approximant:
    """Improved Whitham approximant; the correction is iterated to convergence."""
    return _improved(approx, "whitham")


def plain_comparison(approx: Approximant, i: int) -> np.ndarray:
    """``eps^alpha A(eps (x + sigma c t), T)`` at sample ``i`` without Bloch modes or cutoff."""
    slow = approx.trajectory.grid
    A = approx.trajectory.states[i][0]
    n_x = slow.n
    a_hat = sfft.fft(A) / n_x
    m = sfft.fftfreq(n_x, d=1.0 / n_x).astype(int)
    l = m / approx.grid.cells
    t = approx.times[i]
    spec = np.zeros(approx.grid.n, dtype=complex)
    spec[m % approx.grid.n] = approx.eps ** approx.alpha * a_hat * np.exp(1j * approx.frame * l * approx.speed * t)
    return np.real(sfft.ifft(spec * approx.grid.n))


def ansatz_error(approx: Approximant, snapshots) -> dict:
    """H^1 and H^2 distance between full-PDE snapshots and the plain ansatz.

    Parameters
    ----------
    snapshots : iterable of (sample index, u array)
    """
    grid = approx.grid
    t_list, h1, h2 = [], [], []
    for i, u in snapshots:
        diff = u - plain_comparison(approx, i)
        t_list.append(float(approx.times[i]))
        h1.append(grid.norm(diff, 1.0))
        h2.append(grid.norm(diff, 2.0))
    return {"t": np.array(t_list), "h1": np.array(h1), "h2": np.array(h2)}
