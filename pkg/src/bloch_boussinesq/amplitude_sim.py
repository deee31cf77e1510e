"""Solvers for the KdV, inviscid Burgers and Whitham amplitude equations.

All equations live on a periodic slow grid in ``X`` and are written for the
frame ``X = eps (x + c t)``:

* KdV:      ``A_T + d A_XXX + n (A^2)_X = 0``
* Burgers:  ``A_T + n (A^2)_X = 0`` with the second-order corrector ``B``
* Whitham:  ``A_T = V_X``, ``V_T = H(A)_X``

Each solver also exposes its right-hand side as a jet map so the approximant
can build exact Taylor expansions in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from . import jets
from .effective_model import EffectiveModel, assemble_amplitude_coefficients
from .errors import BlowUp, ConfigError, HyperbolicityLoss, ShockTooClose

__all__ = [
    "SlowGrid",
    "AmplitudeField",
    "WhithamState",
    "Trajectory",
    "KdVEquation",
    "BurgersEquation",
    "WhithamEquation",
    "kdv_evolve",
    "burgers_evolve",
    "burgers_shock_time",
    "burgers_corrector",
    "whitham_evolve",
    "whitham_smallness",
    "gaussian_profile",
]

SHOCK_GUARD = 0.5
NORM_CEILING = 1e6


@dataclass(frozen=True)
class SlowGrid:
    """Uniform periodic grid ``X_j = j * length / n``."""

    length: float
    n: int

    def __post_init__(self):
        if self.length <= 0 or self.n < 4 or self.n % 2:
            raise ValueError("slow grid needs positive length and an even n >= 4")

    @property
    def X(self) -> np.ndarray:
        return np.arange(self.n) * self.length / self.n

    @property
    def dX(self) -> float:
        return self.length / self.n

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dX)

    @property
    def keep(self) -> np.ndarray:
        idx = np.abs(sfft.fftfreq(self.n, d=1.0 / self.n))
        return idx <= self.n // 3

    def diff(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Spectral X-derivative along the last axis (odd orders drop the Nyquist mode)."""
        sym = (1j * self.k) ** order
        if order % 2:
            sym[self.n // 2] = 0.0
        return np.real(sfft.ifft(sfft.fft(values, axis=-1) * sym, axis=-1))

    def dealias(self, values: np.ndarray) -> np.ndarray:
        return np.real(sfft.ifft(sfft.fft(values, axis=-1) * self.keep, axis=-1))

    def product(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return self.dealias(self.dealias(f) * self.dealias(g))

    def tail_fraction(self, values: np.ndarray) -> float:
        """Spectral energy fraction in the upper half of the resolved band."""
        spec = np.abs(sfft.fft(values)) ** 2
        total = spec.sum()
        if total == 0:
            return 0.0
        idx = np.abs(sfft.fftfreq(self.n, d=1.0 / self.n))
        return float(spec[idx > self.n // 4].sum() / total)


def gaussian_profile(grid: SlowGrid, amplitude: float, width: float, center: float | None = None) -> np.ndarray:
    """``amplitude * exp(-(X - center)^2 / width^2)``, centered mid-domain by default."""
    center = grid.length / 2 if center is None else center
    return amplitude * np.exp(-((grid.X - center) / width) ** 2)


@dataclass(frozen=True)
class AmplitudeField:
    """Amplitude ``A(X)`` at slow time ``T``."""

    grid: SlowGrid
    values: np.ndarray
    T: float = 0.0


@dataclass(frozen=True)
class WhithamState:
    """First-order Whitham state ``(A, V)``."""

    grid: SlowGrid
    A: np.ndarray
    V: np.ndarray
    T: float = 0.0


@dataclass
class Trajectory:
    """Amplitude snapshots at prescribed slow times.

    ``states[i]`` is a tuple of arrays (the full equation state) at ``times[i]``.
    """

    kind: str
    grid: SlowGrid
    equation: object
    times: np.ndarray
    states: list
    meta: dict = field(default_factory=dict)

    def state_at(self, T: float) -> tuple:
        idx = int(np.argmin(np.abs(self.times - T)))
        if abs(self.times[idx] - T) > 1e-9 * max(1.0, abs(T)):
            raise ValueError(f"no snapshot at T={T}")
        return self.states[idx]

    def amplitude(self, i: int) -> np.ndarray:
        return self.states[i][0]


class _Equation:
    """Common RK4 driver for systems ``y_T = F(y)`` on the slow grid."""

    grid: SlowGrid
    n_fields: int = 1

    def rhs(self, state: tuple) -> tuple:
        raise NotImplementedError

    def jet_rhs(self, state_jets: tuple) -> tuple:
        raise NotImplementedError

    def linear_symbol(self) -> np.ndarray | None:
        return None

    def check(self, state: tuple) -> None:
        for arr in state:
            if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > NORM_CEILING:
                raise BlowUp("amplitude solution left the finite regime")

    def taylor(self, state: tuple, order: int) -> tuple:
        """Taylor coefficients in T of the solution through ``state``."""
        return jets.taylor_ode(state, self.jet_rhs, order)

    def _step(self, state: tuple, dt: float) -> tuple:
        lin = self.linear_symbol()
        if lin is None:
            k1 = self.rhs(state)
            k2 = self.rhs(tuple(s + 0.5 * dt * k for s, k in zip(state, k1)))
            k3 = self.rhs(tuple(s + 0.5 * dt * k for s, k in zip(state, k2)))
            k4 = self.rhs(tuple(s + dt * k for s, k in zip(state, k3)))
            return tuple(s + dt / 6 * (a + 2 * b + 2 * c + d)
                         for s, a, b, c, d in zip(state, k1, k2, k3, k4))
        # integrating factor for the stiff linear part of a single field
        (A,) = state
        half = np.exp(0.5 * dt * lin)
        full = half * half
        nl = self._nonlinear_hat
        a_hat = sfft.fft(A)
        k1 = nl(a_hat)
        k2 = nl(half * (a_hat + 0.5 * dt * k1))
        k3 = nl(half * a_hat + 0.5 * dt * k2)
        k4 = nl(full * a_hat + dt * half * k3)
        new = full * a_hat + dt / 6 * (full * k1 + 2 * half * (k2 + k3) + k4)
        return (np.real(sfft.ifft(new)),)

    def evolve(self, state0: tuple, sample_times: Sequence[float], dt: float) -> list:
        """RK4 from T=0 through every sample time (hit exactly)."""
        times = np.asarray(sample_times, dtype=float)
        if np.any(np.diff(times) < 0) or times[0] < 0:
            raise ValueError("sample times must be non-negative and increasing")
        state = tuple(np.array(s, dtype=float) for s in state0)
        out = []
        t = 0.0
        for target in times:
            span = target - t
            if span > 0:
                steps = max(1, int(np.ceil(span / dt - 1e-12)))
                h = span / steps
                for _ in range(steps):
                    state = self._step(state, h)
                    self.check(state)
                t = target
            out.append(tuple(s.copy() for s in state))
        return out


class KdVEquation(_Equation):
    """``A_T + d A_XXX + n (A^2)_X = 0`` with a Fourier integrating factor."""

    def __init__(self, grid: SlowGrid, dispersion: float, nonlinearity: float):
        self.grid = grid
        self.dispersion = float(dispersion)
        self.nonlinearity = float(nonlinearity)
        k = grid.k
        self._lin = 1j * self.dispersion * k ** 3
        self._ik = 1j * k
        self._ik[grid.n // 2] = 0.0

    def linear_symbol(self):
        return self._lin

    def _nonlinear_hat(self, a_hat):
        A = np.real(sfft.ifft(a_hat * self.grid.keep))
        return -self.nonlinearity * self._ik * sfft.fft(A * A) * self.grid.keep

    def rhs(self, state):
        (A,) = state
        g = self.grid
        return (-self.dispersion * g.diff(A, 3) - self.nonlinearity * g.diff(g.product(A, A), 1),)

    def jet_rhs(self, state_jets):
        (A,) = state_jets
        g = self.grid
        sq = jets.cauchy(A, A, g.product)
        return (-self.dispersion * g.diff(A, 3) - self.nonlinearity * g.diff(sq, 1),)


class BurgersEquation(_Equation):
    """Inviscid Burgers ``A_T + n (A^2)_X = 0``, optionally with its corrector.

    With ``corrector=True`` the state is ``(A, B)`` and ``B`` solves

        2 c B_T + 2 nu2 (A B)_X = g,
        g = -(nu2^2 / (3 c^2)) (A^3)_X - (lambda4 / 24) A_XXX + H3 (A^3)_X

    where ``H3`` is the cubic Whitham flux coefficient.
    """

    def __init__(self, grid: SlowGrid, model: EffectiveModel, corrector: bool = False):
        self.grid = grid
        self.model = model
        self.corrector = corrector
        self.n_fields = 2 if corrector else 1
        coefs = assemble_amplitude_coefficients(model, "burgers")
        self.nonlinearity = coefs.nonlinearity
        c, nu2 = model.wave_speed, model.nu2
        self._cubic = -nu2 ** 2 / (3 * c ** 2) + model.flux_cubic
        self._third = -model.lambda4 / 24

    def _source(self, A3, A):
        g = self.grid
        return self._cubic * g.diff(A3, 1) + self._third * g.diff(A, 3)

    def rhs(self, state):
        g = self.grid
        A = state[0]
        dA = -self.nonlinearity * g.diff(g.product(A, A), 1)
        if not self.corrector:
            return (dA,)
        B = state[1]
        c, nu2 = self.model.wave_speed, self.model.nu2
        src = self._source(g.product(g.product(A, A), A), A)
        dB = (src - 2 * nu2 * g.diff(g.product(A, B), 1)) / (2 * c)
        return dA, dB

    def jet_rhs(self, state_jets):
        g = self.grid
        A = state_jets[0]
        sq = jets.cauchy(A, A, g.product)
        dA = -self.nonlinearity * g.diff(sq, 1)
        if not self.corrector:
            return (dA,)
        B = state_jets[1]
        c, nu2 = self.model.wave_speed, self.model.nu2
        cube = jets.cauchy(sq, A, g.product)
        dB = (self._source(cube, A) - 2 * nu2 * g.diff(jets.cauchy(A, B, g.product), 1)) / (2 * c)
        return dA, dB


class WhithamEquation(_Equation):
    """``A_T = V_X``, ``V_T = H(A)_X`` with the selected flux model."""

    n_fields = 2

    def __init__(self, grid: SlowGrid, model: EffectiveModel, flux: str = "quadratic"):
        self.grid = grid
        self.model = model
        self.flux = flux

    def _flux_jet(self, A):
        g = self.grid
        m = self.model
        if self.flux in ("quadratic", "cubic"):
            sq = jets.cauchy(A, A, g.product)
            out = m.lambda2 / 2 * A + m.whitham_s2 / 2 * sq
            if self.flux == "cubic":
                out = out + m.flux_cubic * jets.cauchy(sq, A, g.product)
            return out
        if self.flux == "full":
            # antiderivative of the Chebyshev stiffness, evaluated by Clenshaw on jets
            from numpy.polynomial import chebyshev as cheb
            anti = cheb.chebint(np.asarray(m.flux_cheb)) * m.flux_range
            y = A / m.flux_range
            b1 = np.zeros_like(A)
            b2 = np.zeros_like(A)
            for coef in anti[:0:-1]:
                b1, b2 = 2 * jets.cauchy(y, b1, g.product) - b2, b1
                b1[0] = b1[0] + coef
            out = jets.cauchy(y, b1, g.product) - b2
            out[0] = out[0] + anti[0] - cheb.chebval(0.0, anti)
            return out
        raise ValueError(f"unknown flux kind {self.flux!r}")

    def rhs(self, state):
        A, V = state
        g = self.grid
        flux = self._flux_jet(A[None])[0]
        return g.diff(V, 1), g.diff(flux, 1)

    def jet_rhs(self, state_jets):
        A, V = state_jets
        g = self.grid
        return g.diff(V, 1), g.diff(self._flux_jet(A), 1)

    def check(self, state):
        super().check(state)
        stiff = self.model.stiffness(state[0], self.flux)
        if np.min(stiff) <= 0:
            raise HyperbolicityLoss(f"flux derivative reached {np.min(stiff):.3g}")


def _sample_times(T_end: float, n_samples: int) -> np.ndarray:
    return np.linspace(0.0, T_end, n_samples)


def kdv_evolve(A0: AmplitudeField, model: EffectiveModel, T_end: float,
               n_samples: int = 51, dt: float = 1e-3, sample_times=None) -> Trajectory:
    """Integrate the KdV equation with effective coefficients of ``model``."""
    coefs = assemble_amplitude_coefficients(model, "kdv")
    eq = KdVEquation(A0.grid, coefs.dispersion, coefs.nonlinearity)
    times = _sample_times(T_end, n_samples) if sample_times is None else np.asarray(sample_times)
    states = eq.evolve((A0.values,), times, dt)
    return Trajectory("kdv", A0.grid, eq, times, states, {"dt": dt})


def burgers_shock_time(A0: AmplitudeField, model: EffectiveModel) -> float:
    """First gradient catastrophe ``-1 / min d_X((nu2 / c) A0)``; ``inf`` if none."""
    slope = np.min(A0.grid.diff(model.nu2 / model.wave_speed * A0.values, 1))
    return float(-1.0 / slope) if slope < 0 else float("inf")


def burgers_evolve(A0: AmplitudeField, model: EffectiveModel, T_end: float, n_samples: int = 51,
                   dt: float = 1e-3, corrector: bool = False, sample_times=None) -> Trajectory:
    """Integrate inviscid Burgers (and optionally its corrector) up to ``T_end``.

    Raises
    ------
    ShockTooClose
        If ``T_end`` exceeds half the shock time of ``A0``.
    """
    t_shock = burgers_shock_time(A0, model)
    if T_end > SHOCK_GUARD * t_shock * (1 + 1e-9):
        raise ShockTooClose(f"T_end={T_end} exceeds {SHOCK_GUARD} * shock time {t_shock:.4g}")
    eq = BurgersEquation(A0.grid, model, corrector)
    times = _sample_times(T_end, n_samples) if sample_times is None else np.asarray(sample_times)
    init = (A0.values, np.zeros_like(A0.values)) if corrector else (A0.values,)
    states = eq.evolve(init, times, dt)
    return Trajectory("burgers", A0.grid, eq, times, states, {"dt": dt, "shock_time": t_shock})


def burgers_corrector(traj: Trajectory, model: EffectiveModel, eps: float, dt: float | None = None) -> Trajectory:
    """Second-order Burgers corrector ``B`` along an A-trajectory, ``B(., 0) = 0``.

    The coupled (A, B) system is re-integrated from the stored initial
    amplitude so ``B`` sees the same A as the samples.  ``eps`` is recorded
    only; the corrector equation itself is independent of it.
    """
    dt = traj.meta.get("dt", 1e-3) if dt is None else dt
    eq = BurgersEquation(traj.grid, model, corrector=True)
    A0 = traj.states[0][0]
    states = eq.evolve((A0, np.zeros_like(A0)), traj.times, dt)
    return Trajectory("burgers", traj.grid, eq, traj.times, states,
                      {**traj.meta, "dt": dt, "eps": eps, "corrector": True})


def whitham_smallness(model: EffectiveModel) -> float:
    """Default amplitude bound ``0.1 * (lambda2 / 2) / |s2|``."""
    return 0.1 * (model.lambda2 / 2) / max(abs(model.whitham_s2), 1e-300)


def whitham_evolve(state0: WhithamState, model: EffectiveModel, T_end: float, n_samples: int = 51,
                   dt: float | None = None, flux: str = "quadratic", smallness: float | None = None,
                   sample_times=None) -> Trajectory:
    """Integrate the first-order Whitham system.

    Raises
    ------
    ConfigError
        If ``max |A0|`` exceeds the smallness bound.
    HyperbolicityLoss
        If the flux derivative stops being positive somewhere.
    """
    bound = whitham_smallness(model) if smallness is None else smallness
    amp = float(np.max(np.abs(state0.A)))
    if amp > bound * (1 + 1e-12):
        raise ConfigError(f"Whitham amplitude {amp:.3g} exceeds smallness bound {bound:.3g}")
    eq = WhithamEquation(state0.grid, model, flux)
    eq.check((state0.A, state0.V))
    if dt is None:
        speed = np.sqrt(np.max(model.stiffness(np.array([-amp, amp]), flux)))
        dt = 0.5 * state0.grid.dX / speed
    times = _sample_times(T_end, n_samples) if sample_times is None else np.asarray(sample_times)
    states = eq.evolve((state0.A, state0.V), times, dt)
    return Trajectory("whitham", state0.grid, eq, times, states, {"dt": dt, "flux": flux, "smallness": bound})
