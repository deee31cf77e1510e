"""Pseudospectral RK4 solver for the variable-coefficient Boussinesq equation

    u_tt = (a u_x)_x - (b u_xx)_xx + (c (u^2)_x)_x

written as the first-order system ``u_t = v``, ``v_t = ...`` on the big torus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .bloch_spectrum import PeriodicCoefficients, bloch_matrix_on_modes
from .errors import BlowUp
from .spectral_core import BlochField, GridField, SpectralGrid, bloch_convolve, bloch_forward

__all__ = [
    "SimState",
    "StepperConfig",
    "BoussinesqOperator",
    "rhs",
    "bloch_rhs",
    "stability_limit",
    "evolve",
    "linear_energy",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class SimState:
    """Time ``t`` with displacement ``u`` and velocity ``v = u_t``."""

    t: float
    u: GridField
    v: GridField

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ValueError("u and v live on different grids")
        if not (self.u.is_real and self.v.is_real):
            raise ValueError("simulation fields must be real")

    @property
    def grid(self) -> SpectralGrid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: SpectralGrid, t: float = 0.0) -> "SimState":
        return cls(t, GridField(grid, np.zeros(grid.n)), GridField(grid, np.zeros(grid.n)))


@dataclass(frozen=True)
class StepperConfig:
    """Time stepping options; ``dt=None`` picks ``stability_margin * dt_max``."""

    dt: float | None = None
    scheme: str = "rk4"
    dealias: bool = True
    stability_margin: float = 0.5
    norm_ceiling: float = 1e3
    nonlinear: bool = True

    def __post_init__(self):
        if self.scheme != "rk4":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.stability_margin <= 1:
            raise ValueError("stability_margin must lie in (0, 1]")


class BoussinesqOperator:
    """Spatial operator of the PDE on a fixed grid.

    Multiplications by ``a``, ``b``, ``c`` are collocated; the quadratic term
    is dealiased by the 2/3 rule.  Constant media use a diagonal fast path.
    """

    def __init__(self, coeffs: PeriodicCoefficients, grid: SpectralGrid, dealias: bool = True,
                 nonlinear: bool = True):
        self.coeffs = coeffs
        self.grid = grid
        self.dealias = dealias
        self.nonlinear = nonlinear
        a, b, c = coeffs.evaluate(grid.x)
        self.a, self.b, self.c = a, b, c
        self.constant = coeffs.is_constant
        k = grid.k_r
        self._ik = 1j * k
        self._ik_odd = self._ik.copy()
        self._ik_odd[-1] = 0.0  # Nyquist mode of an even grid
        self._k2 = k ** 2
        if self.constant:
            self._a0, self._b0, self._c0 = float(a[0]), float(b[0]), float(c[0])
            self._lin = -(self._a0 * k ** 2 + self._b0 * k ** 4)
        self._keep = grid.keep_r

    def _square_hat(self, u_hat: np.ndarray) -> np.ndarray:
        n = self.grid.n
        if self.dealias:
            u = sfft.irfft(u_hat * self._keep, n=n)
            return sfft.rfft(u * u) * self._keep
        u = sfft.irfft(u_hat, n=n)
        return sfft.rfft(u * u)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``(a u_x)_x - (b u_xx)_xx + (c (u^2)_x)_x`` for a real array ``u``."""
        n = self.grid.n
        u_hat = sfft.rfft(u)
        if self.constant:
            out = self._lin * u_hat
            if self.nonlinear:
                out = out - self._c0 * self._k2 * self._square_hat(u_hat)
            return sfft.irfft(out, n=n)
        ux = sfft.irfft(self._ik_odd * u_hat, n=n)
        uxx = sfft.irfft(-self._k2 * u_hat, n=n)
        acc = self._ik_odd * sfft.rfft(self.a * ux) + self._k2 * sfft.rfft(self.b * uxx)
        if self.nonlinear:
            sx = sfft.irfft(self._ik_odd * self._square_hat(u_hat), n=n)
            acc = acc + self._ik_odd * sfft.rfft(self.c * sx)
        return sfft.irfft(acc, n=n)

    def linear(self, u: np.ndarray) -> np.ndarray:
        """The linear part ``(a u_x)_x - (b u_xx)_xx``."""
        saved = self.nonlinear
        self.nonlinear = False
        try:
            return self.apply(u)
        finally:
            self.nonlinear = saved


def rhs(state: SimState, coeffs: PeriodicCoefficients, dealias: bool = True,
        operator: BoussinesqOperator | None = None) -> tuple[GridField, GridField]:
    """Time derivative ``(du, dv)`` of the first-order system."""
    op = operator or BoussinesqOperator(coeffs, state.grid, dealias)
    grid = state.grid
    return GridField(grid, state.v.values.copy()), GridField(grid, op.apply(state.u.values))


def bloch_rhs(state: SimState, coeffs: PeriodicCoefficients) -> tuple[BlochField, BlochField]:
    """Time derivative of the system computed row by row in Bloch space.

    The linear part applies the Galerkin matrix of ``L_l`` on the grid's cell
    modes; the quadratic part uses the Bloch convolution and cell-wise
    multiplication by ``c``.  Nothing is dealiased, so this agrees with
    :func:`rhs` for fields whose spectrum stays below a third of the cutoff.
    """
    grid = state.grid
    ub = bloch_forward(state.u)
    modes = np.rint(ub.cell_modes).astype(int)
    lin = np.empty_like(ub.coeffs)
    sym = np.empty_like(ub.coeffs)
    for r, l in enumerate(grid.bloch_numbers):
        lin[r] = -bloch_matrix_on_modes(coeffs, float(l), modes) @ ub.coeffs[r]
        sym[r] = 1j * (modes + l)
    sq = bloch_convolve(ub, ub)
    xc = np.arange(grid.points_per_cell) * grid.h
    _, _, c = coeffs.evaluate(xc)
    flux = BlochField(grid, sym * sq.coeffs)
    flux = BlochField.from_cell_values(grid, c[None, :] * flux.cell_values())
    dv = BlochField(grid, lin + sym * flux.coeffs, real=True)
    return bloch_forward(state.v), dv


def stability_limit(coeffs: PeriodicCoefficients, grid: SpectralGrid) -> float:
    """RK4 imaginary-axis bound ``2.8 / sqrt(max_b k^4 + max_a k^2)`` at ``k = pi / h``."""
    k = np.pi / grid.h
    return float(2.8 / np.sqrt(coeffs.max_b * k ** 4 + coeffs.max_a * k ** 2))


@dataclass
class EvolveResult:
    state: SimState
    records: list = field(default_factory=list)
    steps: int = 0
    dt: float = 0.0


def evolve(initial: SimState, coeffs: PeriodicCoefficients, t_end: float,
           config: StepperConfig = StepperConfig(),
           observers: Sequence[Callable[[SimState], object]] = (),
           observe_times: Sequence[float] | None = None) -> EvolveResult:
    """Classical RK4 from ``initial.t`` to ``t_end``.

    Observers are called at ``observe_times`` (default: start and end), which
    the stepper hits exactly by rounding the step count between samples.
    Each record is ``(t, [observer outputs])``.

    Raises
    ------
    BlowUp
        If the solution becomes non-finite or its max norm exceeds the ceiling.
    """
    grid = initial.grid
    dt_max = stability_limit(coeffs, grid)
    dt = config.stability_margin * dt_max if config.dt is None else config.dt
    if dt > config.stability_margin * dt_max * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} exceeds {config.stability_margin} * dt_max={dt_max:.3g}")
    op = BoussinesqOperator(coeffs, grid, config.dealias, config.nonlinear)
    times = [initial.t, t_end] if observe_times is None else list(observe_times)
    if times[0] < initial.t - 1e-12 or any(np.diff(times) < 0) or times[-1] > t_end + 1e-12:
        raise ValueError("observe_times must be increasing and inside [t0, t_end]")
    if times[-1] < t_end:
        times.append(t_end)
    u = initial.u.values.astype(float).copy()
    v = initial.v.values.astype(float).copy()
    t = initial.t
    records = []
    steps = 0
    obs_set = set(range(len(observe_times))) if observe_times is not None else {0, 1}
    for i, target in enumerate(times):
        span = target - t
        if span > 1e-14:
            n = int(np.ceil(span / dt - 1e-9))
            h = span / n
            for _ in range(n):
                k1u, k1v = v, op.apply(u)
                k2u, k2v = v + 0.5 * h * k1v, op.apply(u + 0.5 * h * k1u)
                k3u, k3v = v + 0.5 * h * k2v, op.apply(u + 0.5 * h * k2u)
                k4u, k4v = v + h * k3v, op.apply(u + h * k3u)
                u = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
                v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
                steps += 1
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))) or \
                    max(np.max(np.abs(u)), np.max(np.abs(v))) > config.norm_ceiling:
                raise BlowUp(f"solution blew up before t={target:.6g}")
            t = target
        if i in obs_set and observers:
            snap = SimState(t, GridField(grid, u.copy()), GridField(grid, v.copy()))
            records.append((t, [obs(snap) for obs in observers]))
    final = SimState(t, GridField(grid, u), GridField(grid, v))
    return EvolveResult(final, records, steps, dt)


def linear_energy(state: SimState, coeffs: PeriodicCoefficients) -> float:
    """``int v^2 + a u_x^2 + b u_xx^2 dx``, conserved by the linear flow."""
    grid = state.grid
    a, b, _ = coeffs.evaluate(grid.x)
    ux = grid.diff(state.u.values, 1)
    uxx = grid.diff(state.u.values, 2)
    dens = state.v.values ** 2 + a * ux ** 2 + b * uxx ** 2
    return float(np.sum(dens) * grid.h)


def save_checkpoint(state: SimState, path: str | Path, coeffs: PeriodicCoefficients | None = None,
                    extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``(u, v)`` as little-endian float64 plus a JSON sidecar."""
    path = Path(path)
    raw = path.with_suffix(".f64")
    side = path.with_suffix(".json")
    np.concatenate([state.u.values, state.v.values]).astype("<f8").tofile(raw)
    meta = {"t": state.t, "cells": state.grid.cells, "points_per_cell": state.grid.points_per_cell,
            "coeff_hash": coeffs.digest() if coeffs is not None else None}
    if extra:
        meta.update(extra)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return raw, side


def load_checkpoint(path: str | Path) -> tuple[SimState, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = SpectralGrid(meta["cells"], meta["points_per_cell"])
    data = np.fromfile(path.with_suffix(".f64"), dtype="<f8")
    u, v = data[:grid.n], data[grid.n:]
    return SimState(meta["t"], GridField(grid, u), GridField(grid, v)), meta
