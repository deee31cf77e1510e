"""Tests for the pseudospectral solver of the full equation."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bloch_boussinesq.bloch_spectrum import PeriodicCoefficients
from bloch_boussinesq.boussinesq_sim import (BoussinesqOperator, SimState, StepperConfig, bloch_rhs,
                                             evolve, linear_energy, load_checkpoint, rhs,
                                             save_checkpoint, stability_limit)
from bloch_boussinesq.errors import BlowUp
from bloch_boussinesq.spectral_core import GridField, SpectralGrid, bloch_forward

from conftest import band_limited


def state(grid, u, v=None):
    v = np.zeros(grid.n) if v is None else v
    return SimState(0.0, GridField(grid, u), GridField(grid, v))


class TestOperator:
    """Spatial operator."""

    def test_constant_symbol(self, constant_coeffs):
        """For cos(kx) the linear part is -(k^2 + k^4) cos(kx)."""
        grid = SpectralGrid(4, 16)
        op = BoussinesqOperator(constant_coeffs, grid)
        k = 1.25
        u = np.cos(k * grid.x)
        assert np.max(np.abs(op.linear(u) + (k ** 2 + k ** 4) * u)) < 1e-11

    def test_quadratic_term(self, constant_coeffs):
        """(c (u^2)_x)_x for u = cos x equals -2 cos 2x."""
        grid = SpectralGrid(1, 32)
        op = BoussinesqOperator(constant_coeffs, grid)
        u = np.cos(grid.x)
        nonlinear = op.apply(u) - op.linear(u)
        assert np.max(np.abs(nonlinear + 2 * np.cos(2 * grid.x))) < 1e-12

    def test_constant_fast_path_matches_general(self, rng):
        """The diagonal path agrees with the collocated path on a constant medium."""
        grid = SpectralGrid(3, 16)
        u = band_limited(grid, rng)
        fast = BoussinesqOperator(PeriodicCoefficients.constant(a=1.3, b=0.7, c=0.4), grid).apply(u)
        general_coeffs = PeriodicCoefficients.from_cosine_series([1.3, 1e-30], [0.7], [0.4])
        slow = BoussinesqOperator(general_coeffs, grid)
        slow.constant = False
        assert np.max(np.abs(fast - slow.apply(u))) < 1e-10 * np.max(np.abs(fast))

    def test_mean_free_output(self, periodic_coeffs, rng):
        """Every term is a divergence, so the output has zero mean."""
        grid = SpectralGrid(4, 16)
        out = BoussinesqOperator(periodic_coeffs, grid).apply(band_limited(grid, rng))
        assert abs(np.mean(out)) < 1e-12 * np.max(np.abs(out))

    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_bloch_rhs_matches_physical(self, seed):
        """The Bloch-space right-hand side equals the physical one on band-limited data."""
        coeffs = PeriodicCoefficients.from_cosine_series([1.0, 0.5], [1.0], [1.0, 0.3])
        grid = SpectralGrid(4, 24)
        rng = np.random.default_rng(seed)
        u = band_limited(grid, rng, fraction=1 / 6)
        v = band_limited(grid, rng, fraction=1 / 6)
        s = state(grid, u, v)
        du, dv = rhs(s, coeffs)
        bu, bv = bloch_rhs(s, coeffs)
        scale = np.max(np.abs(bloch_forward(dv).coeffs))
        assert np.max(np.abs(bloch_forward(du).coeffs - bu.coeffs)) < 1e-12 * np.max(np.abs(bu.coeffs))
        assert np.max(np.abs(bloch_forward(dv).coeffs - bv.coeffs)) < 1e-9 * scale


class TestStateAndConfig:
    """Validation of states and stepper options."""

    def test_complex_rejected(self):
        grid = SpectralGrid(1, 8)
        with pytest.raises(ValueError, match="must be real"):
            SimState(0.0, GridField(grid, np.zeros(8, dtype=complex)), GridField(grid, np.zeros(8)))

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="different grids"):
            SimState(0.0, GridField(SpectralGrid(1, 8), np.zeros(8)), GridField(SpectralGrid(2, 4), np.zeros(8)))

    def test_scheme(self):
        with pytest.raises(ValueError, match="unsupported scheme"):
            StepperConfig(scheme="euler")

    def test_margin(self):
        with pytest.raises(ValueError, match="stability_margin"):
            StepperConfig(stability_margin=1.5)


class TestEvolve:
    """RK4 time stepping."""

    def test_standing_wave(self, constant_coeffs):
        """Linear flow of cos(kx) is cos(kx) cos(omega t) with omega^2 = k^2 + k^4."""
        grid = SpectralGrid(4, 16)
        k = 0.75
        s0 = state(grid, np.cos(k * grid.x))
        run = evolve(s0, constant_coeffs, 2.0, StepperConfig(nonlinear=False))
        omega = np.sqrt(k ** 2 + k ** 4)
        assert np.max(np.abs(run.state.u.values - np.cos(k * grid.x) * np.cos(2 * omega))) < 1e-8

    def test_linear_energy_conserved(self, periodic_coeffs, rng):
        grid = SpectralGrid(4, 16)
        s0 = state(grid, band_limited(grid, rng, fraction=0.2), band_limited(grid, rng, fraction=0.2))
        run = evolve(s0, periodic_coeffs, 1.0, StepperConfig(nonlinear=False, stability_margin=0.25))
        e0, e1 = linear_energy(s0, periodic_coeffs), linear_energy(run.state, periodic_coeffs)
        assert abs(e1 - e0) < 1e-6 * e0

    def test_fourth_order(self, periodic_coeffs):
        """Halving dt divides the error by about 16."""
        grid = SpectralGrid(2, 16)
        u0 = 0.1 * np.cos(0.5 * grid.x) + 0.05 * np.sin(grid.x)
        s0 = state(grid, u0)
        dt_max = stability_limit(periodic_coeffs, grid)
        ref = evolve(s0, periodic_coeffs, 0.5, StepperConfig(dt=dt_max / 16)).state.u.values
        errs = []
        for div in (2, 4):
            out = evolve(s0, periodic_coeffs, 0.5, StepperConfig(dt=dt_max / div)).state.u.values
            errs.append(np.max(np.abs(out - ref)))
        assert 2 ** 3.5 < errs[0] / errs[1] < 2 ** 4.5

    def test_mean_velocity_conserved(self, periodic_coeffs, rng):
        grid = SpectralGrid(3, 16)
        v0 = 0.1 * band_limited(grid, rng, fraction=0.2) + 0.2
        s0 = state(grid, 0.1 * band_limited(grid, rng, fraction=0.2), v0)
        run = evolve(s0, periodic_coeffs, 0.5)
        assert np.mean(run.state.v.values) == pytest.approx(np.mean(v0), abs=1e-12)

    def test_observers_at_requested_times(self, constant_coeffs):
        grid = SpectralGrid(1, 8)
        s0 = state(grid, 0.01 * np.cos(grid.x))
        run = evolve(s0, constant_coeffs, 1.0, observers=[lambda s: s.t],
                     observe_times=[0.0, 0.3, 0.7, 1.0])
        assert [r[0] for r in run.records] == [0.0, 0.3, 0.7, 1.0]
        assert [r[1][0] for r in run.records] == [0.0, 0.3, 0.7, 1.0]

    def test_unstable_step_rejected(self, constant_coeffs):
        grid = SpectralGrid(1, 16)
        dt = stability_limit(constant_coeffs, grid)
        with pytest.raises(ValueError, match="exceeds"):
            evolve(SimState.zeros(grid), constant_coeffs, 1.0, StepperConfig(dt=dt))

    def test_blowup(self, constant_coeffs):
        grid = SpectralGrid(1, 16)
        s0 = state(grid, np.cos(grid.x))
        with pytest.raises(BlowUp, match="blew up"):
            evolve(s0, constant_coeffs, 0.1, StepperConfig(norm_ceiling=0.5))

    def test_bad_observe_times(self, constant_coeffs):
        grid = SpectralGrid(1, 8)
        with pytest.raises(ValueError, match="observe_times"):
            evolve(SimState.zeros(grid), constant_coeffs, 1.0, observe_times=[0.5, 0.2])


class TestCheckpoint:
    """Raw float64 checkpoints with JSON sidecars."""

    def test_round_trip(self, periodic_coeffs, rng, tmp_path):
        grid = SpectralGrid(3, 16)
        s = SimState(1.25, GridField(grid, rng.normal(size=grid.n)), GridField(grid, rng.normal(size=grid.n)))
        raw, side = save_checkpoint(s, tmp_path / "state", periodic_coeffs, {"eps": 0.2})
        assert raw.stat().st_size == 2 * grid.n * 8
        back, meta = load_checkpoint(tmp_path / "state")
        assert back.t == 1.25
        assert np.array_equal(back.u.values, s.u.values)
        assert np.array_equal(back.v.values, s.v.values)
        assert meta["coeff_hash"] == periodic_coeffs.digest()
        assert meta["eps"] == 0.2
