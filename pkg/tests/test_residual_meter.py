"""Tests for residual evaluation and power-law fits."""

import types

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from bloch_boussinesq.amplitude_sim import AmplitudeField, KdVEquation, gaussian_profile, kdv_evolve
from bloch_boussinesq.approximant import build_approximant, make_grids
from bloch_boussinesq.boussinesq_sim import BoussinesqOperator
from bloch_boussinesq.effective_model import assemble_amplitude_coefficients
from bloch_boussinesq.errors import NonZeroMean
from bloch_boussinesq.residual_meter import (NORMS, ResidualTrace, fit_power_law, residual_field,
                                             residual_trace, scaling_fit, write_traces_csv)
from bloch_boussinesq.spectral_core import GridField, SpectralGrid


def kdv_leading(model, eps, slow_cells=6, P=32, level="leading", amplitude=1.0, width=2.0):
    grid, slow = make_grids(eps, slow_cells, P)
    A0 = AmplitudeField(slow, gaussian_profile(slow, amplitude, width))
    traj = kdv_evolve(A0, model, 0.2, sample_times=[0.0, 0.1, 0.2])
    return build_approximant("kdv", model, grid, traj, eps, level)


def make_trace(eps, scale=1.0, power=3.5):
    v = scale * eps ** power
    return ResidualTrace(eps, "kdv", "leading", [0.0, 1.0], [v, v / 2], [v, v], [v, v], [v, v])


class TestResidualField:
    """The residual of the full equation on an approximant."""

    def test_homogeneous_kdv_leading_term(self, constant_model):
        """In the constant medium the leading KdV residual is -eps^8 A_TT(eps x, 0)."""
        eps = 0.25
        approx = kdv_leading(constant_model, eps)
        res = residual_field(approx, 0.0).values
        co = assemble_amplitude_coefficients(constant_model, "kdv")
        slow = approx.trajectory.grid
        eq = KdVEquation(slow, co.dispersion, co.nonlinearity)
        A = approx.trajectory.states[0][0]
        F = eq.rhs((A,))[0]
        h = 1e-4
        # A_TT = DF(A)[F(A)] by a centered difference, independent of the jets
        A_tt = (eq.rhs((A + h * F,))[0] - eq.rhs((A - h * F,))[0]) / (2 * h)
        # slow grid points coincide with every (n / slow.n)-th big grid point at t = 0
        stride = approx.grid.n // slow.n
        expected = -eps ** 8 * A_tt
        assert np.max(np.abs(res[::stride] - expected)) < 1e-5 * np.max(np.abs(expected))

    def test_mean_free(self, periodic_model):
        approx = kdv_leading(periodic_model, 0.3, slow_cells=36, P=16, width=20.0)
        res = residual_field(approx, approx.times[1]).values
        assert abs(np.mean(res)) < 1e-10 * np.sqrt(np.mean(res ** 2))

    def test_nonzero_mean_detected(self, constant_coeffs):
        """An inconsistent second time derivative leaves a mean and is rejected."""
        grid = SpectralGrid(2, 16)
        stub = types.SimpleNamespace(
            grid=grid,
            operator=BoussinesqOperator(constant_coeffs, grid),
            synthesize=lambda t: GridField(grid, np.cos(grid.x)),
            synthesize_dt2=lambda t: GridField(grid, np.ones(grid.n)),
        )
        with pytest.raises(NonZeroMean, match="residual mean"):
            residual_field(stub, 0.0)

    def test_improved_beats_leading(self, periodic_model):
        """Stable-part corrections lower the residual in the periodic medium."""
        lead = kdv_leading(periodic_model, 0.3, slow_cells=36, P=16, width=20.0)
        imp = kdv_leading(periodic_model, 0.3, slow_cells=36, P=16, width=20.0, level="improved")
        r_lead = residual_trace(lead, [1])
        r_imp = residual_trace(imp, [1])
        assert r_imp.sup("l2") < 0.1 * r_lead.sup("l2")
        assert r_imp.sup("inv_l2") < r_lead.sup("inv_l2")


class TestTrace:
    """Residual traces."""

    def test_norm_ordering(self, constant_model):
        tr = residual_trace(kdv_leading(constant_model, 0.25))
        assert tr.times.shape == (3,)
        assert np.all(tr.h1 >= tr.l2)
        assert np.all(tr.inv_h1 >= tr.inv_l2)

    def test_shape_checked(self):
        with pytest.raises(ValueError, match="has shape"):
            ResidualTrace(0.1, "kdv", "leading", [0.0, 1.0], [1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            ResidualTrace(0.1, "kdv", "leading", [0.0], [np.nan], [1.0], [1.0], [1.0])

    def test_unknown_norm(self):
        with pytest.raises(ValueError, match="unknown norm"):
            make_trace(0.1).sup("h7")

    def test_csv_export(self, tmp_path):
        path = write_traces_csv([make_trace(0.1), make_trace(0.2)], tmp_path / "res.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "eps,t," + ",".join(NORMS)
        assert len(lines) == 5
        assert float(lines[1].split(",")[0]) == 0.1


class TestFits:
    """Power-law fits of sup-in-time residuals."""

    def test_exact_power_law(self):
        fits = scaling_fit([make_trace(e, 3.0) for e in (0.3, 0.25, 0.2, 0.15)])
        for fit in fits.values():
            assert fit.slope == pytest.approx(3.5, abs=1e-12)
            assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)
            assert fit.half_width < 1e-10
            assert fit.within(3.5, 1e-9)

    def test_two_points_have_no_interval(self):
        fit = fit_power_law([0.2, 0.1], [4.0, 1.0])
        assert fit.slope == pytest.approx(2.0)
        assert fit.half_width == 0.0
        assert fit.to_dict()["n"] == 2

    def test_too_few_traces(self):
        with pytest.raises(ValueError, match="at least two"):
            scaling_fit([make_trace(0.1)])

    def test_repeated_eps(self):
        with pytest.raises(ValueError, match="distinct"):
            scaling_fit([make_trace(0.1), make_trace(0.1)])

    @given(slope=st.floats(0.5, 8.0), scale=st.floats(1e-3, 1e3),
           eps=st.lists(st.floats(0.05, 0.5), min_size=3, max_size=6, unique=True))
    def test_fit_exact_on_power_laws(self, slope, scale, eps):
        """Exact power laws are recovered for any distinct eps set."""
        assume(max(eps) / min(eps) >= 1.2)
        fit = fit_power_law(eps, [scale * e ** slope for e in eps])
        assert fit.slope == pytest.approx(slope, abs=1e-8)
        assert fit.residual < 1e-10
