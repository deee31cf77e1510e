"""Tests for Bloch operator matrices, bands, the cell solver and band projection."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bloch_boussinesq.bloch_spectrum import (CellFunction, PeriodicCoefficients,
                                             assemble_bloch_matrix, band_eigenpairs,
                                             cell_solve_L0, dispersion_curve, project_first_band)
from bloch_boussinesq.errors import DegenerateBranch, GapViolation, NonZeroMean
from bloch_boussinesq.spectral_core import GridField, SpectralGrid, bloch_forward


def collocation_operator(coeffs, l, n=64):
    """Independent pseudospectral matrix of L_l acting on point values."""
    x = np.arange(n) * 2 * np.pi / n
    k = np.fft.fftfreq(n, 1.0 / n) + l
    a, b, _ = coeffs.evaluate(x)

    def d(f):
        return np.fft.ifft(1j * k * np.fft.fft(f))

    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(-d(a * d(e)) + d(d(b * d(d(e)))))
    return np.array(cols).T


class TestPeriodicCoefficients:
    """Media validation."""

    def test_negative_a_rejected(self):
        with pytest.raises(ValueError, match="a must be positive"):
            PeriodicCoefficients.from_cosine_series([1.0, 1.5])

    def test_negative_b_rejected(self):
        with pytest.raises(ValueError, match="b must be positive"):
            PeriodicCoefficients.from_cosine_series([1.0], [0.5, 0.8])

    def test_complex_function_rejected(self):
        with pytest.raises(ValueError, match="real function"):
            PeriodicCoefficients(np.array([0.0, 1.0, 0.3j]), np.array([1.0]), np.array([1.0]))

    def test_even_flag_and_values(self, periodic_coeffs):
        """The periodic preset is even and evaluates to its cosine series."""
        assert periodic_coeffs.even_symmetric
        x = np.linspace(0, 2 * np.pi, 7)
        a, b, c = periodic_coeffs.evaluate(x)
        assert np.allclose(a, 1 + 0.5 * np.cos(x))
        assert np.allclose(b, 1.0)
        assert np.allclose(c, 1 + 0.3 * np.cos(x))

    def test_dict_round_trip(self, periodic_coeffs):
        back = PeriodicCoefficients.from_dict(periodic_coeffs.to_dict())
        assert back.digest() == periodic_coeffs.digest()


class TestAssembly:
    """Galerkin matrices of L_l."""

    def test_constant_diagonal(self, constant_coeffs):
        """Constant media give the diagonal symbol (j + l)^2 + (j + l)^4."""
        mat = assemble_bloch_matrix(constant_coeffs, 0.3, 8)
        kl = mat.modes + 0.3
        expected = np.diag(kl ** 2 + kl ** 4)
        assert np.max(np.abs(mat.entries - expected)) < 1e-14 * np.max(expected)

    def test_zero_mode_decouples_at_l0(self, periodic_coeffs):
        """At l = 0 the constant mode spans the kernel."""
        mat = assemble_bloch_matrix(periodic_coeffs, 0.0)
        M = mat.cell_cutoff
        assert np.max(np.abs(mat.entries[M])) == 0.0
        assert np.max(np.abs(mat.entries[:, M])) == 0.0

    def test_quadrature_oracle(self, stiff_coeffs):
        """Each column equals the Fourier coefficients of L_l applied to a basis mode."""
        l, M, n = 0.2, 16, 128
        mat = assemble_bloch_matrix(stiff_coeffs, l, M)
        x = np.arange(n) * 2 * np.pi / n
        a, b, _ = stiff_coeffs.evaluate(x)
        for jp in (-3, 0, 5):
            e = np.exp(1j * jp * x)
            # (d + il) acts on exp(i j x) as i (j + l); apply in physical space
            k = np.fft.fftfreq(n, 1.0 / n) + l

            def d(f):
                return np.fft.ifft(1j * k * np.fft.fft(f))

            image = -d(a * d(e)) + d(d(b * d(d(e))))
            spec = np.fft.fft(image) / n
            col = spec[mat.modes % n]
            assert np.max(np.abs(mat.entries[:, jp + M] - col)) < 1e-10

    def test_bloch_number_range(self, constant_coeffs):
        with pytest.raises(ValueError, match="outside"):
            assemble_bloch_matrix(constant_coeffs, 0.6)

    def test_cutoff_too_small(self):
        coeffs = PeriodicCoefficients.from_cosine_series([1.0, 0.1, 0.1, 0.1, 0.1, 0.1])
        with pytest.raises(ValueError, match="too small"):
            assemble_bloch_matrix(coeffs, 0.0, 8)

    @given(l=st.floats(-0.5, 0.5), a1=st.floats(-0.9, 0.9), c1=st.floats(-1, 1))
    def test_hermitian_and_semidefinite(self, l, a1, c1):
        """Matrices are Hermitian and their spectrum is non-negative."""
        coeffs = PeriodicCoefficients.from_cosine_series([1.0, a1], [1.0, 0.3 * a1], [1.0, c1])
        mat = assemble_bloch_matrix(coeffs, l).entries
        scale = np.max(np.abs(mat))
        assert np.max(np.abs(mat - mat.conj().T)) <= 1e-14 * scale
        assert np.linalg.eigvalsh(mat)[0] >= -1e-10 * scale


class TestBandEigenpairs:
    """Eigenpairs and phase normalization."""

    def test_constant_symbol(self, constant_coeffs):
        lam = band_eigenpairs(assemble_bloch_matrix(constant_coeffs, 0.1), 1)[0][0]
        assert lam == pytest.approx(0.0101, abs=1e-14)

    def test_zero_eigenvalue_simple(self, periodic_coeffs):
        """At l = 0 the lowest eigenvalue is 0, simple, with a constant eigenfunction."""
        pairs = band_eigenpairs(assemble_bloch_matrix(periodic_coeffs, 0.0), 2)
        assert abs(pairs[0][0]) < 1e-12
        assert pairs[1][0] > 0.5
        vec = pairs[0][1]
        M = (len(vec) - 1) // 2
        assert abs(vec[M]) == pytest.approx(1.0, abs=1e-12)

    def test_residual_and_orthonormality(self, periodic_coeffs):
        mat = assemble_bloch_matrix(periodic_coeffs, 0.27)
        pairs = band_eigenpairs(mat, 4)
        vecs = np.array([p[1] for p in pairs]).T
        assert np.allclose(vecs.conj().T @ vecs, np.eye(4), atol=1e-12)
        norm = np.linalg.norm(mat.entries, 2)
        for lam, v in pairs:
            assert np.linalg.norm(mat.entries @ v - lam * v) <= 1e-9 * norm

    def test_phase_real_positive_mean(self, periodic_coeffs):
        mat = assemble_bloch_matrix(periodic_coeffs, 0.15)
        vec = band_eigenpairs(mat, 1)[0][1]
        mean = vec[mat.cell_cutoff]
        assert mean.real > 0 and abs(mean.imag) < 1e-14

    def test_refinement_oracle(self, stiff_coeffs):
        """Doubling the cutoff changes lambda_1(0.2) by less than 1e-8."""
        lo = band_eigenpairs(assemble_bloch_matrix(stiff_coeffs, 0.2, 16), 1)[0][0]
        hi = band_eigenpairs(assemble_bloch_matrix(stiff_coeffs, 0.2, 32), 1)[0][0]
        assert abs(lo - hi) < 1e-8

    @pytest.mark.parametrize("l", [0.0, 0.1, 0.2, 0.37, 0.5])
    def test_collocation_oracle(self, periodic_coeffs, l):
        """Galerkin eigenvalues match an independent collocation discretization."""
        colloc = np.sort(np.linalg.eigvals(collocation_operator(periodic_coeffs, l)).real)[:2]
        pairs = band_eigenpairs(assemble_bloch_matrix(periodic_coeffs, l), 2)
        assert np.allclose([p[0] for p in pairs], colloc, atol=1e-9)

    def test_degenerate_branch(self, constant_coeffs):
        """Constant media at l = 1/2 have the crossing lambda_1 = lambda_2."""
        with pytest.raises(DegenerateBranch, match="lambda_2 - lambda_1"):
            band_eigenpairs(assemble_bloch_matrix(constant_coeffs, 0.5), 2, require_gap=True)

    def test_n_max_range(self, constant_coeffs):
        with pytest.raises(ValueError, match="n_max"):
            band_eigenpairs(assemble_bloch_matrix(constant_coeffs, 0.0, 4), 10)


class TestDispersionCurve:
    """Sampled bands."""

    def test_constant_curve(self, constant_coeffs):
        """lambda_1(l) = l^2 + l^4 on 50 samples."""
        l = np.linspace(-0.49, 0.49, 50)
        band = dispersion_curve(constant_coeffs, 1, l)
        assert np.max(np.abs(band.lam() - (l ** 2 + l ** 4))) < 1e-10

    def test_evenness(self, periodic_coeffs):
        l = np.linspace(0.0, 0.5, 26)
        band = dispersion_curve(periodic_coeffs, 1, np.concatenate([l, -l]))
        lam = band.lam()
        assert np.max(np.abs(lam[:26] - lam[26:])) < 1e-10

    def test_conjugate_eigenfunctions(self, periodic_coeffs):
        """w_1(-l) is the complex conjugate of w_1(l) in position space."""
        band = dispersion_curve(periodic_coeffs, 1, [0.2, -0.2])
        wp, wm = band.eigenfunctions
        assert np.max(np.abs(wm - np.conj(wp[::-1]))) < 1e-10

    def test_bands_ordered(self, periodic_coeffs):
        band = dispersion_curve(periodic_coeffs, 3, np.linspace(-0.5, 0.5, 21))
        assert np.all(np.diff(band.eigenvalues, axis=1) >= 0)
        assert np.all(band.lam(1) >= -1e-10)

    def test_gap_margin_positive_and_stable(self, stiff_coeffs):
        """The periodic medium opens a gap; the margin is stable under sample refinement."""
        coarse = dispersion_curve(stiff_coeffs, 1, np.linspace(-0.5, 0.5, 21))
        fine = dispersion_curve(stiff_coeffs, 1, np.linspace(-0.5, 0.5, 81))
        assert coarse.gap_margin > 0
        assert fine.gap_margin == pytest.approx(coarse.gap_margin)

    def test_constant_gap_closes_at_edge(self, constant_coeffs):
        """Constant media cross at l = 1/2, so the margin stops short of the edge."""
        band = dispersion_curve(constant_coeffs, 1, np.linspace(-0.5, 0.5, 21))
        assert 0.4 <= band.gap_margin < 0.5

    def test_csv_export(self, constant_coeffs, tmp_path):
        band = dispersion_curve(constant_coeffs, 2, [0.0, 0.25])
        lines = band.to_csv(tmp_path / "band.csv").read_text().splitlines()
        assert lines[0] == "l,lambda_1,lambda_2"
        assert len(lines) == 3

    def test_samples_outside_zone(self, constant_coeffs):
        with pytest.raises(ValueError, match="Bloch samples"):
            dispersion_curve(constant_coeffs, 1, [0.7])

    @given(l=st.floats(0.0, 0.5))
    def test_lambda_even(self, l):
        """lambda_1(-l) = lambda_1(l) for an even medium."""
        coeffs = PeriodicCoefficients.from_cosine_series([1.0, 0.5], [1.0], [1.0, 0.3])
        band = dispersion_curve(coeffs, 1, [l, -l])
        assert abs(band.lam()[0] - band.lam()[1]) < 1e-10


class TestCellSolve:
    """Zero-mean inversion of L_0."""

    def test_zero_rhs(self, periodic_coeffs):
        sol = cell_solve_L0(periodic_coeffs, CellFunction(np.zeros(5, dtype=complex)))
        assert np.max(np.abs(sol.coeffs)) == 0.0

    def test_constant_sine(self, constant_coeffs):
        """-u'' + u'''' = sin x has the solution sin(x)/2."""
        rhs = CellFunction(np.array([0.5j, 0.0, -0.5j]))
        sol = cell_solve_L0(constant_coeffs, rhs)
        x = np.linspace(0, 2 * np.pi, 11)
        assert np.max(np.abs(sol.evaluate(x) - 0.5 * np.sin(x))) < 1e-14

    def test_mean_rejected(self, constant_coeffs):
        with pytest.raises(NonZeroMean, match="cell mean"):
            cell_solve_L0(constant_coeffs, CellFunction(np.array([0.0, 1.0, 0.0], dtype=complex)))

    def test_residual_and_parity(self, stiff_coeffs):
        """Solving L_0 u = -0.5 sin x gives an odd u with small residual."""
        rhs = CellFunction(np.array([-0.25j, 0.0, 0.25j]))
        sol = cell_solve_L0(stiff_coeffs, rhs)
        x = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        assert np.max(np.abs(sol.evaluate(x) + sol.evaluate(-x))) < 1e-12
        mat = assemble_bloch_matrix(stiff_coeffs, 0.0, sol.max_mode).entries
        full = np.zeros_like(sol.coeffs)
        full[sol.max_mode - 1:sol.max_mode + 2] = rhs.coeffs
        assert np.linalg.norm(mat @ sol.coeffs - full) < 1e-10 * np.linalg.norm(full)

    @given(seed=st.integers(0, 2 ** 32 - 1), odd=st.booleans())
    def test_parity_preserved(self, seed, odd):
        """Odd right-hand sides give odd solutions and even give even."""
        coeffs = PeriodicCoefficients.from_cosine_series([1.0, 0.5, 0.1], [1.0, 0.2])
        rng = np.random.default_rng(seed)
        half = rng.normal(size=4)
        if odd:
            cfs = np.concatenate([-half[::-1], [0.0], half]) * 1j
        else:
            cfs = np.concatenate([half[::-1], [0.0], half]).astype(complex)
        sol = cell_solve_L0(coeffs, CellFunction(cfs))
        x = np.linspace(0, 2 * np.pi, 32, endpoint=False)
        sign = -1.0 if odd else 1.0
        assert np.max(np.abs(sol.evaluate(-x) - sign * sol.evaluate(x))) < 1e-10 * max(1.0, sol.norm())


@pytest.fixture(scope="module")
def setup(periodic_coeffs):
    grid = SpectralGrid(8, 16)
    band = dispersion_curve(periodic_coeffs, 1, np.linspace(-0.5, 0.5, 41))
    return grid, band


class TestProjection:
    """First-band projection of Bloch fields."""

    def test_eigenmode_projects_to_itself(self, setup):
        grid, band = setup
        r0 = 5
        l0 = grid.bloch_numbers[r0]
        _, w1 = band.eigenpair(float(l0))
        values = w1.evaluate(grid.x) * np.exp(1j * l0 * grid.x)
        amp, rem = project_first_band(bloch_forward(GridField(grid, values)), band, 0.4)
        assert abs(amp[r0]) > 1.0
        assert np.max(np.abs(np.delete(amp, r0))) < 1e-10
        assert np.max(np.abs(rem.coeffs)) < 1e-10

    def test_second_band_orthogonal(self, setup, periodic_coeffs):
        grid, band = setup
        r0 = 5
        l0 = float(grid.bloch_numbers[r0])
        mat = assemble_bloch_matrix(periodic_coeffs, l0, band.cell_cutoff)
        w2 = CellFunction(band_eigenpairs(mat, 2)[1][1])
        values = w2.evaluate(grid.x) * np.exp(1j * l0 * grid.x)
        amp, _ = project_first_band(bloch_forward(GridField(grid, values)), band, 0.4)
        assert np.max(np.abs(amp)) < 1e-8

    def test_pythagoras(self, setup, rng):
        """Band part and remainder are orthogonal and add up to the input."""
        grid, band = setup
        b = bloch_forward(GridField(grid, rng.normal(size=grid.n)))
        amp, rem = project_first_band(b, band, 0.3)
        part = b.coeffs - rem.coeffs
        assert np.sum(np.abs(b.coeffs) ** 2) == pytest.approx(
            np.sum(np.abs(part) ** 2) + np.sum(np.abs(rem.coeffs) ** 2), rel=1e-10)
        inside = np.abs(grid.bloch_numbers) <= 0.3
        assert np.max(np.abs(amp[~inside])) == 0.0

    def test_gap_violation(self, setup):
        grid, band = setup
        b = bloch_forward(GridField(grid, np.zeros(grid.n)))
        with pytest.raises(GapViolation, match="exceeds gap margin"):
            project_first_band(b, band, band.gap_margin + 0.1)
