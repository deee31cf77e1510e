"""Shared fixtures and hypothesis profile."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bloch_boussinesq.bloch_spectrum import PeriodicCoefficients
from bloch_boussinesq.effective_model import build_effective_model
from bloch_boussinesq.experiment import ExperimentConfig

settings.register_profile(
    "artifact", max_examples=100, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("artifact")


@pytest.fixture(scope="session")
def constant_coeffs():
    return PeriodicCoefficients.constant()


@pytest.fixture(scope="session")
def periodic_coeffs():
    return ExperimentConfig(medium="periodic").coefficients()


@pytest.fixture(scope="session")
def stiff_coeffs():
    """a = 1 + 0.5 cos x, b = c = 1."""
    return PeriodicCoefficients.from_cosine_series([1.0, 0.5])


@pytest.fixture(scope="session")
def constant_model(constant_coeffs):
    return build_effective_model(constant_coeffs)


@pytest.fixture(scope="session")
def periodic_model(periodic_coeffs):
    return build_effective_model(periodic_coeffs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def band_limited(grid, rng, fraction=1 / 3, real=True):
    """Random field with modes below ``fraction`` of the grid Nyquist index."""
    n = grid.n
    spec = np.zeros(n, dtype=complex)
    idx = np.fft.fftfreq(n, d=1.0 / n)
    mask = np.abs(idx) < fraction * n / 2
    spec[mask] = rng.normal(size=mask.sum()) + 1j * rng.normal(size=mask.sum())
    values = np.fft.ifft(spec) * n
    return values.real if real else values


# acceptance criteria register their outcome here; one line each is printed at the end
ACCEPTANCE: dict = {}


def record_criterion(number, title, passed, detail=""):
    """Add one part of an acceptance criterion; a criterion passes if all its parts do."""
    entry = ACCEPTANCE.setdefault(number, {"title": title, "parts": []})
    entry["parts"].append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        ok = all(p for p, _ in entry["parts"])
        details = "; ".join(d for _, d in entry["parts"] if d)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2} "
                                    f"{entry['title']}: {details}")
