"""Residual of the full equation on an approximant, and power-law fits.

For an approximation ``Psi`` the residual is

    Res = -Psi_tt + (a Psi_x)_x - (b Psi_xx)_xx + (c (Psi^2)_x)_x,

evaluated spectrally on the big torus.  Every term except ``-Psi_tt`` is a
divergence, and ``Psi_tt`` is one through the amplitude equation, so the
residual is mean-free and ``d_x^{-1} Res`` is well defined.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .approximant import Approximant
from .errors import NonZeroMean
from .spectral_core import GridField

__all__ = [
    "NORMS",
    "ResidualTrace",
    "residual_field",
    "residual_trace",
    "ScalingFit",
    "scaling_fit",
    "fit_power_law",
    "write_traces_csv",
]

NORMS = ("l2", "h1", "inv_l2", "inv_h1")
MEAN_TOL = 1e-10


def residual_field(approx: Approximant, t: float) -> GridField:
    """Residual of the full PDE on ``approx`` at time ``t``.

    Raises
    ------
    NonZeroMean
        If the residual mean exceeds ``1e-10`` of its rms value, which means
        the second time derivative is inconsistent with the amplitude flow.
    """
    psi = approx.synthesize(t).values
    psi_tt = approx.synthesize_dt2(t).values
    res = -psi_tt + approx.operator.apply(psi)
    grid = approx.grid
    rms = grid.rms(res)
    if abs(np.mean(res)) > MEAN_TOL * max(rms, 1e-300):
        raise NonZeroMean(f"residual mean {np.mean(res):.3e} at t={t:.6g} (rms {rms:.3e})")
    return GridField(grid, res)


@dataclass
class ResidualTrace:
    """Residual norms of one approximant at a set of times."""

    eps: float
    kind: str
    level: str
    times: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    inv_l2: np.ndarray
    inv_h1: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("times",) + NORMS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.times.size
        for name in NORMS:
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    def sup(self, norm: str) -> float:
        """Maximum of a norm over the sampled times."""
        if norm not in NORMS:
            raise ValueError(f"unknown norm {norm!r}")
        return float(np.max(getattr(self, norm)))

    def rows(self) -> list[tuple]:
        return [(self.eps, float(t), *(float(getattr(self, n)[i]) for n in NORMS))
                for i, t in enumerate(self.times)]


def residual_trace(approx: Approximant, indices: Sequence[int] | None = None) -> ResidualTrace:
    """Residual norms at the approximant's sample times.

    Parameters
    ----------
    approx : Approximant
    indices : sequence of int, optional
        Sample indices to use; all samples by default.
    """
    idx = range(len(approx.times)) if indices is None else list(indices)
    grid = approx.grid
    times, cols = [], {n: [] for n in NORMS}
    for i in idx:
        t = float(approx.times[i])
        res = residual_field(approx, t).values
        inv = grid.antidiff(res)
        times.append(t)
        cols["l2"].append(grid.norm(res, 0.0))
        cols["h1"].append(grid.norm(res, 1.0))
        cols["inv_l2"].append(grid.norm(inv, 0.0))
        cols["inv_h1"].append(grid.norm(inv, 1.0))
    return ResidualTrace(approx.eps, approx.kind, approx.level, np.array(times),
                         **{n: np.array(v) for n, v in cols.items()})


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares power law ``value ~ C eps^slope``.

    ``half_width`` is the 95% confidence half-width of the slope from the fit
    residual (zero for two points or an exact power law).
    """

    slope: float
    intercept: float
    half_width: float
    residual: float
    n: int

    def within(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "half_width": self.half_width, "residual": self.residual, "n": self.n}


def fit_power_law(eps: Sequence[float], values: Sequence[float]) -> ScalingFit:
    """Fit ``log value = intercept + slope * log eps``."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    n = x.size
    design = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    half = 0.0
    if n > 2:
        sxx = float(np.sum((x - x.mean()) ** 2))
        se = np.sqrt(rss / (n - 2) / sxx)
        half = float(stats.t.ppf(0.975, n - 2) * se)
    return ScalingFit(float(coef[0]), float(coef[1]), half, float(np.sqrt(rss / n)), n)


def scaling_fit(traces: Sequence[ResidualTrace]) -> dict[str, ScalingFit]:
    """Fit the sup-in-time of every residual norm against ``eps``.

    Raises
    ------
    ValueError
        With fewer than two traces or repeated ``eps`` values.
    """
    if len(traces) < 2:
        raise ValueError("need at least two eps values")
    eps = [tr.eps for tr in traces]
    if len(set(eps)) != len(eps):
        raise ValueError("eps values must be distinct")
    return {n: fit_power_law(eps, [tr.sup(n) for tr in traces]) for n in NORMS}


def write_traces_csv(traces: Sequence[ResidualTrace], path: str | Path) -> Path:
    """CSV with columns ``eps, t, l2, h1, inv_l2, inv_h1``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("eps", "t") + NORMS)
        for tr in traces:
            for row in tr.rows():
                writer.writerow([f"{v:.17g}" for v in row])
    return path
