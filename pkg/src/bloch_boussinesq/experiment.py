"""Experiment configuration, validation sweeps and report files.

A validation run takes one medium, one amplitude equation and a list of
``eps`` values.  For each ``eps`` it builds the effective model, integrates
the amplitude equation, synthesizes the (improved) approximant, measures the
residual, runs the full equation from well-prepared data and audits the error
energy.  Slopes are then fitted against ``eps`` and compared with the
expected exponents.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .amplitude_sim import (AmplitudeField, WhithamState, burgers_evolve, gaussian_profile,
                            kdv_evolve, whitham_evolve)
from .approximant import ALPHA, Approximant, build_approximant, make_grids, ansatz_error
from .bloch_spectrum import PeriodicCoefficients
from .boussinesq_sim import SimState, StepperConfig, evolve
from .effective_model import EffectiveModel, build_effective_model
from .energy_meter import (ErrorState, build_energy_operator, error_energy, fit_drift_exponent,
                           gronwall_audit, hamiltonian, relative_drift_rate)
from .errors import BoussinesqError, ConfigError, NonPositiveValue
from .residual_meter import NORMS, fit_power_law, residual_field, residual_trace
from .spectral_core import (BlochField, GridField, SpectralGrid, bloch_convolve, bloch_forward,
                            bloch_inverse)

__all__ = [
    "SCHEMA_VERSION",
    "OUTPUT_ENV",
    "MEDIA",
    "ExperimentConfig",
    "preset_config",
    "PRESETS",
    "EpsRecord",
    "ScalingReport",
    "ModelCache",
    "run_single",
    "run_validation",
    "fit_convergence_rate",
    "report_emit",
    "load_report",
    "bloch_selftest",
]

SCHEMA_VERSION = 1
OUTPUT_ENV = "BLOCH_BOUSSINESQ_OUT"

MEDIA = {
    "constant": {"a": [1.0], "b": [1.0], "c": [1.0]},
    "periodic": {"a": [1.0, 0.5], "b": [1.0], "c": [1.0, 0.3]},
}

# per medium: slow cells, and (amplitude, width) per kind
_MEDIUM_DEFAULTS = {
    "constant": {"slow_cells": 6, "profile": {"kdv": (1.0, 2.0), "burgers": (1.0, 2.0),
                                              "whitham": (0.05, 4.0)}},
    "periodic": {"slow_cells": 36, "profile": {"kdv": (1.0, 20.0), "burgers": (1.0, 20.0),
                                               "whitham": (0.04, 20.0)}},
}

# expected exponents: (target, tolerance) per quantity
RESIDUAL_TARGETS = {
    "kdv": {"h1": 7.5, "inv_l2": 6.5},
    "burgers": {"l2": 5.5, "inv_l2": 4.5},
    "whitham": {"h1": 3.5, "inv_l2": 2.5},
}
ERROR_TARGETS = {"kdv": (2.5, 0.3), "burgers": (1.5, 0.3)}
GROWTH_RATIO_MAX = 2.0
DRIFT_TOL = 0.5


def _default_output() -> str:
    return os.environ.get(OUTPUT_ENV, "results")


@dataclass
class ExperimentConfig:
    """Everything that determines a validation run.

    ``medium`` is a preset name or a mapping with cosine series ``a``, ``b``,
    ``c``.  ``frame`` is ``"auto"`` (locked by the residual at the largest
    ``eps``) or ``+1``/``-1``.
    """

    kind: str = "kdv"
    medium: object = "constant"
    level: str = "improved"
    eps: list = field(default_factory=lambda: [0.3, 0.25, 0.2, 0.15])
    T0: float = 1.0
    profile: dict = field(default_factory=dict)
    slow_cells: int | None = None
    points_per_cell: int = 16
    slow_points: int = 256
    samples: int = 51
    stability_margin: float = 0.5
    flux: str = "quadratic"
    frame: object = "auto"
    run_pde: bool = True
    energy: bool = True
    workers: int = 1
    seed: int = 0
    output: str = field(default_factory=_default_output)

    def __post_init__(self):
        self.eps = [float(e) for e in self.eps]
        defaults = _MEDIUM_DEFAULTS.get(self.medium_name, _MEDIUM_DEFAULTS["periodic"])
        if self.slow_cells is None:
            self.slow_cells = defaults["slow_cells"]
        if not self.profile and self.kind in defaults["profile"]:
            amp, width = defaults["profile"][self.kind]
            self.profile = {"family": "gaussian", "amplitude": amp, "width": width}
        self.validate()

    @property
    def medium_name(self) -> str:
        return self.medium if isinstance(self.medium, str) else "custom"

    @property
    def alpha(self) -> int:
        return ALPHA[self.kind]

    def validate(self) -> None:
        """Raise ConfigError on anything that would fail later."""
        if self.kind not in ALPHA:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.level not in ("leading", "improved"):
            raise ConfigError(f"unknown level {self.level!r}")
        if not self.eps:
            raise ConfigError("eps list is empty")
        if any(not 0 < e < 1 for e in self.eps):
            raise ConfigError("eps values must lie in (0, 1)")
        if len(set(self.eps)) != len(self.eps):
            raise ConfigError("eps values must be distinct")
        if isinstance(self.medium, str) and self.medium not in MEDIA:
            raise ConfigError(f"unknown medium preset {self.medium!r}")
        if self.T0 <= 0:
            raise ConfigError("T0 must be positive")
        if self.profile.get("family", "gaussian") != "gaussian":
            raise ConfigError(f"unknown profile family {self.profile.get('family')!r}")
        if self.points_per_cell % 2 or self.points_per_cell < 4:
            raise ConfigError("points_per_cell must be an even integer >= 4")
        if self.samples < 2:
            raise ConfigError("need at least two time samples")
        if self.frame not in ("auto", 1, -1):
            raise ConfigError("frame must be 'auto', 1 or -1")
        if not 0 < self.stability_margin <= 1:
            raise ConfigError("stability_margin must lie in (0, 1]")
        for e in self.eps:
            cells = self.slow_cells / e
            if abs(cells - round(cells)) > 1e-9:
                raise ConfigError(f"slow_cells/eps = {cells:.6g} is not an integer for eps={e}")

    def coefficients(self) -> PeriodicCoefficients:
        spec = MEDIA[self.medium] if isinstance(self.medium, str) else self.medium
        try:
            return PeriodicCoefficients.from_cosine_series(spec["a"], spec.get("b", [1.0]),
                                                           spec.get("c", [1.0]),
                                                           name=self.medium_name)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad medium specification: {exc}") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict(data.get("experiment", data))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = self.to_dict()
        given = {k: v for k, v in kw.items() if v is not None}
        if any(k in given and given[k] != data[k] for k in ("kind", "medium")):
            # medium and kind defaults are re-derived unless given explicitly
            data.setdefault("slow_cells", None)
            data["slow_cells"] = given.pop("slow_cells", None)
            data["profile"] = given.pop("profile", {})
        data.update(given)
        return ExperimentConfig.from_dict(data)


PRESETS = [f"{k}-{m}" for m in MEDIA for k in ALPHA]


def preset_config(name: str, **overrides) -> ExperimentConfig:
    """Named preset ``<kind>-<medium>``, e.g. ``kdv-periodic``."""
    try:
        kind, medium = name.split("-", 1)
    except ValueError:
        raise ConfigError(f"preset {name!r} is not of the form kind-medium") from None
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return ExperimentConfig(kind=kind, medium=medium).with_overrides(**overrides)


class ModelCache:
    """Effective models keyed by the coefficient digest, optionally on disk."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[str, EffectiveModel] = {}
        self.hits = 0

    def get(self, coeffs: PeriodicCoefficients) -> EffectiveModel:
        key = coeffs.digest()
        if key in self._mem:
            self.hits += 1
            return self._mem[key]
        path = self.directory / f"model_{key}.json" if self.directory else None
        if path is not None and path.exists():
            model = EffectiveModel.load(path)
            self.hits += 1
        else:
            model = build_effective_model(coeffs)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                model.save(path)
        self._mem[key] = model
        return model


@dataclass
class EpsRecord:
    """Per-``eps`` outcome; trace arrays are kept for the CSV tables."""

    eps: float
    status: str = "ok"
    frame: int = 1
    residual: dict = field(default_factory=dict)
    error: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "status": self.status, "frame": self.frame,
                "residual": self.residual, "error": self.error, "energy": self.energy}


@dataclass
class ScalingReport:
    """Per-``eps`` records, fitted slopes and threshold checks."""

    config: dict
    records: list
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    frame: int = 1
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def check(self, name: str) -> dict:
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def ok_records(self) -> list:
        return [r for r in self.records if r.status == "ok"]

    def summary(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "config": self.config, "frame": self.frame,
                "records": [r.to_dict() for r in self.records], "fits": self.fits,
                "checks": self.checks, "passed": self.passed, "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(_plain(self.summary()), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_summary(cls, data: dict) -> "ScalingReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {data.get('schema_version')}")
        records = [EpsRecord(**r) for r in data["records"]]
        return cls(data["config"], records, data["fits"], data["checks"], data["frame"],
                   data["metadata"])


def _plain(obj):
    """Convert numpy scalars and arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# single-eps pipeline ------------------------------------------------------

def _trajectory(cfg: ExperimentConfig, model: EffectiveModel, slow):
    prof = cfg.profile
    A0 = gaussian_profile(slow, prof["amplitude"], prof["width"])
    times = np.linspace(0.0, cfg.T0, cfg.samples)
    if cfg.kind == "kdv":
        return kdv_evolve(AmplitudeField(slow, A0), model, cfg.T0, sample_times=times)
    if cfg.kind == "burgers":
        return burgers_evolve(AmplitudeField(slow, A0), model, cfg.T0, sample_times=times,
                              corrector=cfg.level == "improved")
    return whitham_evolve(WhithamState(slow, A0, np.zeros_like(A0)), model, cfg.T0,
                          sample_times=times, flux=cfg.flux)


def build_for_eps(cfg: ExperimentConfig, eps: float, model: EffectiveModel,
                  frame: int = 1) -> Approximant:
    """Approximant for one ``eps`` from a config."""
    grid, slow = make_grids(eps, cfg.slow_cells, cfg.points_per_cell, cfg.slow_points)
    traj = _trajectory(cfg, model, slow)
    return build_approximant(cfg.kind, model, grid, traj, eps, cfg.level, frame)


def lock_frame(cfg: ExperimentConfig, model: EffectiveModel) -> tuple[int, dict]:
    """Pick the frame sign with the smaller residual at the largest ``eps``.

    The residual is compared at the last sample, where the two phases differ
    most.  Whitham waves do not travel in the chosen scaling, so ``+1`` is
    returned for them.
    """
    if cfg.frame != "auto":
        return int(cfg.frame), {}
    if cfg.kind == "whitham":
        return 1, {}
    eps = max(cfg.eps)
    norms = {}
    for sign in (1, -1):
        approx = build_for_eps(cfg, eps, model, sign)
        res = residual_field(approx, float(approx.times[-1]))
        norms[sign] = approx.grid.norm(res.values, 1.0)
    best = min(norms, key=lambda s: norms[s])
    return best, {str(k): v for k, v in norms.items()}


def run_single(cfg: ExperimentConfig, eps: float, model: EffectiveModel, frame: int) -> EpsRecord:
    """Residual, error and energy measurements for one ``eps``."""
    rec = EpsRecord(eps=eps, frame=frame)
    approx = build_for_eps(cfg, eps, model, frame)
    tr = residual_trace(approx)
    rec.residual = {n: tr.sup(n) for n in NORMS}
    rec.traces["residual"] = tr
    if not cfg.run_pde:
        return rec
    coeffs = model.coeffs
    grid = approx.grid
    state0 = SimState(0.0, approx.synthesize(0.0), approx.synthesize_dt(0.0))
    times = [float(t) for t in approx.times]
    run = evolve(state0, coeffs, times[-1], StepperConfig(stability_margin=cfg.stability_margin),
                 observers=[lambda s: (s.u.values.copy(), s.v.values.copy())],
                 observe_times=times)
    snaps = [(i, rec_[1][0]) for i, rec_ in enumerate(run.records)]
    err = ansatz_error(approx, [(i, u) for i, (u, _) in snaps])
    rec.error = {"h1": float(np.max(err["h1"])), "h2": float(np.max(err["h2"])),
                 "steps": run.steps, "dt": run.dt}
    rec.traces["error"] = err
    if not cfg.energy:
        return rec
    alpha = approx.alpha
    scale = eps ** alpha
    E, H = [], []
    for i, (u, v) in snaps:
        t = times[i]
        psi = approx.synthesize(t)
        es = ErrorState.from_difference(GridField(grid, u), GridField(grid, v), psi,
                                        approx.synthesize_dt(t), eps, alpha)
        op = build_energy_operator(coeffs, GridField(grid, psi.values / scale), eps, alpha,
                                   dense=False)
        E.append(error_energy(es, op))
        H.append(hamiltonian(es, op))
    E, H = np.array(E), np.array(H)
    audit = gronwall_audit(times, E, eps, alpha, cfg.T0, hamiltonian_trace=H)
    rel_drift = relative_drift_rate(times, H)
    rec.energy = {**audit.to_dict(), "relative_drift": rel_drift}
    rec.traces["energy"] = {"t": np.asarray(times), "E": E, "H": H}
    return rec


def _worker(args):
    cfg_dict, eps, model_json, frame = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    model = EffectiveModel.from_json(model_json)
    return _guarded(cfg, eps, model, frame)


def _guarded(cfg, eps, model, frame) -> EpsRecord:
    try:
        return run_single(cfg, eps, model, frame)
    except BoussinesqError as exc:
        return EpsRecord(eps=eps, status=f"failed: {type(exc).__name__}: {exc}", frame=frame)


# sweep and checks ---------------------------------------------------------

def fit_convergence_rate(pairs: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares ``(slope, intercept, rms fit residual)`` in log-log.

    Raises
    ------
    NonPositiveValue
        If any ``eps`` or value is not positive.
    ValueError
        With fewer than two pairs.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two (eps, value) pairs")
    eps = np.array([p[0] for p in pairs], dtype=float)
    vals = np.array([p[1] for p in pairs], dtype=float)
    if np.any(eps <= 0) or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise NonPositiveValue("log-log fit needs positive finite values")
    fit = fit_power_law(eps, vals)
    return fit.slope, fit.intercept, fit.residual


def _slope_entry(pairs) -> dict:
    slope, intercept, resid = fit_convergence_rate(pairs)
    fit = fit_power_law([p[0] for p in pairs], [p[1] for p in pairs])
    return {"slope": slope, "intercept": intercept, "residual": resid,
            "half_width": fit.half_width, "n": len(pairs)}


def _check(name, value, target, tol, passed=None) -> dict:
    ok = abs(value - target) <= tol if passed is None else passed
    return {"name": name, "value": value, "target": target, "tol": tol, "passed": bool(ok)}


def _evaluate(cfg: ExperimentConfig, records: list) -> tuple[dict, list]:
    ok = sorted((r for r in records if r.status == "ok"), key=lambda r: r.eps)
    fits: dict = {}
    checks: list = []
    tol_res = 0.5 if cfg.medium_name == "constant" else 0.7
    if len(ok) < 2:
        checks.append({"name": "enough_eps", "value": len(ok), "target": 2, "tol": 0,
                       "passed": False})
        return fits, checks
    fits["residual"] = {n: _slope_entry([(r.eps, r.residual[n]) for r in ok]) for n in NORMS}
    if cfg.level == "improved":
        for norm, target in RESIDUAL_TARGETS[cfg.kind].items():
            checks.append(_check(f"residual_{norm}", fits["residual"][norm]["slope"], target,
                                 tol_res))
    if cfg.run_pde and all(r.error for r in ok):
        fits["error"] = {n: _slope_entry([(r.eps, r.error[n]) for r in ok]) for n in ("h1", "h2")}
        if cfg.kind in ERROR_TARGETS:
            target, tol = ERROR_TARGETS[cfg.kind]
            checks.append(_check("error_h1", fits["error"]["h1"]["slope"], target, tol))
        else:
            errs = [r.error["h1"] for r in ok]
            finite = all(np.isfinite(errs))
            monotone = all(a < b for a, b in zip(errs, errs[1:]))
            checks.append(_check("error_bounded_monotone", float(fits["error"]["h1"]["slope"]),
                                 0.0, 0.0, passed=finite and monotone))
    if cfg.run_pde and cfg.energy and all(r.energy for r in ok):
        alpha = cfg.alpha
        gammas = [r.energy["growth_rate"] for r in ok]
        finite = all(r.energy["finite"] and r.energy["passed"] for r in ok)
        checks.append(_check("energy_finite", float(max(r.energy["sup_energy"] for r in ok)),
                             0.0, 0.0, passed=finite))
        positive = [g for g in gammas if g > 0]
        ratio = max(positive) / min(positive) if len(positive) == len(gammas) else float("inf")
        checks.append(_check("energy_growth_ratio", ratio, 1.0, GROWTH_RATIO_MAX - 1.0))
        rel = [r.energy["relative_drift"] for r in ok]
        absolute = [r.energy["drift_rate"] for r in ok]
        fits["drift"] = {"relative": fit_drift_exponent([r.eps for r in ok], rel),
                         "absolute": fit_drift_exponent([r.eps for r in ok], absolute)}
        checks.append(_check("hamiltonian_drift", fits["drift"]["relative"], 1 + alpha, DRIFT_TOL))
    return fits, checks


def _metadata() -> dict:
    from . import __version__
    return {"package": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_validation(config: ExperimentConfig, cache: ModelCache | None = None,
                   strict: bool = False) -> ScalingReport:
    """Sweep ``config.eps`` and fit the scaling exponents.

    Errors of a single ``eps`` are recorded in its status and the remaining
    values still run; with ``strict=True`` the first one is re-raised with the
    offending ``eps`` in the message.
    """
    config.validate()
    cache = cache or ModelCache()
    model = cache.get(config.coefficients())
    frame, frame_norms = lock_frame(config, model)
    eps_list = sorted(config.eps, reverse=True)
    if config.workers > 1:
        jobs = [(config.to_dict(), e, model.to_json(), frame) for e in eps_list]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_worker, jobs))
    else:
        records = [_guarded(config, e, model, frame) for e in eps_list]
    if strict:
        for r in records:
            if r.status != "ok":
                raise BoussinesqError(f"eps={r.eps}: {r.status}")
    fits, checks = _evaluate(config, records)
    meta = {**_metadata(), "frame_residuals": frame_norms, "model": {
        "wave_speed": model.wave_speed, "lambda2": model.lambda2, "lambda4": model.lambda4,
        "nu2": model.nu2, "gap": model.gap}}
    return ScalingReport(config.to_dict(), records, fits, checks, frame, meta)


# output -------------------------------------------------------------------

def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return path


def report_emit(report: ScalingReport, directory: str | Path | None = None,
                formats: Sequence[str] = ("csv", "json", "dat")) -> list[Path]:
    """Write CSV tables, the JSON summary and gnuplot data files.

    CSV schemas: ``residual.csv`` (eps, t, l2, h1, inv_l2, inv_h1),
    ``error.csv`` (eps, t, h1, h2), ``energy.csv`` (eps, t, E, H).
    """
    out = Path(directory if directory is not None else report.config.get("output", "results"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    recs = sorted(report.records, key=lambda r: -r.eps)
    if "csv" in formats:
        res_rows, err_rows, en_rows = [], [], []
        for r in recs:
            tr = r.traces.get("residual")
            if tr is not None:
                res_rows.extend(tr.rows())
            er = r.traces.get("error")
            if er is not None:
                err_rows.extend((r.eps, float(t), float(a), float(b))
                                for t, a, b in zip(er["t"], er["h1"], er["h2"]))
            en = r.traces.get("energy")
            if en is not None:
                en_rows.extend((r.eps, float(t), float(e), float(h))
                               for t, e, h in zip(en["t"], en["E"], en["H"]))
        written.append(_write_csv(out / "residual.csv", ("eps", "t") + NORMS, res_rows))
        if err_rows:
            written.append(_write_csv(out / "error.csv", ("eps", "t", "h1", "h2"), err_rows))
        if en_rows:
            written.append(_write_csv(out / "energy.csv", ("eps", "t", "E", "H"), en_rows))
    if "json" in formats:
        path = out / "summary.json"
        path.write_text(report.to_json())
        written.append(path)
    if "dat" in formats:
        lines = ["# log(eps) " + " ".join(f"log({n})" for n in NORMS)]
        for r in recs:
            if r.status == "ok" and r.residual:
                vals = " ".join(f"{np.log(r.residual[n]):.17g}" for n in NORMS)
                lines.append(f"{np.log(r.eps):.17g} {vals}")
        path = out / "residual_loglog.dat"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
        if any(r.error for r in recs):
            lines = ["# log(eps) log(h1) log(h2)"]
            for r in recs:
                if r.status == "ok" and r.error:
                    lines.append(f"{np.log(r.eps):.17g} {np.log(r.error['h1']):.17g} "
                                 f"{np.log(r.error['h2']):.17g}")
            path = out / "error_loglog.dat"
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def load_report(path: str | Path) -> ScalingReport:
    """Read a JSON summary back (trace arrays are not part of it)."""
    return ScalingReport.from_summary(json.loads(Path(path).read_text()))


# Bloch transform self-test ------------------------------------------------

def _random_field(grid: SpectralGrid, rng: np.random.Generator, band: float = 1.0) -> np.ndarray:
    spec = rng.normal(size=grid.n // 2 + 1) + 1j * rng.normal(size=grid.n // 2 + 1)
    spec[np.abs(grid.k_r) > band * grid.points_per_cell / 2] = 0.0
    spec[0] = spec[0].real
    spec[-1] = spec[-1].real
    return np.fft.irfft(spec, n=grid.n)


def bloch_selftest(n_fields: int = 100, cells: int = 6, points_per_cell: int = 16,
                   seed: int = 0) -> dict:
    """Worst-case errors of the discrete Bloch transform identities.

    Round trip, isometry, multiplication by a 2 pi periodic function and the
    convolution identity, each over ``n_fields`` random real fields.  The
    product fields are band-limited to a third of the cutoff so the grid
    product is alias-free.
    """
    grid = SpectralGrid(cells, points_per_cell)
    rng = np.random.default_rng(seed)
    xc = np.arange(points_per_cell) * grid.h
    worst = {"round_trip": 0.0, "isometry": 0.0, "multiplication": 0.0, "convolution": 0.0}
    for _ in range(n_fields):
        u = _random_field(grid, rng)
        f = GridField(grid, u)
        b = bloch_forward(f)
        scale = max(np.max(np.abs(u)), 1e-300)
        worst["round_trip"] = max(worst["round_trip"],
                                  float(np.max(np.abs(bloch_inverse(b).values - u)) / scale))
        norm2 = float(np.sum(u ** 2) * grid.h)
        bnorm2 = float(np.sum(b.cell_norms() ** 2) / grid.cells)
        worst["isometry"] = max(worst["isometry"], abs(norm2 - bnorm2) / norm2)
        modes = rng.integers(1, 4)
        pc = rng.normal(size=modes + 1)
        p_cell = np.polynomial.chebyshev.chebval(np.cos(xc), pc)
        p_full = np.polynomial.chebyshev.chebval(np.cos(grid.x), pc)
        lhs = bloch_forward(GridField(grid, p_full * u)).coeffs
        rhs = BlochField.from_cell_values(grid, p_cell[None, :] * b.cell_values()).coeffs
        worst["multiplication"] = max(worst["multiplication"],
                                      float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs))))
        v1 = _random_field(grid, rng, band=1 / 3)
        v2 = _random_field(grid, rng, band=1 / 3)
        conv = bloch_convolve(bloch_forward(GridField(grid, v1)), bloch_forward(GridField(grid, v2)))
        direct = bloch_forward(GridField(grid, v1 * v2)).coeffs
        worst["convolution"] = max(worst["convolution"],
                                   float(np.max(np.abs(conv.coeffs - direct)) / np.max(np.abs(direct))))
    return worst
