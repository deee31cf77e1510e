"""Command line entry point.

Every subcommand accepts ``--config FILE.toml`` or ``--preset NAME`` and
flags that override single config keys.  Output goes to ``--output``, the
config's ``output`` key, or ``$BLOCH_BOUSSINESQ_OUT``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .approximant import ansatz_error
from .bloch_spectrum import dispersion_curve
from .boussinesq_sim import SimState, StepperConfig, evolve, save_checkpoint
from .effective_model import build_effective_model
from .errors import BoussinesqError
from .experiment import (PRESETS, ExperimentConfig, ModelCache, bloch_selftest, build_for_eps,
                         lock_frame, preset_config, report_emit, run_single, run_validation)

SELFTEST_TOL = 1e-10


def _tag(eps: float) -> str:
    return f"eps{eps:g}".replace(".", "p")


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_toml(args.config)
    elif args.preset:
        cfg = preset_config(args.preset)
    else:
        cfg = ExperimentConfig()
    return cfg.with_overrides(kind=args.kind, medium=args.medium, level=args.level, eps=args.eps,
                              T0=args.T0, points_per_cell=args.points_per_cell,
                              samples=args.samples, output=args.output, workers=args.workers,
                              frame=args.frame)


def _out(args, cfg: ExperimentConfig) -> Path:
    path = Path(args.output or cfg.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_checks(report) -> None:
    for c in report.checks:
        flag = "PASS" if c["passed"] else "FAIL"
        print(f"{flag}  {c['name']:<24} value={c['value']:.4g}  target={c['target']} +- {c['tol']}")
    for r in report.records:
        if r.status != "ok":
            print(f"eps={r.eps}: {r.status}")


def cmd_dispersion(args) -> int:
    cfg = _config(args)
    coeffs = cfg.coefficients()
    l = np.linspace(-0.5, 0.5, args.points)
    band = dispersion_curve(coeffs, args.bands, l)
    out = _out(args, cfg) / "dispersion.csv"
    band.to_csv(out)
    print(f"medium {coeffs.name}: gap half-width {band.gap_margin:.6g}; wrote {out}")
    return 0


def cmd_effective(args) -> int:
    cfg = _config(args)
    model = build_effective_model(cfg.coefficients())
    out = _out(args, cfg) / "effective_model.json"
    model.save(out)
    print(json.dumps({"wave_speed": model.wave_speed, "lambda2": model.lambda2,
                      "lambda4": model.lambda4, "nu2": model.nu2, "gap": model.gap,
                      "whitham_s2": model.whitham_s2, "flux_cubic": model.flux_cubic},
                     indent=2))
    print(f"wrote {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    eps = cfg.eps[0]
    model = ModelCache().get(cfg.coefficients())
    frame, _ = lock_frame(cfg.with_overrides(eps=[eps]), model)
    approx = build_for_eps(cfg, eps, model, frame)
    state0 = SimState(0.0, approx.synthesize(0.0), approx.synthesize_dt(0.0))
    times = [float(t) for t in approx.times]
    run = evolve(state0, model.coeffs, times[-1], StepperConfig(stability_margin=cfg.stability_margin),
                 observers=[lambda s: s.u.values.copy()], observe_times=times)
    err = ansatz_error(approx, [(i, r[1][0]) for i, r in enumerate(run.records)])
    out = _out(args, cfg)
    raw, side = save_checkpoint(run.state, out / f"state_{_tag(eps)}", model.coeffs,
                                {"kind": cfg.kind, "eps": eps, "frame": frame})
    with (out / f"error_{_tag(eps)}.csv").open("w") as fh:
        fh.write("t,h1,h2\n")
        for t, a, b in zip(err["t"], err["h1"], err["h2"]):
            fh.write(f"{t:.17g},{a:.17g},{b:.17g}\n")
    print(f"eps={eps} frame={frame:+d} steps={run.steps} dt={run.dt:.4g} "
          f"sup H1 error={np.max(err['h1']):.4e}; checkpoint {raw}")
    return 0


def cmd_residual(args) -> int:
    cfg = _config(args).with_overrides(run_pde=False, energy=False)
    report = run_validation(cfg)
    report_emit(report, _out(args, cfg))
    for norm, fit in report.fits.get("residual", {}).items():
        print(f"{norm:<7} slope {fit['slope']:.3f} +- {fit['half_width']:.3f}")
    _print_checks(report)
    return 0 if report.passed else 1


def cmd_validate(args) -> int:
    cfg = _config(args)
    report = run_validation(cfg)
    files = report_emit(report, _out(args, cfg))
    print(f"frame {report.frame:+d}; wrote {len(files)} files to {files[0].parent}")
    _print_checks(report)
    return 0 if report.passed else 1


def cmd_energy(args) -> int:
    cfg = _config(args).with_overrides(run_pde=True, energy=True)
    eps = cfg.eps[0]
    model = ModelCache().get(cfg.coefficients())
    frame, _ = lock_frame(cfg.with_overrides(eps=[eps]), model)
    rec = run_single(cfg, eps, model, frame)
    tr = rec.traces["energy"]
    out = _out(args, cfg) / f"energy_{_tag(eps)}.csv"
    with out.open("w") as fh:
        fh.write("t,E,H\n")
        for t, e, h in zip(tr["t"], tr["E"], tr["H"]):
            fh.write(f"{t:.17g},{e:.17g},{h:.17g}\n")
    en = rec.energy
    print(f"eps={eps}: sup E={en['sup_energy']:.4e} growth rate={en['growth_rate']:.4g} "
          f"relative drift={en['relative_drift']:.4g}; wrote {out}")
    return 0 if en["passed"] else 1


def cmd_selftest(args) -> int:
    worst = bloch_selftest(n_fields=args.fields, seed=args.seed)
    ok = True
    for name, err in worst.items():
        passed = err <= SELFTEST_TOL
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<15} max error {err:.3e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bloch-boussinesq",
                                     description="Bloch-wave long-wave approximation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment file")
        p.add_argument("--preset", choices=PRESETS, help="named kind-medium preset")
        p.add_argument("--kind", choices=("kdv", "burgers", "whitham"))
        p.add_argument("--medium", choices=("constant", "periodic"))
        p.add_argument("--level", choices=("leading", "improved"))
        p.add_argument("--eps", type=float, nargs="+")
        p.add_argument("--T0", type=float)
        p.add_argument("--points-per-cell", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--frame", type=int, choices=(1, -1))
        p.add_argument("--output", help="output directory")

    p = sub.add_parser("dispersion", help="dispersion curves of the first bands")
    common(p)
    p.add_argument("--bands", type=int, default=2)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("effective", help="effective long-wave coefficients")
    common(p)
    p.set_defaults(func=cmd_effective)

    p = sub.add_parser("simulate", help="full equation from well-prepared data (first eps)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("residual", help="residual scaling sweep without the full equation")
    common(p)
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("validate", help="full validation sweep and report")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("energy", help="error energy trace for the first eps")
    common(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("bloch-selftest", help="Bloch transform identities on random fields")
    p.add_argument("--fields", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BoussinesqError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
