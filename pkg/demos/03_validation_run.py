"""A full validation sweep: residual, error and energy for one preset.

The Whitham preset in the constant medium is the quickest (a few seconds).
Pass another preset name as the first argument, e.g. ``burgers-periodic``.
Reports are written to ``demo_output/``.
"""

import sys

from bloch_boussinesq.experiment import load_report, preset_config, report_emit, run_validation

name = sys.argv[1] if len(sys.argv) > 1 else "whitham-constant"
cfg = preset_config(name, output="demo_output")
report = run_validation(cfg)

# %% per-eps measurements
for rec in sorted(report.records, key=lambda r: r.eps):
    print(f"eps={rec.eps:4.2f}  residual H1 {rec.residual['h1']:.3e}  "
          f"error H1 {rec.error['h1']:.3e}  sup E {rec.energy['sup_energy']:.3e}")

# %% checks against the expected exponents
for c in report.checks:
    print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']:<24} {c['value']:.3f}")

# %% reports reload with the same content
files = report_emit(report)
back = load_report(files[0].parent / "summary.json")
print(f"\nwrote {len(files)} files; reloaded summary identical: {back.to_json() == report.to_json()}")
