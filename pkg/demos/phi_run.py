"""Volume fraction transport: bounds and the H1 budget along a run."""
from granflow import harness
from granflow.diagnostics import Recorder
from granflow.stepper import run

cfg = harness.phi_box()
rec = Recorder(cfg)
run(cfg, [rec])
lo = min(r.phi_range[0] for r in rec.reports)
hi = max(r.phi_range[1] for r in rec.reports)
worst = max(lhs - rhs for _, lhs, rhs in rec.budget)
print(f"admissible band [{cfg.law.phi_min}, {cfg.law.phi_max - cfg.xi}]")
print(f"observed range  [{lo:.6f}, {hi:.6f}]")
print(f"worst H1 budget lhs - rhs: {worst:.3e} (must be <= 0)")
