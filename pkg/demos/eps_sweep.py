"""Shrink the regularization parameter and watch the negative pressure vanish.

Prints one row per eps plus the fitted log-log slope of ``|p-|_2``
against eps and the spread of the uniformly bounded norms.
"""
import sys

from granflow import harness

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1
res = harness.eps_sweep(workers=workers)
print(f"{'eps':>8} {'|p-|_2':>12} {'max|u|_2':>10} {'int|Du|^3':>11} {'|p|_3/2':>10} {'s':>6}")
for r in res.rows:
    print(f"{r['eps']:8.0e} {r['neg_pressure_mass']:12.4e} {r['u_linf_l2']:10.5f} "
          f"{r['du3']:11.4e} {r['p_l32']:10.5f} {r['seconds']:6.1f}")
print(f"slope of |p-|_2 vs eps: {res.fits['neg_pressure_slope']:.3f}")
for key in harness.UNIFORM_KEYS:
    print(f"max/min of {key}: {res.fits[key + '_ratio']:.3f}")
for name, (ok, value) in res.assertions.items():
    print(f"{name}: {'pass' if ok else 'FAIL'} ({value})")
