"""Two gravity-box runs whose initial velocities differ by 1e-6."""
from granflow import harness

res = harness.contraction_test(harness.gravity_box(), amplitude=1e-6)
d = res.differences
for n in (0, 1, 10, 50, 100, 200):
    print(f"step {n:4d}: |u2 - u1|_2 = {d[n]:.4e}")
print(f"largest relative growth per step: {res.max_relative_growth:.3e}")
