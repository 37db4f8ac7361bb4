"""Differentiate integrals over moving domains two ways.

The surface form integrates the boundary velocity against the outward
normal; the divergence form moves everything into the volume.  Both should
agree with a finite difference of the integral itself.
"""

import math

from leibniz import numerics

for case, theta in [(numerics.disk_case(), 1.0), (numerics.square_case(), 0.5),
                    (numerics.square_linear_case(), 1.0), (numerics.shifted_disk_case(), 1.0)]:
    surface, divergence, fd = numerics.verify_leibniz_rules(case, theta)
    print(f"{case.name:14s} theta={theta:<4} surface={surface:.10f} "
          f"divergence={divergence:.10f} fd={fd:.10f}")

print(f"disk reference 2*pi*theta = {2 * math.pi:.10f}")

# the mollifier turns a step into a smooth function that converges off the jump
step = lambda z: (z > 0).astype(float)  # noqa: E731
for j in (1, 4, 16):
    print(f"mollified step, j={j:2d}: at 0.1 -> {numerics.mollify_1d(step, j, 0.1):.6f}")
