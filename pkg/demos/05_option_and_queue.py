"""Threshold sensitivities through branching.

An American call on a dividend-paying stock is exercised when the
cum-dividend price crosses a threshold; its derivative in the threshold is
a density-weighted difference between continuing and exercising at the
crossing.  A queue admits customer ``i`` when ``X_i < theta``; the
derivative adds an admit/reject difference per customer to the pathwise
term.
"""

from leibniz import models, oracle
from leibniz import estimators as est

option = models.AmericanOptionModel()
truth = oracle.truth_option_2period(option)
r = est.option_threshold_derivative(option, n_reps=20_000, seed=0)
print(f"option: value {truth.value:.4f}, dV/ds quadrature {truth.derivative:.5f}, "
      f"estimate {r.mean:.5f}({r.std_error:.5f})")

two = models.gg1_two_customer_benchmark()
value, deriv = oracle.truth_gg1_enumerate(two, 0.4)
r = est.dpa_derivative(two, 0.4, n_reps=5000, seed=0)
print(f"queue n=2: E = {value:.3f}, exact derivative {deriv:.3f}, DPA {r.mean:.6f} (SE {r.std_error:.1g})")

five = models.gg1_five_customer_benchmark()
r = est.dpa_derivative(five, 0.4, n_reps=20_000, seed=0)
ref = oracle.mc_fd_oracle(five, 0.4, 0.01)
print(f"queue n=5: DPA {r.mean:.4f}({r.std_error:.4f}), MC-FD {ref.mean:.4f}({ref.std_error:.4f})")
