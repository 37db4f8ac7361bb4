"""Seven input laws, three estimators, one deterministic truth.

The performance is ``1{log(X1 + theta) + log(X2 + theta) < 0.5}`` at
``theta = 1``.  Finite differences are noisy, the divergence estimator is
stable everywhere, and the integral estimator needs its surface term, which
is well behaved only when the face densities are.
"""

from leibniz import models, oracle
from leibniz import estimators as est

cfg = est.EstimatorConfig(n_reps=10_000, seed=0)
print(f"{'law':20s} {'truth':>9s} {'fd':>16s} {'integral':>20s} {'divergence':>16s}")
for key, settings in models.TABLE1_CONFIGS:
    density = models.make_density(settings)
    truth = oracle.truth_log_inventory(density, 0.5, 1.0)
    m = models.model_log_inventory(density, 0.5)
    cells = []
    for name in ("fd", "leibniz_integral", "leibniz_divergence"):
        r = est.run_estimator(name, m, 1.0, cfg)
        flag = "*" if r.unstable else " "
        cells.append(f"{r.mean:8.3f}({r.std_error:.3g}){flag}")
    print(f"{key:20s} {truth.derivative:9.4f} " + " ".join(f"{c:>18s}" for c in cells))
print("* flagged unstable")
