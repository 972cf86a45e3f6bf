"""Monte Carlo check of the noise-averaged survival equations.

Samples telegraph paths, evaluates each path's exact rate exponent and
averages exp(-int W) over paths. The result is set beside the closed-form
bi-exponential solution of the averaged equations; the columns are z-scores.

    python demos/mc_check.py [n_paths]
"""
import sys

import numpy as np

from qra import BathParams, DichotomousTunneling, analytic_survival_dichotomous, mc_survival

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
bath = BathParams()
times = np.array([10.0, 25.0, 50.0, 100.0])
mc = mc_survival(DichotomousTunneling(0.3, 0.3), times, n_paths=n_paths, seed=0, bath=bath)
p, comp = analytic_survival_dichotomous(0.3, 0.3, bath, times)
y = comp.correlation(times)
print(f"{'t':>6} {'P_mc':>9} {'P_avg':>9} {'z_P':>6} {'y_mc':>9} {'y_avg':>9} {'z_y':>6}")
for i, t in enumerate(times):
    print(f"{t:6.1f} {mc.p_mean[i]:9.5f} {p[i]:9.5f} {(mc.p_mean[i] - p[i]) / mc.p_stderr[i]:6.2f} "
          f"{mc.y_mean[i]:9.5f} {y[i]:9.5f} {(mc.y_mean[i] - y[i]) / mc.y_stderr[i]:6.2f}")
