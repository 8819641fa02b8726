"""The computable constants behind the small-mass well-posedness theory.

mu integrates the sup norm of the loss rate over all time (soft
potentials); nu takes the sup of the loss rate integrated along
free-streaming characteristics (all cutoff kernels).  nu < 1/4 certifies
the Picard contraction; the radius algebra eps(nu, r) converts a data
radius into the solution-ball radius, and the positivity threshold
guarantees a nonnegative solution.

Run:  python demos/03_dispersion_bounds.py
"""

import numpy as np

from nearmaxwell.bounds import (
    admissible_mass,
    bounds_report,
    eps_max,
    eps_of_r,
    positivity_threshold,
    r_of_eps,
    time_truncation,
)
from nearmaxwell.kernels import KernelSpec
from nearmaxwell.maxwellian import GlobalMaxwellianParams

p1 = GlobalMaxwellianParams(m=1.0, a=1.0, b=0.0, c=1.0, B=np.zeros((2, 2)),
                            x0=np.zeros(2), v0=np.zeros(2))
k = KernelSpec(beta=0.0, D=2)

m_star = admissible_mass(p1, k, margin=0.5)
p = p1.scaled(m_star)
rep = bounds_report(p, k, n_sample=1024)
print(f"admissible mass (margin 1/2): {m_star:.5f}")
print(f"nu: bound {rep.nu_bound:.5f}, sampled {rep.nu_numeric:.5f}")
print(f"mu: bound {rep.mu_bound:.5f}, sampled {rep.mu_numeric:.5f}, "
      f"one-sided {rep.mu_onesided:.5f}")
print(f"contraction certificate nu < 1/4: {rep.contraction_ok}")
print(f"admissible data radius eps_max = {rep.eps_max:.4f}, "
      f"max ball radius r_max = {rep.r_max:.4f}")

nu = rep.nu_bound
for eps in (0.05, 0.1, 0.2):
    r = r_of_eps(nu, eps)
    print(f"  eps = {eps:.2f}: solution radius r = {r:.4f}, "
          f"round trip eps(r(eps)) = {eps_of_r(nu, r):.4f}, "
          f"contraction rate 4 nu (1+r) = {4 * nu * (1 + r):.4f}")
print(f"positivity threshold (1 - 6 nu): {positivity_threshold(nu):.4f}")

for tol in (1e-2, 1e-4, 1e-6):
    print(f"time window for tail {tol:.0e}: T = "
          f"{time_truncation(p, k, tol):.1f}")
