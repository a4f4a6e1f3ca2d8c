"""Fixed-point vs simplified-Newton iteration counts as stiffness grows.

The torsional spring constant k makes the double pendulum arbitrarily
stiff.  The fixed-point iteration needs ever more sweeps per step (and
eventually diverges), while the Newton implementation -- whose linear
algebra costs only floor(s/2)+1 = 4 small LU factorizations per step --
stays at a handful of iterations throughout.
"""

from sirk import (
    DoublePendulumParams,
    compute_decomposition,
    double_pendulum,
    gauss_tableau,
    initial_state,
    integrate,
)

tab = gauss_tableau(6)
dec = compute_decomposition(tab)
h = 2.0**-7
n_steps = int(2.0**3 / h)  # 8 seconds is plenty to see the trend

print(f"{'k':>8} {'fp its/step':>12} {'newton its/step':>16} {'newton solves':>14}")
for log2k in (0, 6, 12, 16):
    k = 0.0 if log2k == 0 else 2.0**log2k
    par = DoublePendulumParams(k=k)
    system = double_pendulum(par)
    y0 = initial_state(par)

    rf = integrate(system, "fixed_point", tab, None, y0, 0.0, h, n_steps,
                   sampling=n_steps)
    rn = integrate(system, "newton", tab, dec, y0, 0.0, h, n_steps,
                   sampling=n_steps)

    fp = "failed" if rf.failure else "%12.2f" % rf.mean_iterations
    print("%8g %12s %16.2f %14.2f"
          % (k, fp, rn.mean_iterations, rn.mean_linear_solves))

print()
print("Energy errors stay comparable for both methods while the fixed")
print("point converges; the Newton variant keeps working far beyond.")
