# The impact model: a mass dropped from height h hits a spring-damper pad.
# Contact is modelled as a constant force pulse that removes the momentum
# M*sqrt(2 g h) over 15 ms, after which the pad rings down freely.
import numpy as np

from impactid import smd

M = 0.5       # kg
h = 0.2       # m
F = smd.impulse_force(M, h)
print(f"pulse force for a {M} kg mass from {h * 1000:.0f} mm: {F:.2f} N")

# Three pads with the same stiffness and different damping.
k = 2e4
c_crit = 2 * np.sqrt(M * k)
for label, c in [("under", 0.2 * c_crit), ("critical", c_crit), ("over", 3 * c_crit)]:
    p = smd.SmdParams(M, k, c, h)
    rk = smd.simulate_response(p)                     # RK4, 1/30000 s steps
    t = rk.times
    exact = smd.analytic_response(p, t)[2]            # closed form
    err = np.max(np.abs(rk.values - exact)) / np.max(np.abs(exact))
    print(f"{label:>8}: zeta={p.zeta:.2f}  peak F_R={exact.max():7.2f} N  "
          f"RK4 relative error {err:.1e}")

# The reaction force is linear in sqrt(h): four times the height, twice the peak.
low = smd.sampled_response(smd.SmdParams(M, k, 0.2 * c_crit, 0.05), 150, 1 / 300).max()
high = smd.sampled_response(smd.SmdParams(M, k, 0.2 * c_crit, 0.2), 150, 1 / 300).max()
print(f"peak ratio 200 mm / 50 mm = {high / low:.12f}")

# Stiff, lightly damped pads are where fixed-step RK4 struggles: the
# natural period approaches the step size.
for k, c in [(1e5, 10.0), (1e6, 10.0), (1e7, 1.0)]:
    p = smd.SmdParams(M, k, c, h)
    rk = smd.simulate_response(p)
    exact = smd.analytic_response(p, rk.times)[2]
    err = np.max(np.abs(rk.values - exact)) / np.max(np.abs(exact))
    print(f"k={k:.0e}, c={c:g}: f_n={np.sqrt(k / M) / 2 / np.pi:6.0f} Hz, RK4 error {err:.1e}")
