"""Full reflection never loses energy.

With u1(0) = u2(0) and u2(1) = u1(1) each wave comes back as the other, so
solutions are 2-periodic in time. The checker looks for a field w with
Q^k w nonzero on the last slice and reports the seed that reproduces it.
"""

from hypfts import catalog
from hypfts.fts import check_C0, estimate_Topt
from hypfts.pifield import InitialData
from hypfts.solver import solve_marching

spec = catalog.swap()
phi = InitialData.from_exprs(["sin(3.141592653589793*x)"] * 2)
u = solve_marching(spec, phi, 4.0, nx=40)
for t in (0.0, 0.5, 1.0, 2.0, 4.0):
    print(f"t = {t}: u1 at x = 0.5 is {u.slice(t)[0, 20]:+.6f}")

for T in (1.0, 2.0, 4.0):
    v = check_C0(spec, T, trials=4, nx=20)
    print(f"T = {T}: {v}  (replayed value {v.replay():.3e})")

print(estimate_Topt(spec, 3.0, trials=2, nx=20))
