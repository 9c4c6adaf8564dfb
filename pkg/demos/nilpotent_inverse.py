"""Recover an unknown source from two snapshots of a nilpotent system.

The boundary matrix only lets component 1 reflect into component 2, so its
digraph has no cycle and every solution of the free system is gone after two
crossings. Then the source f in u_t + A u_x = f is determined by u(0) and
u(r), for r both below and above that vanishing time.
"""

import numpy as np

from hypfts import catalog
from hypfts.fts import certify_linear_nilpotent
from hypfts.inverse import InverseProblem, duhamel_state, reconstruct_state, recover_source
from hypfts.solver import l2_norm

PI = "3.141592653589793"
spec = catalog.one_coupling()
nx = 200
x = np.arange(nx + 1) / nx

print(certify_linear_nilpotent(spec, trials=4, nx=20))

u0 = [f"sin({PI}*x)^6", f"0.5*(1+x)*sin({PI}*x)^6"]
f_true = np.array([(1 - 0.5 * x) * np.sin(np.pi * x) ** 6,
                   -0.7 * x * np.sin(np.pi * x) ** 6])

for r in (0.7, 1.3, 2.5):
    ur = duhamel_state(spec, u0, f_true, r, nx)  # the "measured" state
    problem = InverseProblem(spec, r, u0, ur, nx=nx)
    res = recover_source(problem)
    rel = l2_norm(res.f - f_true) / l2_norm(f_true)
    back = l2_norm(reconstruct_state(problem, res, r) - ur)
    print(f"r = {r}: branch {res.branch}, n0 = {res.n0}, "
          f"relative source error {rel:.1e}, state mismatch {back:.1e}")
