"""A vanishing slice of Q^2 w is not enough without homogeneity.

The left boundary is driven by g(t) = exp(-1 / (t - 4)) for t > 4 and is zero
before. Every Q^2 w vanishes on t = 3 because the forcing has not started,
yet the solution from zero data is nonzero at t = 5. The validator reports
the missing property h(t, 0) = 0 and the checker refuses the system.
"""

import numpy as np

from hypfts import catalog
from hypfts.fts import RefusedError, check_C0
from hypfts.pifield import InitialData, sample_Ch
from hypfts.qcalc import QContext, q_power
from hypfts.solver import solve_marching
from hypfts.system import validate

ex = catalog.delayed_forcing()
NX = 20

ctx = QContext(ex.spec, InitialData.zeros(2), 3.0, NX, override=True)
worst = 0.0
for seed in range(16):
    w = sample_Ch(ex.spec, 3.0, seed, nx=NX)
    worst = max(worst, np.max(np.abs(q_power(ctx.with_phi(w.initial()), w, 2).data[:, :, -1])))
print(f"max over 16 fields of |Q^2 w(., 3)|: {worst:.1e}")

u = solve_marching(ex.spec, InitialData.zeros(2), 5.0, nx=NX, override=True)
for t in (3.0, 4.0, 4.5, 5.0):
    print(f"zero data, t = {t}: sup |u| = {np.max(np.abs(u.slice(t))):.4f}")

print(validate(ex.spec))
try:
    check_C0(ex.spec, 3.0, k=2, trials=4, nx=NX)
except RefusedError as err:
    print("checker:", err)
