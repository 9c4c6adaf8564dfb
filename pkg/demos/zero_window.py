"""Boundary feedback that switches off for a while empties the domain.

Two waves cross [0, 1] at unit speed in opposite directions and feed each
other through sine-type reflections u1(0) = r(t) sin(u2(0)) and
u2(1) = sin(s(t) u1(1))^2. When both gains vanish on [1, 2.5], every
characteristic arriving after t = 2.25 was launched from a silent boundary,
so one application of Q already annihilates the slice t = 2.25.
"""

import numpy as np

from hypfts import catalog
from hypfts.fts import check_C0
from hypfts.pifield import InitialData, sample_Ch
from hypfts.solver import solve_qpower

NX = 40

for variant in ("suf2", "suf1", "baseline"):
    ex = catalog.nonlinear_pair(variant)
    print(f"{ex.name}: {ex.description}")
    verdict = check_C0(ex.spec, ex.T, k=ex.k, trials=16, nx=NX)
    print("   ", verdict)

# The check is a statement about all solutions; watch one of them die out.
ex = catalog.nonlinear_pair("suf2")
phi = InitialData(sample_Ch(ex.spec, 4.0, seed=7, nx=NX).data[:, :, 0])
u = solve_qpower(ex.spec, phi, 4.0, nx=NX)
for t in (0.0, 1.0, 2.0, 3.0, 3.5, 4.0):
    print(f"t = {t:3.1f}   sup |u| = {np.max(np.abs(u.slice(t))):.3e}")
