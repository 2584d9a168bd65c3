"""Why the exponential example needs a corrected coefficient.

With p(t) = exp(2t) sqrt(t) the claimed solution (e^t, e^-t, e^t) leaves a
residual of exactly -(e - 1) sqrt(t) e^t in the first equation.  Replacing p
by exp(2t - 1) sqrt(t) removes it.  The script shows the residual, then
simulates both systems from the same history and compares them.
"""

import math

import numpy as np

from fracdde.dde import CasePreconditionError, classify, classify_case, residual_series, solve
from fracdde.scenarios import load

grid = np.linspace(2.0, 7.0, 6)
for sid in ("example3", "example3-corrected"):
    sc = load(sid)
    res = residual_series(sc.spec, sc.reference, grid)
    print(f"{sid}: first-equation residual / (sqrt(t) e^t) =",
          np.round(res[:, 0] / (np.sqrt(grid) * np.exp(grid)), 12))
print(f"(compare -(e - 1) = {-(math.e - 1):.12f})\n")

for sid in ("example3", "example3-corrected"):
    sc = load(sid)
    tr = solve(sc.spec, sc.history, 7.0, 1e-2)
    rel = np.abs(tr.y[:, 0] / np.exp(tr.t) - 1)
    oc = classify(tr, sc.window, 10)
    print(f"{sid}:")
    print(f"  max |u/e^t - 1| on [2, 7]: {rel.max():.3e}")
    print(f"  sign changes u, v, w: {[len(oc.crossings[c]) for c in 'uvw']} -> {oc.system}")
    try:
        case = classify_case(tr, sc.spec, (2.5, 7.0)).case
    except CasePreconditionError as exc:
        # the uncorrected system pushes u below zero before t = 7
        case = f"undefined, {exc}"
    print(f"  sign pattern of (u, D u, D(a D u)) on [2.5, 7]: {case}")
