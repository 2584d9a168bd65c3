"""A short tour of the alpha-derivative and alpha-integral.

Run with ``python demos/calculus_tour.py``.  Everything printed is computed
on the spot; nothing is read from disk.
"""

import numpy as np

from fracdde.expr import parse
from fracdde.fraccalc import check_properties, frac_deriv, frac_deriv_limit, frac_integral

f = parse("t^2*sin(t)")
print(f"f(t) = {f}")

# for differentiable f the derivative is t^(1-alpha) f'(t); the limit form agrees
for alpha in (0.25, 0.5, 0.9, 1.0):
    closed = frac_deriv(f, 3.0, alpha)
    limit = frac_deriv_limit(f, 3.0, alpha)
    print(f"alpha = {alpha:<4}  D f(3) = {closed: .12f}   limit form = {limit: .12f}")

# the integral inverts the derivative: D^a I^a_a g = g
alpha, a = 0.7, 1.0
F = lambda t: frac_integral("cos(t)", a, t, alpha)
print(f"\nD I cos at t = 3: {frac_deriv(F, 3.0, alpha):.10f}  (cos 3 = {np.cos(3.0):.10f})")

# randomized checks of power, constant, product, quotient and chain rules
print("\nrule checks, 200 random cases each:")
for alpha in (0.25, 0.5, 0.9, 1.0):
    rep = check_properties(alpha, np.linspace(0.5, 50.0, 100), n_cases=200, seed=3)
    worst = max(rep.max_rel_error.values())
    print(f"  alpha = {alpha:<4}  worst relative error {worst:.2e}  {'ok' if rep.passed(1e-6) else 'FAILED'}")
