"""Mermin bounds across partition classes, checked by the brute-force oracle."""

import numpy as np

from bellbounds import bounds as B
from bellbounds import oracle as O
from bellbounds.expressions import BellExpression, bell_operator

mermin = BellExpression.mermin3()

for setting in [(0.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.5, -0.3, 0.2)]:
    rep = B.mermin3_bounds(*setting)
    op = bell_operator(mermin, setting)
    prod = O.oracle_for_class(op, 3, B.FULL, 32, 0).value
    bisep = O.oracle_for_class(op, 3, B.TWO_SEP, 32, 0).value
    print(f"setting {setting}")
    print(f"  quantum U     {rep.quantum:.6f}")
    print(f"  U21 analytic  {rep.class_bounds['21']:.6f}   oracle {bisep:.6f}")
    print(f"  U111 analytic {rep.class_bounds['111']:.6f}   oracle {prod:.6f}")

print("\nstructure function f21 for the biseparable class")
for v in np.linspace(2 * np.sqrt(2), 4, 5):
    print(f"  v = {v:.4f}   f21 = {B.f21_closed(v):.4f}")

for obs in (2.05, 1.95):
    v = B.certify(mermin, 4.0, obs, B.TWO_SEP)
    print(f"beta_cal = 4, beta_obs = {obs}: {v.verdict} (bound {v.bound:.4f})")
