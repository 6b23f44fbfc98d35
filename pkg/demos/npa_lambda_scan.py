"""Moment-matrix test on the lambda family with Alice's measurements known.

The family p(ij|nm) = (1 + (-1)^(i + j + nm) lambda) / 4 crosses the CHSH
local bound at lambda = 1/2. The scan finds where the PSD-completion margin
turns negative. At lambda = 1/2 an explicit separable model exists, so the
threshold can not lie below it.
"""

from bellbounds import npa

for name, alice in [("orthogonal", npa.KnownSide.orthogonal()), ("withheld", npa.KnownSide.withheld())]:
    out = npa.lambda_threshold_scan(alice, npa.LEVEL_1, tol=1e-3, seed=0)
    lo, hi = out["bracket"]
    print(f"Alice {name}: {out['status']} lambda* = {out['lambda_star']:.4f} in [{lo:.4f}, {hi:.4f}]")

for lam in (0.3, 0.5, 0.6, 0.7):
    v = npa.certify_correlation(npa.lambda_family(lam), npa.KnownSide.orthogonal())
    print(f"  lambda = {lam}: CHSH {4 * lam:.2f}, margin {v.margin:+.4f}, {v.verdict}")
