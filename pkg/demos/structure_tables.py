"""Write the numeric structure-function tables as CSV (plus JSON sidecars).

Each table is audited for monotone decrease and concavity before use.
Output goes to ./structure_out/ next to this script.
"""

from pathlib import Path

from bellbounds import bounds as B
from bellbounds.expressions import BellExpression
from bellbounds.structure import audit_shape, compute_structure_fn, conservative_envelope

out = Path(__file__).with_name("structure_out")
out.mkdir(exist_ok=True)

jobs = [
    ("chsh_11", BellExpression.chsh(), B.FULL),
    ("mermin3_21", BellExpression.mermin3(), B.TWO_SEP),
    ("mermin3_111", BellExpression.mermin3(), B.FULL),
    ("f3sum_111", BellExpression.f3sum(), B.FULL),
]
for name, expr, cls in jobs:
    table = compute_structure_fn(expr, cls)
    audit = audit_shape(table)
    table.write(out / f"{name}.csv")
    env = conservative_envelope(table) if audit.passed else None
    lo, hi = table.v_range
    top = f", envelope at v_max {env(hi):.5f}" if env else ""
    print(f"{name:12s} v in [{lo:.4f}, {hi:.4f}]  audit {'pass' if audit.passed else 'FAIL'}{top}")
