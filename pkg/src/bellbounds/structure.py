"""Numeric structure functions ``f_X(v) = max{U_X(Omega) : U(Omega) = v}``.

The cosine cube is sampled on a regular grid, points whose quantum bound lies
within a band around ``v`` are kept, and the best few are polished with SLSQP
on the exact constraint ``U(Omega) = v``. Tables can be audited for the
concave/decreasing shape and turned into a conservative upper envelope.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import bounds as B
from .errors import GridTooCoarseError, UsageError
from .expressions import CHSH, F3_PLUS_F3PRIME, MERMIN3, BellExpression
from .serialize import csv_line, dumps

BAND_TOL = 1e-3
AUDIT_TOL = 5e-3
DEFAULT_V_POINTS = 41
POLISH_CANDIDATES = 3
POLISH_RESIDUAL = 1e-9
CHUNK = 2048


@dataclass
class StructureRow:
    v: float
    f: float
    omega: tuple[float, ...]
    residual: float
    polished: bool = False


@dataclass
class ShapeReport:
    passed: bool
    tol: float
    monotone_violation: float
    concavity_violation: float
    monotone_indices: list[int] = field(default_factory=list)
    concavity_triples: list[tuple[int, int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "monotone_violation": self.monotone_violation,
            "concavity_violation": self.concavity_violation,
            "monotone_indices": self.monotone_indices,
            "concavity_triples": [list(t) for t in self.concavity_triples],
        }


@dataclass
class StructureTable:
    expression: str
    partition: str
    n: int
    rows: list[StructureRow]
    resolution: int
    band: float
    audit: ShapeReport | None = None

    def __post_init__(self):
        vs = [r.v for r in self.rows]
        if vs != sorted(vs):
            raise UsageError("structure table rows must be sorted by v")
        for r in self.rows:
            if r.residual > self.band + 1e-15:
                raise UsageError(f"row v={r.v} has residual {r.residual} above band {self.band}")

    @property
    def v(self) -> np.ndarray:
        return np.array([r.v for r in self.rows])

    @property
    def f(self) -> np.ndarray:
        return np.array([r.f for r in self.rows])

    @property
    def v_range(self) -> tuple[float, float]:
        return self.rows[0].v, self.rows[-1].v

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.rows)

    def metadata(self) -> dict:
        meta = {
            "expression": self.expression,
            "partition": self.partition,
            "n": self.n,
            "resolution": self.resolution,
            "band": self.band,
            "rows": len(self.rows),
            "polished_rows": sum(r.polished for r in self.rows),
            "max_residual": self.max_residual,
        }
        if self.audit is not None:
            meta["audit"] = self.audit.to_dict()
        return meta

    def to_csv(self) -> str:
        header = ["v", "f"] + [f"omega_{i + 1}" for i in range(self.n)] + ["residual"]
        lines = [",".join(header)]
        for r in self.rows:
            lines.append(csv_line([r.v, r.f, *r.omega, r.residual]))
        return "\n".join(lines) + "\n"

    def write(self, csv_path) -> Path:
        """Write the CSV and a ``.json`` metadata sidecar; returns the sidecar path."""
        csv_path = Path(csv_path)
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(dumps(self.metadata()), encoding="utf-8")
        return sidecar

    @classmethod
    def read(cls, csv_path) -> "StructureTable":
        csv_path = Path(csv_path)
        meta = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = []
            for line in reader:
                vals = [float(x) for x in line]
                rows.append(StructureRow(vals[0], vals[1], tuple(vals[2:-1]), vals[-1]))
        table = cls(meta["expression"], meta["partition"], int(meta["n"]), rows, int(meta["resolution"]), float(meta["band"]))
        return table


# --- vectorized evaluators ---------------------------------------------------


def _delta_eps_array(A: np.ndarray):
    s = np.sqrt(np.maximum(0.0, 1.0 - A * A))
    delta = 0.5 * (np.prod(1.0 + s, axis=1) + np.prod(1.0 - s, axis=1))
    return delta, np.prod(A, axis=1)


def quantum_array(expr: BellExpression, A: np.ndarray) -> np.ndarray:
    delta, eps = _delta_eps_array(A)
    return expr.factor * 2.0 * np.sqrt(np.maximum(0.0, delta + eps * math.sin(2.0 * expr.t)))


def _block_array(A: np.ndarray, t: float, k: int) -> np.ndarray:
    dk, ek = _delta_eps_array(A[:, :k])
    dr, er = _delta_eps_array(A[:, k:])
    alpha = dk * dr + ek * er * math.sin(2.0 * t)
    inner = np.maximum(0.0, alpha * alpha - (dk * dk - ek * ek) * (dr * dr - er * er))
    return np.sqrt(np.maximum(0.0, 2.0 * alpha + 2.0 * np.sqrt(inner)))


def class_array(expr: BellExpression, cls: B.PartitionClass, A: np.ndarray) -> np.ndarray:
    """Class bound for every row of ``A`` (shape ``(N, n)``)."""
    n = expr.n
    cols = [A[:, i] for i in range(n)]
    if cls.kind == B.GENERAL:
        return quantum_array(expr, A)
    if n == 2 and cls.kind != B.GENERAL:
        return expr.factor * _block_array(A, expr.t, 1)
    if cls.kind == B.BIPARTITION:
        rest = [i for i in range(n) if i not in cls.block]
        return expr.factor * _block_array(A[:, list(cls.block) + rest], expr.t, len(cls.block))
    if expr.preset == MERMIN3:
        if cls.kind == B.TWO_SEPARABLE:
            return B.mermin3_u21(*cols)[0]
        return _chunked(lambda X: B.mermin3_u111(*X.T)[0], A)
    if expr.preset == F3_PLUS_F3PRIME:
        if cls.kind == B.TWO_SEPARABLE:
            return B.f3sum_u21(*cols)[0]
        return B.f3sum_u111_array(*cols)
    if cls.kind == B.TWO_SEPARABLE:
        best = None
        for blk in B.all_bipartition_blocks(n):
            rest = [i for i in range(n) if i not in blk]
            val = _block_array(A[:, list(blk) + rest], expr.t, len(blk))
            best = val if best is None else np.maximum(best, val)
        return expr.factor * best
    raise UsageError(f"no fully separable bound available for {expr.preset} with n={n}")


def _chunked(fun, A: np.ndarray) -> np.ndarray:
    if len(A) == 0:
        return np.zeros(0)
    return np.concatenate([fun(A[i : i + CHUNK]) for i in range(0, len(A), CHUNK)])


# --- structure function ---------------------------------------------------------


def default_domain(expr: BellExpression, cls: B.PartitionClass) -> tuple[float, float]:
    """Trade-off domain of the numeric structure function.

    Below the lower edge the table value already equals the largest class
    bound over all settings, so calibration values there are clamped.
    """
    if expr.preset == CHSH:
        return 2.0, 2.0 * math.sqrt(2.0)
    if expr.preset == MERMIN3:
        return (2.0 * math.sqrt(2.0), 4.0) if cls.kind == B.TWO_SEPARABLE else (2.0, 4.0)
    if expr.preset == F3_PLUS_F3PRIME:
        return 4.0, 4.0 * math.sqrt(2.0)
    raise UsageError(f"no default v-grid for {expr.preset}; pass v_grid explicitly")


def default_resolution(n: int) -> int:
    return 201 if n == 2 else 101


def cosine_grid(n: int, resolution: int) -> np.ndarray:
    """Grid on ``[-1, 1]^n`` in lexicographic order.

    Each axis is uniform in the angle ``theta`` with ``a = cos theta``. A grid
    uniform in ``a`` leaves the band empty near the compatible settings, where
    the sines vary fastest.
    """
    if resolution < 2:
        raise UsageError("omega_resolution must be >= 2")
    axis = np.cos(np.linspace(math.pi, 0.0, resolution))
    axis[0], axis[-1] = -1.0, 1.0
    if resolution % 2:
        axis[resolution // 2] = 0.0
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _polish(expr: BellExpression, cls: B.PartitionClass, v: float, omega0: np.ndarray):
    """SLSQP over angles ``theta`` (``a = cos theta``) on the exact constraint."""
    theta0 = np.arccos(np.clip(omega0, -1.0, 1.0))
    qmax_scale = max(1.0, v)

    def constraint(theta):
        return (B.quantum_bound(expr, tuple(np.cos(theta))) - v) / qmax_scale

    if expr.preset == MERMIN3 and cls.kind == B.FULL_PRODUCT:
        _, role, u0 = B.mermin3_u111(*omega0)
        perm = B._ROLE_PERMS[int(role)]

        def objective(x):
            a, b, c = (float(np.cos(x[i])) for i in perm)
            sab = math.sqrt(max(0.0, 1 - a * a)) * math.sqrt(max(0.0, 1 - b * b))
            q = a * b * math.sqrt(max(0.0, 1 - c * c))
            return -float(B._mermin111_objective(x[3], 1 + sab, 1 - sab, c, q))

        x0 = np.append(theta0, float(u0))
        bnds = [(0.0, math.pi)] * 3 + [(float(u0) - math.pi, float(u0) + math.pi)]
        cons = {"type": "eq", "fun": lambda x: constraint(x[:3])}
    else:

        def objective(x):
            return -B.class_bound(expr, cls, tuple(float(c) for c in np.cos(x)))

        x0 = theta0
        bnds = [(0.0, math.pi)] * expr.n
        cons = {"type": "eq", "fun": constraint}
    try:
        res = minimize(objective, x0, method="SLSQP", bounds=bnds, constraints=[cons],
                       options={"maxiter": 200, "ftol": 1e-13})
    except (ValueError, ArithmeticError):
        return None
    cosines = np.clip(np.cos(res.x[: expr.n]), -1.0, 1.0)
    cosines[np.abs(cosines) < 1e-15] = 0.0
    omega = tuple(float(c) for c in cosines)
    residual = abs(B.quantum_bound(expr, omega) - v)
    return omega, B.class_bound(expr, cls, omega), residual


def compute_structure_fn(
    expr: BellExpression,
    cls: B.PartitionClass,
    v_grid=None,
    omega_resolution: int | None = None,
    band: float = BAND_TOL,
    polish: bool = True,
) -> StructureTable:
    """Tabulate ``f_X`` on ``v_grid``.

    Raises
    ------
    GridTooCoarseError
        If some ``v`` has no grid point within ``band`` of the constraint.
    """
    n = expr.n
    if v_grid is None:
        lo, hi = default_domain(expr, cls)
        v_grid = np.linspace(lo, hi, DEFAULT_V_POINTS)
    v_grid = np.sort(np.asarray(v_grid, dtype=float))
    resolution = default_resolution(n) if omega_resolution is None else int(omega_resolution)
    A = cosine_grid(n, resolution)
    U = quantum_array(expr, A)
    if v_grid[0] < U.min() - band or v_grid[-1] > U.max() + band:
        raise UsageError(f"v_grid outside the attainable range [{U.min()}, {U.max()}]")

    bands = [np.flatnonzero(np.abs(U - v) <= band) for v in v_grid]
    empty = [float(v) for v, idx in zip(v_grid, bands) if idx.size == 0]
    if empty:
        raise GridTooCoarseError(
            f"no grid point within {band} of U = v for v in {empty}; increase band or omega_resolution"
        )
    union = np.unique(np.concatenate(bands))
    values = np.empty(len(A))
    values[union] = class_array(expr, cls, A[union])

    rows = []
    for v, idx in zip(v_grid, bands):
        order = idx[np.argsort(-values[idx], kind="stable")]
        best = int(order[0])
        row = StructureRow(float(v), float(values[best]), tuple(float(x) for x in A[best]), float(abs(U[best] - v)))
        if polish:
            polished = None
            for cand in order[:POLISH_CANDIDATES]:
                out = _polish(expr, cls, float(v), A[cand])
                if out is not None and out[2] <= POLISH_RESIDUAL and (polished is None or out[1] > polished[1]):
                    polished = out
            if polished is not None:
                row = StructureRow(float(v), float(polished[1]), polished[0], float(polished[2]), True)
        rows.append(row)
    return StructureTable(expr.preset, cls.kind, n, rows, resolution, band)


def audit_shape(table: StructureTable, tol: float = AUDIT_TOL) -> ShapeReport:
    """Check discrete monotone decrease and midpoint concavity; stores the report on the table.

    Midpoint concavity is tested for every pair ``i < j`` with ``i + j`` even,
    where ``(v_i + v_j) / 2`` is the grid point ``v_{(i+j)/2}`` on a uniform grid.
    """
    m = len(table.rows)
    if m < 8:
        raise UsageError(f"audit needs at least 8 rows, got {m}")
    v, f = table.v, table.f
    rise = f[1:] - f[:-1]
    mono_idx = [int(i) for i in np.flatnonzero(rise > tol)]
    mono = float(max(0.0, rise.max()))
    conc = 0.0
    triples = []
    for i in range(m):
        for j in range(i + 2, m, 2):
            k = (i + j) // 2
            fm = float(np.interp(0.5 * (v[i] + v[j]), v, f)) if not math.isclose(v[k], 0.5 * (v[i] + v[j]), rel_tol=1e-9) else f[k]
            gap = 0.5 * (f[i] + f[j]) - fm
            conc = max(conc, gap)
            if gap > tol:
                triples.append((i, k, j))
    report = ShapeReport(not mono_idx and not triples, tol, mono, conc, mono_idx, triples)
    table.audit = report
    return report


class ConservativeEnvelope:
    """Piecewise-linear upper bound of a concave decreasing sampled function.

    On ``[v_i, v_{i+1}]`` the value is the least of ``f_i`` (monotonicity) and
    the two neighbouring chords extended into the interval (concavity), plus
    a margin covering the constraint residual of the witnesses.
    """

    def __init__(self, table: StructureTable):
        if table.audit is None:
            raise UsageError("structure table has not been audited; run audit_shape first")
        if not table.audit.passed:
            raise UsageError("structure table failed its shape audit; no envelope available")
        self.v = table.v
        self.f = table.f
        slopes = np.diff(self.f) / np.diff(self.v)
        local = np.zeros(len(self.v))
        local[:-1] = np.abs(slopes)
        local[1:] = np.maximum(local[1:], np.abs(slopes))
        residuals = np.array([r.residual for r in table.rows])
        self.margin = float(np.max(residuals * (1.0 + 2.0 * local))) + 1e-12
        self._fmax = float(self.f.max())

    def _raw(self, x: float) -> float:
        v, f = self.v, self.f
        if x <= v[0]:
            return self._fmax
        i = int(np.searchsorted(v, x, side="right")) - 1
        if i >= len(v) - 1:
            return float(f[-1])
        if x == v[i]:
            return float(f[i])
        best = float(f[i])
        if i >= 1:
            best = min(best, f[i] + (f[i] - f[i - 1]) / (v[i] - v[i - 1]) * (x - v[i]))
        if i + 2 < len(v):
            best = min(best, f[i + 1] + (f[i + 2] - f[i + 1]) / (v[i + 2] - v[i + 1]) * (x - v[i + 1]))
        chord = f[i] + (f[i + 1] - f[i]) * (x - v[i]) / (v[i + 1] - v[i])
        return float(max(best, chord))

    def __call__(self, x: float) -> float:
        x = float(x)
        if x > self.v[-1] + 1e-9:
            raise UsageError(f"envelope queried at v = {x} above the table maximum {self.v[-1]}")
        return self._raw(min(x, self.v[-1])) + self.margin


def conservative_envelope(table: StructureTable) -> ConservativeEnvelope:
    return ConservativeEnvelope(table)


def closed_form_table(expr: BellExpression, cls: B.PartitionClass, v_grid) -> StructureTable:
    """Table from a closed-form structure function (CHSH or Mermin two-separable)."""
    if expr.preset == CHSH:
        fn = B.chsh_structure_f
    elif expr.preset == MERMIN3 and cls.kind == B.TWO_SEPARABLE:
        fn = B.f21_closed
    else:
        raise UsageError(f"no closed form for {expr.preset}/{cls.kind}")
    rows = [StructureRow(float(v), fn(v), tuple([math.nan] * expr.n), 0.0) for v in np.sort(v_grid)]
    return StructureTable(expr.preset, cls.kind, expr.n, rows, 0, 0.0)
