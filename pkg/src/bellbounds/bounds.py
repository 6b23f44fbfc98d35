"""Closed-form quantum and separable bounds for CHSH, Mermin and MK inequalities.

Everything here is a function of the per-party cosines only. Bounds for the
fully separable Mermin class need a one-dimensional maximization over an
angle; it is done on a dense grid followed by golden-section refinement.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import (
    ConstraintError,
    InternalConsistencyError,
    NonQuantumCalibrationError,
    ResourceError,
    UsageError,
)
from .expressions import (
    CHSH,
    F3_PLUS_F3PRIME,
    MERMIN3,
    MK_GENERAL,
    BellExpression,
    Setting,
    as_setting,
    delta_epsilon,
)
from .qubit import Observable

SQRT2 = math.sqrt(2.0)
U_GRID_POINTS = 1024
GOLDEN_TOL = 1e-10
CALIBRATION_TOL = 1e-9

FULL_PRODUCT = "FULL_PRODUCT"
BIPARTITION = "BIPARTITION"
TWO_SEPARABLE = "TWO_SEPARABLE"
GENERAL = "GENERAL"


@dataclass(frozen=True)
class PartitionClass:
    """Entanglement class a separable bound refers to.

    ``BIPARTITION`` carries the party indices of one block; the other block is
    the complement.
    """

    kind: str
    block: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in (FULL_PRODUCT, BIPARTITION, TWO_SEPARABLE, GENERAL):
            raise UsageError(f"unknown partition class {self.kind!r}")
        if self.kind == BIPARTITION:
            if not self.block:
                raise UsageError("BIPARTITION needs a non-empty block")
            object.__setattr__(self, "block", tuple(sorted(int(i) for i in self.block)))

    @classmethod
    def bipartition(cls, block) -> "PartitionClass":
        return cls(BIPARTITION, tuple(block))

    def label(self, n: int) -> str:
        if self.kind == FULL_PRODUCT:
            return "1" * n
        if self.kind == TWO_SEPARABLE:
            return "21" if n == 3 else "2sep"
        if self.kind == GENERAL:
            return "general"
        k = len(self.block)
        return f"({k},{n - k})"


FULL = PartitionClass(FULL_PRODUCT)
TWO_SEP = PartitionClass(TWO_SEPARABLE)
ANY_STATE = PartitionClass(GENERAL)


@dataclass
class BoundReport:
    quantum: float
    class_bounds: dict[str, float]
    achieving_params: dict = field(default_factory=dict)

    def __post_init__(self):
        for label, value in self.class_bounds.items():
            if value < -1e-12:
                raise InternalConsistencyError(f"negative bound {label} = {value}")
            if value > self.quantum + 1e-9:
                raise InternalConsistencyError(
                    f"separable bound {label} = {value} exceeds quantum bound {self.quantum}"
                )

    def to_dict(self) -> dict:
        out = {"U": self.quantum}
        out.update({f"class_{k}": v for k, v in self.class_bounds.items()})
        if self.achieving_params:
            out["achieving_params"] = self.achieving_params
        return out


def _bar(x):
    return np.sqrt(np.maximum(0.0, 1.0 - np.square(x)))


def _check_cosines(*cos) -> tuple[float, ...]:
    out = []
    for i, c in enumerate(cos):
        c = float(c)
        if not -1.0 <= c <= 1.0 or math.isnan(c):
            raise UsageError(f"cosine #{i + 1} = {c!r} outside [-1, 1]")
        out.append(c)
    return tuple(out)


def _sqrt_clamped(x, name: str = "argument"):
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12):
        raise InternalConsistencyError(f"{name} = {x.min()} < 0 beyond rounding")
    return np.sqrt(np.maximum(x, 0.0))


# --- CHSH -------------------------------------------------------------------


def chsh_bounds(a: float, b: float) -> BoundReport:
    a, b = _check_cosines(a, b)
    p = float(_bar(a) * _bar(b))
    # 1 - p without cancellation near a = b = 0
    q = (a * a + b * b - a * a * b * b) / (1.0 + p)
    return BoundReport(
        quantum=2.0 * math.sqrt(1.0 + p),
        class_bounds={"11": math.sqrt(1.0 + p) + math.sqrt(q)},
    )


def chsh_structure_f(v: float) -> float:
    """Largest product-state CHSH bound among settings with quantum bound ``v``."""
    v = float(v)
    if v > 2.0 * SQRT2 + CALIBRATION_TOL:
        raise NonQuantumCalibrationError(f"CHSH value {v} exceeds 2*sqrt(2)")
    v = min(max(v, 2.0), 2.0 * SQRT2)
    x = v * v / 4.0 - 1.0
    return math.sqrt(2.0 + 2.0 * math.sqrt(max(0.0, 1.0 - x * x)))


# --- Mermin -----------------------------------------------------------------

# role assignments (pair, pair, single); the bound is symmetric in the pair
_ROLE_PERMS = ((0, 1, 2), (1, 2, 0), (0, 2, 1))


def mermin3_quantum(a, b, c):
    sa, sb, sc = _bar(a), _bar(b), _bar(c)
    return 2.0 * np.sqrt(1.0 + sa * sb + sa * sc + sb * sc)


def mermin3_u21_role(a, b, c):
    """Two-separable bound with ``c`` the party split off."""
    sa, sb, sc = _bar(a), _bar(b), _bar(c)
    base = 1.0 + sa * sb
    cross = (sa + sb) * sc
    return np.sqrt(base + cross) + _sqrt_clamped(base - cross, "1 + s_a s_b - (s_a + s_b) s_c")


def _mermin111_objective(u, pplus, pminus, z, q):
    cu, su = np.cos(u), np.sin(u)
    first = np.maximum(0.0, (pplus * (1.0 + z * cu) + q * su) * 0.5)
    second = np.maximum(0.0, (pminus * (1.0 + z * cu) + q * su) * 0.5)
    return np.sqrt(first) + np.sqrt(second)


def _maximize_angle(fun, n_points=U_GRID_POINTS, shape=()):
    """Max over ``u in [0, 2 pi)`` of ``fun(u)`` for a batch of problems.

    ``fun`` maps an array of angles broadcastable against ``shape`` to values.
    A uniform grid locates the best cell; golden section refines inside the
    neighbouring two cells.
    """
    grid = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    vals = fun(grid.reshape((n_points,) + (1,) * len(shape)))
    idx = np.argmax(vals, axis=0)
    u0 = grid[idx]
    best = np.take_along_axis(vals, idx[None], axis=0)[0]
    h = 2.0 * math.pi / n_points
    u_ref, f_ref = _golden_section(fun, u0 - h, u0 + h)
    better = f_ref > best
    return np.where(better, u_ref, u0), np.where(better, f_ref, best)


def _golden_section(fun, lo, hi, tol=GOLDEN_TOL):
    ratio = (math.sqrt(5.0) - 1.0) / 2.0
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x1 = hi - ratio * (hi - lo)
    x2 = lo + ratio * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    width = float(np.max(hi - lo)) if lo.size else 0.0
    while width > tol:
        left = f1 >= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        new_x = np.where(left, hi - ratio * (hi - lo), lo + ratio * (hi - lo))
        f_new = fun(new_x)
        x2, f2, x1, f1 = (
            np.where(left, x1, new_x),
            np.where(left, f1, f_new),
            np.where(left, new_x, x2),
            np.where(left, f_new, f2),
        )
        width = float(np.max(hi - lo))
    mid = 0.5 * (lo + hi)
    return mid, fun(mid)


def mermin3_u111_role(a, b, c, n_points=U_GRID_POINTS):
    """Fully separable Mermin bound with ``c`` in the distinguished role.

    Returns ``(value, u)`` arrays with the maximizing angle.
    """
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c)))
    sab = _bar(a) * _bar(b)
    pplus, pminus = 1.0 + sab, 1.0 - sab
    q = a * b * _bar(c)

    def fun(u):
        return _mermin111_objective(u, pplus, pminus, c, q)

    u, val = _maximize_angle(fun, n_points, shape=a.shape)
    return val, u


def mermin3_u21(a, b, c):
    """(value, role index) maximized over which party is split off."""
    vals = np.stack([mermin3_u21_role(*_permute3((a, b, c), p)) for p in _ROLE_PERMS])
    idx = np.argmax(vals, axis=0)
    return np.take_along_axis(vals, idx[None], axis=0)[0], idx


def mermin3_u111(a, b, c, n_points=U_GRID_POINTS):
    results = [mermin3_u111_role(*_permute3((a, b, c), p), n_points=n_points) for p in _ROLE_PERMS]
    vals = np.stack([r[0] for r in results])
    us = np.stack([r[1] for r in results])
    idx = np.argmax(vals, axis=0)
    pick = lambda arr: np.take_along_axis(arr, idx[None], axis=0)[0]  # noqa: E731
    return pick(vals), idx, pick(us)


def _permute3(values, perm):
    return tuple(values[i] for i in perm)


def mermin3_bounds(a: float, b: float, c: float) -> BoundReport:
    a, b, c = _check_cosines(a, b, c)
    u21, role21 = mermin3_u21(a, b, c)
    u111, role111, u = mermin3_u111(a, b, c)
    return BoundReport(
        quantum=float(mermin3_quantum(a, b, c)),
        class_bounds={"21": float(u21), "111": float(u111)},
        achieving_params={
            "21": {"split_party": int(_ROLE_PERMS[int(role21)][2])},
            "111": {"distinguished_party": int(_ROLE_PERMS[int(role111)][2]), "u": float(u)},
        },
    )


def f21_closed(v: float) -> float:
    """Closed-form two-separable structure function of the Mermin inequality."""
    v = float(v)
    if v > 4.0 + CALIBRATION_TOL:
        raise NonQuantumCalibrationError(f"Mermin value {v} exceeds 4")
    v = min(max(v, 2.0 * SQRT2), 4.0)
    return v / 2.0 + math.sqrt(max(0.0, 4.0 - v * v / 4.0))


# --- MK family --------------------------------------------------------------


def mk_quantum_bound(setting, t: float) -> float:
    delta, eps = delta_epsilon(setting)
    arg = delta + eps * math.sin(2.0 * t)
    if arg < -1e-12:
        raise InternalConsistencyError(f"delta + eps sin 2t = {arg} < 0")
    return 2.0 * math.sqrt(max(arg, 0.0))


def _sine_products(cosines) -> tuple[float, float]:
    """``(prod(1 + s_j), prod(1 - s_j))`` with ``1 - s = a^2 / (1 + s)``."""
    a = np.asarray(cosines, dtype=float)
    s = np.sqrt(np.clip(1.0 - a * a, 0.0, None))
    return float(np.prod(1.0 + s)), float(np.prod(a * a / (1.0 + s)))


def mk_bipartition_bound(setting, t: float, k: int) -> float:
    """Bound for ``rho_k (x) rho_k'`` with the first ``k`` parties in one block."""
    setting = as_setting(setting)
    n = setting.n
    if not 1 <= int(k) <= n - 1:
        raise UsageError(f"block size k = {k} outside [1, {n - 1}]")
    k = int(k)
    p_plus, p_minus = _sine_products(setting.cosines[:k])
    q_plus, q_minus = _sine_products(setting.cosines[k:])
    ek, ek2 = float(np.prod(setting.cosines[:k])), float(np.prod(setting.cosines[k:]))
    # delta^2 - eps^2 = gamma^2 with gamma = (P+ - P-) / 2; the factored form avoids cancellation
    dk, dk2 = 0.5 * (p_plus + p_minus), 0.5 * (q_plus + q_minus)
    gk, gk2 = 0.5 * (p_plus - p_minus), 0.5 * (q_plus - q_minus)
    alpha = dk * dk2 + ek * ek2 * math.sin(2.0 * t)
    low = 0.5 * (p_plus * q_minus + p_minus * q_plus) + ek * ek2 * math.sin(2.0 * t)
    inner = low * (alpha + gk * gk2)
    outer = 2.0 * alpha + 2.0 * math.sqrt(max(inner, 0.0))
    if outer < -1e-12:
        raise InternalConsistencyError(f"outer square-root argument {outer} < 0")
    return math.sqrt(max(outer, 0.0))


def mk_block_bound(setting, t: float, block) -> float:
    """:func:`mk_bipartition_bound` for an arbitrary block of parties."""
    setting = as_setting(setting)
    block = sorted(set(int(i) for i in block))
    rest = [i for i in range(setting.n) if i not in block]
    if not block or not rest:
        raise UsageError(f"block {block} is not a proper bipartition of {setting.n} parties")
    return mk_bipartition_bound(setting.permuted(block + rest), t, len(block))


def all_bipartition_blocks(n: int) -> list[tuple[int, ...]]:
    """One block per unordered bipartition (the block containing party 0)."""
    blocks = []
    others = list(range(1, n))
    for size in range(0, n - 1):
        for extra in itertools.combinations(others, size):
            blocks.append((0,) + extra)
    return blocks


# --- F3 + F3' ---------------------------------------------------------------


def region_R_member(a: float, b: float, c: float, diagnostics: dict | None = None) -> bool:
    a, b, c = _check_cosines(a, b, c)
    radicand = a * a + b * b + c * c + 2.0 * a * b * c
    if radicand < 0.0:
        if diagnostics is not None:
            diagnostics["negative_radicand"] = radicand
        return False
    lhs = (
        a * a * b * b + a * a * c * c + b * b * c * c - a * a * b * b * c * c
        + 2.0 * a * b * c * math.sqrt(radicand)
    )
    if diagnostics is not None:
        diagnostics["lhs"] = lhs
    return lhs <= 0.0


def f3sum_quantum(a, b, c):
    sa, sb, sc = _bar(a), _bar(b), _bar(c)
    return np.sqrt(8.0 * np.maximum(0.0, 1.0 + sa * sb + sa * sc + sb * sc + a * b * c))


def f3sum_u21_role(a, b, c):
    """Two-separable ``F3 + F3'`` bound with ``c`` split off, maximized over the sign."""
    sab = _bar(a) * _bar(b)
    plus = 2.0 * np.sqrt(np.maximum(0.0, (1.0 + c) * (1.0 + sab + a * b)))
    minus = 2.0 * np.sqrt(np.maximum(0.0, (1.0 - c) * (1.0 + sab - a * b)))
    return np.maximum(plus, minus), np.where(plus >= minus, 1, -1)


def f3sum_u21(a, b, c):
    results = [f3sum_u21_role(*_permute3((a, b, c), p)) for p in _ROLE_PERMS]
    vals = np.stack([r[0] for r in results])
    signs = np.stack([r[1] for r in results])
    idx = np.argmax(vals, axis=0)
    pick = lambda arr: np.take_along_axis(arr, idx[None], axis=0)[0]  # noqa: E731
    return pick(vals), idx, pick(signs)


def f3sum_u111_boundary(a, b, c):
    best = None
    for x, y in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        val = np.sqrt(np.maximum(0.0, 2.0 * (1.0 + x * a) * (1.0 + y * b) * (1.0 + x * y * c)))
        best = val if best is None else np.maximum(best, val)
    return best


def f3sum_u111_interior(a: float, b: float, c: float) -> float:
    denom = 2.0 + a * b / c + a * c / b + b * c / a - a * b * c
    if denom <= 0.0:
        raise InternalConsistencyError(f"interior denominator {denom} <= 0 at {(a, b, c)}")
    return float(2.0 * _bar(a) * _bar(b) * _bar(c) / math.sqrt(denom))


def _region_R_lhs(a, b, c):
    radicand = a * a + b * b + c * c + 2.0 * a * b * c
    lhs = (
        a * a * b * b + a * a * c * c + b * b * c * c - a * a * b * b * c * c
        + 2.0 * a * b * c * np.sqrt(np.maximum(radicand, 0.0))
    )
    return np.where(radicand >= 0.0, lhs, np.inf)


def region_R_array(a, b, c):
    """Vectorized :func:`region_R_member`."""
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c)))
    return _region_R_lhs(a, b, c) <= 0.0


def f3sum_u111_array(a, b, c):
    """Vectorized fully separable ``F3 + F3'`` bound."""
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c)))
    boundary = f3sum_u111_boundary(a, b, c)
    # on the edge of R (lhs = 0) both forms agree; the boundary form avoids 0/0 at |a| = |b| = |c| = 1
    interior_mask = (_region_R_lhs(a, b, c) < 0.0) & (a * b * c != 0.0)
    if not np.any(interior_mask):
        return boundary
    ai, bi, ci = a[interior_mask], b[interior_mask], c[interior_mask]
    denom = 2.0 + ai * bi / ci + ai * ci / bi + bi * ci / ai - ai * bi * ci
    if np.any(denom <= 0.0):
        raise InternalConsistencyError("interior denominator <= 0 inside region R")
    out = np.array(boundary, dtype=float, copy=True)
    out[interior_mask] = 2.0 * _bar(ai) * _bar(bi) * _bar(ci) / np.sqrt(denom)
    return out


def f3sum_u111(a: float, b: float, c: float) -> tuple[float, str]:
    """Fully separable ``F3 + F3'`` bound and the branch used."""
    diag = {}
    if region_R_member(a, b, c, diag) and diag["lhs"] < 0.0 and a * b * c != 0.0:
        return f3sum_u111_interior(a, b, c), "interior"
    return float(f3sum_u111_boundary(a, b, c)), "boundary"


def f3sum_bounds(a: float, b: float, c: float) -> BoundReport:
    a, b, c = _check_cosines(a, b, c)
    u21, role, sign = f3sum_u21(a, b, c)
    u111, branch = f3sum_u111(a, b, c)
    return BoundReport(
        quantum=float(f3sum_quantum(a, b, c)),
        class_bounds={"21": float(u21), "111": u111},
        achieving_params={
            "21": {"split_party": int(_ROLE_PERMS[int(role)][2]), "sign": int(sign)},
            "111": {"branch": branch, "in_region_R": region_R_member(a, b, c)},
        },
    )


# --- dispatch ---------------------------------------------------------------


def quantum_bound(expr: BellExpression, setting) -> float:
    setting = as_setting(setting)
    if setting.n != expr.n:
        raise UsageError(f"setting has {setting.n} parties, expression needs {expr.n}")
    return expr.factor * mk_quantum_bound(setting, expr.t)


def class_bound(expr: BellExpression, cls: PartitionClass, setting) -> float:
    """Upper bound on the Bell value over states of class ``cls`` at ``setting``."""
    setting = as_setting(setting)
    if setting.n != expr.n:
        raise UsageError(f"setting has {setting.n} parties, expression needs {expr.n}")
    return _class_bound_cached(expr, cls, setting.cosines)


@lru_cache(maxsize=65536)
def _class_bound_cached(expr: BellExpression, cls: PartitionClass, cos: tuple[float, ...]) -> float:
    n = expr.n
    if cls.kind == GENERAL:
        return expr.factor * mk_quantum_bound(cos, expr.t)
    if expr.preset == CHSH or (n == 2 and cls.kind in (FULL_PRODUCT, TWO_SEPARABLE)):
        return expr.factor * mk_bipartition_bound(cos, expr.t, 1)
    if cls.kind == BIPARTITION:
        if any(i < 0 or i >= n for i in cls.block) or len(cls.block) >= n:
            raise UsageError(f"block {cls.block} is not a proper bipartition of {n} parties")
        return expr.factor * mk_block_bound(cos, expr.t, cls.block)
    if expr.preset == MERMIN3:
        if cls.kind == TWO_SEPARABLE:
            return float(mermin3_u21(*cos)[0])
        return float(mermin3_u111(*cos)[0])
    if expr.preset == F3_PLUS_F3PRIME:
        if cls.kind == TWO_SEPARABLE:
            return float(f3sum_u21(*cos)[0])
        return f3sum_u111(*cos)[0]
    if cls.kind == TWO_SEPARABLE:
        return expr.factor * max(mk_block_bound(cos, expr.t, blk) for blk in all_bipartition_blocks(n))
    raise UsageError(f"no fully separable bound available for {expr.preset} with n={n}")


def bounds_report(expr: BellExpression, setting) -> BoundReport:
    """All available bounds for ``expr`` at ``setting``."""
    setting = as_setting(setting)
    if setting.n != expr.n:
        raise UsageError(f"setting has {setting.n} parties, expression needs {expr.n}")
    if expr.preset == CHSH:
        return chsh_bounds(*setting.cosines)
    if expr.preset == MERMIN3:
        return mermin3_bounds(*setting.cosines)
    if expr.preset == F3_PLUS_F3PRIME:
        return f3sum_bounds(*setting.cosines)
    n = expr.n
    classes = {}
    for blk in all_bipartition_blocks(n):
        cls = PartitionClass.bipartition(blk)
        label = f"({len(blk)},{n - len(blk)})[{','.join(str(i) for i in blk)}]"
        classes[label] = class_bound(expr, cls, setting)
    return BoundReport(quantum=quantum_bound(expr, setting), class_bounds=classes)


# --- general measurements ---------------------------------------------------

PROJECTIVE = "PROJECTIVE"
PLUS_ID = "PLUS_ID"
MINUS_ID = "MINUS_ID"


class Component(NamedTuple):
    weight: float
    kind: str
    axis: tuple[float, float, float] | None = None


def decompose_observable(obs: Observable) -> list[Component]:
    """Split ``r a.sigma + r* 1`` into projective and +-identity parts.

    Weights are ``(r, (1 - r + r*)/2, (1 - r - r*)/2)``.
    """
    if not isinstance(obs, Observable):
        raise ConstraintError(f"expected an Observable, got {type(obs).__name__}")
    if obs.is_projective:
        return [Component(1.0, PROJECTIVE, obs.axis)]
    rp = 0.5 * (1.0 - obs.r + obs.rstar)
    rm = 0.5 * (1.0 - obs.r - obs.rstar)
    parts = [Component(obs.r, PROJECTIVE, obs.axis), Component(rp, PLUS_ID), Component(rm, MINUS_ID)]
    if min(p.weight for p in parts) < -1e-12 or abs(sum(p.weight for p in parts) - 1.0) > 1e-12:
        raise ConstraintError(f"invalid decomposition weights {[p.weight for p in parts]}")
    return parts


@dataclass
class DecomposedBound:
    value: float
    t0: float
    n_terms: int
    coarse: float | None = None


def general_setting_bound(observable_pairs, expr: BellExpression, cls: PartitionClass) -> DecomposedBound:
    """Bound for arbitrary (non-projective) qubit observables.

    The Bell value is multilinear in the observables, so it decomposes into a
    convex mixture over projective/identity components. A party whose
    component is an identity is bounded by the worse of the two compatible
    settings (cosine +1 or -1).
    """
    n = len(observable_pairs)
    if n != expr.n:
        raise UsageError(f"{n} observable pairs for an {expr.n}-party expression")
    if n > 4:
        raise ResourceError(f"decomposition has 3^{2 * n} terms; supported up to n = 4")
    per_party = []
    for first, second in observable_pairs:
        options = []
        for c0, c1 in itertools.product(decompose_observable(first), decompose_observable(second)):
            w = c0.weight * c1.weight
            if w <= 0.0:
                continue
            if c0.kind == PROJECTIVE and c1.kind == PROJECTIVE:
                cosines = (float(np.clip(np.dot(c0.axis, c1.axis), -1.0, 1.0)),)
            else:
                cosines = (1.0, -1.0)
            options.append((w, cosines, c0.kind == PROJECTIVE and c1.kind == PROJECTIVE))
        per_party.append(options)

    total = 0.0
    t0 = 0.0
    n_terms = 0
    projective_setting = None
    for combo in itertools.product(*per_party):
        weight = float(np.prod([o[0] for o in combo]))
        n_terms += 1
        term = max(class_bound(expr, cls, cos) for cos in itertools.product(*(o[1] for o in combo)))
        total += weight * term
        if all(o[2] for o in combo):
            t0 = weight
            projective_setting = tuple(o[1][0] for o in combo)
    coarse = None
    if expr.preset == CHSH and cls.kind == GENERAL:
        u = quantum_bound(expr, projective_setting) if projective_setting is not None else 0.0
        coarse = t0 * u + 2.0 * (1.0 - t0)
    return DecomposedBound(value=total, t0=t0, n_terms=n_terms, coarse=coarse)


# --- certification ----------------------------------------------------------

ENTANGLED = "ENTANGLED"
NOT_CERTIFIED = "NOT_CERTIFIED"
GENUINE_TRIPARTITE_ENTANGLED = "GENUINE_TRIPARTITE_ENTANGLED"
NOT_FULLY_SEPARABLE = "NOT_FULLY_SEPARABLE"


@dataclass
class Verdict:
    verdict: str
    bound: float
    margin: float
    beta_cal: float
    beta_cal_used: float
    clamped: bool
    source: str

    @property
    def certified(self) -> bool:
        return self.verdict != NOT_CERTIFIED

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "bound": self.bound,
            "margin": self.margin,
            "beta_cal": self.beta_cal,
            "beta_cal_used": self.beta_cal_used,
            "clamped": self.clamped,
            "source": self.source,
        }


def expression_quantum_max(expr: BellExpression) -> float | None:
    if expr.preset == CHSH:
        return 2.0 * SQRT2
    if expr.preset == MERMIN3:
        return 4.0
    if expr.preset == F3_PLUS_F3PRIME:
        return 4.0 * SQRT2
    return None


def certify(expr: BellExpression, beta_cal: float, beta_obs: float, cls: PartitionClass, structure_fn_table=None) -> Verdict:
    """Decide whether ``beta_obs`` certifies entanglement beyond class ``cls``.

    ``beta_cal`` is a Bell value the same devices have produced before. The
    separable bound is the structure function evaluated at ``beta_cal``;
    numeric classes need an audited structure table.
    """
    beta_cal = float(beta_cal)
    beta_obs = float(beta_obs)
    qmax = expression_quantum_max(expr)
    if qmax is not None and beta_cal > qmax + CALIBRATION_TOL:
        raise NonQuantumCalibrationError(f"calibration value {beta_cal} exceeds the quantum maximum {qmax}")

    if expr.preset == CHSH and cls.kind in (FULL_PRODUCT, TWO_SEPARABLE, BIPARTITION):
        used = min(max(beta_cal, 2.0), 2.0 * SQRT2)
        bound = chsh_structure_f(used)
        label, source = ENTANGLED, "closed form f"
    elif expr.preset == MERMIN3 and cls.kind == TWO_SEPARABLE:
        used = min(max(beta_cal, 2.0 * SQRT2), 4.0)
        bound = f21_closed(used)
        label, source = GENUINE_TRIPARTITE_ENTANGLED, "closed form f_21"
    elif cls.kind == GENERAL:
        raise UsageError("certification needs a separable class, not GENERAL")
    else:
        if structure_fn_table is None:
            raise UsageError(f"class {cls.kind} for {expr.preset} needs a numeric structure table")
        from .structure import conservative_envelope

        table = structure_fn_table
        if table.expression != expr.preset or table.partition != cls.kind:
            raise UsageError(
                f"table is for {table.expression}/{table.partition}, not {expr.preset}/{cls.kind}"
            )
        lo, hi = table.v_range
        if beta_cal > hi + CALIBRATION_TOL:
            raise NonQuantumCalibrationError(f"calibration value {beta_cal} exceeds table maximum {hi}")
        used = min(max(beta_cal, lo), hi)
        bound = float(conservative_envelope(table)(used))
        if cls.kind == FULL_PRODUCT:
            label = NOT_FULLY_SEPARABLE if expr.n > 2 else ENTANGLED
        elif cls.kind == TWO_SEPARABLE and expr.n == 3:
            label = GENUINE_TRIPARTITE_ENTANGLED
        else:
            label = ENTANGLED
        source = "numeric envelope"
    margin = beta_obs - bound
    verdict = label if margin > 0.0 else NOT_CERTIFIED
    return Verdict(verdict, bound, margin, beta_cal, used, used != beta_cal, source)
