"""Mermin-Klyshko Bell operators, Bell values and their operator identities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConstraintError, UsageError
from .qubit import I2, SX, SY, SZ, Observable, check_hermitian, expectation, observable_matrix, tensor

MAX_PARTIES = 6

CHSH = "CHSH"
MERMIN3 = "MERMIN3"
F3_PLUS_F3PRIME = "F3_PLUS_F3PRIME"
MK_GENERAL = "MK_GENERAL"
PRESETS = (CHSH, MERMIN3, F3_PLUS_F3PRIME, MK_GENERAL)


@dataclass(frozen=True)
class Setting:
    """Per-party cosines between the two measurement axes of each party."""

    cosines: tuple[float, ...]

    def __post_init__(self):
        cos = tuple(float(c) for c in np.atleast_1d(self.cosines))
        object.__setattr__(self, "cosines", cos)
        for i, c in enumerate(cos):
            if not (-1.0 <= c <= 1.0) or math.isnan(c):
                raise UsageError(f"cosine a_{i + 1} = {c!r} outside [-1, 1]")

    @property
    def n(self) -> int:
        return len(self.cosines)

    @property
    def sines(self) -> tuple[float, ...]:
        return tuple(math.sqrt(max(0.0, 1.0 - c * c)) for c in self.cosines)

    def permuted(self, order: Sequence[int]) -> "Setting":
        return Setting(tuple(self.cosines[i] for i in order))

    def __iter__(self):
        return iter(self.cosines)

    def __len__(self):
        return len(self.cosines)


def as_setting(setting) -> Setting:
    return setting if isinstance(setting, Setting) else Setting(tuple(setting))


@dataclass(frozen=True)
class BellExpression:
    """``factor * (F_n cos t + F'_n sin t)``.

    ``t`` follows the ``cos t`` on ``F_n`` convention everywhere. Use
    :meth:`tilted` for the ``sin t F_n + cos t F'_n`` ordering.
    """

    n: int
    t: float = 0.0
    preset: str = MK_GENERAL
    factor: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise UsageError(f"Bell expressions need n >= 2 parties, got {self.n}")
        if self.preset not in PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}")
        if self.preset == CHSH and not (self.n == 2 and self.t == 0.0 and self.factor == 1.0):
            raise ConstraintError("CHSH preset requires n=2, t=0")
        if self.preset == MERMIN3 and not (self.n == 3 and self.t == 0.0 and self.factor == 1.0):
            raise ConstraintError("MERMIN3 preset requires n=3, t=0")
        if self.preset == F3_PLUS_F3PRIME and not (
            self.n == 3 and self.t == math.pi / 4 and self.factor == math.sqrt(2.0)
        ):
            raise ConstraintError("F3_PLUS_F3PRIME preset requires n=3, t=pi/4, factor sqrt(2)")

    @classmethod
    def chsh(cls) -> "BellExpression":
        return cls(2, 0.0, CHSH)

    @classmethod
    def mermin3(cls) -> "BellExpression":
        return cls(3, 0.0, MERMIN3)

    @classmethod
    def f3sum(cls) -> "BellExpression":
        """``F_3 + F'_3``, stored as ``sqrt(2) (F_3 cos pi/4 + F'_3 sin pi/4)``."""
        return cls(3, math.pi / 4, F3_PLUS_F3PRIME, math.sqrt(2.0))

    @classmethod
    def mk(cls, n: int, t: float = 0.0) -> "BellExpression":
        return cls(int(n), float(t), MK_GENERAL)

    @classmethod
    def tilted(cls, n: int, t: float) -> "BellExpression":
        """``sin t F_n + cos t F'_n``, i.e. ``mk(n, pi/2 - t)``."""
        return cls.mk(n, math.pi / 2 - t)

    @property
    def local_bound(self) -> float:
        """Largest value over deterministic +-1 assignments."""
        return _local_bound(self.n, self.t) * self.factor


@dataclass
class MKPair:
    F: np.ndarray
    Fprime: np.ndarray
    n: int

    def combined(self, t: float) -> np.ndarray:
        return math.cos(t) * self.F + math.sin(t) * self.Fprime

    @property
    def plus(self) -> np.ndarray:
        return 0.5 * (self.F + self.Fprime)

    @property
    def minus(self) -> np.ndarray:
        return 0.5 * (self.F - self.Fprime)


def _as_matrix(o) -> np.ndarray:
    return observable_matrix(o) if isinstance(o, Observable) else np.asarray(o, dtype=complex)


def mk_operators(observable_pairs) -> MKPair:
    """Build ``(F_n, F'_n)`` from per-party ``(A, A')`` pairs.

    Parties are tensored in list order. Each pair entry may be an
    :class:`Observable` or a 2x2 matrix.
    """
    pairs = [(_as_matrix(a), _as_matrix(ap)) for a, ap in observable_pairs]
    n = len(pairs)
    if n < 2:
        raise UsageError(f"MK operators need at least 2 parties, got {n}")
    (a1, a1p), (a2, a2p) = pairs[0], pairs[1]
    F = np.kron(a1, a2p) + np.kron(a1p, a2) + np.kron(a1, a2) - np.kron(a1p, a2p)
    Fp = np.kron(a1, a2p) + np.kron(a1p, a2) - np.kron(a1, a2) + np.kron(a1p, a2p)
    for a, ap in pairs[2:]:
        plus, minus = 0.5 * (a + ap), 0.5 * (a - ap)
        F, Fp = np.kron(F, plus) + np.kron(Fp, minus), np.kron(Fp, plus) - np.kron(F, minus)
    return MKPair(F, Fp, n)


def canonical_observables(setting) -> list[tuple[Observable, Observable]]:
    """Per party, ``(sigma_z, a sigma_z + sqrt(1-a^2) sigma_x)``."""
    setting = as_setting(setting)
    return [
        (Observable.projective((0.0, 0.0, 1.0)), Observable.projective((s, 0.0, c)))
        for c, s in zip(setting.cosines, setting.sines)
    ]


def canonical_matrices(setting) -> list[tuple[np.ndarray, np.ndarray]]:
    setting = as_setting(setting)
    return [(SZ, c * SZ + s * SX) for c, s in zip(setting.cosines, setting.sines)]


def bell_operator(expr: BellExpression, setting=None, observable_pairs=None) -> np.ndarray:
    """The Hermitian operator whose expectation is the Bell value."""
    if observable_pairs is None:
        if setting is None:
            raise UsageError("bell_operator needs a setting or explicit observable pairs")
        setting = as_setting(setting)
        if setting.n != expr.n:
            raise UsageError(f"setting has {setting.n} parties, expression needs {expr.n}")
        observable_pairs = canonical_matrices(setting)
    elif len(observable_pairs) != expr.n:
        raise UsageError(f"{len(observable_pairs)} observable pairs for an {expr.n}-party expression")
    pair = mk_operators(observable_pairs)
    return expr.factor * pair.combined(expr.t)


def bell_value(state: np.ndarray, expr: BellExpression, setting=None, observable_pairs=None) -> float:
    op = bell_operator(expr, setting, observable_pairs)
    state = np.asarray(state)
    if state.shape != op.shape:
        raise UsageError(f"state has shape {state.shape}, expected {op.shape} for n={expr.n}")
    return expectation(state, op)


def delta_epsilon(setting, l: int | None = None) -> tuple[float, float]:
    """``(delta_l, epsilon_l)`` for the first ``l`` parties.

    ``delta_l = (prod(1+s_j) + prod(1-s_j)) / 2`` with ``s_j = sqrt(1-a_j^2)``,
    ``epsilon_l = prod(a_j)``.
    """
    setting = as_setting(setting)
    l = setting.n if l is None else int(l)
    if not 1 <= l <= setting.n:
        raise UsageError(f"prefix length {l} outside [1, {setting.n}]")
    s = np.array(setting.sines[:l])
    a = np.array(setting.cosines[:l])
    delta = 0.5 * float(np.prod(1.0 + s) + np.prod(1.0 - s))
    eps = float(np.prod(a))
    if delta + 1e-12 < abs(eps):
        raise ConstraintError(f"delta_{l} = {delta} < |epsilon_{l}| = {abs(eps)}")
    return delta, eps


def _local_bound(n: int, t: float) -> float:
    best = -np.inf
    for bits in range(4**n):
        pairs = [
            (np.array([[1.0 - 2 * ((bits >> (2 * i)) & 1)]]), np.array([[1.0 - 2 * ((bits >> (2 * i + 1)) & 1)]]))
            for i in range(n)
        ]
        best = max(best, float(mk_operators(pairs).combined(t).real[0, 0]))
    return best


def _frob(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


def verify_mk_identities(n: int, setting) -> dict[str, float]:
    """Frobenius residuals of the MK operator identities at a setting.

    Checked: ``F^2 = F'^2 = 4 d+``, ``F F' = 4 (eps + i d-)``,
    ``F_{+-}^2 = 2 (d+ +- eps)``, ``{F_+, F_-} = 0``, where
    ``d+- = (prod(1 + Z_j) +- prod(1 - Z_j)) / 2`` and ``Z_j = -i (A_j A'_j - a_j)``.
    For ``n = 2`` the CHSH sub-operator identities are added.
    """
    setting = as_setting(setting)
    if not 2 <= n <= MAX_PARTIES:
        raise UsageError(f"identity check supports 2 <= n <= {MAX_PARTIES}, got {n}")
    if setting.n != n:
        raise UsageError(f"setting has {setting.n} parties, expected {n}")
    mats = canonical_matrices(setting)
    pair = mk_operators(mats)
    dim = 2**n
    eye = np.eye(dim)
    zs = [-1j * (a @ ap - c * I2) for (a, ap), c in zip(mats, setting.cosines)]
    plus_prod = tensor([I2 + z for z in zs])
    minus_prod = tensor([I2 - z for z in zs])
    dplus = 0.5 * (plus_prod + minus_prod)
    dminus = 0.5 * (plus_prod - minus_prod)
    eps = float(np.prod(setting.cosines))
    F, Fp = pair.F, pair.Fprime
    Fpl, Fmi = pair.plus, pair.minus
    report = {
        "F_squared": _frob(F @ F - 4 * dplus),
        "Fprime_squared": _frob(Fp @ Fp - 4 * dplus),
        "F_Fprime": _frob(F @ Fp - 4 * (eps * eye + 1j * dminus)),
        "Fplus_squared": _frob(Fpl @ Fpl - 2 * (dplus + eps * eye)),
        "Fminus_squared": _frob(Fmi @ Fmi - 2 * (dplus - eps * eye)),
        "anticommutator": _frob(Fpl @ Fmi + Fmi @ Fpl),
    }
    if n == 2:
        (a0, a1), (b0, b1) = mats
        a, b = setting.cosines
        sa, sb = setting.sines
        X = np.kron(a0, b1) + np.kron(a1, b0)
        Y = np.kron(a0, b0) - np.kron(a1, b1)
        yy = np.kron(SY, SY)
        report["X_squared"] = _frob(X @ X - (2 * (1 + a * b) * eye + 2 * sa * sb * yy))
        report["Y_squared"] = _frob(Y @ Y - (2 * (1 - a * b) * eye + 2 * sa * sb * yy))
        report["X_Y_anticommutator"] = _frob(X @ Y + Y @ X)
    for m in (F, Fp):
        check_hermitian(m, tol=1e-10)
    return report
