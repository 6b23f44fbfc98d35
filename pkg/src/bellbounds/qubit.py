"""Dense qubit linear algebra: Pauli matrices, Bloch-form observables, states.

All operators are plain ``numpy`` complex arrays. Sizes never exceed 64x64,
so everything is dense and exact to double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import ConstraintError, DomainError, UsageError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)


@dataclass(frozen=True)
class Observable:
    """Binary qubit observable ``r * (axis . sigma) + rstar * 1``.

    ``r + |rstar| <= 1`` keeps the spectrum inside [-1, 1]; ``r = 1, rstar = 0``
    is a projective (rank-one) measurement.
    """

    r: float
    axis: tuple[float, float, float]
    rstar: float = 0.0

    def __post_init__(self):
        axis = tuple(float(v) for v in self.axis)
        if len(axis) != 3:
            raise ConstraintError(f"axis must have 3 components, got {len(axis)}")
        object.__setattr__(self, "axis", axis)
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > HERMITIAN_TOL:
            raise ConstraintError(f"|axis| = 1 violated: |axis| = {norm!r}")
        if not 0.0 <= self.r <= 1.0:
            raise ConstraintError(f"0 <= r <= 1 violated: r = {self.r!r}")
        if self.r + abs(self.rstar) > 1.0 + HERMITIAN_TOL:
            raise ConstraintError(
                f"r + |r*| <= 1 violated: r + |r*| = {self.r + abs(self.rstar)!r}"
            )

    @classmethod
    def projective(cls, axis) -> "Observable":
        return cls(1.0, tuple(axis), 0.0)

    @property
    def is_projective(self) -> bool:
        return self.r == 1.0 and self.rstar == 0.0

    @property
    def norm(self) -> float:
        """Operator norm, ``r + |r*|``."""
        return self.r + abs(self.rstar)

    @property
    def matrix(self) -> np.ndarray:
        return observable_matrix(self)


@dataclass(frozen=True)
class BlochState:
    """Single-qubit state ``(1 + v . sigma) / 2`` with ``|v| <= 1``."""

    vector: tuple[float, float, float]

    def __post_init__(self):
        vec = tuple(float(v) for v in self.vector)
        object.__setattr__(self, "vector", vec)
        if np.linalg.norm(vec) > 1.0 + HERMITIAN_TOL:
            raise ConstraintError(f"|v| <= 1 violated: |v| = {np.linalg.norm(vec)!r}")

    @property
    def density(self) -> np.ndarray:
        x, y, z = self.vector
        return 0.5 * (I2 + x * SX + y * SY + z * SZ)


def bloch_dot(axis) -> np.ndarray:
    """``axis . sigma`` for a real 3-vector."""
    x, y, z = axis
    return x * SX + y * SY + z * SZ


def observable_matrix(obs: Observable) -> np.ndarray:
    return obs.r * bloch_dot(obs.axis) + obs.rstar * I2


def tensor(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of ``factors`` in list order."""
    if len(factors) == 0:
        raise UsageError("tensor() needs at least one factor")
    return reduce(np.kron, factors)


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    defect = hermiticity_defect(m)
    if defect > tol * scale:
        raise DomainError(f"matrix is not Hermitian: max |m - m^dag| = {defect:.3e}")


def hermitian_eigen(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, V)`` with ``m = V diag(w) V^dag``; column ``V[:, k]`` belongs
    to ``w[k]``.
    """
    m = np.asarray(m, dtype=complex)
    check_hermitian(m)
    herm = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(herm)
    return w[::-1].copy(), v[:, ::-1].copy()


def lambda_max(m: np.ndarray) -> float:
    return float(hermitian_eigen(m)[0][0])


def partial_trace(m: np.ndarray, subsystem_dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    The kept subsystems stay in their original order.
    """
    m = np.asarray(m)
    dims = [int(d) for d in subsystem_dims]
    total = int(np.prod(dims)) if dims else 0
    if m.ndim != 2 or m.shape != (total, total):
        raise UsageError(f"dims {dims} (product {total}) do not match matrix shape {m.shape}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise UsageError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = m.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(t, row + col, out)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return reduced.reshape(d, d)


def expectation(state: np.ndarray, op: np.ndarray, *, diagnostics: dict | None = None) -> float:
    """``Re Tr(state @ op)``.

    If ``diagnostics`` is given, the imaginary residual is stored under
    ``"imag_residual"``.
    """
    state = np.asarray(state)
    op = np.asarray(op)
    if state.shape != op.shape or state.ndim != 2:
        raise UsageError(f"dimension mismatch: state {state.shape} vs operator {op.shape}")
    value = np.einsum("ij,ji->", state, op)
    if diagnostics is not None:
        diagnostics["imag_residual"] = float(abs(value.imag))
    return float(value.real)


def is_density_matrix(rho: np.ndarray) -> bool:
    rho = np.asarray(rho)
    if hermiticity_defect(rho) > HERMITIAN_TOL:
        return False
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] >= -PSD_TOL)


def random_unit_vectors(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform points on the unit sphere, shape ``(*size, 3)``."""
    v = rng.normal(size=tuple(np.atleast_1d(size)) + (3,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_product_state(n: int, seed) -> list[BlochState]:
    """``n`` independent Haar-random pure qubit states (unit Bloch vectors)."""
    if n < 1:
        raise UsageError("random_product_state needs n >= 1")
    rng = np.random.default_rng(seed)
    vecs = random_unit_vectors(rng, n)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return [BlochState(tuple(v)) for v in vecs]


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def bloch_of_density(rho: np.ndarray) -> np.ndarray:
    return np.array([np.trace(rho @ p).real for p in PAULI])


def uncertainty_lhs(bloch, axis0, axis1, tol: float = 1e-10) -> float:
    """``<A0+A1>^2 / (2(1+a)) + <A0-A1>^2 / (2(1-a))`` for a qubit with Bloch vector ``bloch``.

    ``A_i = axis_i . sigma`` and ``a = axis0 . axis1``. The value never exceeds 1.
    At ``a = +-1`` the vanishing-denominator term is dropped after checking its
    numerator is zero within ``tol``.
    """
    v = np.asarray(bloch, dtype=float)
    n0, n1 = np.asarray(axis0, dtype=float), np.asarray(axis1, dtype=float)
    a = float(np.clip(np.dot(n0, n1), -1.0, 1.0))
    plus = float(np.dot(v, n0 + n1))
    minus = float(np.dot(v, n0 - n1))
    total = 0.0
    for num, den in ((plus, 2.0 * (1.0 + a)), (minus, 2.0 * (1.0 - a))):
        if den <= tol:
            if num * num > tol:
                raise DomainError(f"degenerate axes but numerator {num * num:.3e} is nonzero")
            continue
        total += num * num / den
    return total
