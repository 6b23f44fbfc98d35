"""Brute-force maximization of Bell values over restricted state classes.

The product-state and bipartition oracles run alternating ascent: with every
block but one held fixed the Bell value is a Hermitian form in the free block,
so the best update is its top eigenvector. All restarts of one call are
advanced together as a batch.
"""

from __future__ import annotations

import os
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as _bounds
from .errors import InternalConsistencyError, UsageError
from .expressions import F3_PLUS_F3PRIME, BellExpression, Setting, bell_operator, mk_operators
from .qubit import Observable, bloch_of_density, check_hermitian, lambda_max, pure_density

DEFAULT_RESTARTS = 64
CONVERGENCE_TOL = 1e-12
MAX_SWEEPS = 10_000
VIOLATION_TOL = 1e-6
THREADS_ENV = "BELLBOUNDS_THREADS"

_AXIS_STATES = (
    np.array([1.0, 1.0]) / np.sqrt(2.0),
    np.array([1.0, -1.0]) / np.sqrt(2.0),
    np.array([1.0, 1.0j]) / np.sqrt(2.0),
    np.array([1.0, -1.0j]) / np.sqrt(2.0),
    np.array([1.0, 0.0]),
    np.array([0.0, 1.0]),
)


@dataclass
class AscentResult:
    """Best value found and the state achieving it.

    ``witness`` holds Bloch vectors for single-qubit blocks and density
    matrices for larger ones. ``trace`` is the per-sweep value of the winning
    restart.
    """

    value: float
    witness: list
    iterations: int
    restarts: int
    converged: bool
    trace: list[float] = field(default_factory=list)


def quantum_max(op: np.ndarray) -> float:
    """Largest eigenvalue: the Bell value maximized over all states."""
    return lambda_max(op)


def _n_qubits(op: np.ndarray) -> int:
    dim = op.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim or op.shape != (dim, dim):
        raise UsageError(f"operator shape {op.shape} is not 2^n x 2^n")
    return n


def _random_states(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _initial_blocks(dims: list[int], restarts: int, seed) -> list[np.ndarray]:
    """Per-block start vectors, shape ``(restarts, d)`` each.

    The first six restarts put every qubit on the same Pauli eigenstate;
    the rest are drawn from independent streams ``(seed, index)``.
    """
    blocks = [np.empty((restarts, d), dtype=complex) for d in dims]
    for r in range(restarts):
        if r < len(_AXIS_STATES):
            base = _AXIS_STATES[r]
            for b, d in zip(blocks, dims):
                vec = base
                for _ in range(int(round(np.log2(d))) - 1):
                    vec = np.kron(vec, base)
                b[r] = vec
        else:
            rng = np.random.default_rng([int(seed), r])
            for b, d in zip(blocks, dims):
                b[r] = _random_states(rng, d)
    return blocks


def _block_conditional(tensor: np.ndarray, states: list[np.ndarray], free: int) -> np.ndarray:
    """Operator on block ``free`` after contracting every other block with its state.

    ``tensor`` has axes ``(row_0..row_{m-1}, col_0..col_{m-1})``; ``states[j]`` has
    shape ``(R, d_j)``. Returns ``(R, d_free, d_free)``.
    """
    m = len(states)
    letters = iter(string.ascii_letters)
    rows = [next(letters) for _ in range(m)]
    cols = [next(letters) for _ in range(m)]
    batch = next(letters)
    operands = [tensor]
    specs = ["".join(rows + cols)]
    for j in range(m):
        if j == free:
            continue
        operands += [states[j].conj(), states[j]]
        specs += [batch + rows[j], batch + cols[j]]
    out = batch + rows[free] + cols[free]
    return np.einsum(",".join(specs) + "->" + out, *operands)


def _alternating_ascent(tensor: np.ndarray, states: list[np.ndarray]):
    restarts = states[0].shape[0]
    m = len(states)
    values = np.full(restarts, -np.inf)
    converged = np.zeros(restarts, dtype=bool)
    traces = []
    sweeps = 0
    while sweeps < MAX_SWEEPS and not converged.all():
        sweeps += 1
        active = np.flatnonzero(~converged)
        for j in range(m):
            cond = _block_conditional(tensor, [s[active] for s in states], j)
            cond = 0.5 * (cond + np.conj(np.swapaxes(cond, 1, 2)))
            w, v = np.linalg.eigh(cond)
            states[j][active] = v[:, :, -1]
        new = values.copy()
        new[active] = w[:, -1]
        scale = np.maximum(1.0, np.abs(new))
        if np.any(new < values - 1e-12 * scale):
            raise InternalConsistencyError("alternating ascent decreased the objective")
        converged |= np.abs(new - values) <= CONVERGENCE_TOL * scale
        values = new
        traces.append(values.copy())
    return values, states, sweeps, converged, np.array(traces)


def _finish(values, states, sweeps, converged, traces, op, restarts, witness_fn) -> AscentResult:
    best = int(np.argmax(values))
    value = float(values[best])
    if value > quantum_max(op) + 1e-9:
        raise InternalConsistencyError(f"oracle value {value} exceeds lambda_max of the operator")
    witness = [witness_fn(s[best]) for s in states]
    return AscentResult(
        value=value,
        witness=witness,
        iterations=sweeps,
        restarts=restarts,
        converged=bool(converged[best]),
        trace=[float(t) for t in traces[:, best]],
    )


def _block_witness(vec: np.ndarray):
    rho = pure_density(vec)
    if rho.shape == (2, 2):
        return tuple(float(x) for x in bloch_of_density(rho))
    return rho


def max_over_product_states(op: np.ndarray, n: int, restarts: int = DEFAULT_RESTARTS, seed=0) -> AscentResult:
    """Maximize ``Tr(op rho_1 (x) ... (x) rho_n)`` over pure product states."""
    op = np.asarray(op, dtype=complex)
    check_hermitian(op, tol=1e-10)
    if _n_qubits(op) != n:
        raise UsageError(f"operator acts on {_n_qubits(op)} qubits, not {n}")
    if restarts < 1:
        raise UsageError("restarts must be >= 1")
    tensor = op.reshape([2] * (2 * n))
    states = _initial_blocks([2] * n, restarts, seed)
    return _finish(*_alternating_ascent(tensor, states), op, restarts, _block_witness)


def permute_parties(op: np.ndarray, order) -> np.ndarray:
    """Reorder tensor factors so new party ``i`` is old party ``order[i]``."""
    n = _n_qubits(op)
    order = list(order)
    if sorted(order) != list(range(n)):
        raise UsageError(f"{order} is not a permutation of {n} parties")
    t = op.reshape([2] * (2 * n))
    return t.transpose(order + [n + i for i in order]).reshape(op.shape)


def max_over_bipartition(
    op: np.ndarray, k: int, restarts: int = DEFAULT_RESTARTS, seed=0, block=None
) -> AscentResult:
    """Maximize over ``rho_block (x) rho_rest`` with pure block states.

    ``block`` lists the parties of the size-``k`` block; the default is the
    first ``k`` parties.
    """
    op = np.asarray(op, dtype=complex)
    check_hermitian(op, tol=1e-10)
    n = _n_qubits(op)
    if not 1 <= int(k) <= n - 1:
        raise UsageError(f"block size k = {k} outside [1, {n - 1}]")
    k = int(k)
    block = list(range(k)) if block is None else sorted(int(i) for i in block)
    if len(block) != k or any(i < 0 or i >= n for i in block):
        raise UsageError(f"block {block} does not have {k} valid parties")
    rest = [i for i in range(n) if i not in block]
    permuted = permute_parties(op, block + rest)
    dims = [2**k, 2 ** (n - k)]
    tensor = permuted.reshape(dims + dims)
    states = _initial_blocks(dims, restarts, seed)
    return _finish(*_alternating_ascent(tensor, states), permuted, restarts, _block_witness)


# --- campaigns --------------------------------------------------------------


@dataclass
class CampaignReport:
    expression: str
    partition: str
    trials: int
    seed: int
    restarts: int
    violations: list[dict]
    max_excess: float
    in_region_R: int = 0
    unconverged: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "expression": self.expression,
            "partition": self.partition,
            "trials": self.trials,
            "seed": self.seed,
            "restarts": self.restarts,
            "violations": self.violations,
            "max_excess": self.max_excess,
            "in_region_R": self.in_region_R,
            "unconverged": self.unconverged,
            "passed": self.passed,
        }


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV}={env!r} is not an integer") from None
    return 1


def oracle_for_class(op: np.ndarray, n: int, cls: _bounds.PartitionClass, restarts: int, seed) -> AscentResult:
    """Run the oracle matching ``cls``; TWO_SEPARABLE takes the max over all cuts."""
    if cls.kind == _bounds.GENERAL:
        value = quantum_max(op)
        return AscentResult(value, [], 0, 0, True)
    if cls.kind == _bounds.FULL_PRODUCT or n == 2:
        return max_over_product_states(op, n, restarts, seed)
    if cls.kind == _bounds.BIPARTITION:
        return max_over_bipartition(op, len(cls.block), restarts, seed, block=cls.block)
    best = None
    for blk in _bounds.all_bipartition_blocks(n):
        res = max_over_bipartition(op, len(blk), restarts, seed, block=blk)
        if best is None or res.value > best.value:
            best = res
    return best


def _random_observable(rng: np.random.Generator) -> Observable:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    if rng.random() < 0.5:
        return Observable.projective(tuple(axis))
    r = float(rng.random())
    rstar = float(rng.uniform(-(1.0 - r), 1.0 - r))
    return Observable(r, tuple(axis), rstar)


def _sample_setting(expr: BellExpression, rng: np.random.Generator, want_R: bool) -> tuple[float, ...]:
    while True:
        cos = tuple(float(x) for x in rng.uniform(-1.0, 1.0, size=expr.n))
        if not want_R or _bounds.region_R_member(*cos):
            return cos


def _run_trial(expr, cls, seed, index, restarts, want_R, general):
    rng = np.random.default_rng([int(seed), index])
    trial_seed = int(rng.integers(2**63))
    if general:
        pairs = [(_random_observable(rng), _random_observable(rng)) for _ in range(expr.n)]
        op = expr.factor * mk_operators(pairs).combined(expr.t)
        bound = _bounds.general_setting_bound(pairs, expr, cls).value
        setting = [[o.r, o.rstar, *o.axis] for pair in pairs for o in pair]
        in_R = False
    else:
        setting = _sample_setting(expr, rng, want_R)
        op = bell_operator(expr, Setting(setting))
        bound = _bounds.class_bound(expr, cls, setting)
        in_R = expr.preset == F3_PLUS_F3PRIME and _bounds.region_R_member(*setting)
    res = oracle_for_class(op, expr.n, cls, restarts, trial_seed)
    return {
        "index": index,
        "setting": list(setting),
        "oracle": res.value,
        "bound": bound,
        "excess": res.value - bound,
        "in_region_R": bool(in_R),
        "converged": res.converged,
    }


def validation_campaign(
    expr: BellExpression,
    cls: _bounds.PartitionClass,
    trials: int,
    seed: int,
    restarts: int = DEFAULT_RESTARTS,
    general_measurements: bool = False,
    threads: int | None = None,
    tol: float = VIOLATION_TOL,
) -> CampaignReport:
    """Compare the oracle against the analytic class bound on random settings.

    Trial ``i`` draws everything from the stream ``(seed, i)``, so the report
    does not depend on the thread count. For ``F3 + F3'`` fully separable
    campaigns the first tenth of the trials (at least 100, when available)
    are sampled inside region R so both branches of the bound are exercised.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    if seed is None:
        raise UsageError("validation_campaign needs an explicit seed")
    stratify = expr.preset == F3_PLUS_F3PRIME and cls.kind == _bounds.FULL_PRODUCT and not general_measurements
    n_R = min(trials, max(100, trials // 10)) if stratify else 0

    def job(i):
        return _run_trial(expr, cls, seed, i, restarts, i < n_R, general_measurements)

    workers = thread_count(threads)
    if workers == 1:
        results = [job(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(trials)))
    violations = [r for r in results if r["excess"] > tol]
    return CampaignReport(
        expression=expr.preset,
        partition=cls.label(expr.n),
        trials=trials,
        seed=int(seed),
        restarts=restarts,
        violations=violations,
        max_excess=max(r["excess"] for r in results),
        in_region_R=sum(r["in_region_R"] for r in results),
        unconverged=sum(not r["converged"] for r in results),
    )
