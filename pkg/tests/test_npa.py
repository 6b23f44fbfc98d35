"""Tests for the known-Alice moment-matrix entanglement test."""

import itertools
import json
import math

import numpy as np
import pytest

from bellbounds import npa
from bellbounds.errors import InputError, UsageError
from bellbounds.qubit import I2, SX, SZ, Observable, bloch_dot, random_unit_vectors


def random_observable(rng, projective=False):
    axis = random_unit_vectors(rng, 1)[0]
    if projective:
        return Observable.projective(tuple(axis))
    r = float(rng.uniform())
    return Observable(r, tuple(axis), float(rng.uniform(-1, 1) * (1 - r)))


def random_qubit_state(rng):
    v = random_unit_vectors(rng, 1)[0] * rng.uniform() ** (1 / 3)
    return 0.5 * (I2 + bloch_dot(v))


def random_separable(rng, terms=3):
    w = rng.dirichlet(np.ones(terms))
    return sum(wi * np.kron(random_qubit_state(rng), random_qubit_state(rng)) for wi in w)


def lambda_half_separable_model():
    """Alice in sigma_z / sigma_x eigenstates, Bob a classical 4-level system.

    Bob's hidden value (b0, b1) fixes Alice's Bloch vector to ((b0 + b1) z + (b0 - b1) x) / 2.
    """
    rho = np.zeros((8, 8), dtype=complex)
    B0, B1 = np.zeros((4, 4)), np.zeros((4, 4))
    for k, (b0, b1) in enumerate(itertools.product((1, -1), repeat=2)):
        bloch = np.array([(b0 - b1) / 2, 0.0, (b0 + b1) / 2])
        proj = np.zeros((4, 4))
        proj[k, k] = 1.0
        rho += 0.25 * np.kron(0.5 * (I2 + bloch_dot(bloch)), proj)
        B0[k, k], B1[k, k] = b0, b1
    return rho, [SZ, SX], [B0, B1]


# --- correlation data ----------------------------------------------------------


def test_lambda_family_values():
    c = npa.lambda_family(0.6)
    assert c.chsh() == pytest.approx(2.4)
    E = c.expectation_table()
    np.testing.assert_allclose(E[1:, 1:], [[0.6, 0.6], [0.6, -0.6]])
    np.testing.assert_allclose(E[0, 1:], 0)
    np.testing.assert_allclose(E[1:, 0], 0)


def test_correlation_validation():
    p = npa.lambda_family(0.2).p.copy()
    p[0, 0, 0, 0] += 0.1
    with pytest.raises(InputError, match="sum to 1"):
        npa.CorrelationTable(p)
    p = npa.lambda_family(0.2).p.copy()
    p[0, 0, 0, 0], p[1, 1, 0, 0] = -0.1, p[1, 1, 0, 0] + p[0, 0, 0, 0] + 0.1
    with pytest.raises(InputError, match="negative"):
        npa.CorrelationTable(p)
    # signaling: Alice's marginal depends on Bob's input
    p = np.full((2, 2, 2, 2), 0.25)
    p[0, 0, 0, 0], p[1, 0, 0, 0] = 0.4, 0.1
    with pytest.raises(InputError, match="signaling"):
        npa.CorrelationTable(p)
    with pytest.raises(InputError):
        npa.CorrelationTable(np.zeros((2, 2)))


def test_correlation_json_roundtrip(tmp_path):
    c = npa.lambda_family(0.37)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(c.to_dict()))
    back = npa.CorrelationTable.from_json(path)
    np.testing.assert_array_equal(back.p, c.p)
    assert "12|01" in c.to_dict()["p"]
    with pytest.raises(InputError):
        npa.CorrelationTable.from_dict({"p": {"33|00": 1.0}})
    with pytest.raises(InputError):
        npa.CorrelationTable.from_dict({"p": {"11|00": 1.0}})


def test_known_side_json_roundtrip():
    ks = npa.KnownSide.with_cosine(0.3)
    back = npa.KnownSide.from_dict(json.loads(json.dumps(ks.to_dict())))
    assert back == ks
    assert back.cosine == pytest.approx(0.3)
    assert npa.KnownSide.from_dict({"measurements": None}) == npa.KnownSide.withheld()
    with pytest.raises(InputError):
        npa.KnownSide.from_dict({"measurements": [{"r": 1, "axis": [0, 0, 1]}]})


# --- reduction -------------------------------------------------------------------


def test_reduce_orthogonal_pair():
    a0, a1 = npa.KnownSide.orthogonal().measurements
    red = npa.reduce_known_products(a0, a1)
    assert red == (0.0, 0.0, 0.0)


def test_reduce_identical_pair():
    a = Observable.projective((0, 0, 1))
    assert npa.reduce_known_products(a, a) == pytest.approx((2.0, 0.0, 0.0))


def test_reduce_worked_example():
    e = Observable(0.8, (0, 0, 1), 0.1)
    f = Observable(1.0, (math.sqrt(0.75), 0, 0.5), 0.0)
    red = npa.reduce_known_products(e, f)
    assert red.identity == pytest.approx(0.8)
    assert red.first == pytest.approx(0.0)
    assert red.second == pytest.approx(0.2)


def test_reduce_random_pairs():
    rng = np.random.default_rng(10)
    for _ in range(10_000):
        e, f = random_observable(rng), random_observable(rng)
        red = npa.reduce_known_products(e, f)
        direct = e.matrix @ f.matrix + f.matrix @ e.matrix
        recon = red.identity * I2 + red.first * e.matrix + red.second * f.matrix
        assert np.max(np.abs(direct - recon)) <= 1e-12


def test_reduce_sign_of_shift_product():
    """Both shifts nonzero: the identity term carries minus r*_e r*_f."""
    e = Observable(0.5, (0, 0, 1), 0.3)
    f = Observable(0.4, (1, 0, 0), -0.2)
    red = npa.reduce_known_products(e, f)
    assert red.identity == pytest.approx(2 * (0 - 0.3 * -0.2))


# --- moment matrix -----------------------------------------------------------------


def test_level1_structure():
    mm = npa.build_moment_matrix(npa.lambda_family(0.6), npa.KnownSide.orthogonal())
    assert mm.dim == 9
    assert mm.operators["alice"] == ["1", "A0", "A1"]
    assert mm.operators["bob"] == ["1", "B0", "B1"]
    assert mm.n_unknowns == 3
    assert {lb for _, lb in mm.labels} == {"B[01+h.c.]"}
    np.testing.assert_allclose(mm.bounds, 2.0)
    # Alice cross block (A0, A1) vanishes for orthogonal projective measurements
    for f, fp in itertools.product(range(3), repeat=2):
        assert mm.constant[1 * 3 + f, 2 * 3 + fp] == 0.0
    # Gamma carries the factor tr(1 (x) 1) = 4: diagonal 4, correlators 4 * 0.6 * (-1)^(nu mu)
    np.testing.assert_allclose(np.diag(mm.constant), 4.0)
    for nu, mu in itertools.product(range(2), repeat=2):
        assert mm.constant[(1 + nu) * 3, 1 + mu] == pytest.approx(4 * 0.6 * (-1) ** (nu * mu))


def test_every_physical_entry_has_provenance():
    mm = npa.build_moment_matrix(npa.lambda_family(0.3), npa.KnownSide.with_cosine(0.4), npa.LEVEL_PRODUCTS)
    for r, c in itertools.product(range(mm.dim), repeat=2):
        if mm.classification[r, c] == npa.PHYSICAL:
            assert (r, c) in mm.provenance


def test_gamma_symmetric_for_any_assignment():
    mm = npa.build_moment_matrix(npa.lambda_family(0.3), npa.KnownSide.withheld(), npa.LEVEL_PRODUCTS)
    x = np.random.default_rng(0).uniform(-1, 1, mm.n_unknowns)
    G = mm.evaluate(x)
    np.testing.assert_allclose(G, G.T, atol=1e-15)
    with pytest.raises(UsageError):
        mm.evaluate(np.zeros(mm.n_unknowns + 1))


@pytest.mark.parametrize("level", npa.LEVELS)
def test_builder_matches_literal_gamma(level):
    """With the true unknown values Gamma equals the literal moment matrix of the state."""
    rng = np.random.default_rng(2)
    for _ in range(20):
        alice = npa.KnownSide((random_observable(rng), random_observable(rng)))
        a_ops = alice.matrices()
        b_ops = [bloch_dot(v) for v in random_unit_vectors(rng, 2)]
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        corr = npa.correlation_from_state(rho, a_ops, b_ops)
        mm = npa.build_moment_matrix(corr, alice, level)
        x = npa.true_unknowns(mm, rho, a_ops, b_ops)
        assert np.all(np.abs(x) <= mm.bounds + 1e-12)
        np.testing.assert_allclose(mm.evaluate(x), npa.literal_moment_matrix(rho, a_ops, b_ops, level), atol=1e-12)


@pytest.mark.parametrize("level", npa.LEVELS)
def test_product_state_factorizes(level):
    rng = np.random.default_rng(3)
    for _ in range(20):
        ra, rb = random_qubit_state(rng), random_qubit_state(rng)
        a_ops = [random_observable(rng).matrix for _ in range(2)]
        b_ops = [bloch_dot(v) for v in random_unit_vectors(rng, 2)]
        G = npa.literal_moment_matrix(np.kron(ra, rb), a_ops, b_ops, level)
        GA = npa.side_moment_matrix(ra, a_ops, level)
        GB = npa.side_moment_matrix(rb, b_ops, level)
        np.testing.assert_allclose(G, np.kron(GA, GB), atol=1e-9)
        assert np.linalg.eigvalsh(GA).min() >= -1e-9
        assert np.linalg.eigvalsh(GB).min() >= -1e-9


def test_inconsistent_known_side():
    with pytest.raises(InputError, match="inconsistent"):
        npa.build_moment_matrix(npa.lambda_family(0.4), npa.KnownSide.with_cosine(1.0))
    # consistent data for identical measurements are accepted
    a = npa.KnownSide.with_cosine(1.0)
    corr = npa.correlation_from_state(np.eye(4) / 4, a.matrices(), [SZ, SX])
    npa.build_moment_matrix(corr, a)


# --- margin ---------------------------------------------------------------------------


def test_margin_white_noise_positive():
    mm = npa.build_moment_matrix(npa.lambda_family(0.0), npa.KnownSide.orthogonal())
    res = npa.psd_completion_margin(mm)
    assert res.margin > 0
    assert np.linalg.eigvalsh(mm.evaluate(np.zeros(mm.n_unknowns))).min() >= 0


def test_margin_level1_closed_form():
    """At level 1 the margin is 4 - 8 lambda on the family."""
    for lam in (0.1, 0.3, 0.45, 0.55, 0.65):
        mm = npa.build_moment_matrix(npa.lambda_family(lam), npa.KnownSide.orthogonal())
        res = npa.psd_completion_margin(mm)
        assert res.margin == pytest.approx(4 - 8 * lam, abs=1e-6)
        assert res.upper >= res.margin - 1e-12


def test_margin_no_unknowns():
    mm = npa.build_moment_matrix(npa.lambda_family(0.2), npa.KnownSide.orthogonal())
    empty = npa.MomentMatrix(mm.constant, np.zeros((0, 9, 9)), np.zeros(0), [], mm.classification, {}, {})
    res = npa.psd_completion_margin(empty)
    assert res.margin == np.linalg.eigvalsh(mm.constant)[0]
    assert res.iterations == 0


def test_margin_multistart_agreement():
    mm = npa.build_moment_matrix(npa.lambda_family(0.58), npa.KnownSide.with_cosine(0.2), npa.LEVEL_PRODUCTS)
    margins = [npa.psd_completion_margin(mm, multistarts=1 + s, seed=s).margin for s in range(16)]
    assert max(margins) - min(margins) <= 1e-6


def _cvxpy_margin(mm):
    cp = pytest.importorskip("cvxpy")
    x = cp.Variable(mm.n_unknowns)
    t = cp.Variable()
    G = mm.constant + sum(x[g] * mm.basis[g] for g in range(mm.n_unknowns))
    prob = cp.Problem(cp.Maximize(t), [G - t * np.eye(mm.dim) >> 0, cp.abs(x) <= mm.bounds])
    prob.solve(solver="CLARABEL")
    return float(t.value)


@pytest.mark.parametrize(
    "lam,alice,level",
    [
        (0.6, npa.KnownSide.orthogonal(), npa.LEVEL_1),
        (0.45, npa.KnownSide.orthogonal(), npa.LEVEL_PRODUCTS),
        (0.62, npa.KnownSide.with_cosine(0.5), npa.LEVEL_PRODUCTS),
        (0.55, npa.KnownSide.withheld(), npa.LEVEL_1),
    ],
)
def test_margin_matches_sdp_solver(lam, alice, level):
    mm = npa.build_moment_matrix(npa.lambda_family(lam), alice, level)
    ref = _cvxpy_margin(mm)
    res = npa.psd_completion_margin(mm)
    assert res.margin == pytest.approx(ref, abs=1e-5)
    assert res.upper >= ref - 1e-6


# --- verdicts ---------------------------------------------------------------------


def test_certify_examples():
    alice = npa.KnownSide.orthogonal()
    v = npa.certify_correlation(npa.lambda_family(0.6), alice)
    assert v.verdict == npa.ENTANGLED and v.margin < 0 and v.upper_bound < -1e-8
    v = npa.certify_correlation(npa.lambda_family(0.3), alice)
    assert v.verdict == npa.NOT_CERTIFIED and v.margin >= 0
    v = npa.certify_correlation(npa.lambda_family(0.5), npa.KnownSide.withheld())
    assert v.verdict == npa.NOT_CERTIFIED


def test_lambda_half_has_separable_model():
    """A separable state reproduces the family at lambda = 1/2, so no sound verdict is ENTANGLED."""
    rho, a_ops, b_ops = lambda_half_separable_model()
    corr = npa.correlation_from_state(rho, a_ops, b_ops)
    np.testing.assert_allclose(corr.p, npa.lambda_family(0.5).p, atol=1e-15)
    for level in npa.LEVELS:
        v = npa.certify_correlation(corr, npa.KnownSide.orthogonal(), level)
        assert v.verdict == npa.NOT_CERTIFIED
        assert v.margin == pytest.approx(0.0, abs=1e-6)


def test_soundness_random_separable():
    rng = np.random.default_rng(77)
    for i in range(200):
        alice = npa.KnownSide.orthogonal() if i % 2 else npa.KnownSide((random_observable(rng), random_observable(rng)))
        b_ops = [random_observable(rng, projective=bool(i % 3)).matrix for _ in range(2)]
        rho = random_separable(rng, terms=1 + i % 4)
        corr = npa.correlation_from_state(rho, alice.matrices(), b_ops)
        level = npa.LEVELS[i % 2]
        assert npa.certify_correlation(corr, alice, level, seed=i).verdict == npa.NOT_CERTIFIED


def test_verdict_json():
    v = npa.certify_correlation(npa.lambda_family(0.6), npa.KnownSide.orthogonal())
    d = v.to_dict()
    assert d["verdict"] == "ENTANGLED"
    assert set(d["assignment"]) == {"<1 (x) B[01+h.c.]>", "<A0 (x) B[01+h.c.]>", "<A1 (x) B[01+h.c.]>"}
    assert d["operator_set"]["level"] == "1"


# --- threshold scan -------------------------------------------------------------


def test_scan_orthogonal_level1():
    out = npa.lambda_threshold_scan(npa.KnownSide.orthogonal(), npa.LEVEL_1, tol=1e-3)
    assert out["status"] == npa.THRESHOLD
    lo, hi = out["bracket"]
    assert hi - lo <= 1e-3
    assert lo <= 0.5 <= hi + 1e-3
    assert out["margin_monotone"]
    assert out["local_bound_crossing"] == 0.5
    assert out["family_max"] == pytest.approx(math.sqrt(2) / 2)
    assert "note" in out


def test_scan_identical_alice():
    out = npa.lambda_threshold_scan(npa.KnownSide.with_cosine(1.0), npa.LEVEL_1)
    assert out["status"] == npa.NO_THRESHOLD
    assert "inconsistent" in out["reason"]


def test_scan_tol_floor():
    with pytest.raises(UsageError):
        npa.lambda_threshold_scan(npa.KnownSide.orthogonal(), npa.LEVEL_1, tol=1e-5)


def test_scan_deterministic():
    a = npa.lambda_threshold_scan(npa.KnownSide.orthogonal(), npa.LEVEL_1, tol=1e-2, seed=3)
    b = npa.lambda_threshold_scan(npa.KnownSide.orthogonal(), npa.LEVEL_1, tol=1e-2, seed=3)
    assert a == b
