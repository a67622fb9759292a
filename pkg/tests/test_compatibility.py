import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import INFEASIBLE_LOG, max_abs, solve
from qmarginal.catalog import make_classical_family
from qmarginal.compatibility import (
    CompatibilityWitness,
    candidate_zero3body,
    consistency_check,
    distance_D,
    project_affine,
    uniqueness_probe,
    verify_witness,
)
from qmarginal.correlations import three_body_array
from qmarginal.marginals import InconsistentTripleError, MarginalTriple, marginal_residual
from qmarginal.operators import (
    DensityMatrix,
    Operator,
    hs_inner,
    hs_norm,
    ket,
    projector,
    random_density,
    random_hermitian,
)

GHZ_CLASSICAL = 0.5 * (projector(ket("000")) + projector(ket("111")))


def affine_member(E, rng, scale=1.0):
    """A random operator with marginals E: candidate plus a random three-body term."""
    cand = candidate_zero3body(E)
    chi = three_body_array(random_hermitian(E.dims, seed=rng).mat, E.dims)
    return Operator(cand.mat + scale * chi, E.dims)


@pytest.fixture(scope="module")
def infeasible_family():
    f = make_classical_family(0.1, 0.1, 0.1)
    # candidate eigenvalue oracle: 1/8 - 3/2 * (1/4 - p) < 0 at p = 0.1
    assert np.linalg.eigvalsh(f.candidate.mat)[0] < -1e-3
    return f, solve(f.triple)


# consistency and candidate -------------------------------------------------


def test_consistency_examples(ghz, sigma):
    assert consistency_check(ghz.triple)
    assert consistency_check(sigma.triple)
    ab = DensityMatrix(np.kron(np.diag([0.9, 0.1]), np.eye(2) / 2), (2, 2))
    ac = DensityMatrix(np.eye(4) / 4, (2, 2))
    bc = DensityMatrix(np.eye(4) / 4, (2, 2))
    res = consistency_check(MarginalTriple(ab, ac, bc))
    assert not res
    # diag(0.9, 0.1) - I/2 = diag(0.4, -0.4)
    assert abs(res.residuals["A"] - 0.4 * np.sqrt(2)) <= 1e-12
    assert res.residuals["B"] <= 1e-15 and res.residuals["C"] <= 1e-15
    with pytest.raises(InconsistentTripleError):
        candidate_zero3body(MarginalTriple(ab, ac, bc))


def test_candidate_examples(ghz, omega):
    # (I + ZZI + ZIZ + IZZ) / 8 is diagonal with entries 1/2 on 000 and 111
    assert max_abs(candidate_zero3body(ghz.triple), GHZ_CLASSICAL) <= 1e-12
    assert max_abs(candidate_zero3body(omega.triple), omega.state) <= 1e-12
    rng = np.random.default_rng(1)
    for _ in range(10):
        p, q, r = rng.uniform(0.01, 0.24, 3)
        f = make_classical_family(p, q, r, tuple(rng.uniform(0, np.pi, 3)))
        assert max_abs(candidate_zero3body(f.triple), f.candidate) <= 1e-14


def test_candidate_has_triple_marginals():
    rng = np.random.default_rng(2)
    for dims in ((2, 2, 2), (2, 3, 2), (3, 3, 2)):
        E = MarginalTriple.from_state(random_density(dims, seed=rng))
        cand = candidate_zero3body(E)
        assert marginal_residual(cand, E) <= 1e-14
        assert abs(cand.trace() - 1) <= 1e-14
        assert cand.is_hermitian()


# affine projection ---------------------------------------------------------


def test_project_affine_examples(ghz):
    cand = candidate_zero3body(ghz.triple)
    assert max_abs(project_affine(cand, ghz.triple), cand) <= 1e-15
    mixed = Operator(np.eye(8) / 8, (2, 2, 2))
    assert max_abs(project_affine(mixed, ghz.triple), GHZ_CLASSICAL) <= 1e-15
    member = affine_member(ghz.triple, np.random.default_rng(0))
    assert max_abs(project_affine(member, ghz.triple), member) <= 1e-14


def test_project_affine_idempotent_and_optimal(sigma):
    E = sigma.triple
    rng = np.random.default_rng(3)
    X = random_hermitian(E.dims, seed=rng) * 3.0
    P = project_affine(X, E)
    assert max_abs(project_affine(P, E), P) <= 1e-14
    assert marginal_residual(P, E) <= 1e-14
    dist = hs_norm(X - P)
    worst = np.inf
    for _ in range(100):
        Y = affine_member(E, rng)
        Z = affine_member(E, rng)
        # orthogonality: <X - P, Y - Z> = 0 on the affine set
        worst = min(worst, -abs(hs_inner(X - P, Y - Z)))
        assert hs_norm(X - Y) >= dist - 1e-12
    assert worst >= -1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_project_affine_output_marginals(seed):
    rng = np.random.default_rng(seed)
    E = MarginalTriple.from_state(random_density((2, 2, 3), seed=rng))
    X = random_hermitian((2, 2, 3), seed=rng)
    assert marginal_residual(project_affine(X, E), E) <= 1e-13


# feasibility ---------------------------------------------------------------


def test_feasibility_ghz_from_candidate(ghz):
    out = solve(ghz.triple)
    assert out.is_feasible and out.iterations == 0
    assert max_abs(out.state, GHZ_CLASSICAL) <= 1e-12


def test_feasibility_sigma_recovers_sigma(sigma):
    out = solve(sigma.triple)
    assert out.is_feasible
    assert hs_norm(out.state - sigma.state) <= 1e-6
    assert distance_D(out.state, sigma.triple) <= 1e-8
    assert np.linalg.eigvalsh(out.state.mat)[0] >= -1e-9


def test_feasibility_infeasible_family(infeasible_family):
    f, out = infeasible_family
    assert out.is_infeasible
    w = out.witness
    assert verify_witness(w, f.triple)
    assert w.margin > 1e-6
    assert np.linalg.norm(three_body_array(w.W.mat, (2, 2, 2))) <= 1e-10
    doc = json.loads(json.dumps(out.to_json()))
    assert doc["verdict"] == "infeasible" and doc["witness"]["margin"] == pytest.approx(w.margin)


def test_witness_is_constant_on_the_affine_set(infeasible_family):
    f, out = infeasible_family
    w = out.witness
    rng = np.random.default_rng(4)
    for _ in range(100):
        X = affine_member(f.triple, rng)
        assert abs(hs_inner(w.W, X).real - w.affine_value) <= 1e-12
    for _ in range(100):
        Y = random_density((2, 2, 2), seed=rng)
        assert hs_inner(w.W, Y).real >= w.psd_bound - 1e-12


def test_verify_witness_rejects_bad_witnesses(infeasible_family):
    f, out = infeasible_family
    w = out.witness
    flipped = CompatibilityWitness(w.W, w.psd_bound + 0.1, w.psd_bound)
    assert flipped.margin == pytest.approx(-0.1)
    assert not verify_witness(flipped, f.triple)
    # add a three-body direction and renormalize
    chi = three_body_array(random_hermitian((2, 2, 2), seed=5).mat, (2, 2, 2))
    W3 = w.W.mat + 0.1 * chi / np.linalg.norm(chi)
    W3 = Operator(W3 / np.linalg.norm(W3), (2, 2, 2))
    cand = candidate_zero3body(f.triple)
    bad = CompatibilityWitness(W3, hs_inner(W3, cand).real, float(np.linalg.eigvalsh(W3.mat)[0]))
    assert not verify_witness(bad, f.triple)
    # tampered numbers
    assert not verify_witness(CompatibilityWitness(w.W, w.affine_value - 0.01, w.psd_bound), f.triple)


def test_feasible_verdicts_satisfy_outcome_invariants():
    rng = np.random.default_rng(6)
    for _ in range(10):
        rho = random_density((2, 2, 2), rank=2, seed=rng)
        E = MarginalTriple.from_state(rho)
        out = solve(E)
        assert out.is_feasible
        assert marginal_residual(out.state, E) <= 1e-8
        assert np.linalg.eigvalsh(out.state.mat)[0] >= -1e-9


def test_family_feasible_iff_candidate_psd():
    rng = np.random.default_rng(7)
    verdicts = []
    for _ in range(100):
        p, q, r = rng.uniform(0.0, 0.25, 3)
        f = make_classical_family(p, q, r, tuple(rng.uniform(0, np.pi, 3)))
        psd = np.linalg.eigvalsh(f.candidate.mat)[0] >= -1e-9
        out = solve(f.triple)
        assert out.verdict in ("feasible", "infeasible")
        assert out.is_feasible == psd
        verdicts.append(out.verdict)
    # both outcomes occur in the sample
    assert set(verdicts) == {"feasible", "infeasible"}


# distance and convexity ----------------------------------------------------


def test_distance_examples(ghz, sigma):
    assert distance_D(sigma.state, sigma.triple) <= 1e-12
    mixed = Operator(np.eye(8) / 8, (2, 2, 2))
    assert abs(distance_D(mixed, ghz.triple) - 0.75) <= 1e-15


def test_distance_is_lipschitz(sigma):
    rng = np.random.default_rng(8)
    for _ in range(50):
        a = random_density((2, 2, 2), seed=rng)
        b = random_density((2, 2, 2), seed=rng)
        dD = abs(distance_D(a, sigma.triple) - distance_D(b, sigma.triple))
        # each reduction moves by at most sqrt(2) ||a - b|| and stays within radius 2 of E
        assert dD <= 3 * 2 * 2 * np.sqrt(2) * hs_norm(a - b) + 1e-12


def test_convexity_of_compatible_set(ghz):
    states = uniqueness_probe(ghz.triple, n_starts=6, seed=3).states
    for a, b in zip(states, states[1:]):
        mid = (a + b) * 0.5
        assert marginal_residual(mid, ghz.triple) <= 1e-8
        assert np.linalg.eigvalsh(mid.mat)[0] >= -1e-9


# uniqueness ----------------------------------------------------------------


def test_uniqueness_sigma(sigma):
    rep = uniqueness_probe(sigma.triple, n_starts=20, seed=11)
    assert len(rep.states) == 20
    assert rep.max_pairwise_distance <= 1e-6
    assert max(hs_norm(s - sigma.state) for s in rep.states) <= 1e-6


def test_uniqueness_prop2(prop2):
    a = np.array([1, 1]) / np.sqrt(2)
    expected = 0.5 * projector(ket("000")) + 0.5 * projector(np.kron(a, np.kron(a, a)))
    rep = uniqueness_probe(prop2.triple, n_starts=20, seed=12)
    assert len(rep.states) == 20
    assert max(np.linalg.norm(s.mat - expected) for s in rep.states) <= 1e-6


def test_uniqueness_ghz_finds_distinct_states(ghz):
    rep = uniqueness_probe(ghz.triple, n_starts=20, seed=13)
    assert rep.max_pairwise_distance >= 0.3


def test_infeasible_log_is_populated(infeasible_family):
    assert any(w is infeasible_family[1].witness for _, w in INFEASIBLE_LOG)
