import numpy as np
import pytest

from _support import max_abs, random_classical_state
from qmarginal.catalog import make_classical_family, make_example_main, make_rho_q, sigma_pair_states
from qmarginal.compatibility import distance_D
from qmarginal.entanglement import (
    a_finite_check,
    biseparable_completion_cc_qubits,
    birank,
    cq_dephase_completion,
    maxcorr_dephase_completion,
    ppt_check,
    product_in_range,
    product_residual,
    pt_invariant_biseparable,
    separable_small,
)
from qmarginal.marginals import MarginalTriple, PreconditionError, marginal_residual
from qmarginal.operators import (
    SZ,
    DensityMatrix,
    ProductBasis,
    ket,
    partial_transpose,
    projector,
    random_density,
    random_unitary,
    rank_eps,
)

PHI_PLUS = projector((ket("00") + ket("11")) / np.sqrt(2))
GHZ_CLASSICAL = 0.5 * (projector(ket("000")) + projector(ket("111")))


@pytest.fixture(scope="module")
def sigma_pairs():
    ab, bc = sigma_pair_states()
    return DensityMatrix(ab, (2, 2)), DensityMatrix(bc, (2, 2))


def is_completion(out, E):
    return distance_D(out, E) <= 1e-8 and np.linalg.eigvalsh(out.mat)[0] >= -1e-9


# PPT, birank, small separability ------------------------------------------


def test_ppt_examples(sigma_pairs):
    for pair in sigma_pairs:
        assert ppt_check(pair, 0)
    bell = ppt_check(DensityMatrix(PHI_PLUS, (2, 2)), 0)
    assert not bell.ppt
    # the partial transpose of |phi+><phi+| is swap / 2
    assert abs(bell.min_eigenvalue + 0.5) <= 1e-12
    assert ppt_check(DensityMatrix(np.eye(4) / 4, (2, 2)))


def test_birank_examples(sigma, sigma_pairs):
    ab, bc = sigma_pairs
    assert birank(ab).as_tuple() == (3, 4)
    assert birank(bc).as_tuple() == (3, 3)
    assert birank(sigma.triple.rho_ac).as_tuple() == (3, 3)
    assert birank(DensityMatrix(PHI_PLUS, (2, 2))).as_tuple() == (1, 4)


def test_separable_small_examples(sigma_pairs):
    assert separable_small(sigma_pairs[0])
    assert not separable_small(DensityMatrix(PHI_PLUS, (2, 2)))
    q = 1 / np.sqrt(3)
    assert separable_small(DensityMatrix((np.eye(4) + q * np.kron(SZ, SZ)) / 4, (2, 2)))
    with pytest.raises(PreconditionError):
        separable_small(random_density((3, 3), seed=0))


def test_birank_does_not_depend_on_transposed_side():
    rng = np.random.default_rng(1)
    for _ in range(100):
        dims = tuple(int(x) for x in rng.integers(2, 4, size=2))
        rho = random_density(dims, rank=int(rng.integers(1, 5)), seed=rng)
        assert rank_eps(partial_transpose(rho, 0)) == rank_eps(partial_transpose(rho, 1))


def test_ppt_complementary_cut_has_same_spectrum():
    rng = np.random.default_rng(2)
    for _ in range(30):
        rho = random_density((2, 3, 2), rank=3, seed=rng)
        full = DensityMatrix(rho.mat.T, rho.dims)
        for cut, rest in (((0,), (1, 2)), ((1,), (0, 2)), ((2,), (0, 1))):
            a = np.linalg.eigvalsh(partial_transpose(rho, cut).mat)
            b = np.linalg.eigvalsh(partial_transpose(full, rest).mat)
            assert np.max(np.abs(a - b)) <= 1e-10
            assert ppt_check(rho, cut).ppt == ppt_check(full, rest).ppt


# product vectors in a range -----------------------------------------------


def test_no_product_vector_in_range_of_rho_q(omega):
    res = product_in_range(omega.state, 3, restarts=1000, seed=0)
    assert res.restarts == 1000
    assert res.best_residual > 1e-3
    assert not res.found


def test_product_vector_in_range_of_sigma_bc(sigma_pairs):
    _, bc = sigma_pairs
    a = np.array([1, 1]) / np.sqrt(2)
    b = np.array([np.sqrt(1 / 3), np.sqrt(2 / 3)])
    assert product_residual(bc, (a, b)) <= 1e-10
    res = product_in_range(bc, 2, restarts=200, seed=1)
    assert res.found and res.best_residual <= 1e-10


def test_product_projector_is_found():
    rng = np.random.default_rng(3)
    vecs = [random_unitary(d, rng)[:, 0] for d in (2, 3, 2)]
    v = np.kron(vecs[0], np.kron(vecs[1], vecs[2]))
    res = product_in_range(DensityMatrix(projector(v), (2, 3, 2)), restarts=20, seed=4)
    assert res.best_residual <= 1e-12
    overlap = abs(np.vdot(np.kron(res.best_vectors[0], np.kron(*res.best_vectors[1:])), v))
    assert abs(overlap - 1) <= 1e-10


def test_product_search_result_properties():
    rng = np.random.default_rng(5)
    for _ in range(10):
        rho = random_density((2, 2, 2), rank=int(rng.integers(2, 7)), seed=rng)
        res = product_in_range(rho, restarts=30, seed=rng)
        assert res.best_residual >= -1e-12
        assert abs(product_residual(rho, res.best_vectors) - res.best_residual) <= 1e-12
        if res.found:
            assert all(abs(np.linalg.norm(v) - 1) <= 1e-10 for v in res.best_vectors)


# finiteness ---------------------------------------------------------------


def test_a_finite_examples(sigma_pairs):
    ab, _ = sigma_pairs
    assert a_finite_check(ab, 0) and a_finite_check(ab, 1)
    plane = DensityMatrix(0.5 * (projector(ket("00")) + projector(ket("10"))), (2, 2))
    out = a_finite_check(plane, 0)
    assert not out and out.exact
    assert not a_finite_check(DensityMatrix(np.eye(4) / 4, (2, 2)), 0)


def test_a_finite_qutrit_side():
    e = make_example_main(2, (0.6, 0.4))
    ab = MarginalTriple.from_state(e.state).rho_ab
    assert a_finite_check(ab, 0, seed=0) and a_finite_check(ab, 1, seed=0)
    dims = (3, 3)
    plane = 0.5 * (projector(ket("00", dims)) + projector(ket("10", dims)))
    out = a_finite_check(DensityMatrix(plane, dims), 0, seed=0)
    assert not out and not out.exact


# PT invariance ------------------------------------------------------------


def test_pt_invariant_examples(omega, ghz):
    frame = ProductBasis(omega.params["frame"])
    assert pt_invariant_biseparable(omega.state, frame)
    assert not pt_invariant_biseparable(ghz.state)
    for k in range(3):
        assert not ppt_check(ghz.state, k)
    rng = np.random.default_rng(6)
    hits = 0
    while hits < 5:
        p, q, r = rng.uniform(0.2, 0.25, 3)
        f = make_classical_family(p, q, r)
        if np.linalg.eigvalsh(f.candidate.mat)[0] < 0:
            continue
        state = DensityMatrix.from_operator(f.candidate)
        # the computational/real frame is already the normal form
        assert pt_invariant_biseparable(state)
        hits += 1


# completions --------------------------------------------------------------


def random_a_classical_state(rng, dims=(2, 2, 2)):
    V = random_unitary(dims[0], rng)
    p = rng.dirichlet(np.ones(dims[0]))
    mat = sum(
        p[i] * np.kron(projector(V[:, i]), random_density(dims[1:], seed=rng).mat)
        for i in range(dims[0])
    )
    return DensityMatrix(mat, dims)


def random_maxcorr_state(rng):
    """rho_AB = sum_i r_i |a_i b_i><a_i b_i| with coherences carried by orthogonal C vectors."""
    Va, Vb = random_unitary(2, rng), random_unitary(2, rng)
    r = rng.dirichlet(np.ones(2))
    mat = np.zeros((8, 8), dtype=complex)
    for w in rng.dirichlet(np.ones(3)):
        G = random_unitary(2, rng)
        psi = sum(
            np.sqrt(r[i]) * np.exp(1j * rng.uniform(0, 2 * np.pi)) * np.kron(np.kron(Va[:, i], Vb[:, i]), G[:, i])
            for i in range(2)
        )
        mat += w * projector(psi)
    return DensityMatrix(mat, (2, 2, 2))


def test_cq_dephase_examples(ghz, prop2):
    out = cq_dephase_completion(ghz.triple, ghz.state, 0)
    assert max_abs(out, GHZ_CLASSICAL) <= 1e-12
    with pytest.raises(PreconditionError):
        cq_dephase_completion(prop2.triple, prop2.state, 0)


def test_cq_dephase_random_trials():
    rng = np.random.default_rng(7)
    for _ in range(50):
        rho = random_a_classical_state(rng)
        E = MarginalTriple.from_state(rho)
        out = cq_dephase_completion(E, rho, 0)
        assert marginal_residual(out, E) <= 1e-9
        assert is_completion(out, E)


def test_maxcorr_dephase_examples(ghz):
    out = maxcorr_dephase_completion(ghz.triple, ghz.state)
    assert max_abs(out, GHZ_CLASSICAL) <= 1e-12
    q = 0.5
    ab = DensityMatrix((np.eye(4) + q * np.kron(SZ, SZ)) / 4, (2, 2))
    rho = DensityMatrix(np.kron(ab.mat, np.eye(2) / 2), (2, 2, 2))
    with pytest.raises(PreconditionError):
        maxcorr_dephase_completion(MarginalTriple.from_state(rho), rho)


def test_maxcorr_dephase_random_trials():
    rng = np.random.default_rng(8)
    for _ in range(50):
        rho = random_maxcorr_state(rng)
        E = MarginalTriple.from_state(rho)
        out = maxcorr_dephase_completion(E, rho)
        assert marginal_residual(out, E) <= 1e-9
        assert is_completion(out, E)


def test_biseparable_completion_examples(omega, ghz):
    res = biseparable_completion_cc_qubits(omega.triple)
    assert res.ok and res.route == "pt-invariant-candidate"
    assert max_abs(res.state, omega.state) <= 1e-12
    assert pt_invariant_biseparable(res.state, res.normal_form.frame)
    res = biseparable_completion_cc_qubits(ghz.triple, ghz.state)
    assert res.ok
    assert max_abs(res.state, GHZ_CLASSICAL) <= 1e-12


def test_biseparable_completion_family_trials():
    rng = np.random.default_rng(9)
    done = 0
    while done < 100:
        p, q, r = rng.uniform(0.0, 0.25, 3)
        f = make_classical_family(p, q, r, tuple(rng.uniform(0, np.pi, 3)))
        if np.linalg.eigvalsh(f.candidate.mat)[0] < 0:
            continue
        res = biseparable_completion_cc_qubits(f.triple)
        assert res.ok, res.message
        assert marginal_residual(res.state, f.triple) <= 1e-8
        assert is_completion(res.state, f.triple)
        done += 1


def test_biseparable_completion_nondegenerate_single():
    rng = np.random.default_rng(10)
    rho, _ = random_classical_state((2, 2, 2), rng)
    E = MarginalTriple.from_state(rho)
    res = biseparable_completion_cc_qubits(E, rho)
    assert res.ok and res.route.startswith("cq-dephase")
    assert is_completion(res.state, E)


def test_biseparable_completion_preconditions(sigma, omega):
    with pytest.raises(PreconditionError):
        biseparable_completion_cc_qubits(sigma.triple)
    with pytest.raises(ValueError):
        biseparable_completion_cc_qubits(MarginalTriple.from_state(make_example_main(2, (0.5, 0.5)).state))
    assert make_rho_q(0.2).expected["pt_invariant"]
