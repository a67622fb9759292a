import numpy as np
import pytest

from _support import max_abs
from qmarginal.catalog import (
    CATALOG,
    COROLLARY1_PAIR,
    FAMILY_TO_RHO_Q,
    X_BASIS,
    make_classical_family,
    make_corollary1,
    make_example_main,
    make_ghz,
    make_prop2,
    make_rho_q,
    make_sigma,
    make_tau,
    range_residual,
    sigma_pair_states,
)
from qmarginal.compatibility import solve_feasibility, uniqueness_probe
from qmarginal.correlations import classical_triple_check
from qmarginal.entanglement import birank, ppt_check, pt_invariant_biseparable
from qmarginal.gme import ONLY_GME, solve_pptmix_marginals
from qmarginal.marginals import MarginalTriple
from qmarginal.operators import (
    DensityMatrix,
    Operator,
    ProductBasis,
    hs_norm,
    ket,
    partial_trace,
    projector,
    rank_eps,
)


def _pair_birank(name):
    index = {"ab": 0, "ac": 1, "bc": 2}[name]
    return lambda e: birank(list(e.triple)[index]).as_tuple()


def _only_gme(e):
    return solve_pptmix_marginals(e.triple, known_state=e.state).verdict == ONLY_GME


def _unique(e):
    rep = uniqueness_probe(e.triple, n_starts=5, seed=0)
    return rep.max_pairwise_distance <= 1e-6 and hs_norm(rep.states[0] - e.state) <= 1e-6


def _pt_invariant(e):
    frame = e.params.get("frame")
    return pt_invariant_biseparable(e.state, None if frame is None else ProductBasis(frame))


CHECKS = {
    "rank": lambda e: rank_eps(e.state),
    "all_cc": lambda e: classical_triple_check(e.triple).all_cc,
    "pairs_cc": lambda e: classical_triple_check(e.triple).all_cc,
    "npt_cuts": lambda e: tuple(k for k in range(3) if not ppt_check(e.state, k)),
    "compatible": lambda e: solve_feasibility(e.triple).is_feasible,
    "only_gme": _only_gme,
    "unique_completion": _unique,
    "spectrum": lambda e: tuple(np.linalg.eigvalsh(e.state.mat)),
    "pt_invariant": _pt_invariant,
    "ppt_pairs": lambda e: all(ppt_check(x, 0) for x in e.triple),
    "pairs_ppt": lambda e: all(ppt_check(x, 0) for x in e.triple),
    "birank_ab": _pair_birank("ab"),
    "birank_ac": _pair_birank("ac"),
    "birank_bc": _pair_birank("bc"),
    "rank_b": lambda e: rank_eps(e.triple.single(1)),
    "candidate_psd": lambda e: bool(np.linalg.eigvalsh(e.candidate.mat)[0] >= -1e-9),
    "candidate_trace": lambda e: float(e.candidate.trace().real),
    "singles": lambda e: "I/2" if all(max_abs(s, np.eye(2) / 2) <= 1e-12 for s in e.triple.singles()) else "other",
}


ENTRIES = [
    make_ghz(),
    make_rho_q(),
    make_rho_q(0.3),
    make_sigma(),
    make_example_main(),
    make_example_main(2, (0.8, 0.2)),
    make_prop2(0.5),
    make_prop2(0.2),
    make_classical_family(0.1, 0.1, 0.1),
    make_classical_family(0.2, 0.22, 0.24, (0.3, 1.1, 2.0)),
    make_corollary1(),
    make_corollary1((0.7, 0.3), (COROLLARY1_PAIR,)),
]


@pytest.mark.parametrize("entry", ENTRIES, ids=[f"{e.name}-{i}" for i, e in enumerate(ENTRIES)])
def test_expected_maps_are_rederived(entry):
    for key, expected in entry.expected.items():
        got = CHECKS[key](entry)
        if isinstance(expected, tuple) and expected and isinstance(expected[0], float):
            assert np.max(np.abs(np.asarray(got) - np.asarray(expected))) <= 1e-12, key
        elif isinstance(expected, float):
            assert got == pytest.approx(expected, abs=1e-12), key
        else:
            assert got == expected, key


def test_catalog_registry_names():
    assert sorted(CATALOG) == [
        "classical_family", "corollary1", "example_main", "ghz", "prop2", "rho_q", "sigma", "tau",
    ]


# ghz and rho_q ------------------------------------------------------------


def test_ghz_reductions():
    e = make_ghz()
    half = 0.5 * (projector(ket("00")) + projector(ket("11")))
    for pair in e.triple:
        assert max_abs(pair, half) <= 1e-12


def test_rho_q_spectrum_grid():
    for q in np.linspace(-1 / np.sqrt(3), 1 / np.sqrt(3), 21):
        w = np.linalg.eigvalsh(make_rho_q(q).state.mat)
        closed = np.sort([(1 - np.sqrt(3) * q) / 8] * 4 + [(1 + np.sqrt(3) * q) / 8] * 4)
        assert np.max(np.abs(w - closed)) <= 1e-12


def test_rho_q_examples():
    assert max_abs(make_rho_q(0.0).state, np.eye(8) / 8) <= 1e-15
    assert abs(np.linalg.eigvalsh(make_rho_q(0.5).state.mat)[0] - (1 - np.sqrt(3) / 2) / 8) <= 1e-12
    assert rank_eps(make_rho_q().state) == 4
    with pytest.raises(ValueError):
        make_rho_q(0.6)


# sigma and the main family ------------------------------------------------


def test_sigma_reductions_match_defining_mixtures():
    e = make_sigma()
    # mixtures written out independently of the catalog helper; phi is (|01> + |10>)/sqrt2 here
    phi = (ket("01") + ket("10")) / np.sqrt(2)
    zeta = np.sqrt(2 / 3) * ket("01") + np.sqrt(1 / 3) * ket("10")
    ab = (projector(phi) + projector(ket("00")) + projector(ket("11"))) / 3
    bc = projector(zeta) / 2 + projector(ket("00")) / 6 + projector(ket("11")) / 3
    assert max_abs(e.triple.rho_ab, ab) <= 1e-12
    assert max_abs(e.triple.rho_bc, bc) <= 1e-12
    assert max_abs(e.triple.rho_ac, bc) <= 1e-12
    helper_ab, helper_bc = sigma_pair_states()
    assert max_abs(helper_ab, ab) <= 1e-15 and max_abs(helper_bc, bc) <= 1e-15
    assert rank_eps(e.state) == 2


def test_example_main_examples():
    assert max_abs(make_example_main(1).state, make_sigma().state) <= 1e-15
    e = make_example_main(2, (0.8, 0.2))
    assert e.state.dims == (3, 3, 3)
    assert birank(e.triple.rho_ab).as_tuple() == (4, 5)
    assert rank_eps(partial_trace(e.triple.rho_ab, 0)) == 3
    with pytest.raises(ValueError):
        make_example_main(2, (0.5, 0.6))
    with pytest.raises(ValueError):
        make_example_main(2, (0.0, 1.0))


# prop2 --------------------------------------------------------------------


def test_prop2_examples():
    e = make_prop2(0.5)
    a = np.array([1, 1]) / np.sqrt(2)
    pair = 0.5 * projector(ket("00")) + 0.5 * projector(np.kron(a, a))
    for x in e.triple:
        assert max_abs(x, pair) <= 1e-15
        assert ppt_check(x, 0)
    for p in (0.0, 1.0):
        with pytest.raises(ValueError):
            make_prop2(p)


# classical family ---------------------------------------------------------


def test_classical_family_maps_to_rho_q():
    p = (1 - 1 / np.sqrt(3)) / 4
    f = make_classical_family(p, p, p, (X_BASIS, X_BASIS, X_BASIS))
    U = ProductBasis(f.params["to_rho_q"]).unitary()
    assert f.params["to_rho_q"] is FAMILY_TO_RHO_Q
    mapped = U @ f.candidate.mat @ U.conj().T
    assert max_abs(mapped, make_rho_q(-1 / np.sqrt(3)).state) <= 1e-12
    assert np.linalg.eigvalsh(f.candidate.mat)[0] >= -1e-12


def test_classical_family_structure():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p, q, r = rng.uniform(0.01, 0.24, 3)
        f = make_classical_family(p, q, r, tuple(rng.uniform(0, np.pi, 3)))
        assert f.state is None
        assert abs(f.candidate.trace() - 1) <= 1e-14
        for s in f.triple.singles():
            assert max_abs(s, np.eye(2) / 2) <= 1e-14
        assert classical_triple_check(f.triple).all_cc
    with pytest.raises(ValueError):
        make_classical_family(0.3, 0.1, 0.1)
    with pytest.raises(ValueError):
        make_classical_family(0.1, 0.1, 0.1, (np.eye(2) * 2, 0.0, 0.0))


# corollary1 and tau -------------------------------------------------------


def test_corollary1_examples():
    _, bc = sigma_pair_states()
    bc_pt = bc.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    ab = np.kron(*COROLLARY1_PAIR)
    assert range_residual(bc, ab) <= 1e-10 and range_residual(bc_pt, ab) <= 1e-10
    assert max_abs(make_corollary1().state, make_sigma().state) <= 1e-15
    e = make_corollary1((0.7, 0.3))
    assert birank(e.triple.rho_ab).as_tuple() == (3, 4)
    assert birank(e.triple.rho_bc).as_tuple() == (3, 3)
    with pytest.raises(ValueError):
        make_corollary1((0.5, 0.5), ((np.array([1.0, 0.0]), np.array([1.0, 0.0])),))
    with pytest.raises(ValueError):
        make_corollary1((0.5, 0.5), ((np.array([1.0, 1j]), np.array([1.0, 1.0])),))


def test_tau_examples():
    sigma = make_sigma().state
    mixer = DensityMatrix(np.eye(8) / 8, (2, 2, 2))
    assert max_abs(make_tau(p=0.0).state, sigma) <= 1e-15
    assert max_abs(make_tau(p=1.0).state, mixer) <= 1e-15
    for p in (0.1, 0.37, 0.9):
        tau = MarginalTriple.from_state(make_tau(sigma, mixer, p).state)
        for t, s, m in zip(tau, make_sigma().triple, MarginalTriple.from_state(mixer)):
            assert max_abs(t, s.mat * (1 - p) + m.mat * p) <= 1e-13
    with pytest.raises(ValueError):
        make_tau(p=1.5)
    assert isinstance(make_tau().state, Operator)
