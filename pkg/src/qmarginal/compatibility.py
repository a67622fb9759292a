"""Compatibility of a marginal triple with a global state.

The fixed-marginal operators form the affine set ``candidate + V3`` where
``V3`` holds the operators whose every partial trace vanishes.  Feasibility
is decided by Dykstra's alternating projections between that set and the
PSD trace-one set; infeasibility is only reported with a verified
two-local witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .config import DEFAULT_CONFIG, TOL_MARGINAL, SolverConfig
from .correlations import lower_order_part, three_body_array
from .marginals import (
    PAIRS,
    SITE_NAMES,
    InconsistentTripleError,
    MarginalTriple,
    PreconditionError,
    reductions,
)
from .operators import DensityMatrix, DimensionError, Operator, _psd_trace1, _rng, hs_norm, tensor

FEASIBLE, INFEASIBLE, UNDECIDED = "feasible", "infeasible", "undecided"
TOL_WITNESS = 1e-10
POLISH_RANK_EPS = 1e-6


@dataclass(frozen=True)
class ConsistencyResult:
    """Single-site agreement of the three pair states; residuals keyed by site name."""

    ok: bool
    residuals: dict[str, float]

    def __bool__(self) -> bool:
        return self.ok


def consistency_check(E: MarginalTriple, tol: float = TOL_MARGINAL) -> ConsistencyResult:
    res = {}
    for site in range(3):
        x, y = E.single_estimates(site)
        res[SITE_NAMES[site]] = hs_norm(x - y)
    return ConsistencyResult(all(r <= tol for r in res.values()), res)


def _require_consistent(E: MarginalTriple) -> None:
    check = consistency_check(E)
    if not check:
        raise InconsistentTripleError(f"single-site marginals disagree: {check.residuals}")


def candidate_zero3body(E: MarginalTriple) -> Operator:
    """The operator with marginals ``E`` and no three-body correlation."""
    _require_consistent(E)
    singles = E.singles()
    pair_corr = tuple(
        E.pair(*pair) - tensor(singles[pair[0]], singles[pair[1]]) for pair in PAIRS
    )
    return lower_order_part(singles, pair_corr)


def three_body_residual(X: Operator) -> float:
    return float(np.linalg.norm(three_body_array(X.mat, X.dims)))


class AffineMarginalSet:
    """Orthogonal projection onto ``{X : reductions(X) = E}``."""

    def __init__(self, E: MarginalTriple) -> None:
        self.E = E
        self.dims = E.dims
        self.candidate = candidate_zero3body(E)
        cand = self.candidate.mat
        self.offset = cand - three_body_array(cand, self.dims)

    def project(self, mat: np.ndarray) -> np.ndarray:
        return three_body_array(mat, self.dims) + self.offset


def project_affine(X: Operator, E: MarginalTriple) -> Operator:
    """Keep the three-body component of ``X``; take everything else from ``E``."""
    if X.dims != E.dims:
        raise DimensionError(f"operator dims {X.dims} do not match triple dims {E.dims}")
    return Operator(AffineMarginalSet(E).project(X.mat), X.dims)


def distance_D(rho: Operator, E: MarginalTriple) -> float:
    """Sum of squared HS distances between the reductions of ``rho`` and ``E``."""
    if rho.dims != E.dims:
        raise DimensionError(f"state dims {rho.dims} do not match triple dims {E.dims}")
    return float(sum(hs_norm(r - e) ** 2 for r, e in zip(reductions(rho), E)))


# witnesses -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CompatibilityWitness:
    """Two-local functional separating the affine marginal set from the states.

    ``<W, X> = affine_value`` on every operator with marginals ``E`` while
    ``<W, Y> >= psd_bound`` on every state, so ``margin > 0`` proves that no
    state has marginals ``E``.
    """

    W: Operator
    affine_value: float
    psd_bound: float

    @property
    def margin(self) -> float:
        return self.psd_bound - self.affine_value

    def to_json(self) -> dict:
        from .io import state_to_json

        return {
            "W": state_to_json(self.W),
            "affine_value": self.affine_value,
            "psd_bound": self.psd_bound,
            "margin": self.margin,
        }


class WitnessError(ValueError):
    """The gap direction has no two-local part."""


def witness_from_gap(p_aff: Operator, p_psd: Operator, E: MarginalTriple) -> CompatibilityWitness:
    """Normalized two-local part of ``p_psd - p_aff``."""
    g = (p_psd - p_aff).hermitized().mat
    if np.linalg.norm(g) == 0:
        raise WitnessError("iterates coincide; there is no gap")
    w = g - three_body_array(g, E.dims)
    norm = np.linalg.norm(w)
    if norm <= 1e-14 * np.linalg.norm(g):
        raise WitnessError("gap direction is purely three-body")
    W = Operator(w / norm, E.dims).hermitized()
    cand = candidate_zero3body(E)
    affine_value = float(np.real(np.vdot(W.mat, cand.mat)))
    psd_bound = float(np.linalg.eigvalsh(W.mat)[0])
    return CompatibilityWitness(W, affine_value, psd_bound)


def verify_witness(w: CompatibilityWitness, E: MarginalTriple, tol: float = TOL_WITNESS) -> bool:
    """Recompute every witness quantity from scratch and check the separation."""
    try:
        cand = candidate_zero3body(E)
    except InconsistentTripleError:
        return False
    W = w.W
    if W.dims != E.dims or not W.is_hermitian() or abs(hs_norm(W) - 1) > 1e-9:
        return False
    if three_body_residual(W) > tol:
        return False
    affine_value = float(np.real(np.vdot(W.mat, cand.mat)))
    psd_bound = float(np.linalg.eigvalsh(W.hermitized().mat)[0])
    if abs(affine_value - w.affine_value) > 1e-9 or abs(psd_bound - w.psd_bound) > 1e-9:
        return False
    return psd_bound - affine_value > tol


# low-rank refinement -------------------------------------------------------


def marginal_vector(stack: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Real vector of the three pair reductions of each matrix in ``stack``."""
    t = stack.reshape((-1,) + dims + dims)
    m = t.shape[0]
    parts = [
        np.einsum("zabcdec->zabde", t).reshape(m, -1),
        np.einsum("zabcdbf->zacdf", t).reshape(m, -1),
        np.einsum("zabcaef->zbcef", t).reshape(m, -1),
    ]
    z = np.concatenate(parts, axis=1)
    return np.concatenate([z.real, z.imag], axis=1)


def triple_vector(E: MarginalTriple) -> np.ndarray:
    z = np.concatenate([rho.mat.ravel() for rho in E])
    return np.concatenate([z.real, z.imag])


def refine_low_rank(
    V: np.ndarray,
    dims: tuple[int, int, int],
    target: np.ndarray,
    max_steps: int = 100,
    tol: float = 1e-13,
) -> np.ndarray | None:
    """Gauss-Newton on ``V`` so that ``V V^dagger`` has the target marginals.

    Any converged ``V V^dagger`` is PSD by construction.  Returns ``None``
    when the residual diverges, stalls, or does not reach ``tol``.
    """
    n, r = V.shape
    eye = np.eye(n)
    best, stalled, done = np.inf, 0, None
    for _ in range(max_steps):
        res = marginal_vector(V @ V.conj().T, dims)[0] - target
        norm = np.linalg.norm(res)
        if done is not None:
            # tangential contact converges only linearly; keep going while it pays
            if norm >= 0.9 * best:
                return done
            done, best = V, norm
        elif norm <= tol:
            done = V
        if not np.isfinite(norm) or norm > 10 * best:
            return done
        stalled = stalled + 1 if norm > 0.999 * best else 0
        if stalled >= 10:
            return done
        best = min(best, norm)
        # directions dV = E_ij and i E_ij; dX = dV V^dagger + V dV^dagger
        left = np.einsum("ia,bj->ijab", eye, V.conj())
        right = np.einsum("aj,ib->ijab", V, eye)
        dirs = np.concatenate([
            (left + right).reshape(n * r, n, n),
            (1j * (left - right)).reshape(n * r, n, n),
        ])
        J = marginal_vector(dirs, dims).T
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        V = V + (step[: n * r] + 1j * step[n * r:]).reshape(n, r)
    if done is not None:
        return done
    res = marginal_vector(V @ V.conj().T, dims)[0] - target
    return V if np.linalg.norm(res) <= tol else None


def polish(x: np.ndarray, dims: tuple[int, int, int], target: np.ndarray) -> np.ndarray | None:
    """Try to turn a near-feasible PSD iterate into an exactly compatible low-rank state.

    Every rank below the numerical rank of ``x`` is tried, smallest first.
    """
    w, U = np.linalg.eigh(x)
    w, U = w[::-1], U[:, ::-1]
    top = min(int(np.sum(w > POLISH_RANK_EPS * w[0])), x.shape[0] - 1)
    for r in range(1, top + 1):
        V = refine_low_rank(U[:, :r] * np.sqrt(np.maximum(w[:r], 0)), dims, target)
        if V is not None:
            return _drop_rank(V @ V.conj().T, dims, target)
    return None


def _drop_rank(x: np.ndarray, dims: tuple[int, int, int], target: np.ndarray) -> np.ndarray:
    """Re-solve at the numerical rank of a solution, removing near-null directions."""
    while True:
        x = 0.5 * (x + x.conj().T)
        w, U = np.linalg.eigh(x)
        w, U = w[::-1], U[:, ::-1]
        r = int(np.sum(w > 1e-9 * w[0]))
        if r >= int(np.sum(w > 1e-14 * w[0])):
            return x
        V = refine_low_rank(U[:, :r] * np.sqrt(w[:r]), dims, target)
        if V is None:
            return x
        x = V @ V.conj().T


# solver --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeasibilityOutcome:
    """Verdict of the compatibility solver.

    ``state`` is set for feasible, ``witness`` for infeasible; ``gap`` is
    the last distance between the two iterates.
    """

    verdict: str
    state: DensityMatrix | None = None
    witness: CompatibilityWitness | None = None
    gap: float = 0.0
    iterations: int = 0
    start: int = 0

    @property
    def is_feasible(self) -> bool:
        return self.verdict == FEASIBLE

    @property
    def is_infeasible(self) -> bool:
        return self.verdict == INFEASIBLE

    def to_json(self) -> dict:
        from .io import state_to_json

        return {
            "verdict": self.verdict,
            "state": None if self.state is None else state_to_json(self.state),
            "witness": None if self.witness is None else self.witness.to_json(),
            "gap": self.gap,
            "iterations": self.iterations,
        }


@dataclass
class _Dykstra:
    """Two-set Dykstra iteration owning its buffers."""

    E: MarginalTriple
    cfg: SolverConfig
    affine: AffineMarginalSet = field(init=False)
    target: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.affine = AffineMarginalSet(self.E)
        self.target = triple_vector(self.E)

    def _feasible(self, mat: np.ndarray, it: int, start: int, gap: float) -> FeasibilityOutcome | None:
        if np.linalg.eigvalsh(mat)[0] < -self.cfg.feas_tol:
            return None
        state = DensityMatrix(0.5 * (mat + mat.conj().T) / np.trace(mat).real, self.E.dims)
        if np.linalg.norm(marginal_vector(state.mat, self.E.dims)[0] - self.target) > TOL_MARGINAL:
            return None
        return FeasibilityOutcome(FEASIBLE, state=state, gap=gap, iterations=it, start=start)

    def _witness(self, y: np.ndarray, x: np.ndarray) -> CompatibilityWitness | None:
        dims = self.E.dims
        try:
            w = witness_from_gap(Operator(y, dims), Operator(x, dims), self.E)
        except WitnessError:
            return None
        return w if verify_witness(w, self.E) else None

    def run(self, x0: np.ndarray, start: int = 0) -> FeasibilityOutcome:
        cfg = self.cfg
        x = np.array(x0, dtype=complex)
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        history: list[float] = []
        gap = np.inf
        y = self.affine.project(x)
        for it in range(1, cfg.max_iters + 1):
            y = self.affine.project(x + p)
            p = x + p - y
            x_new = _psd_trace1(y + q)
            q = y + q - x_new
            x = x_new
            if it % cfg.check_every:
                continue
            gap = float(np.linalg.norm(x - y))
            found = self._feasible(y, it, start, gap)
            if found is not None:
                return found
            checks = it // cfg.check_every
            if cfg.polish and checks & (checks - 1) == 0:
                fine = polish(x, self.E.dims, self.target)
                if fine is not None and (found := self._feasible(fine, it, start, gap)):
                    return found
            witness = self._witness(y, x)
            if witness is not None:
                return FeasibilityOutcome(INFEASIBLE, witness=witness, gap=gap, iterations=it, start=start)
            history.append(gap)
            window = cfg.stall_window // cfg.check_every
            if len(history) > window:
                old = history[-1 - window]
                if abs(old - gap) <= cfg.stall_rtol * max(gap, 1e-300):
                    break
        return FeasibilityOutcome(UNDECIDED, gap=gap, iterations=it, start=start)


def _random_start(dims: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    n = int(np.prod(dims))
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    return g + g.conj().T


def solve_feasibility(E: MarginalTriple, cfg: SolverConfig = DEFAULT_CONFIG) -> FeasibilityOutcome:
    """Decide whether some state has marginals ``E``.

    Tries the zero-three-body candidate, then Dykstra from the candidate and
    from ``cfg.restarts`` seeded random starts.  The best undecided gap is
    reported when no start reaches a verdict.
    """
    solver = _Dykstra(E, cfg)
    cand = solver.affine.candidate.mat
    found = solver._feasible(cand, 0, 0, 0.0)
    if found is not None:
        return found
    rng = _rng(cfg.seed)
    best = None
    for start in range(cfg.restarts + 1):
        x0 = cand if start == 0 else _random_start(E.dims, rng)
        out = solver.run(x0, start)
        if out.verdict != UNDECIDED:
            return out
        if best is None or out.gap < best.gap:
            best = out
    return best


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    """States reached from independent random starts (evidence, not proof, of uniqueness)."""

    states: tuple[DensityMatrix, ...]
    max_pairwise_distance: float
    n_starts: int

    def to_json(self) -> dict:
        return {
            "n_states": len(self.states),
            "n_starts": self.n_starts,
            "max_pairwise_distance": self.max_pairwise_distance,
        }


def uniqueness_probe(
    E: MarginalTriple,
    n_starts: int = 20,
    seed: int | None = None,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> UniquenessReport:
    solver = _Dykstra(E, cfg)
    rng = _rng(cfg.seed if seed is None else seed)
    states = []
    for start in range(n_starts):
        out = solver.run(_random_start(E.dims, rng), start)
        if out.is_infeasible:
            raise PreconditionError("the triple is not compatible")
        if out.is_feasible:
            states.append(out.state)
    if not states:
        raise PreconditionError("no start converged to a compatible state")
    dist = max((hs_norm(a - b) for a, b in combinations(states, 2)), default=0.0)
    return UniquenessReport(tuple(states), dist, n_starts)
