"""Relaxation test for marginals that force genuine multipartite entanglement.

Biseparable states are relaxed to PPT mixtures: sums ``P_A + P_B + P_C`` with
each part PSD and PSD under partial transposition of its own site.  The
search alternates projections on the lifted variables
``(X_A, X_B, X_C, Y_A, Y_B, Y_C)`` between the cone ``PSD^6`` and the
affine set ``{Y_k = X_k^{T_k}, reductions(sum X) = E}``.  Plain alternation
rather than Dykstra: only membership matters here, and without the cone
correction the iterates reach interior points and the gap direction far
sooner.  The displacement
between the two iterates is rounded to a two-local witness that is
nonnegative on every PPT mixture but negative on the marginals; once such a
witness verifies, no biseparable state has marginals ``E``.  Without one, a
persistent gap across independent starts is kept as evidence.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .compatibility import AffineMarginalSet, candidate_zero3body, distance_D, solve_feasibility
from .config import DEFAULT_CONFIG, TOL_PSD, SolverConfig
from .entanglement import Birank, a_finite_check, birank, normal_form, ppt_check, pt_invariant_biseparable
from .marginals import PAIRS, MarginalTriple, PreconditionError, min_eigenvalue
from .operators import DensityMatrix, Operator, _rng, embed_pair, partial_transpose, rank_eps

BISEPARABLE, ONLY_GME, UNDECIDED = "biseparable-compatible", "only-gme", "undecided"
TOL_PART = 1e-9
GAP_AGREEMENT = 1e-2


def _transpose_site(stack: np.ndarray, dims: tuple[int, int, int], site: int) -> np.ndarray:
    """Partial transpose of one matrix (or a stack) on ``site``."""
    n = len(dims)
    lead = stack.shape[:-2]
    t = stack.reshape(lead + dims + dims)
    off = len(lead)
    t = np.swapaxes(t, off + site, off + site + n)
    return t.reshape(stack.shape)


def _psd_cone(stack: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(stack)
    return (U * np.maximum(w, 0)[..., None, :]) @ U.conj().swapaxes(-1, -2)


@dataclass(frozen=True, eq=False)
class PPTMixtureVars:
    """Three unnormalized parts, ``parts[k]`` PPT across the cut separating site ``k``."""

    parts: tuple[Operator, Operator, Operator]

    @property
    def total(self) -> Operator:
        a, b, c = self.parts
        return a + b + c

    def violations(self) -> dict[str, float]:
        """Most negative eigenvalue of each part and of each part's transpose."""
        out = {}
        for k, P in enumerate(self.parts):
            out[f"psd_{'ABC'[k]}"] = min_eigenvalue(P)
            out[f"ppt_{'ABC'[k]}"] = min_eigenvalue(partial_transpose(P, k))
        return out


@lru_cache(maxsize=8)
def _pair_pinv(dims: tuple[int, int, int]) -> np.ndarray:
    """Pseudo-inverse of ``(w_AB, w_AC, w_BC) -> sum of embedded terms``."""
    cols = []
    for pair in PAIRS:
        m = dims[pair[0]] * dims[pair[1]]
        for idx in range(m * m):
            unit = np.zeros(m * m, dtype=complex)
            unit[idx] = 1.0
            op = Operator(unit.reshape(m, m), (dims[pair[0]], dims[pair[1]]))
            cols.append(embed_pair(op, pair, dims).mat.ravel())
    return np.linalg.pinv(np.array(cols).T, rcond=1e-10)


def _embed_terms(terms, dims) -> np.ndarray:
    return sum(
        embed_pair(Operator(w, (dims[i], dims[j])), (i, j), dims).mat
        for w, (i, j) in zip(terms, PAIRS)
    )


def _traceless(w: np.ndarray) -> np.ndarray:
    return w - np.trace(w) / w.shape[0] * np.eye(w.shape[0])


def _split_terms(flat: np.ndarray, dims) -> list[np.ndarray]:
    out, pos = [], 0
    for i, j in PAIRS:
        m = dims[i] * dims[j]
        w = flat[pos:pos + m * m].reshape(m, m)
        out.append(0.5 * (w + w.conj().T))
        pos += m * m
    return out


@dataclass(frozen=True, eq=False)
class PPTMixtureWitness:
    """Two-local ``W = sum_ij w_ij x 1`` with ``W = Q_k + R_k^{T_k}``, ``Q_k, R_k >= 0``.

    Every PPT mixture ``rho = sum P_k`` has ``<W, rho> >= 0``, while every
    operator with marginals ``E`` has ``<W, X> = affine_value``.  A negative
    ``affine_value`` therefore proves that no PPT mixture, and so no
    biseparable state, has marginals ``E``.  ``lower_bound`` bounds the
    lifted distance between the two sets; ``d_bound`` bounds ``D`` over all
    biseparable states.
    """

    pair_terms: tuple[np.ndarray, np.ndarray, np.ndarray]
    Q: tuple[Operator, Operator, Operator]
    R: tuple[Operator, Operator, Operator]
    affine_value: float

    @cached_property
    def W(self) -> Operator:
        return Operator(_embed_terms(self.pair_terms, self.Q[0].dims), self.Q[0].dims)

    @property
    def lower_bound(self) -> float:
        norm = np.sqrt(sum(np.linalg.norm(X.mat) ** 2 for X in self.Q + self.R))
        return -self.affine_value / norm

    def d_bound(self, slack: float = 0.0) -> float:
        """``D(rho | E) >= d_bound`` for every biseparable ``rho``.

        ``<W, rho> - affine_value = sum_ij <w_ij, rho_ij - E_ij>``, so
        Cauchy-Schwarz turns the sign gap into a bound on ``D``.  Both
        marginals have unit trace, so only the traceless part of ``w_ij``
        counts.
        """
        norm = np.sqrt(sum(np.linalg.norm(_traceless(w)) ** 2 for w in self.pair_terms))
        return max(0.0, -self.affine_value - slack) ** 2 / norm**2

    def to_json(self) -> dict:
        from .io import state_to_json

        return {
            "W": state_to_json(self.W),
            "affine_value": self.affine_value,
            "lower_bound": self.lower_bound,
            "d_bound": self.d_bound(),
        }


def witness_from_displacement(z_cone: np.ndarray, z_lin: np.ndarray, E: MarginalTriple) -> PPTMixtureWitness:
    """Round the lifted displacement ``z_cone - z_lin`` to an exactly decomposed witness."""
    dims = E.dims
    w = z_cone - z_lin
    raw = sum(w[k] + _transpose_site(w[3 + k], dims, k) for k in range(3)) / 3
    terms = _split_terms(_pair_pinv(dims) @ raw.ravel(), dims)
    W = _embed_terms(terms, dims)
    R = [_psd_cone(w[3 + k]) for k in range(3)]
    Q = [W - _transpose_site(R[k], dims, k) for k in range(3)]
    # the identity is two-local; a multiple of it absorbs what Q lacks in positivity
    shift = max(0.0, -min(np.linalg.eigvalsh(x)[0] for x in Q))
    terms[0] = terms[0] + shift * np.eye(terms[0].shape[0])
    eye = np.eye(W.shape[0])
    Q = [x + shift * eye for x in Q]
    value = _affine_value(terms, E)
    op = lambda m: Operator(0.5 * (m + m.conj().T), dims)  # noqa: E731
    return PPTMixtureWitness(tuple(terms), tuple(map(op, Q)), tuple(map(op, R)), value)


def _affine_value(terms, E: MarginalTriple) -> float:
    return float(sum(np.real(np.vdot(w, rho.mat)) for w, rho in zip(terms, E)))


def witness_slack(w: PPTMixtureWitness, tol: float = 1e-10) -> float:
    """Allowance for rounding: ``<W, rho> >= -slack`` on unit-trace PPT mixtures."""
    return 2 * tol * max(1.0, float(np.linalg.norm(w.W.mat)))


def verify_pptmix_witness(w: PPTMixtureWitness, E: MarginalTriple, tol: float = 1e-10) -> bool:
    """Recheck positivity, decomposition and the sign of the affine value.

    With ``lambda_min(Q_k), lambda_min(R_k) >= -eps`` every unit-trace PPT
    mixture has ``<W, rho> >= -2 eps``, so the affine value must sit below that.
    """
    dims = E.dims
    if w.W.dims != dims:
        return False
    W = w.W.mat
    slack = witness_slack(w, tol)
    eps = slack / 2
    for k in range(3):
        if min(min_eigenvalue(w.Q[k]), min_eigenvalue(w.R[k])) < -eps:
            return False
        recon = w.Q[k].mat + _transpose_site(w.R[k].mat, dims, k)
        if np.max(np.abs(recon - W)) > eps:
            return False
    value = _affine_value(w.pair_terms, E)
    return value + slack < 0 and abs(value - w.affine_value) <= 1e-12 * max(1.0, abs(value))


@dataclass(frozen=True, eq=False)
class GMEOutcome:
    """Verdict of the PPT-mixture search.

    ``label`` says how a biseparable-compatible verdict was reached:
    ``"biseparable"`` when a cited separability criterion applies,
    ``"relaxation-feasible"`` when only the relaxation was satisfied.
    """

    verdict: str
    state: DensityMatrix | None = None
    parts: PPTMixtureVars | None = None
    gap: float = 0.0
    restarts_agreeing: int = 0
    route: str = ""
    label: str = ""
    gaps: tuple[float, ...] = ()
    lower_bound: float = 0.0
    witness: PPTMixtureWitness | None = field(default=None, repr=False)
    d_values: tuple[float, ...] = field(default=(), repr=False)

    @property
    def certified(self) -> bool:
        return self.witness is not None

    @property
    def only_gme(self) -> bool:
        return self.verdict == ONLY_GME

    def to_json(self) -> dict:
        from .io import state_to_json

        return {
            "verdict": self.verdict,
            "route": self.route,
            "label": self.label,
            "gap": self.gap,
            "gaps": list(self.gaps),
            "restarts_agreeing": self.restarts_agreeing,
            "certified": self.certified,
            "lower_bound": self.lower_bound,
            "witness": None if self.witness is None else self.witness.to_json(),
            "state": None if self.state is None else state_to_json(self.state),
        }


class _LiftedProjections:
    """Alternating projections on the lifted PPT-mixture variables."""

    def __init__(self, E: MarginalTriple, cfg: SolverConfig) -> None:
        self.E = E
        self.cfg = cfg
        self.dims = E.dims
        self.affine = AffineMarginalSet(E)

    def project_linear(self, z: np.ndarray) -> np.ndarray:
        """Projection onto ``{Y_k = X_k^{T_k}, reductions(sum X) = E}``; ``z`` has shape (6, n, n)."""
        X0, Y0 = z[:3], z[3:]
        M = np.stack([0.5 * (X0[k] + _transpose_site(Y0[k], self.dims, k)) for k in range(3)])
        S = M.sum(axis=0)
        X = M - (S - self.affine.project(S)) / 3
        Y = np.stack([_transpose_site(X[k], self.dims, k) for k in range(3)])
        return np.concatenate([X, Y])

    def feasible_parts(self, z: np.ndarray) -> PPTMixtureVars | None:
        """Accept the affine iterate when every part and its transpose are PSD."""
        if np.linalg.eigvalsh(z)[:, 0].min() < -TOL_PART:
            return None
        return PPTMixtureVars(tuple(Operator(0.5 * (x + x.conj().T), self.dims) for x in z[:3]))

    def run(
        self, z0: np.ndarray, refine: bool = False
    ) -> tuple[str, np.ndarray, np.ndarray, float, PPTMixtureWitness | None]:
        """Iterate until a feasible point, a verified witness, a stalled gap, or the budget.

        With ``refine`` the first witness does not stop the run; the one with
        the largest ``d_bound`` is kept until the gap stalls or the budget ends.
        """
        cfg = self.cfg
        x = z0.copy()
        history: list[float] = []
        window = max(1, cfg.stall_window // cfg.check_every)
        gap = np.inf
        best = None
        y = self.project_linear(x)
        for it in range(1, cfg.gme_max_iters + 1):
            y = self.project_linear(x)
            x = _psd_cone(y)
            if it % cfg.check_every:
                continue
            gap = float(np.linalg.norm(x - y))
            if self.feasible_parts(y) is not None:
                return "feasible", y, x, gap, None
            witness = witness_from_displacement(x, y, self.E)
            if verify_pptmix_witness(witness, self.E):
                if not refine:
                    return "certified", y, x, gap, witness
                if best is None or witness.d_bound() > best.d_bound():
                    best = witness
            history.append(gap)
            if len(history) > window:
                old = history[-1 - window]
                if abs(old - gap) <= cfg.gme_stall_rtol * gap:
                    break
        else:
            return ("certified" if best else "budget"), y, x, gap, best
        return ("certified" if best else "stalled"), y, x, gap, best


def _start(E: MarginalTriple, rng: np.random.Generator, cand: np.ndarray) -> np.ndarray:
    n = cand.shape[0]
    g = rng.standard_normal((6, n, n)) + 1j * rng.standard_normal((6, n, n))
    g = (g + g.conj().swapaxes(-1, -2)) / np.sqrt(8 * n)
    base = np.stack([cand / 3] * 3)
    base = np.concatenate([base, np.stack([_transpose_site(base[k], E.dims, k) for k in range(3)])])
    return base + g


def _shortcut(E: MarginalTriple, known: Operator | None) -> GMEOutcome | None:
    cand = candidate_zero3body(E)
    cand_psd = min_eigenvalue(cand) >= -TOL_PSD
    if cand_psd and pt_invariant_biseparable(cand):
        state = DensityMatrix.from_operator(cand)
        return GMEOutcome(BISEPARABLE, state=state, route="pt-invariant", label="biseparable")
    if cand_psd and E.dims == (2, 2, 2):
        nf = normal_form(E)
        if nf is not None and pt_invariant_biseparable(cand, nf.frame):
            state = DensityMatrix.from_operator(cand)
            return GMEOutcome(BISEPARABLE, state=state, route="pt-invariant-frame", label="biseparable")
    candidates = ([cand] if cand_psd else []) + ([known] if known is not None else [])
    for state in candidates:
        for site in range(3):
            if ppt_check(state, site).ppt:
                state = DensityMatrix.from_operator(state)
                parts = [Operator(np.zeros_like(state.mat), state.dims)] * 3
                parts[site] = state
                return GMEOutcome(
                    BISEPARABLE,
                    state=state,
                    parts=PPTMixtureVars(tuple(parts)),
                    route=f"ppt-cut-{'ABC'[site]}",
                    label="relaxation-feasible",
                )
    return None


def solve_pptmix_marginals(
    E: MarginalTriple,
    cfg: SolverConfig = DEFAULT_CONFIG,
    known_state: Operator | None = None,
    check_compatible: bool = True,
) -> GMEOutcome:
    """Search for a PPT mixture with marginals ``E``.

    ``known_state`` is a state already known to have marginals ``E``; it
    spares the compatibility solve and feeds the PPT-cut shortcut.
    """
    if known_state is None and check_compatible:
        out = solve_feasibility(E, cfg)
        if out.is_infeasible:
            raise PreconditionError("the triple is not compatible with any state")
        known_state = out.state
    short = _shortcut(E, known_state)
    if short is not None:
        return short
    solver = _LiftedProjections(E, cfg)
    rng = _rng(cfg.seed)
    cand = solver.affine.candidate.mat
    gaps, d_values, witnesses = [], [], []
    for _ in range(cfg.gme_restarts):
        status, y, x, gap, witness = solver.run(_start(E, rng, cand))
        if status == "feasible":
            parts = solver.feasible_parts(y)
            state = DensityMatrix.from_operator(parts.total)
            return GMEOutcome(
                BISEPARABLE,
                state=state,
                parts=parts,
                gap=gap,
                route="ppt-mixture",
                label="relaxation-feasible",
            )
        if status == "certified":
            witnesses.append(witness)
            gaps.append(gap)
        elif status == "stalled" and gap > cfg.gme_gap_tol:
            gaps.append(gap)
        else:
            return GMEOutcome(UNDECIDED, gap=gap, route=status, gaps=tuple(gaps + [gap]))
        d_values.append(_relaxation_distance(x, E))
    if witnesses:
        best = max(witnesses, key=lambda w: w.d_bound())
        return GMEOutcome(
            ONLY_GME,
            gap=min(gaps),
            restarts_agreeing=len(gaps),
            route="certified",
            gaps=tuple(gaps),
            lower_bound=min(w.lower_bound for w in witnesses),
            witness=best,
            d_values=tuple(d_values),
        )
    lo, hi = min(gaps), max(gaps)
    agreeing = sum(1 for g in gaps if g - lo <= GAP_AGREEMENT * lo)
    verdict = ONLY_GME if hi - lo <= GAP_AGREEMENT * lo else UNDECIDED
    return GMEOutcome(
        verdict,
        gap=lo,
        restarts_agreeing=agreeing,
        route="persistent-gap",
        gaps=tuple(gaps),
        d_values=tuple(d_values),
    )


def _ppt_part(P: np.ndarray, dims: tuple[int, int, int], site: int, iters: int = 500) -> np.ndarray:
    """Nearest-point Dykstra onto ``{P >= 0, P^{T_site} >= 0}``."""
    x = P.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iters):
        y = _psd_cone(x + p)
        p = x + p - y
        t = _transpose_site(y + q, dims, site)
        x = _transpose_site(_psd_cone(t), dims, site)
        q = y + q - x
        if np.linalg.eigvalsh(x)[0] >= -1e-12:
            break
    return _psd_cone(x)


def _relaxation_distance(z: np.ndarray, E: MarginalTriple) -> float:
    """``D`` at the normalized PPT mixture built from the cone iterate."""
    parts = [_ppt_part(z[k], E.dims, k) for k in range(3)]
    total = sum(parts)
    tr = np.trace(total).real
    if tr <= 0:
        return float("inf")
    return distance_D(Operator(total / tr, E.dims), E)


@dataclass(frozen=True)
class DBSEstimate:
    """Bound on the smallest ``D`` reachable by a biseparable state.

    ``label`` is ``"certified"`` when ``value`` comes from a verified
    witness and so provably bounds ``D`` from below.  Otherwise ``value`` is
    ``D`` evaluated at the best PPT-mixture point found, which is only
    evidence about the minimum (``"stable"`` when restarts agree and
    exhaustive mode was requested, ``"evidence"`` otherwise).
    """

    value: float
    label: str
    values: tuple[float, ...]


def d_bs_lower_bound(E: MarginalTriple, cfg: SolverConfig = DEFAULT_CONFIG) -> DBSEstimate:
    """Lower bound on ``D`` over biseparable states, certified when a witness verifies.

    After a certified only-GME verdict one more seeded run iterates past the
    first witness to sharpen the bound.
    """
    out = solve_pptmix_marginals(E, cfg)
    if out.verdict == BISEPARABLE:
        d = distance_D(out.state, E)
        return DBSEstimate(d, "evidence", (d,))
    values = out.d_values or (0.0,)
    if out.witness is not None:
        solver = _LiftedProjections(E, cfg)
        start = _start(E, _rng(cfg.seed), solver.affine.candidate.mat)
        _, _, _, _, refined = solver.run(start, refine=True)
        best = max(filter(None, (out.witness, refined)), key=lambda w: w.d_bound())
        return DBSEstimate(best.d_bound(witness_slack(best)), "certified", tuple(values))
    value = min(values)
    stable = max(values) - value <= GAP_AGREEMENT * max(value, 1e-300)
    label = "stable" if cfg.exhaustive and stable else "evidence"
    return DBSEstimate(value, label, tuple(values))


@dataclass(frozen=True, eq=False)
class GMECertificate:
    """The relaxation verdict with the analytic sufficient conditions reported beside it."""

    only_gme: bool
    outcome: GMEOutcome
    conditions: dict

    def to_json(self) -> dict:
        return {"only_gme": self.only_gme, "outcome": self.outcome.to_json(), "conditions": self.conditions}


def finiteness_and_rank_conditions(E: MarginalTriple, seed=None) -> dict:
    """Finiteness of every pair on both sides and the two birank conditions."""
    finite = {}
    for name, rho in zip(("AB", "AC", "BC"), E):
        for side in (0, 1):
            res = a_finite_check(rho, side, seed=seed)
            finite[f"{name}:{name[side]}"] = {"finite": res.finite, "exact": res.exact}
    r_b = rank_eps(E.single(1))
    bc: Birank = birank(E.rho_bc)
    ab: Birank = birank(E.rho_ab)
    return {
        "finiteness": finite,
        "all_finite": all(v["finite"] for v in finite.values()),
        "rank_B": r_b,
        "birank_BC": bc.to_json(),
        "birank_AB": ab.to_json(),
        "birank_BC_condition": bc.as_tuple() == (r_b + 1, r_b + 1),
        "birank_AB_condition": ab.r != ab.r_gamma,
    }


def certify_only_gme(
    E: MarginalTriple, cfg: SolverConfig = DEFAULT_CONFIG, known_state: Operator | None = None
) -> GMECertificate:
    outcome = solve_pptmix_marginals(E, cfg, known_state)
    conditions = finiteness_and_rank_conditions(E, seed=cfg.seed)
    conditions["all_met"] = bool(
        conditions["all_finite"] and conditions["birank_BC_condition"] and conditions["birank_AB_condition"]
    )
    return GMECertificate(outcome.only_gme, outcome, conditions)


@dataclass(frozen=True, eq=False)
class RobustnessScanResult:
    """Bisection record for ``(1 - p) sigma + p mixer``; ``grid`` rows are ``(p, verdict, gap)``."""

    p_bar: float
    grid: tuple[tuple[float, str, float], ...]
    mixer: DensityMatrix

    def to_json(self) -> dict:
        return {
            "p_bar": self.p_bar,
            "grid": [{"p": p, "verdict": v, "gap": g} for p, v, g in self.grid],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["p", "verdict", "gap"])
        for row in sorted(self.grid):
            writer.writerow([repr(row[0]), row[1], repr(row[2])])
        return buf.getvalue()


def robustness_scan(
    sigma: Operator, mixer: Operator | None = None, cfg: SolverConfig = DEFAULT_CONFIG
) -> RobustnessScanResult:
    """Bisect for the largest mixing weight keeping the marginals GME-only.

    Each point uses ``cfg.scan_restarts`` restarts and the mixture itself
    as the known compatible state.  Undecided counts as not GME-only.
    """
    if mixer is None:
        mixer = DensityMatrix(np.eye(sigma.total) / sigma.total, sigma.dims)
    mixer = DensityMatrix.from_operator(mixer)
    point_cfg = cfg.updated(gme_restarts=cfg.scan_restarts)
    grid = []

    def verdict(p: float) -> bool:
        tau = DensityMatrix.from_operator(sigma * (1 - p) + mixer * p)
        out = solve_pptmix_marginals(MarginalTriple.from_state(tau), point_cfg, known_state=tau)
        grid.append((float(p), out.verdict, float(out.gap)))
        return out.only_gme

    lo, hi = cfg.scan_lo, cfg.scan_hi
    if not verdict(lo):
        return RobustnessScanResult(0.0, tuple(grid), mixer)
    if verdict(hi):
        return RobustnessScanResult(hi, tuple(grid), mixer)
    while hi - lo > cfg.scan_resolution:
        mid = 0.5 * (lo + hi)
        if verdict(mid):
            lo = mid
        else:
            hi = mid
    return RobustnessScanResult(lo, tuple(grid), mixer)
