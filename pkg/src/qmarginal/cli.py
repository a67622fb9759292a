"""Command-line front end.

JSON goes to stdout (or ``--out``), diagnostics to stderr.  Exit codes:
0 success / feasible / biseparable-compatible, 2 unreadable input,
3 infeasible / only-GME, 4 undecided, 5 inconsistent or incompatible triple.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import catalog as cat
from .compatibility import FEASIBLE, INFEASIBLE, consistency_check, solve_feasibility
from .config import DEFAULT_CONFIG, SolverConfig
from .correlations import (
    classical_global_completion,
    classical_triple_check,
    commutator_delta,
    decompose,
)
from .entanglement import birank, ppt_check
from .gme import BISEPARABLE, ONLY_GME, certify_only_gme, robustness_scan
from .io import FormatError, dumps, load_state, load_triple, read_json, state_to_json, triple_to_json
from .marginals import PAIRS, SITE_NAMES, InconsistentTripleError, MarginalTriple, PreconditionError
from .operators import hs_norm

EXIT_OK, EXIT_INPUT, EXIT_NEGATIVE, EXIT_UNDECIDED, EXIT_INCOMPATIBLE = 0, 2, 3, 4, 5
PAIR_NAMES = tuple("".join(SITE_NAMES[k] for k in p) for p in PAIRS)


class InputError(Exception):
    """Raised for unusable input; maps to exit code 2."""


def build_config(args: argparse.Namespace) -> SolverConfig:
    """Defaults, then the config file, then command-line flags."""
    overrides = {}
    if getattr(args, "config", None):
        doc = read_json(args.config)
        if not isinstance(doc, dict):
            raise FormatError("config file must hold a JSON object")
        overrides.update(doc)
    flags = {
        "seed": args.seed,
        "max_iters": args.max_iters,
        "gme_max_iters": args.max_iters,
        "restarts": args.restarts,
        "gme_restarts": args.restarts,
        "feas_tol": args.tol_psd,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    try:
        return DEFAULT_CONFIG.updated(overrides)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad config: {exc}") from exc


def _emit(doc, args: argparse.Namespace) -> None:
    text = dumps(doc)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def _triple(path: str) -> MarginalTriple:
    E = load_triple(path)
    if not consistency_check(E):
        raise InconsistentTripleError("the pair states imply different single-site states")
    return E


def cmd_analyze(args, cfg) -> int:
    rho = load_state(args.state)
    if rho.n_sites != 3:
        raise FormatError(f"expected a tripartite state, got dims {list(rho.dims)}")
    dec = decompose(rho)
    norms = {f"single_{s}": hs_norm(x) for s, x in zip(SITE_NAMES, dec.singles)}
    norms.update({f"pair_{n}": hs_norm(x) for n, x in zip(PAIR_NAMES, dec.pair_corr)})
    norms["triple"] = hs_norm(dec.triple_corr)
    E = MarginalTriple.from_state(rho)
    classes = classical_triple_check(E)
    reductions = {}
    for name, pair_state, report in zip(PAIR_NAMES, E, classes):
        ppt = ppt_check(pair_state, 0)
        reductions[name] = {
            "classicality": report.to_json(),
            "ppt": ppt.ppt,
            "ppt_min_eigenvalue": ppt.min_eigenvalue,
            "birank": birank(pair_state).to_json(),
        }
    doc = {
        "dims": list(rho.dims),
        "correlation_norms": norms,
        "reductions": reductions,
        "all_cc": classes.all_cc,
        "commutators": commutator_delta(E).to_json(),
    }
    _emit(doc, args)
    return EXIT_OK


def cmd_compat(args, cfg) -> int:
    out = solve_feasibility(_triple(args.triple), cfg)
    _emit(out.to_json(), args)
    return {FEASIBLE: EXIT_OK, INFEASIBLE: EXIT_NEGATIVE}.get(out.verdict, EXIT_UNDECIDED)


def cmd_classical(args, cfg) -> int:
    E = _triple(args.triple)
    classes = classical_triple_check(E)
    doc = {"all_cc": classes.all_cc, "commutators": commutator_delta(E).to_json(), "completion": None}
    if not classes.all_cc:
        doc["no_classical_certificate"] = "not applicable"
        _emit(doc, args)
        return EXIT_OK
    certified = commutator_delta(E).max_norm > 1e-8
    doc["no_classical_certificate"] = certified
    if not certified:
        rho = load_state(args.state) if args.state else solve_feasibility(E, cfg).state
        if rho is None:
            doc["completion_error"] = "no compatible state found"
        else:
            try:
                doc["completion"] = state_to_json(classical_global_completion(E, rho))
            except (PreconditionError, ValueError) as exc:
                doc["completion_error"] = str(exc)
    _emit(doc, args)
    return EXIT_OK


def cmd_gme(args, cfg) -> int:
    E = _triple(args.triple)
    known = load_state(args.state) if args.state else None
    cert = certify_only_gme(E, cfg, known)
    _emit(cert.to_json(), args)
    verdict = cert.outcome.verdict
    return {BISEPARABLE: EXIT_OK, ONLY_GME: EXIT_NEGATIVE}.get(verdict, EXIT_UNDECIDED)


def cmd_scan(args, cfg) -> int:
    sigma = load_state(args.state)
    mixer = load_state(args.mixer) if args.mixer else None
    result = robustness_scan(sigma, mixer, cfg)
    csv_path = args.csv or (Path(args.out).with_suffix(".csv") if args.out else None)
    if csv_path:
        Path(csv_path).write_text(result.to_csv())
    else:
        sys.stderr.write(result.to_csv())
    _emit(result.to_json(), args)
    return EXIT_OK


def _param_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [float(x) for x in text.split(",")]
    raise InputError(f"cannot parse parameter value {text!r}")


def cmd_catalog(args, cfg) -> int:
    if args.action == "list":
        _emit(sorted(cat.CATALOG), args)
        return EXIT_OK
    if args.name not in cat.CATALOG:
        raise InputError(f"unknown catalog entry {args.name!r}; try 'catalog list'")
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"parameter {item!r} is not of the form key=value")
        params[key] = _param_value(value)
    try:
        entry = cat.CATALOG[args.name](**params)
    except TypeError as exc:
        raise InputError(str(exc)) from exc
    doc = state_to_json(entry.state) if entry.state is not None else triple_to_json(entry.triple)
    _emit(doc, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed (default 42)")
    common.add_argument("--max-iters", type=int, help="iteration budget per solver run")
    common.add_argument("--restarts", type=int, help="number of seeded restarts")
    common.add_argument("--tol-psd", type=float, help="eigenvalue tolerance for feasibility")
    common.add_argument("--config", help="JSON file of solver settings")
    common.add_argument("--out", help="write the JSON result here instead of stdout")

    parser = argparse.ArgumentParser(prog="qmarginal", description="Tripartite marginal compatibility tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="correlations, classicality, PPT and biranks of a state")
    p.add_argument("state")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compat", parents=[common], help="decide whether a triple has a global state")
    p.add_argument("triple")
    p.set_defaults(func=cmd_compat)

    p = sub.add_parser("classical", parents=[common], help="classical completion or its impossibility")
    p.add_argument("triple")
    p.add_argument("--state", help="a state known to have the triple as marginals")
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("gme-certify", parents=[common], help="test whether the triple forces GME")
    p.add_argument("triple")
    p.add_argument("--state", help="a state known to have the triple as marginals")
    p.set_defaults(func=cmd_gme)

    p = sub.add_parser("scan", parents=[common], help="noise robustness of the GME-only verdict")
    p.add_argument("state")
    p.add_argument("--mixer", help="state file of the mixer (default maximally mixed)")
    p.add_argument("--csv", help="CSV output path (default: --out with .csv suffix, else stderr)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("catalog", parents=[common], help="list or emit reference states")
    p.add_argument("action", choices=("list", "emit"))
    p.add_argument("name", nargs="?")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except (FormatError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InconsistentTripleError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
