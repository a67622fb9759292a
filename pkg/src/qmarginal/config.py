"""Central tolerance and solver settings.

Every numerical threshold used by the library lives here so that tests and
the CLI refer to one set of constants.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

TOL_HERM = 1e-12
TOL_PSD = 1e-9
RANK_REL_EPS = 1e-8
TOL_CLASS = 1e-9
TOL_COMM = 1e-8
TOL_MARGINAL = 1e-9
TOL_UNITARY = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by the projection solvers.

    ``stall_window`` iterations with relative gap change below ``stall_rtol``
    count as a stabilized gap.
    """

    max_iters: int = 50_000
    restarts: int = 20
    seed: int = 42
    feas_tol: float = TOL_PSD
    check_every: int = 100
    stall_window: int = 500
    stall_rtol: float = 1e-12
    polish: bool = True
    # GME relaxation
    gme_max_iters: int = 20_000
    gme_restarts: int = 10
    gme_gap_tol: float = 1e-6
    gme_stall_rtol: float = 1e-6
    exhaustive: bool = False
    # robustness scan
    scan_lo: float = 0.0
    scan_hi: float = 0.5
    scan_resolution: float = 1e-3
    scan_restarts: int = 3

    def updated(self, overrides: Mapping[str, Any] | None = None, **kwargs: Any) -> "SolverConfig":
        merged = dict(overrides or {})
        merged.update({k: v for k, v in kwargs.items() if v is not None})
        known = {f.name for f in fields(self)}
        unknown = set(merged) - known
        if unknown:
            raise KeyError(f"unknown solver settings: {sorted(unknown)}")
        return replace(self, **merged)


DEFAULT_CONFIG = SolverConfig()
