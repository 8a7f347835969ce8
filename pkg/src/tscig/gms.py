"""Neighbourhood-regression CIG estimation (per-node mLASSO + AND/OR combination)."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidParameterError, SolverError
from .graph import Graph
from .mlasso import (
    GroupCoefficients,
    SolverOptions,
    SolverReport,
    assemble_all_group_problems,
    assemble_group_problem,
    solve_mlasso_admm,
    solve_mlasso_admm_batch,
)
from .spectral import as_block, make_gaussian_window, permutation_for_node

__all__ = [
    "Graph",
    "Rule",
    "GmsConfig",
    "NodeDiagnostics",
    "estimate_neighborhood",
    "neighborhood_from_norms",
    "combine_graph",
    "infer_cig",
]


class Rule(str, Enum):
    AND = "and"
    OR = "or"


@dataclass(frozen=True)
class GmsConfig:
    """Estimator settings.

    ``lam`` and ``eta`` have no data-free defaults worth trusting: sweep them
    or derive them from known ``rho_min`` / ``s_max``.
    """

    lam: float
    eta: float
    window_scale: float = 44.0
    F: int = 4
    quad_points: int = 8
    rule: Rule = Rule.OR
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        if not self.lam >= 0:
            raise InvalidParameterError("lam must be non-negative")
        if not self.eta >= 0:
            raise InvalidParameterError("eta must be non-negative")
        if not self.window_scale > 0:
            raise InvalidParameterError("window_scale must be positive")
        if self.F < 1 or self.quad_points < 1:
            raise InvalidParameterError("F and quad_points must be positive")


@dataclass(frozen=True)
class NodeDiagnostics:
    node: int
    columns: np.ndarray  # original component index of each regressor
    coefficients: GroupCoefficients
    report: SolverReport
    neighborhood: frozenset

    @property
    def group_norms(self) -> np.ndarray:
        return self.coefficients.group_norms


def neighborhood_from_norms(group_norms, columns, eta: float) -> frozenset:
    """Components whose group norm strictly exceeds ``eta``."""
    group_norms = np.asarray(group_norms)
    return frozenset(int(columns[j]) for j in np.nonzero(group_norms > eta)[0])


def _check_report(report: SolverReport, node: int, opts: SolverOptions):
    if not report.converged and not opts.best_effort:
        raise SolverError(
            f"mLASSO for node {node} did not converge in {report.iterations} iterations "
            f"(primal {report.primal_residual:.3g}/{report.primal_tol:.3g}, "
            f"dual {report.dual_residual:.3g}/{report.dual_tol:.3g})",
            report=report,
            node=node,
        )


def estimate_neighborhood(D, r: int, cfg: GmsConfig, return_details: bool = False):
    """Estimated neighbourhood of node ``r`` (a set of 0-based node indices)."""
    blk = as_block(D)
    if blk.p < 2:
        raise InvalidParameterError("neighbourhood estimation needs p >= 2")
    w = make_gaussian_window(cfg.window_scale, blk.N)
    prob = assemble_group_problem(blk, w, r, cfg.F, cfg.quad_points)
    coefs, report = solve_mlasso_admm(prob, cfg.lam, cfg.solver)
    _check_report(report, r, cfg.solver)
    cols = permutation_for_node(blk.p, r)[1:]
    nb = neighborhood_from_norms(coefs.group_norms, cols, cfg.eta)
    if return_details:
        return nb, NodeDiagnostics(r, cols, coefs, report, nb)
    return nb


def combine_graph(neighborhoods, rule=Rule.OR) -> Graph:
    """Symmetrise per-node neighbourhoods with the AND or OR rule."""
    rule = Rule(rule)
    p = len(neighborhoods)
    adj = np.zeros((p, p), dtype=bool)
    for r, nb in enumerate(neighborhoods):
        for s in nb:
            if s == r:
                raise InvalidParameterError(f"node {r} lists itself as a neighbour")
            if not 0 <= s < p:
                raise InvalidParameterError(f"neighbour {s} of node {r} out of range")
            adj[r, s] = True
    sym = adj & adj.T if rule is Rule.AND else adj | adj.T
    return Graph.from_adjacency(sym, provenance=f"estimated ({rule.value} rule)")


def infer_cig(D, cfg: GmsConfig):
    """Run the neighbourhood estimate for every node and combine.

    Returns ``(graph, diagnostics)`` with one :class:`NodeDiagnostics` per node.
    All node problems share one set of FFTs and are solved in one batch; the
    result is identical to solving them one at a time.
    """
    blk = as_block(D)
    if blk.p < 2:
        raise InvalidParameterError("CIG inference needs p >= 2")
    w = make_gaussian_window(cfg.window_scale, blk.N)
    probs = assemble_all_group_problems(blk, w, cfg.F, cfg.quad_points)
    coefs, reports = solve_mlasso_admm_batch(probs, [cfg.lam] * blk.p, cfg.solver)
    failed = [r for r, rep in enumerate(reports) if not rep.converged]
    if failed and not cfg.solver.best_effort:
        err = SolverError(
            f"mLASSO did not converge for node indices {failed} (0-based)",
            report=reports[failed[0]],
            node=failed[0],
        )
        err.failed_nodes = failed
        err.reports = {r: reports[r] for r in failed}
        raise err
    diags = []
    for r in range(blk.p):
        cols = permutation_for_node(blk.p, r)[1:]
        nb = neighborhood_from_norms(coefs[r].group_norms, cols, cfg.eta)
        diags.append(NodeDiagnostics(r, cols, coefs[r], reports[r], nb))
    graph = combine_graph([d.neighborhood for d in diags], cfg.rule)
    return graph, diags
