"""Discretised multitask LASSO: problem assembly and an ADMM solver.

The problem for one node is

    minimize_beta  sum_f  beta_f^H G_f beta_f - 2 Re(c_f^H beta_f)
                   + lam * sum_r || (beta_1[r], ..., beta_F[r]) ||_2

over complex ``beta_f`` of length ``q = p - 1``.  ``G_f`` and ``c_f`` are
integrals of the masked-DFT Gram ``X^H X`` and correlation ``X^H y`` over the
frequency bin ``[(f-1)/F, f/F)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .spectral import (
    WindowSpec,
    as_block,
    build_masked_regression,
    masked_factors,
    permutation_for_node,
)

__all__ = [
    "GroupProblem",
    "GroupCoefficients",
    "SolverOptions",
    "SolverReport",
    "quadrature_nodes",
    "assemble_group_problem",
    "assemble_all_group_problems",
    "group_soft_threshold",
    "mlasso_objective",
    "kkt_violation",
    "solve_mlasso_admm",
    "solve_mlasso_admm_batch",
]


@dataclass(frozen=True)
class GroupProblem:
    """Per-bin Grams ``grams`` (F, q, q) and correlations ``corrs`` (F, q)."""

    grams: np.ndarray
    corrs: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.grams, dtype=complex)
        c = np.asarray(self.corrs, dtype=complex)
        if G.ndim != 3 or G.shape[1] != G.shape[2] or c.shape != G.shape[:2]:
            raise InvalidParameterError(f"inconsistent problem shapes {G.shape} / {c.shape}")
        if G.shape[0] < 1 or G.shape[1] < 1:
            raise InvalidParameterError("need F >= 1 and q >= 1")
        object.__setattr__(self, "grams", G)
        object.__setattr__(self, "corrs", c)

    @property
    def F(self) -> int:
        return self.grams.shape[0]

    @property
    def q(self) -> int:
        return self.grams.shape[1]

    def scaled(self, s: float) -> "GroupProblem":
        return GroupProblem(s * self.grams, s * self.corrs)


@dataclass(frozen=True)
class GroupCoefficients:
    """Solution blocks ``blocks`` (F, q); ``group_norms[r] = ||beta^(r)||_2 / sqrt(F)``."""

    blocks: np.ndarray
    group_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=complex)
        if not np.all(np.isfinite(b)):
            raise InvalidParameterError("non-finite coefficients")
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "group_norms", np.linalg.norm(b, axis=0) / np.sqrt(b.shape[0]))

    @property
    def F(self) -> int:
        return self.blocks.shape[0]

    @property
    def q(self) -> int:
        return self.blocks.shape[1]


@dataclass(frozen=True)
class SolverOptions:
    rho: float = 1.0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-7
    max_iter: int = 10000
    adaptive_rho: bool = True
    # residual balancing: rescale rho when one residual exceeds the other by this factor
    balance_ratio: float = 10.0
    balance_factor: float = 2.0
    best_effort: bool = False


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    primal_tol: float
    dual_tol: float
    objective: float
    converged: bool
    rho: float


def quadrature_nodes(F: int, quad_points: int) -> np.ndarray:
    """Composite-midpoint nodes, shape ``(F, quad_points)``."""
    if F < 1 or quad_points < 1:
        raise InvalidParameterError("F and quad_points must be positive")
    f = np.arange(F)[:, None]
    i = np.arange(quad_points)[None, :]
    return (f + (i + 0.5) / quad_points) / F


def _hermitize(G):
    return 0.5 * (G + np.conj(np.swapaxes(G, -1, -2)))


def assemble_group_problem(D, w: WindowSpec, r: int, F: int, quad_points: int = 8) -> GroupProblem:
    """Group problem for node ``r`` by midpoint quadrature of masked regressions."""
    blk = as_block(D)
    nodes = quadrature_nodes(F, quad_points)
    q = blk.p - 1
    G = np.zeros((F, q, q), dtype=complex)
    c = np.zeros((F, q), dtype=complex)
    for f in range(F):
        for th in nodes[f]:
            reg = build_masked_regression(blk, w, r, th)
            XH = reg.X.conj().T
            G[f] += XH @ reg.X
            c[f] += XH @ reg.y
    scale = 1.0 / (F * quad_points)
    return GroupProblem(_hermitize(G * scale), c * scale)


def assemble_all_group_problems(D, w: WindowSpec, F: int, quad_points: int = 8) -> list[GroupProblem]:
    """Group problems for every node from one set of shared factors.

    Equivalent to calling :func:`assemble_group_problem` per node: the node-``r``
    regression is a column permutation of the unpermuted factor.
    """
    blk = as_block(D)
    p = blk.p
    if p < 2:
        raise InvalidParameterError("need p >= 2")
    nodes = quadrature_nodes(F, quad_points)
    A = masked_factors(blk, w, nodes.ravel())  # (F*Q, K, p)
    S = np.einsum("tka,tkb->tab", A.conj(), A).reshape(F, quad_points, p, p).mean(axis=1) / F
    out = []
    for r in range(p):
        cols = permutation_for_node(p, r)[1:]
        G = S[:, cols][:, :, cols]
        c = S[:, cols, r]
        out.append(GroupProblem(_hermitize(G), c))
    return out


def group_soft_threshold(v, kappa: float) -> np.ndarray:
    """Radial shrinkage ``max(0, 1 - kappa/||v||) v`` (zero for ``v = 0``)."""
    if kappa < 0:
        raise InvalidParameterError("kappa must be non-negative")
    v = np.asarray(v)
    nrm = np.linalg.norm(v)
    if nrm <= kappa or nrm == 0:
        return np.zeros_like(v)
    return (1.0 - kappa / nrm) * v


def mlasso_objective(prob: GroupProblem, beta, lam: float) -> float:
    beta = np.asarray(beta, dtype=complex)
    quad = np.einsum("fi,fij,fj->", beta.conj(), prob.grams, beta).real
    lin = 2.0 * np.sum(np.conj(prob.corrs) * beta).real
    return float(quad - lin + lam * np.sum(np.linalg.norm(beta, axis=0)))


def kkt_violation(prob: GroupProblem, beta, lam: float) -> tuple[float, float]:
    """Subgradient-certificate errors ``(active, inactive)`` at ``beta``.

    With ``g = G beta - c`` stacked per variable, optimality means
    ``g^(r) = -(lam/2) beta^(r)/||beta^(r)||`` on non-zero groups and
    ``||g^(r)|| <= lam/2`` on zero groups.  Returns the max deviation on the
    former and the max of ``||g^(r)|| - lam/2`` (clipped at 0) on the latter.
    """
    beta = np.asarray(beta, dtype=complex)
    g = np.einsum("fij,fj->fi", prob.grams, beta) - prob.corrs
    nb = np.linalg.norm(beta, axis=0)
    ng = np.linalg.norm(g, axis=0)
    act = nb > 0
    active = 0.0
    if act.any():
        target = -(lam / 2.0) * beta[:, act] / nb[act]
        active = float(np.max(np.abs(g[:, act] - target)))
    inactive = float(np.max(np.maximum(ng[~act] - lam / 2.0, 0.0))) if (~act).any() else 0.0
    return active, inactive


def solve_mlasso_admm(prob: GroupProblem, lam: float, opts: SolverOptions | None = None):
    """Solve one discretised mLASSO by ADMM; returns ``(GroupCoefficients, SolverReport)``."""
    coefs, reports = solve_mlasso_admm_batch([prob], [lam], opts)
    return coefs[0], reports[0]


def solve_mlasso_admm_batch(problems, lams, opts: SolverOptions | None = None):
    """Solve independent mLASSO problems of identical shape in one vectorised loop.

    Each problem follows exactly the iteration it would follow alone and is
    frozen once it meets its own stopping rule.

    Splitting ``beta = z`` of the half-scaled objective: the x-update solves
    ``(G_f + rho I) x_f = c_f + rho (z_f - u_f)`` (cached eigendecompositions,
    so rho can change freely) and the z-update group-soft-thresholds each
    variable's stacked coefficients with ``kappa = lam / (2 rho)``.
    """
    opts = opts or SolverOptions()
    problems = list(problems)
    lams = np.broadcast_to(np.asarray(lams, dtype=float), (len(problems),)).copy()
    if np.any(lams < 0) or not np.all(np.isfinite(lams)):
        raise InvalidParameterError("lambda must be finite and non-negative")
    G = np.stack([pr.grams for pr in problems])
    c = np.stack([pr.corrs for pr in problems])
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(c))):
        raise InvalidParameterError("non-finite Gram or correlation entries")
    B, F, q = c.shape
    evals, V = np.linalg.eigh(G)  # (B, F, q), (B, F, q, q)
    evals = np.maximum(evals, 0.0)  # psd up to rounding
    VH = np.conj(np.swapaxes(V, -1, -2))
    Vh_c = np.einsum("bfij,bfj->bfi", VH, c)

    x = np.zeros((B, F, q), dtype=complex)
    z = np.zeros_like(x)
    u = np.zeros_like(x)
    rho = np.full(B, float(opts.rho))
    rho_lo, rho_hi = opts.rho * 1e-8, opts.rho * 1e8
    iters = np.zeros(B, dtype=int)
    r_norm = np.zeros(B)
    s_norm = np.zeros(B)
    eps_pri = np.zeros(B)
    eps_dual = np.zeros(B)
    done = np.zeros(B, dtype=bool)
    sqrt_n = np.sqrt(F * q)

    act = np.arange(B)
    for it in range(1, opts.max_iter + 1):
        rh = rho[act][:, None, None]
        zt, ut = z[act], u[act]
        proj = Vh_c[act] + rh * np.einsum("bfij,bfj->bfi", VH[act], zt - ut)
        xt = np.einsum("bfij,bfj->bfi", V[act], proj / (evals[act] + rh))
        v = xt + ut
        nv = np.linalg.norm(v, axis=1)  # (b, q) group norms across frequency
        kappa = (lams[act] / (2.0 * rho[act]))[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(nv > kappa, 1.0 - kappa / nv, 0.0)
        z_new = shrink[:, None, :] * v
        ut = ut + xt - z_new

        rn = np.linalg.norm((xt - z_new).reshape(len(act), -1), axis=1)
        sn = rho[act] * np.linalg.norm((z_new - zt).reshape(len(act), -1), axis=1)
        ep = sqrt_n * opts.abs_tol + opts.rel_tol * np.maximum(
            np.linalg.norm(xt.reshape(len(act), -1), axis=1),
            np.linalg.norm(z_new.reshape(len(act), -1), axis=1),
        )
        ed = sqrt_n * opts.abs_tol + opts.rel_tol * rho[act] * np.linalg.norm(ut.reshape(len(act), -1), axis=1)

        # diverging problems stop at their last finite iterate, unconverged
        ok = np.isfinite(rn) & np.isfinite(sn) & np.isfinite(ep) & np.isfinite(ed)
        act, xt, z_new, ut = act[ok], xt[ok], z_new[ok], ut[ok]
        rn, sn, ep, ed = rn[ok], sn[ok], ep[ok], ed[ok]
        x[act], z[act], u[act] = xt, z_new, ut
        iters[act] = it
        r_norm[act], s_norm[act], eps_pri[act], eps_dual[act] = rn, sn, ep, ed

        conv = (rn <= ep) & (sn <= ed)
        done[act[conv]] = True
        if opts.adaptive_rho:
            up = ~conv & (rn > opts.balance_ratio * sn) & (rho[act] < rho_hi)
            down = ~conv & (sn > opts.balance_ratio * rn) & (rho[act] > rho_lo)
            idx_up, idx_down = act[up], act[down]
            rho[idx_up] *= opts.balance_factor
            u[idx_up] /= opts.balance_factor
            rho[idx_down] /= opts.balance_factor
            u[idx_down] *= opts.balance_factor
        act = act[~conv]
        if act.size == 0:
            break

    coefs, reports = [], []
    for b in range(B):
        blocks = z[b]
        coefs.append(GroupCoefficients(blocks))
        reports.append(
            SolverReport(
                iterations=int(iters[b]),
                primal_residual=float(r_norm[b]),
                dual_residual=float(s_norm[b]),
                primal_tol=float(eps_pri[b]),
                dual_tol=float(eps_dual[b]),
                objective=mlasso_objective(problems[b], blocks, lams[b]),
                converged=bool(done[b]),
                rho=float(rho[b]),
            )
        )
    return coefs, reports
