"""Selection metrics, ROC and sample-size sweeps, and a VAR(1) lasso baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, InvalidParameterError
from .gms import GmsConfig, infer_cig
from .graph import Graph
from .procgen import ProcessModel, ground_truth_graph, simulate
from .spectral import as_block

__all__ = [
    "SelectionMetrics",
    "RocCurve",
    "selection_metrics",
    "roc_area",
    "roc_sweep",
    "curve_from_graphs",
    "rescaled_tau",
    "lasso_cd",
    "var_baseline_gms",
    "TauPoint",
    "tau_sweep",
    "tau_at_detection",
    "cell_seed",
]


@dataclass(frozen=True)
class SelectionMetrics:
    p_fa: float
    p_d: float
    runs: int


@dataclass(frozen=True)
class RocCurve:
    lambdas: np.ndarray
    p_fa: np.ndarray
    p_d: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.size > 1 and np.any(np.diff(lam) <= 0):
            raise InvalidParameterError("lambdas must be strictly increasing")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "p_fa", np.asarray(self.p_fa, dtype=float))
        object.__setattr__(self, "p_d", np.asarray(self.p_d, dtype=float))

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.lambdas.tolist(), self.p_fa.tolist(), self.p_d.tolist()))

    def area(self) -> float:
        return roc_area(self.p_fa, self.p_d)


def selection_metrics(estimates, truth: Graph, printed_detection: bool = False) -> SelectionMetrics:
    """Average false-alarm and detection fractions over ``estimates``.

    Detection is ``|E_hat & E| / |E|``.  ``printed_detection=True`` uses
    ``|E_hat| / |E|`` instead, which can exceed 1 for dense estimates.
    """
    estimates = list(estimates)
    if not estimates:
        raise InvalidParameterError("need at least one estimate")
    n_pairs = truth.p * (truth.p - 1) // 2
    n_edges = len(truth.edges)
    n_non = n_pairs - n_edges
    if n_edges == 0:
        raise InvalidParameterError("detection probability undefined: truth has no edges")
    if n_non == 0:
        raise InvalidParameterError("false-alarm probability undefined: truth is complete")
    fa = det = 0.0
    for g in estimates:
        if g.p != truth.p:
            raise InvalidParameterError("estimate and truth differ in p")
        hits = len(g.edges & truth.edges)
        fa += (len(g.edges) - hits) / n_non
        det += (len(g.edges) if printed_detection else hits) / n_edges
    M = len(estimates)
    return SelectionMetrics(fa / M, det / M, M)


def roc_area(p_fa, p_d) -> float:
    """Trapezoidal area under the operating points, closed with (0, 0) and (1, 1)."""
    x = np.concatenate([[0.0], np.asarray(p_fa, dtype=float), [1.0]])
    y = np.concatenate([[0.0], np.asarray(p_d, dtype=float), [1.0]])
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def cell_seed(seed: int, *idx: int) -> np.random.SeedSequence:
    """Seed for one work unit, independent of execution order."""
    return np.random.SeedSequence([int(seed), *map(int, idx)])


def _simulate_runs(model: ProcessModel, N: int, M: int, seed: int, tag: int = 0):
    return [simulate(model, N, seed=cell_seed(seed, tag, l)) for l in range(M)]


def curve_from_graphs(lambdas, graphs_per_lambda, truth: Graph) -> RocCurve:
    fa, pd = [], []
    for graphs in graphs_per_lambda:
        m = selection_metrics(graphs, truth)
        fa.append(m.p_fa)
        pd.append(m.p_d)
    return RocCurve(np.asarray(lambdas, dtype=float), fa, pd)


def roc_sweep(model: ProcessModel, cfg_base: GmsConfig, lambdas, N: int, M: int, seed: int,
              truth: Graph | None = None, blocks=None) -> RocCurve:
    """Sweep ``lambda`` over ``M`` simulated blocks per point (the same blocks for every point).

    Every other setting comes from ``cfg_base``.  Pass ``blocks`` to reuse
    already simulated data.
    """
    if M < 1:
        raise InvalidParameterError("M must be positive")
    lambdas = np.asarray(lambdas, dtype=float)
    truth = truth or ground_truth_graph(model).graph
    blocks = blocks if blocks is not None else _simulate_runs(model, N, M, seed)
    graphs = [[infer_cig(D, replace(cfg_base, lam=float(lam)))[0] for D in blocks] for lam in lambdas]
    return curve_from_graphs(lambdas, graphs, truth)


def rescaled_tau(N: float, p: int, s_max: int) -> float:
    """``N / (ln(p) s_max^3)``."""
    if p < 2 or s_max < 1:
        raise InvalidParameterError("need p >= 2 and s_max >= 1")
    return N / (math.log(p) * s_max ** 3)


def lasso_cd(X, y, lam: float, tol: float = 1e-8, max_iter: int = 100000) -> np.ndarray:
    """Coordinate descent for ``(1/2n) ||y - X a||^2 + lam ||a||_1``.

    Stops when the largest coefficient change in a sweep is below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    col_sq = np.sum(X ** 2, axis=0) / n
    if np.any(col_sq <= 1e-14):
        raise DataError("degenerate (all-zero) regressor column")
    a = np.zeros(k)
    resid = y.copy()
    for _ in range(max_iter):
        delta = 0.0
        for j in range(k):
            old = a[j]
            rho = X[:, j] @ resid / n + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                a[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return a


def var_baseline_gms(D, lam: float, eta: float) -> Graph:
    """Graph from a lasso-fitted VAR(1): edge iff ``|A[r, r']| > eta`` or ``|A[r', r]| > eta``."""
    blk = as_block(D)
    if blk.N < 2:
        raise DataError("VAR(1) fit needs N >= 2")
    X = blk.values[:, :-1].T
    Y = blk.values[:, 1:].T
    A = np.vstack([lasso_cd(X, Y[:, r], lam) for r in range(blk.p)])
    big = np.abs(A) > eta
    np.fill_diagonal(big, False)
    return Graph.from_adjacency(big | big.T, provenance="VAR(1) lasso baseline")


@dataclass(frozen=True)
class TauPoint:
    p: int
    N: int
    tau: float
    p_d: float
    p_fa: float


def tau_sweep(models: dict, cfg_for, Ns, M: int, seed: int):
    """Detection and false-alarm rates against the rescaled sample size.

    ``models`` maps ``p`` to a process model; ``cfg_for(truth, N)`` returns the
    estimator settings for one cell.
    """
    out = []
    for p, model in sorted(models.items()):
        gt = ground_truth_graph(model)
        for N in Ns:
            cfg = cfg_for(gt, N)
            blocks = _simulate_runs(model, N, M, seed, tag=1000 * p + N)
            g = [infer_cig(D, cfg)[0] for D in blocks]
            m = selection_metrics(g, gt.graph)
            out.append(TauPoint(p, int(N), rescaled_tau(N, p, gt.s_max), m.p_d, m.p_fa))
    return out


def tau_at_detection(points, level: float = 0.5) -> float:
    """First ``tau`` at which ``p_d`` reaches ``level``, interpolated in ``log tau``.

    Returns ``nan`` if the level is never reached and the smallest ``tau``
    if it is reached immediately.
    """
    pts = sorted(points, key=lambda t: t.tau)
    if not pts:
        return math.nan
    if pts[0].p_d >= level:
        return pts[0].tau
    for a, b in zip(pts, pts[1:]):
        if b.p_d >= level:
            frac = (level - a.p_d) / (b.p_d - a.p_d)
            return float(math.exp(math.log(a.tau) + frac * (math.log(b.tau) - math.log(a.tau))))
    return math.nan
