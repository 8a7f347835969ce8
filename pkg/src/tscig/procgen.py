"""Synthetic stationary Gaussian processes with known SDMs and CIGs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParameterError
from .graph import Graph
from .spectral import SdmGrid, TimeSeriesBlock, WindowSpec, uniform_grid

__all__ = [
    "ProcessKind",
    "ProcessModel",
    "GroundTruth",
    "bivariate_var1",
    "simulate",
    "analytic_sdm",
    "analytic_acf",
    "acf_moment",
    "h1_weight",
    "default_truncation",
    "ground_truth_graph",
    "random_sparse_covariance",
    "random_sparse_precision",
]

DEFAULT_FIR = (1.0, 0.5)


class ProcessKind(str, Enum):
    VAR1 = "var1"
    FIR_MA = "firma"
    WHITE_NOISE = "white"


@dataclass(frozen=True)
class ProcessModel:
    """One of three process classes.

    ``noise_cov`` is the innovation covariance for VAR(1) and the covariance
    ``C0`` of the white driving noise for the FIR moving-average model.
    """

    kind: ProcessKind
    p: int
    var1_A: np.ndarray | None = None
    noise_cov: np.ndarray | None = None
    fir_coeffs: np.ndarray | None = None
    sigma: float = 1.0

    def __post_init__(self):
        kind = ProcessKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.p < 1:
            raise InvalidParameterError("p must be positive")
        if kind is ProcessKind.WHITE_NOISE:
            if not self.sigma > 0:
                raise InvalidParameterError("sigma must be positive")
            return
        C = np.asarray(self.noise_cov if self.noise_cov is not None else np.eye(self.p), dtype=float)
        if C.shape != (self.p, self.p) or not np.allclose(C, C.T, atol=1e-12):
            raise InvalidParameterError("noise covariance must be symmetric p x p")
        if np.linalg.eigvalsh(C).min() < 1e-10:
            raise InvalidParameterError("noise covariance must be positive definite (min eigenvalue >= 1e-10)")
        object.__setattr__(self, "noise_cov", C)
        if kind is ProcessKind.VAR1:
            A = np.asarray(self.var1_A, dtype=float)
            if A.shape != (self.p, self.p):
                raise InvalidParameterError("VAR(1) coefficient matrix must be p x p")
            if np.max(np.abs(np.linalg.eigvals(A))) >= 1:
                raise InvalidParameterError("VAR(1) coefficient matrix must have spectral radius < 1")
            object.__setattr__(self, "var1_A", A)
        else:
            g = np.atleast_1d(np.asarray(self.fir_coeffs if self.fir_coeffs is not None else DEFAULT_FIR, dtype=float))
            if g.ndim != 1 or g.size < 1:
                raise InvalidParameterError("FIR coefficients must be a non-empty vector")
            object.__setattr__(self, "fir_coeffs", g)

    @classmethod
    def var1(cls, A, noise_cov=None) -> "ProcessModel":
        A = np.asarray(A, dtype=float)
        return cls(ProcessKind.VAR1, A.shape[0], var1_A=A, noise_cov=noise_cov)

    @classmethod
    def fir_ma(cls, C0, g=DEFAULT_FIR) -> "ProcessModel":
        C0 = np.asarray(C0, dtype=float)
        return cls(ProcessKind.FIR_MA, C0.shape[0], noise_cov=C0, fir_coeffs=np.asarray(g, dtype=float))

    @classmethod
    def white_noise(cls, p: int, sigma: float = 1.0) -> "ProcessModel":
        return cls(ProcessKind.WHITE_NOISE, p, sigma=sigma)

    @property
    def spectral_radius(self) -> float:
        if self.kind is not ProcessKind.VAR1:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.var1_A))))

    def scaled(self, c: float) -> "ProcessModel":
        """Model of the process ``sqrt(c) * x[n]`` (SDM multiplied by ``c``)."""
        if self.kind is ProcessKind.WHITE_NOISE:
            return ProcessModel.white_noise(self.p, self.sigma * math.sqrt(c))
        return ProcessModel(self.kind, self.p, self.var1_A, c * self.noise_cov, self.fir_coeffs)


def bivariate_var1(sigma: float = 1.0) -> ProcessModel:
    """Bivariate VAR(1) with ``A = [[.5, -.5], [.5, .5]]`` and noise ``sigma^2 I``."""
    A = np.array([[0.5, -0.5], [0.5, 0.5]])
    return ProcessModel.var1(A, sigma ** 2 * np.eye(2))


def simulate(model: ProcessModel, N: int, burn_in: int = 1000, seed=None) -> TimeSeriesBlock:
    """Draw a length-``N`` block; deterministic for a given ``seed``.

    VAR(1) starts from zero and discards ``burn_in`` samples.
    """
    if int(N) != N or N < 1:
        raise InvalidParameterError(f"N must be a positive integer, got {N}")
    if burn_in < 0:
        raise InvalidParameterError("burn_in must be non-negative")
    N = int(N)
    rng = np.random.default_rng(seed)
    p = model.p
    if model.kind is ProcessKind.WHITE_NOISE:
        return TimeSeriesBlock(model.sigma * rng.standard_normal((p, N)))
    L = np.linalg.cholesky(model.noise_cov)
    if model.kind is ProcessKind.FIR_MA:
        g = model.fir_coeffs
        e = L @ rng.standard_normal((p, N + g.size - 1))
        x = np.zeros((p, N))
        for k, gk in enumerate(g):
            x += gk * e[:, g.size - 1 - k: g.size - 1 - k + N]
        return TimeSeriesBlock(x)
    A = model.var1_A
    total = N + int(burn_in)
    w = L @ rng.standard_normal((p, total))
    x = np.zeros(p)
    out = np.empty((p, N))
    for n in range(total):
        x = A @ x + w[:, n]
        if n >= burn_in:
            out[:, n - burn_in] = x
    return TimeSeriesBlock(out)


def _grid(thetas) -> np.ndarray:
    if np.isscalar(thetas) and float(thetas).is_integer():
        return uniform_grid(int(thetas))
    return np.atleast_1d(np.asarray(thetas, dtype=float))


def analytic_sdm(model: ProcessModel, thetas) -> SdmGrid:
    """Exact SDM of ``model`` on the grid (``int`` means the uniform grid of that size)."""
    th = _grid(thetas)
    p = model.p
    if model.kind is ProcessKind.WHITE_NOISE:
        S = np.broadcast_to(model.sigma ** 2 * np.eye(p), (th.size, p, p)).astype(complex)
    elif model.kind is ProcessKind.FIR_MA:
        g = model.fir_coeffs
        G = np.exp(-2j * np.pi * np.multiply.outer(th, np.arange(g.size))) @ g
        S = (np.abs(G) ** 2)[:, None, None] * model.noise_cov[None].astype(complex)
    else:
        z = np.exp(-2j * np.pi * th)[:, None, None]
        H = np.linalg.inv(np.eye(p)[None] - model.var1_A[None] * z)
        S = H @ model.noise_cov @ np.conj(np.swapaxes(H, 1, 2))
        S = 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))
    return SdmGrid(th, S)


def default_truncation(model: ProcessModel) -> int:
    if model.kind is ProcessKind.VAR1:
        return 50 * math.ceil(1.0 / (1.0 - model.spectral_radius))
    if model.kind is ProcessKind.FIR_MA:
        return model.fir_coeffs.size - 1
    return 0


def _var1_r0(model: ProcessModel, truncation: int) -> np.ndarray:
    A, C = model.var1_A, model.noise_cov
    R0 = np.zeros_like(C)
    term = C.copy()
    for _ in range(truncation + 1):
        R0 += term
        term = A @ term @ A.T
    return R0


def analytic_acf(model: ProcessModel, m: int, truncation: int | None = None) -> np.ndarray:
    """Exact ACF ``R[m] = E{x[m] x[0]^T}`` (VAR(1): series truncated after ``truncation`` terms)."""
    m = int(m)
    p = model.p
    if model.kind is ProcessKind.WHITE_NOISE:
        return model.sigma ** 2 * np.eye(p) if m == 0 else np.zeros((p, p))
    if model.kind is ProcessKind.FIR_MA:
        g = model.fir_coeffs
        k = abs(m)
        c = float(np.dot(g[k:], g[: g.size - k])) if k < g.size else 0.0
        return c * model.noise_cov
    T = default_truncation(model) if truncation is None else int(truncation)
    R = np.linalg.matrix_power(model.var1_A, abs(m)) @ _var1_r0(model, T)
    return R if m >= 0 else R.T


def h1_weight(w: WindowSpec, N: int, m) -> np.ndarray:
    """``|1 - w[m](1 - |m|/N)|`` for ``|m| < N`` and ``1`` elsewhere."""
    m = np.atleast_1d(np.asarray(m))
    out = np.ones(m.shape, dtype=float)
    inside = np.abs(m) < N
    wm = np.array([w[int(k)] for k in m[inside]])
    out[inside] = np.abs(1.0 - wm * (1.0 - np.abs(m[inside]) / N))
    return out


def acf_moment(model: ProcessModel, weight="absm", truncation: int | None = None) -> float:
    """ACF moment ``sum_m h[m] ||R[m]||_inf``.

    ``weight`` is ``"absm"`` (``h[m] = |m|``) or a tuple ``("h1", window, N)``.
    ``truncation`` bounds ``|m|`` and, for VAR(1), the series defining ``R[m]``.
    """
    T = default_truncation(model) if truncation is None else int(truncation)
    lags = np.arange(-T, T + 1)
    if weight == "absm":
        h = np.abs(lags).astype(float)
    elif isinstance(weight, tuple) and weight[0] == "h1":
        _, w, N = weight
        h = h1_weight(w, N, lags)
    else:
        raise InvalidParameterError(f"unknown weight {weight!r}")
    if model.kind is ProcessKind.VAR1:
        R0 = _var1_r0(model, T)
        A = model.var1_A
        norms = np.empty(T + 1)
        P = np.eye(model.p)
        for k in range(T + 1):
            norms[k] = np.max(np.abs(P @ R0))
            P = P @ A
        acf_norms = norms[np.abs(lags)]
    else:
        acf_norms = np.array([np.max(np.abs(analytic_acf(model, k))) for k in lags])
    return float(np.sum(h * acf_norms))


@dataclass(frozen=True)
class GroundTruth:
    model: ProcessModel
    graph: Graph
    rho_min: float
    s_max: int
    U: float
    L: float
    mu_x: float
    edge_strength: np.ndarray  # (p, p) L2 grid norms of S^-1[r, r'] / S^-1[r, r]


def ground_truth_graph(model: ProcessModel, thetas=256, tol: float = 1e-8) -> GroundTruth:
    """CIG from the support of the inverse analytic SDM on a uniform grid."""
    S = analytic_sdm(model, thetas)
    eig = S.eigenvalues()
    lo = eig.min(axis=1)
    bad = np.nonzero(lo <= tol)[0]
    if bad.size:
        raise InvalidParameterError(
            f"analytic SDM is (near-)singular at theta={S.thetas[bad[0]]:.6g} (min eigenvalue {lo[bad[0]]:.3g})"
        )
    Sinv = np.linalg.inv(S.matrices)
    diag = np.real(np.diagonal(Sinv, axis1=1, axis2=2))
    ratio = Sinv / diag[:, :, None]
    strength = np.sqrt(np.mean(np.abs(ratio) ** 2, axis=0))
    np.fill_diagonal(strength, 0.0)
    adj = (strength > tol) | (strength.T > tol)
    graph = Graph.from_adjacency(adj, provenance="ground truth")
    present = strength[adj]
    rho = float(present.min()) if present.size else 0.0
    return GroundTruth(
        model=model,
        graph=graph,
        rho_min=rho,
        s_max=graph.max_degree,
        U=float(eig.max()),
        L=float(lo.min()),
        mu_x=acf_moment(model, "absm"),
        edge_strength=strength,
    )


def _random_bounded_degree_graph(p: int, s_max: int, rng) -> np.ndarray:
    adj = np.zeros((p, p), dtype=bool)
    if s_max == 0:
        return adj
    iu, ju = np.triu_indices(p, k=1)
    deg = np.zeros(p, dtype=int)
    for k in rng.permutation(iu.size):
        a, b = iu[k], ju[k]
        if deg[a] < s_max and deg[b] < s_max:
            adj[a, b] = adj[b, a] = True
            deg[a] += 1
            deg[b] += 1
    return adj


def random_sparse_precision(p: int, s_max: int, coupling: float, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Random precision ``K = I + coupling * D^-1/2 M D^-1/2`` and its adjacency.

    ``M`` is a random signed adjacency with every degree ``<= s_max`` (a
    maximal such graph), ``D`` its degree matrix.  The normalised adjacency has
    spectral norm ``<= 1``, so ``lambda_min(K) >= 1 - coupling``.
    """
    if p < 2:
        raise InvalidParameterError("p must be at least 2")
    if not 0 <= s_max < p:
        raise InvalidParameterError(f"s_max must satisfy 0 <= s_max < p, got {s_max}")
    if not 0 < coupling < 1:
        raise InvalidParameterError("coupling must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    adj = _random_bounded_degree_graph(p, s_max, rng)
    signs = np.triu(rng.choice([-1.0, 1.0], size=(p, p)), k=1)
    signs = signs + signs.T
    deg = np.maximum(adj.sum(axis=1), 1)
    norm = 1.0 / np.sqrt(np.outer(deg, deg))
    K = np.eye(p) + coupling * adj * signs * norm
    return K, adj


def random_sparse_covariance(p: int, s_max: int, coupling: float, seed=None) -> np.ndarray:
    """Covariance ``C0 = K^-1`` whose inverse has a planted bounded-degree support."""
    K, _ = random_sparse_precision(p, s_max, coupling, seed)
    C0 = np.linalg.inv(K)
    return 0.5 * (C0 + C0.T)
