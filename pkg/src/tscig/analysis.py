"""Computable forms of the recovery guarantees and Monte-Carlo checks of the tail bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParameterError
from .procgen import ProcessModel, acf_moment, analytic_acf, analytic_sdm, default_truncation, simulate
from .spectral import SdmGrid, WindowSpec, bt_sdm, default_grid_size, uniform_grid

__all__ = [
    "TheoryParams",
    "Variant",
    "BoundCheck",
    "McResult",
    "sup_estimation_error",
    "theorem_bound_check",
    "crossover_sample_size",
    "compatibility_condition_check",
    "PHI_LOWER_BOUND",
    "sdm_tail_bound",
    "quadratic_form_tail_bound",
    "mc_sdm_tail_check",
    "mc_quadratic_form_check",
    "expected_bt_sdm",
    "bias_check",
    "mc_pass",
]

PHI_LOWER_BOUND = 1.0 / math.sqrt(2.0)


class Variant(str, Enum):
    PER_NODE = "per-node"
    FULL_GRAPH = "full-graph"


@dataclass(frozen=True)
class TheoryParams:
    """Inputs of the sample-size condition, for a process normalised to ``L = 1``."""

    N: float
    p: int
    s_max: int
    rho_min: float
    U: float
    delta: float
    window_l1: float
    mu_h1: float = 0.0
    phi_lower_bound: float | None = None

    def __post_init__(self):
        for name in ("N", "p", "s_max", "rho_min", "U", "delta", "window_l1"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.mu_h1 < 0:
            raise InvalidParameterError("mu_h1 must be non-negative")
        if not self.delta < 1:
            raise InvalidParameterError("delta must lie in (0, 1)")
        if self.U < 1:
            raise InvalidParameterError("U must be >= 1 (normalise the process so that L = 1)")

    def with_N(self, N) -> "TheoryParams":
        return TheoryParams(N, self.p, self.s_max, self.rho_min, self.U, self.delta,
                            self.window_l1, self.mu_h1, self.phi_lower_bound)


@dataclass(frozen=True)
class BoundCheck:
    satisfied: bool
    margin_n: float
    moment_ok: bool


def sup_estimation_error(est: SdmGrid, truth: SdmGrid) -> float:
    """Grid maximum of the entrywise max modulus of ``est - truth``."""
    if est.p != truth.p or est.grid_size != truth.grid_size or not np.allclose(est.thetas, truth.thetas):
        raise InvalidParameterError("estimate and truth live on different grids")
    return float(np.max(np.abs(est.matrices - truth.matrices)))


def _rate(tp: TheoryParams) -> float:
    # coefficient of N in the exponent
    return (tp.rho_min / 256.0) ** 2 / (8.0 * tp.s_max ** 3 * tp.window_l1 ** 2 * tp.U ** 4)


def _log_term(tp: TheoryParams, variant: Variant) -> float:
    power = 2 if Variant(variant) is Variant.PER_NODE else 3
    return math.log(2.0 * tp.p ** power / tp.delta)


def _margin(tp: TheoryParams, variant: Variant, N: float) -> float:
    return N * _rate(tp) - math.log(2.0 * N) - _log_term(tp, variant)


def theorem_bound_check(tp: TheoryParams, variant=Variant.PER_NODE) -> BoundCheck:
    """Check the sample-size and ACF-moment conditions of the recovery guarantee.

    ``satisfied`` refers to the sample-size inequality only; the bias
    (moment) condition is reported separately as ``moment_ok``.
    """
    margin = _margin(tp, variant, tp.N)
    moment_ok = tp.mu_h1 <= tp.rho_min / (256.0 * tp.U * tp.s_max ** 1.5)
    return BoundCheck(margin >= 0.0, float(margin), bool(moment_ok))


def crossover_sample_size(tp: TheoryParams, variant=Variant.PER_NODE) -> int:
    """Smallest integer ``N*`` such that the sample-size condition holds for every ``N >= N*``.

    The margin ``a N - log(2N) - c`` is convex in ``N`` with its minimum at
    ``N = 1/a``, so beyond that point plain bisection applies.
    """
    a = _rate(tp)
    n_min = max(1, math.floor(1.0 / a))
    if _margin(tp, variant, n_min) >= 0 and _margin(tp, variant, n_min + 1) >= 0:
        return 1
    lo, hi = n_min, 2 * n_min + 1
    while _margin(tp, variant, hi) < 0:
        lo, hi = hi, 2 * hi
    # invariant: margin(lo) < 0 <= margin(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _margin(tp, variant, mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def compatibility_condition_check(E: float, s_max: int) -> bool:
    """True iff ``E <= 1/(32 s_max)``, which guarantees a compatibility constant >= 1/sqrt(2)."""
    if E < 0 or s_max < 1:
        raise InvalidParameterError("need E >= 0 and s_max >= 1")
    return bool(E <= 1.0 / (32.0 * s_max))


def mc_pass(empirical: float, bound: float, trials: int) -> bool:
    """One-sided check ``empirical <= bound + 3 binomial standard errors``."""
    b = min(1.0, max(0.0, bound))
    return bool(empirical <= b + 3.0 * math.sqrt(b * (1.0 - b) / trials))


@dataclass(frozen=True)
class McResult:
    empirical: float
    bound: float
    trials: int
    exceedances: int
    passed: bool


def sdm_tail_bound(N: int, p: int, window_l1: float, U: float, nu: float) -> float:
    """``min(1, 2 exp(-N nu^2 / (8 ||w||_1^2 U^2) + 2 log p + log 2N))``."""
    expo = -N * nu ** 2 / (8.0 * window_l1 ** 2 * U ** 2) + 2.0 * math.log(p) + math.log(2.0 * N)
    return 1.0 if expo >= 0 else min(1.0, 2.0 * math.exp(expo))


def quadratic_form_tail_bound(N: int, nu: float, lam_cov: float, lam_q: float) -> float:
    """``min(1, 2 exp(-N nu^2 / (8 max(lam_q^2 lam_cov^2, 1))))``."""
    return min(1.0, 2.0 * math.exp(-N * nu ** 2 / (8.0 * max(lam_q ** 2 * lam_cov ** 2, 1.0))))


def _check_nu(nu):
    if not 0 < nu < 0.5:
        raise InvalidParameterError("nu must lie in (0, 1/2)")


def mc_sdm_tail_check(model: ProcessModel, w: WindowSpec, N: int, nu: float, trials: int,
                      seed: int = 0, grid_size: int | None = None) -> McResult:
    """Monte-Carlo frequency of ``E >= nu + mu_h1`` against the SDM tail bound.

    The model is first rescaled so its smallest spectral eigenvalue is 1.
    Trial ``t`` uses seed ``seed + t``.
    """
    _check_nu(nu)
    if trials < 1:
        raise InvalidParameterError("trials must be positive")
    T = grid_size or default_grid_size(N)
    thetas = uniform_grid(T)
    L = float(analytic_sdm(model, thetas).eigenvalues().min())
    model = model.scaled(1.0 / L)
    truth = analytic_sdm(model, thetas)
    U = float(truth.eigenvalues().max())
    mu = acf_moment(model, ("h1", w, N), truncation=max(N, default_truncation(model)))
    level = nu + mu
    hits = 0
    for t in range(trials):
        est = bt_sdm(simulate(model, N, seed=seed + t), w, thetas)
        hits += sup_estimation_error(est, truth) >= level
    bound = sdm_tail_bound(N, model.p, w.l1norm, U, nu)
    emp = hits / trials
    return McResult(emp, bound, trials, int(hits), mc_pass(emp, bound, trials))


def _psd_factor(C: np.ndarray) -> np.ndarray:
    C = 0.5 * (C + C.T)
    ev, V = np.linalg.eigh(C)
    if ev.min() < -1e-10 * max(1.0, abs(ev.max())):
        raise InvalidParameterError(f"covariance is not psd (min eigenvalue {ev.min():.3g})")
    return V * np.sqrt(np.clip(ev, 0.0, None))


def mc_quadratic_form_check(Cz, Q, nu: float, trials: int, seed: int = 0) -> McResult:
    """Monte-Carlo frequency of ``|y^T Q x - E| >= N nu`` for jointly Gaussian ``z = (x, y)``.

    ``Cz`` is the ``2N x 2N`` covariance of ``z``; ``x`` is its first half.
    """
    _check_nu(nu)
    Cz = np.asarray(Cz, dtype=float)
    Q = np.asarray(Q, dtype=float)
    N = Q.shape[0]
    if Q.shape != (N, N) or Cz.shape != (2 * N, 2 * N):
        raise InvalidParameterError("need Q of shape (N, N) and Cz of shape (2N, 2N)")
    Lf = _psd_factor(Cz)
    lam_cov = max(np.linalg.norm(Cz[:N, :N], 2), np.linalg.norm(Cz[N:, N:], 2))
    lam_q = np.linalg.norm(Q, 2) if Q.any() else 0.0
    mean = float(np.trace(Q @ Cz[:N, N:]))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((trials, 2 * N)) @ Lf.T
    x, y = z[:, :N], z[:, N:]
    q = np.einsum("ti,ij,tj->t", y, Q, x)
    hits = int(np.sum(np.abs(q - mean) >= N * nu))
    bound = quadratic_form_tail_bound(N, nu, lam_cov, lam_q)
    emp = hits / trials
    return McResult(emp, bound, trials, hits, mc_pass(emp, bound, trials))


def expected_bt_sdm(model: ProcessModel, w: WindowSpec, N: int, thetas) -> SdmGrid:
    """Closed-form mean of the BT estimate: ``sum_m w[m] (1 - |m|/N) R[m] e^{-j 2 pi theta m}``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    lags = np.arange(-(N - 1), N)
    S = np.zeros((thetas.size, model.p, model.p), dtype=complex)
    for m in lags:
        wm = w[int(m)]
        if wm == 0:
            continue
        R = analytic_acf(model, int(m))
        S += (wm * (1.0 - abs(m) / N)) * R[None] * np.exp(-2j * np.pi * thetas * m)[:, None, None]
    return SdmGrid(thetas, 0.5 * (S + np.conj(np.swapaxes(S, 1, 2))))


@dataclass(frozen=True)
class BiasResult:
    empirical_bias: float
    closed_form_bias: float
    mu_h1: float
    slack: float
    passed: bool


def bias_check(model: ProcessModel, w: WindowSpec, N: int, trials: int, seed: int = 0,
               grid_size: int = 64) -> BiasResult:
    """Grid-max bias of the BT estimate against the ``mu_h1`` bound.

    The mean estimate is the average over ``trials`` simulations; the check
    allows three standard errors (per entry, maximised) of slack.
    """
    thetas = uniform_grid(grid_size)
    truth = analytic_sdm(model, thetas).matrices
    acc = np.zeros_like(truth)
    acc2 = np.zeros(truth.shape)
    for t in range(trials):
        S = bt_sdm(simulate(model, N, seed=seed + t), w, thetas).matrices
        acc += S
        acc2 += np.abs(S) ** 2
    mean = acc / trials
    var = np.maximum(acc2 / trials - np.abs(mean) ** 2, 0.0)
    se = np.sqrt(var / trials)
    emp = float(np.max(np.abs(mean - truth)))
    slack = 3.0 * float(np.max(se))
    closed = float(np.max(np.abs(expected_bt_sdm(model, w, N, thetas).matrices - truth)))
    mu = acf_moment(model, ("h1", w, N), truncation=max(N, default_truncation(model)))
    return BiasResult(emp, closed, mu, slack, bool(emp <= mu + slack))
