"""Lag windows, sample autocovariances and the Blackman-Tukey SDM estimator.

Conventions
-----------
* Frequencies are normalised, ``theta`` in ``[0, 1)``, with kernel
  ``exp(-2j*pi*theta*m)``.
* A data block has shape ``(p, N)``; column ``n`` is the sample ``x[n]``.
* Node indices are 0-based.
* Lag-indexed arrays of length ``2N - 1`` store lag ``m`` at position
  ``m + N - 1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "MaskClampWarning",
    "TimeSeriesBlock",
    "WindowSpec",
    "SdmGrid",
    "SpectralFactor",
    "MaskedRegression",
    "as_block",
    "uniform_grid",
    "default_grid_size",
    "make_gaussian_window",
    "make_window",
    "window_dtft",
    "spectral_mask",
    "empirical_acf",
    "empirical_acf_all",
    "bt_sdm",
    "spectral_factor",
    "build_masked_regression",
    "masked_factors",
    "permutation_for_node",
]

# Clamped mask mass (relative to sum |W|) above which a warning is emitted.
CLAMP_WARN_FRACTION = 1e-6


class MaskClampWarning(RuntimeWarning):
    """Negative spectral-mask samples were clamped to zero."""


@dataclass(frozen=True)
class TimeSeriesBlock:
    """Observed real data matrix of shape ``(p, N)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidParameterError(f"data block must be a non-empty p x N matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("data block contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def permuted(self, perm) -> "TimeSeriesBlock":
        return TimeSeriesBlock(self.values[np.asarray(perm)])


def as_block(D) -> TimeSeriesBlock:
    if isinstance(D, TimeSeriesBlock):
        return D
    return TimeSeriesBlock(np.asarray(D, dtype=float))


@dataclass(frozen=True)
class WindowSpec:
    """Symmetric lag window ``w[m]`` for ``|m| < N`` with ``w[0] = 1``.

    ``coeffs`` has length ``2N - 1`` and stores lag ``m`` at ``m + N - 1``.
    ``halfwidth`` is the number of lags ``0..halfwidth-1`` allowed to be
    non-zero (``halfwidth <= N``).
    """

    coeffs: np.ndarray
    halfwidth: int
    l1norm: float = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size % 2 == 0:
            raise InvalidParameterError("window coefficients must have odd length 2N-1")
        N = (c.size + 1) // 2
        if not 1 <= self.halfwidth <= N:
            raise InvalidParameterError(f"halfwidth must lie in [1, {N}], got {self.halfwidth}")
        if not np.allclose(c, c[::-1], rtol=0.0, atol=0.0):
            raise InvalidParameterError("window must be even: w[m] == w[-m]")
        if c[N - 1] != 1.0:
            raise InvalidParameterError("window must satisfy w[0] == 1")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "l1norm", float(np.sum(np.abs(c))))

    @property
    def N(self) -> int:
        return (self.coeffs.size + 1) // 2

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-(self.N - 1), self.N)

    def __getitem__(self, m: int) -> float:
        if abs(m) >= self.N:
            return 0.0
        return float(self.coeffs[m + self.N - 1])


def make_window(values_nonneg_lags, N: int) -> WindowSpec:
    """Build a window from its values at lags ``0, 1, ...`` (zero-padded to ``N``)."""
    v = np.asarray(values_nonneg_lags, dtype=float)
    if N < 1 or v.size < 1:
        raise InvalidParameterError("need N >= 1 and at least w[0]")
    if v.size > N:
        raise InvalidParameterError("window support exceeds the block length")
    half = np.zeros(N)
    half[: v.size] = v
    coeffs = np.concatenate([half[:0:-1], half])
    return WindowSpec(coeffs, halfwidth=v.size)


def make_gaussian_window(scale: float, N: int, halfwidth: int | None = None) -> WindowSpec:
    """Gaussian lag window ``w[m] = exp(-m**2 / scale)`` for ``|m| < halfwidth``.

    ``halfwidth`` defaults to ``N`` (the support allowed by a length-``N``
    block).  ``exp(-(m/a)**2)`` corresponds to ``scale = a**2``.
    """
    if not scale > 0:
        raise InvalidParameterError(f"window scale must be positive, got {scale}")
    if int(N) != N or N < 1:
        raise InvalidParameterError(f"N must be a positive integer, got {N}")
    N = int(N)
    hw = N if halfwidth is None else int(halfwidth)
    if not 1 <= hw <= N:
        raise InvalidParameterError(f"halfwidth must lie in [1, N], got {halfwidth}")
    m = np.arange(hw, dtype=float)
    return make_window(np.exp(-(m ** 2) / scale), N)


def window_dtft(w: WindowSpec, theta):
    """DTFT ``W(theta) = sum_m w[m] exp(-2j pi theta m)`` (real, may be negative)."""
    theta = np.asarray(theta, dtype=float)
    m = np.arange(1, w.N)
    half = w.coeffs[w.N:]
    out = 1.0 + 2.0 * np.cos(2 * np.pi * np.multiply.outer(theta, m)) @ half
    return out if out.ndim else float(out)


def spectral_mask(w: WindowSpec, theta: float) -> np.ndarray:
    """Samples ``W(theta + k/(2N-1))`` for ``k = 0..2N-2`` via a length-(2N-1) FFT."""
    K = 2 * w.N - 1
    m = w.lags
    seq = np.zeros(K, dtype=complex)
    seq[m % K] = w.coeffs * np.exp(-2j * np.pi * theta * m)
    return np.fft.fft(seq).real


def uniform_grid(T: int) -> np.ndarray:
    if T < 1:
        raise InvalidParameterError("grid size must be positive")
    return np.arange(T) / T


def default_grid_size(N: int) -> int:
    return max(256, 2 * (2 * N - 1))


@dataclass(frozen=True)
class SdmGrid:
    """Hermitian ``p x p`` matrices on a frequency grid, shape ``(T, p, p)``."""

    thetas: np.ndarray
    matrices: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float)
        mats = np.asarray(self.matrices, dtype=complex)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] != th.size:
            raise InvalidParameterError(f"inconsistent SDM grid shapes {th.shape} / {mats.shape}")
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "matrices", mats)

    @property
    def p(self) -> int:
        return self.matrices.shape[1]

    @property
    def grid_size(self) -> int:
        return self.thetas.size

    def hermitian_error(self) -> float:
        return float(np.max(np.abs(self.matrices - np.conj(np.swapaxes(self.matrices, 1, 2)))))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrices)

    def inverse(self) -> "SdmGrid":
        return SdmGrid(self.thetas, np.linalg.inv(self.matrices))

    def scaled(self, c: float) -> "SdmGrid":
        return SdmGrid(self.thetas, c * self.matrices)

    def permuted(self, perm) -> "SdmGrid":
        perm = np.asarray(perm)
        return SdmGrid(self.thetas, self.matrices[:, perm][:, :, perm])


def _check_lag(m: int, N: int):
    if abs(m) >= N:
        raise InvalidParameterError(f"lag {m} out of range for block length {N}")


def empirical_acf(D, m: int) -> np.ndarray:
    """Sample autocovariance ``R[m] = (1/N) sum_n x[n+m] x[n]^T``; ``R[-m] = R[m]^T``."""
    X = as_block(D).values
    N = X.shape[1]
    m = int(m)
    _check_lag(m, N)
    k = abs(m)
    R = X[:, k:] @ X[:, : N - k].T / N
    return R if m >= 0 else R.T


def empirical_acf_all(D) -> np.ndarray:
    """All sample autocovariances, shape ``(2N-1, p, p)``, lag ``m`` at ``m + N - 1``."""
    X = as_block(D).values
    p, N = X.shape
    L = _fast_len(2 * N - 1)
    F = np.fft.rfft(X, n=L, axis=1)
    cross = np.fft.irfft(F[:, None, :] * np.conj(F[None, :, :]), n=L, axis=2)  # [r, t, m mod L]
    m = np.arange(-(N - 1), N)
    return np.moveaxis(cross[:, :, m % L], 2, 0) / N


def _fast_len(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _is_uniform(thetas: np.ndarray) -> bool:
    T = thetas.size
    return T > 0 and np.array_equal(thetas, np.arange(T) / T)


def bt_sdm(D, w: WindowSpec, thetas=None) -> SdmGrid:
    """Blackman-Tukey SDM estimate ``sum_m w[m] R[m] exp(-2j pi theta m)``.

    ``thetas`` may be ``None`` (default uniform grid), an ``int`` ``T`` (the
    grid ``t/T``) or an explicit array.  Uniform grids are evaluated by FFT of
    the lag sequence folded modulo ``T`` (exact for every ``T``); other grids
    by direct summation.
    """
    blk = as_block(D)
    p, N = blk.p, blk.N
    if w.N != N:
        raise InvalidParameterError(f"window built for N={w.N}, data has N={N}")
    if thetas is None:
        thetas = uniform_grid(default_grid_size(N))
    elif np.isscalar(thetas) and float(thetas).is_integer():
        thetas = uniform_grid(int(thetas))
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))

    lagged = empirical_acf_all(blk) * w.coeffs[:, None, None]  # (2N-1, p, p)
    m = w.lags
    if _is_uniform(thetas):
        T = thetas.size
        folded = np.zeros((T, p, p))
        np.add.at(folded, m % T, lagged)
        S = np.fft.fft(folded, axis=0)
    else:
        S = np.empty((thetas.size, p, p), dtype=complex)
        flat = lagged.reshape(lagged.shape[0], -1)
        for start in range(0, thetas.size, 256):
            th = thetas[start:start + 256]
            E = np.exp(-2j * np.pi * np.multiply.outer(th, m))
            S[start:start + 256] = (E @ flat).reshape(-1, p, p)
    S = 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))
    return SdmGrid(thetas, S)


@dataclass(frozen=True)
class SpectralFactor:
    """``A(theta)`` of shape ``(2N-1, p)`` with ``S_hat(theta) = A^H A / N``."""

    theta: float
    A: np.ndarray
    mask: np.ndarray
    clamped_mass: float

    def gram(self) -> np.ndarray:
        N = (self.A.shape[0] + 1) // 2
        return self.A.conj().T @ self.A / N


def _clamped_sqrt_mask(mask: np.ndarray, theta) -> tuple[np.ndarray, float]:
    neg = np.minimum(mask, 0.0)
    clamped = float(-neg.sum())
    total = float(np.abs(mask).sum())
    if total > 0 and clamped > CLAMP_WARN_FRACTION * total:
        warnings.warn(
            f"spectral mask at theta={theta} has negative samples; clamped mass "
            f"{clamped:.3g} ({clamped / total:.2e} of total)",
            MaskClampWarning,
            stacklevel=3,
        )
    return np.sqrt(np.maximum(mask, 0.0)), clamped


def spectral_factor(D, w: WindowSpec, theta: float) -> SpectralFactor:
    """Factor ``A(theta) = sqrt(W(theta)) F^T D^T`` of the BT estimate.

    The diagonal mask holds ``W(theta + k/(2N-1)) / (2N-1)``; negative samples
    are clamped to zero before the square root.
    """
    blk = as_block(D)
    N = blk.N
    if w.N != N:
        raise InvalidParameterError(f"window built for N={w.N}, data has N={N}")
    K = 2 * N - 1
    mask = spectral_mask(w, theta)
    root, clamped = _clamped_sqrt_mask(mask, theta)
    dft = np.fft.fft(blk.values, n=K, axis=1).T  # (K, p)
    A = (root / np.sqrt(K))[:, None] * dft
    return SpectralFactor(float(theta), A, mask, clamped)


def permutation_for_node(p: int, r: int) -> np.ndarray:
    """Permutation of ``range(p)`` swapping entries ``0`` and ``r``."""
    if not 0 <= r < p:
        raise InvalidParameterError(f"node {r} out of range for p={p}")
    perm = np.arange(p)
    perm[0], perm[r] = r, 0
    return perm


@dataclass(frozen=True)
class MaskedRegression:
    """Regression data ``y(theta)``, ``X(theta)`` for node ``node``.

    ``columns[j]`` is the original component index of regressor column ``j``.
    """

    theta: float
    y: np.ndarray
    X: np.ndarray
    node: int
    columns: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.column_stack([self.y, self.X])


def build_masked_regression(D, w: WindowSpec, r: int, theta: float, normalized: bool = True) -> MaskedRegression:
    """Masked-DFT regression of component ``r`` on the remaining components.

    With ``normalized=True`` (default) ``y`` and ``X`` are the columns of
    ``A(theta)/sqrt(N)`` of the permuted block, so that
    ``[y X]^H [y X]`` equals the BT estimate of the permuted process.
    ``normalized=False`` returns the columns of ``A(theta)`` itself.
    """
    blk = as_block(D)
    if blk.p < 2:
        raise InvalidParameterError("masked regression needs p >= 2")
    perm = permutation_for_node(blk.p, r)
    fac = spectral_factor(blk.permuted(perm), w, theta)
    A = fac.A / np.sqrt(blk.N) if normalized else fac.A
    return MaskedRegression(float(theta), A[:, 0].copy(), A[:, 1:].copy(), int(r), perm[1:].copy())


def masked_factors(D, w: WindowSpec, thetas) -> np.ndarray:
    """Normalised factors ``A(theta)/sqrt(N)`` of the unpermuted block, shape ``(T, 2N-1, p)``.

    Node-``r`` regressions are column permutations of these, which lets
    callers share one set of FFTs across all nodes.
    """
    blk = as_block(D)
    N = blk.N
    if w.N != N:
        raise InvalidParameterError(f"window built for N={w.N}, data has N={N}")
    K = 2 * N - 1
    dft = np.fft.fft(blk.values, n=K, axis=1).T
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    out = np.empty((thetas.size, K, blk.p), dtype=complex)
    for i, th in enumerate(thetas):
        root, _ = _clamped_sqrt_mask(spectral_mask(w, th), th)
        out[i] = (root / np.sqrt(K * N))[:, None] * dft
    return out
