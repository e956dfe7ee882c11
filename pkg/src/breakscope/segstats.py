"""Data model and prefix-sum least-squares statistics.

Every detector in the package reduces to repeated OLS fits on contiguous
segments ``(a, b]`` of one dataset.  :class:`TimeSeriesDataset` stores
cumulative sums of ``x_t x_t'``, ``x_t y_t`` and ``y_t**2`` so that each
segment fit costs O(K^2) (plus a K x K Cholesky solve) regardless of the
segment length.

Time indexing follows the usual change-point convention: observations are
numbered ``1..T`` and a segment ``(a, b]`` holds observations ``a+1..b``.
A break ``tau`` is the index of the last observation of its regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DataError, InvalidSegmentationError, SingularSegmentError

__all__ = [
    "TimeSeriesDataset",
    "Segmentation",
    "SegmentStats",
    "build_dataset",
    "build_ar_dataset",
    "segment_stats",
    "segment_sums",
    "batched_ols",
    "SINGULAR_RTOL",
]

# Cholesky pivot below SINGULAR_RTOL * trace(X'X)/K flags a singular segment.
SINGULAR_RTOL = 1e-10
# ssr below this multiple of eps * y'y is rounding noise of an exact fit.
_SSR_FLOOR = 64 * np.finfo(float).eps


def _compensated_prefix(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative sums along axis 0 with a leading zero row, as a (hi, lo) pair.

    The running sum is carried in extended precision and split into a float64
    head and a float64 tail, so differences ``(hi[b]-hi[a]) + (lo[b]-lo[a])``
    keep close to full double precision even for long series.
    """
    acc = np.cumsum(values.astype(np.longdouble), axis=0)
    hi = acc.astype(np.float64)
    lo = (acc - hi.astype(np.longdouble)).astype(np.float64)
    zero = np.zeros((1,) + values.shape[1:])
    return np.concatenate([zero, hi]), np.concatenate([zero, lo])


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Dependent series, design matrix and prefix caches.

    Build instances with :func:`build_dataset` or :func:`build_ar_dataset`;
    the arrays are made read-only so a dataset can be shared freely.

    Attributes
    ----------
    y : ndarray of shape (T,)
    X : ndarray of shape (T, K)
        First column is the intercept.
    time_offset : int
        Number of leading raw observations consumed before ``y[0]`` (the AR
        presample).  Row ``t`` of the dataset is raw time ``t + time_offset``.
    """

    y: np.ndarray
    X: np.ndarray
    _xtx_hi: np.ndarray
    _xtx_lo: np.ndarray
    _xty_hi: np.ndarray
    _xty_lo: np.ndarray
    _yty_hi: np.ndarray
    _yty_lo: np.ndarray
    time_offset: int = 0
    _y_shift: float = 0.0
    _x_shift: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    @property
    def prefix_xtx(self) -> np.ndarray:
        """``prefix_xtx[t]`` is the sum of ``x_s x_s'`` over ``s = 1..t`` (index 0 is zero).

        Prefix sums are of the centred data: ``y`` and the non-intercept
        columns have their sample means removed, which leaves residuals and
        slopes unchanged and keeps the normal equations well conditioned for
        series far from zero.
        """
        return self._xtx_hi + self._xtx_lo

    @property
    def prefix_xty(self) -> np.ndarray:
        return self._xty_hi + self._xty_lo

    @property
    def prefix_yty(self) -> np.ndarray:
        return self._yty_hi + self._yty_lo


def _freeze(*arrays: np.ndarray) -> None:
    for arr in arrays:
        arr.setflags(write=False)


def build_dataset(y, X, *, time_offset: int = 0) -> TimeSeriesDataset:
    """Validate ``(y, X)`` and populate the prefix caches.

    Raises
    ------
    DataError
        On a dimension mismatch, non-finite values or a first column of ``X``
        that is not identically one.
    """
    y = np.array(y, dtype=float)
    X = np.array(X, dtype=float)
    if y.ndim != 1:
        raise DataError(f"y must be one-dimensional, got shape {y.shape}")
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError(f"X must be two-dimensional, got shape {X.shape}")
    if y.shape[0] < 1 or X.shape[1] < 1:
        raise DataError("need T >= 1 observations and K >= 1 covariates")
    if X.shape[0] != y.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise DataError("y and X must be finite")
    if not np.all(X[:, 0] == 1.0):
        raise DataError("first column of X must be the intercept (all ones)")

    y_shift = float(np.mean(y))
    x_shift = np.mean(X, axis=0)
    x_shift[0] = 0.0
    yc = y - y_shift
    Xc = X - x_shift
    outer = Xc[:, :, None] * Xc[:, None, :]
    xtx_hi, xtx_lo = _compensated_prefix(outer)
    xty_hi, xty_lo = _compensated_prefix(Xc * yc[:, None])
    yty_hi, yty_lo = _compensated_prefix(yc * yc)
    _freeze(y, X, xtx_hi, xtx_lo, xty_hi, xty_lo, yty_hi, yty_lo, x_shift)
    return TimeSeriesDataset(
        y, X, xtx_hi, xtx_lo, xty_hi, xty_lo, yty_hi, yty_lo, int(time_offset), y_shift, x_shift
    )


def ar_design(y_raw, p: int, exog=None) -> tuple[np.ndarray, np.ndarray]:
    """Dependent vector and ``[1, y_{t-1}, ..., y_{t-p}, exog_t]`` design, dropping p presample rows."""
    y_raw = np.asarray(y_raw, dtype=float)
    if p < 0:
        raise DataError("AR order must be non-negative")
    if y_raw.ndim != 1 or y_raw.shape[0] <= p:
        raise DataError(f"series of length {y_raw.shape[0]} is too short for AR order {p}")
    T = y_raw.shape[0] - p
    cols = [np.ones(T)]
    cols += [y_raw[p - lag : p - lag + T] for lag in range(1, p + 1)]
    if exog is not None:
        exog = np.asarray(exog, dtype=float)
        if exog.ndim == 1:
            exog = exog[:, None]
        if exog.shape[0] != y_raw.shape[0]:
            raise DataError("exogenous covariates must align with the raw series")
        cols += list(exog[p:].T)
    return y_raw[p:].copy(), np.column_stack(cols)


def build_ar_dataset(y_raw, p: int, exog=None) -> TimeSeriesDataset:
    """Conditional AR(p) dataset: the first ``p`` observations only serve as lags."""
    if p < 1:
        raise DataError("AR order p must be >= 1")
    y, X = ar_design(y_raw, p, exog)
    return build_dataset(y, X, time_offset=p)


@dataclass(frozen=True)
class Segmentation:
    """Interior break dates ``0 < tau_1 < ... < tau_m < T``."""

    tau: tuple[int, ...]
    T: int

    def __post_init__(self):
        tau = tuple(int(t) for t in self.tau)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "T", int(self.T))
        prev = 0
        for t in tau:
            if t <= prev:
                raise InvalidSegmentationError(f"breaks must be strictly increasing in (0, T): {tau}")
            prev = t
        if tau and tau[-1] >= self.T:
            raise InvalidSegmentationError(f"breaks must be < T={self.T}: {tau}")

    @property
    def m(self) -> int:
        return len(self.tau)

    @property
    def bounds(self) -> tuple[int, ...]:
        """``(0, tau_1, ..., tau_m, T)``."""
        return (0,) + self.tau + (self.T,)

    @property
    def segments(self) -> list[tuple[int, int]]:
        b = self.bounds
        return list(zip(b[:-1], b[1:]))

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.bounds)

    def check_min_duration(self, min_duration: int) -> None:
        if np.any(self.lengths < min_duration):
            raise InvalidSegmentationError(
                f"segment lengths {self.lengths.tolist()} violate minimum duration {min_duration}"
            )

    def regime_of(self, t: int) -> int:
        """0-based regime index containing observation ``t`` (1-based)."""
        if not 1 <= t <= self.T:
            raise IndexError(f"t={t} outside 1..{self.T}")
        return int(np.searchsorted(self.tau, t, side="left"))

    @classmethod
    def from_breaks(cls, breaks: Sequence[int], T: int) -> "Segmentation":
        return cls(tuple(sorted(int(b) for b in breaks)), T)


@dataclass(frozen=True)
class SegmentStats:
    """OLS output for one segment."""

    n: int
    beta_hat: np.ndarray
    ssr: float
    xtx: np.ndarray
    log_det_xtx: float


def segment_sums(ds: TimeSeriesDataset, a, b):
    """Cross-product sums over ``(a, b]``; ``a`` and ``b`` may be integer arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    xtx = (ds._xtx_hi[b] - ds._xtx_hi[a]) + (ds._xtx_lo[b] - ds._xtx_lo[a])
    xty = (ds._xty_hi[b] - ds._xty_hi[a]) + (ds._xty_lo[b] - ds._xty_lo[a])
    yty = (ds._yty_hi[b] - ds._yty_hi[a]) + (ds._yty_lo[b] - ds._yty_lo[a])
    return xtx, xty, yty


def batched_ols(xtx: np.ndarray, xty: np.ndarray, yty: np.ndarray):
    """Cholesky OLS over a stack of K x K systems.

    Returns ``(beta, ssr, ok, log_det)``.  Entries with ``ok == False`` are
    singular (pivot below the scale-aware threshold) and carry NaN beta/ssr.
    Loops run over K only, so large stacks stay vectorized.
    """
    K = xtx.shape[-1]
    shape = xtx.shape[:-2]
    L = np.zeros(xtx.shape)
    tol = SINGULAR_RTOL * np.trace(xtx, axis1=-2, axis2=-1) / K
    ok = np.ones(shape, dtype=bool)
    for j in range(K):
        piv = xtx[..., j, j] - np.einsum("...k,...k->...", L[..., j, :j], L[..., j, :j])
        good = piv > tol
        ok &= good
        ljj = np.sqrt(np.where(good, piv, 1.0))
        L[..., j, j] = ljj
        for i in range(j + 1, K):
            L[..., i, j] = (
                xtx[..., i, j] - np.einsum("...k,...k->...", L[..., i, :j], L[..., j, :j])
            ) / ljj
    z = np.zeros(xty.shape)
    for i in range(K):
        z[..., i] = (xty[..., i] - np.einsum("...k,...k->...", L[..., i, :i], z[..., :i])) / L[..., i, i]
    beta = np.zeros(xty.shape)
    for i in range(K - 1, -1, -1):
        beta[..., i] = (
            z[..., i] - np.einsum("...k,...k->...", L[..., i + 1 :, i], beta[..., i + 1 :])
        ) / L[..., i, i]
    ssr = yty - np.einsum("...k,...k->...", z, z)
    ssr = np.where(ssr <= _SSR_FLOOR * np.abs(yty), 0.0, ssr)
    log_det = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    beta = np.where(ok[..., None], beta, np.nan)
    ssr = np.where(ok, ssr, np.nan)
    return beta, ssr, ok, log_det


def segment_stats(ds: TimeSeriesDataset, a: int, b: int) -> SegmentStats:
    """Exact OLS statistics for observations ``a+1..b``.

    Raises
    ------
    InvalidSegmentationError
        If ``not 0 <= a < b <= T``.
    SingularSegmentError
        If ``X_i'X_i`` is numerically singular.
    """
    a, b = int(a), int(b)
    if not 0 <= a < b <= ds.T:
        raise InvalidSegmentationError(f"invalid segment ({a}, {b}] for T={ds.T}")
    xtx, xty, yty = segment_sums(ds, a, b)
    beta, ssr, ok, log_det = batched_ols(xtx, xty, yty)
    if not ok:
        raise SingularSegmentError(f"X'X is singular on segment ({a}, {b}]")
    c = ds._x_shift
    if c is not None:
        # back to the raw design x = B x_c with B = I + c e_0'
        beta = beta.copy()
        beta[0] += ds._y_shift - float(c @ beta)
        B = np.eye(ds.K)
        B[:, 0] += c
        xtx = B @ xtx @ B.T
    beta.setflags(write=False)
    xtx.setflags(write=False)
    return SegmentStats(b - a, beta, float(ssr), xtx, float(log_det))
