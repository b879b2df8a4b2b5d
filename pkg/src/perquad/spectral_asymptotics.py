"""Approximation numbers, the hyperbolic counting function, sigma* and rate fits."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .spectra import LEVEL_RTOL, TruncatedSpectrum

__all__ = [
    "RateFit",
    "CertificationError",
    "approximation_numbers",
    "certified_prefix",
    "count_N",
    "mixed_weight",
    "sigma_star",
    "rate_fit",
]

_MAX_AXIS = 50_000_000


class CertificationError(ValueError):
    """Requested more approximation numbers than the truncation certifies."""

    def __init__(self, message: str, safe_prefix: int):
        super().__init__(message)
        self.safe_prefix = safe_prefix


def certified_prefix(trunc: TruncatedSpectrum) -> int:
    """Number of leading rearranged values that no out-of-support value can exceed."""
    outside = trunc.spec.outside_max(trunc)
    vals = trunc.values
    return int(np.sum(vals >= outside * (1 - LEVEL_RTOL)))


def approximation_numbers(trunc: TruncatedSpectrum, N: int) -> np.ndarray:
    """``a_m = sqrt`` of the ``(m+1)``-st largest ``lam_k``, ``m = 0..N-1``.

    Ties keep the enumeration order of the support.

    Raises
    ------
    CertificationError
        If ``N`` exceeds the support size or the certified prefix.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    safe = min(certified_prefix(trunc), len(trunc.values))
    if N > safe:
        raise CertificationError(
            f"only {safe} approximation numbers are certified by this truncation (requested {N})", safe
        )
    order = np.argsort(-trunc.values, kind="stable")
    return np.sqrt(trunc.values[order[:N]])


def mixed_weight(k, beta: float) -> np.ndarray:
    """``(1 + |k|) log^(2 beta)(e + |k|)``."""
    a = np.abs(np.asarray(k, dtype=float))
    return (1.0 + a) * np.log(np.e + a) ** (2.0 * beta)


def count_N(r: float, d: int, beta: float) -> int:
    """``#{n in Z^d : prod_j (1+|n_j|) log^(2 beta)(e+|n_j|) <= r}``.

    Exact count by recursion over coordinates; the last coordinate is counted
    in closed form from the largest admissible ``|n_d|``.  Membership uses the
    same relative slack as the hyperbolic-cross truncations.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    # largest k with W(k) <= r
    hi = 1
    while mixed_weight(hi, beta) <= r * (1 + LEVEL_RTOL):
        hi *= 2
        if hi > _MAX_AXIS:
            raise OverflowError(f"r = {r:g} too large for exact enumeration")
    W = mixed_weight(np.arange(hi + 1), beta)

    def rec(dim: int, lev: np.ndarray) -> np.ndarray:
        m = np.searchsorted(W, lev * (1 + LEVEL_RTOL), side="right") - 1
        if dim == 1:
            return np.where(m >= 0, 2 * m + 1, 0)
        out = np.zeros(len(lev), dtype=np.int64)
        for i in np.nonzero(m >= 0)[0]:
            ks = np.arange(m[i] + 1)
            sub = rec(dim - 1, lev[i] / W[ks])
            out[i] = sub[0] + 2 * int(np.sum(sub[1:]))
        return out

    return int(rec(d, np.array([float(r)]))[0])


def sigma_star(sigma, n: int, tail: float = 0.0) -> float:
    """``min{sigma_0, sqrt((1/n) sum_{k>=n} sigma_k^2)}``.

    Parameters
    ----------
    sigma : sequence of float
        Non-negative, non-increasing.
    n : int
        ``n >= 1``.
    tail : float
        Bound on ``sum`` of ``sigma_k^2`` beyond the list.
    """
    s = np.asarray(sigma, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    if s.size == 0:
        raise ValueError("sigma must not be empty")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("sigma must be non-negative and non-increasing")
    rest = float(np.sum(s[n:] ** 2)) + tail
    return min(float(s[0]), math.sqrt(rest / n))


@dataclass(frozen=True)
class RateFit:
    """``value(n) ~ C n^(-a) (log n)^(-b)`` fitted by least squares on logs."""

    C: float
    a: float
    b: float
    residual_rms: float
    n_min: float
    n_max: float
    n_points: int
    fixed_a: bool
    stability_a: float
    stability_b: float

    def predict(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return self.C * n ** (-self.a) * np.log(n) ** (-self.b)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _lstsq(logn, loglogn, logv, fixed_a):
    if fixed_a is None:
        X = np.column_stack([np.ones_like(logn), -logn, -loglogn])
        y = logv
    else:
        X = np.column_stack([np.ones_like(logn), -loglogn])
        y = logv + fixed_a * logn
    s = np.linalg.svd(X, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise ValueError("degenerate design: n-range too narrow for the rate model")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    if fixed_a is None:
        return coef[0], coef[1], coef[2], resid
    return coef[0], float(fixed_a), coef[1], resid


def rate_fit(pairs, fixed_a: float | None = None, drop_first_decade: bool = True) -> RateFit:
    """Fit ``log value = log C - a log n - b log log n``.

    Parameters
    ----------
    pairs : iterable of (n, value)
        ``n >= 3`` and ``value > 0``.
    fixed_a : float, optional
        Hold the polynomial exponent fixed and fit only ``C`` and ``b``.
    drop_first_decade : bool
        Discard points with ``n < 10 n_min`` before fitting.

    Notes
    -----
    At least six points must remain after the drop.  The stability fields
    give the largest change of ``a`` and ``b`` when the fit is repeated
    without the first or without the last point.
    """
    arr = np.asarray([(float(n), float(v)) for n, v in pairs], dtype=float)
    if arr.ndim != 2 or len(arr) == 0:
        raise ValueError("no data")
    if np.any(arr[:, 0] < 3) or np.any(arr[:, 1] <= 0):
        raise ValueError("rate fits need n >= 3 and positive values")
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    if drop_first_decade:
        arr = arr[arr[:, 0] >= 10.0 * arr[0, 0]]
    if len(arr) < 6:
        raise ValueError(f"rate fits need at least 6 points, got {len(arr)}")
    n, v = arr[:, 0], arr[:, 1]
    logn, loglogn, logv = np.log(n), np.log(np.log(n)), np.log(v)
    c0, a, b, resid = _lstsq(logn, loglogn, logv, fixed_a)
    da = db = 0.0
    for sl in (slice(1, None), slice(None, -1)):
        try:
            _, a2, b2, _ = _lstsq(logn[sl], loglogn[sl], logv[sl], fixed_a)
        except ValueError:
            continue
        da, db = max(da, abs(a2 - a)), max(db, abs(b2 - b))
    return RateFit(
        float(math.exp(c0)), float(a), float(b), float(np.sqrt(np.mean(resid**2))),
        float(n[0]), float(n[-1]), int(len(n)), fixed_a is not None, float(da), float(db),
    )
