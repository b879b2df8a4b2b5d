"""Lower bounds on ``e_n(H_lam)^2`` obtained from the Schur product technique.

Every infinite sum entering a bound is replaced by a certified lower bound
(in-support partial sum plus a certified lower bound on the remainder), so the
reported values remain valid lower bounds for the untruncated space.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .spectra import (
    Explicit,
    Interval,
    _explicit_norm_decreasing,
    SpectrumSpec,
    TruncatedSpectrum,
    convolve,
    enumerate_ball,
    norm_of,
    truncate_at,
)

__all__ = [
    "BoundReport",
    "CertificateError",
    "bound_sum_of_squares",
    "bound_convolution_square",
    "bound_norm_decreasing",
    "radius_rn",
    "bound_rn_multivariate",
    "bound_univariate",
    "bound_analytic",
    "bound_curse_Fd2",
    "applicable_bounds",
    "compute_bound",
    "BOUND_NAMES",
]

EPS = np.finfo(float).eps


class CertificateError(ValueError):
    """The supplied convolution-square certificate does not reproduce lam."""


@dataclass(frozen=True)
class BoundReport:
    """A certified lower bound on the squared n-th minimal error."""

    bound_name: str
    n: int
    value: float
    lambda0: float
    ingredients: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not 0.0 <= self.value <= self.lambda0 * (1 + 1e-15):
            raise ValueError(f"bound value {self.value} outside [0, lambda_0]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        d["ingredients"] = {k: _jsonable(v) for k, v in self.ingredients.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        d = json.loads(text)
        d["flags"] = tuple(d["flags"])
        return cls(**d)


def _jsonable(v):
    if isinstance(v, Interval):
        return [float(v.lo), float(v.hi)]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _round_down(x: float) -> float:
    return max(float(x) * (1.0 - 8.0 * EPS) - 1e-300, 0.0)


def _clamp(x: float, lam0: float) -> float:
    return min(max(_round_down(x), 0.0), lam0)


# ---------------------------------------------------------------------------


def bound_sum_of_squares(norm_h_sq: float, kappa: float, n: int) -> float:
    """``max(0, ||h||^2 - n / kappa)`` for kernels that are sums of squares of kernels."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if n < 0:
        raise ValueError("n must be non-negative")
    return max(0.0, norm_h_sq - n / kappa)


def _certificate(trunc: TruncatedSpectrum, factors) -> tuple:
    spec = trunc.spec
    if factors is None:
        factors = getattr(spec, "factors", ())
    if not factors:
        raise CertificateError(f"{spec.family} spectrum carries no convolution-square certificate")
    if not isinstance(spec, Explicit):
        raise CertificateError("convolution-square bounds need an explicit spectrum")
    acc: Explicit | None = None
    for f in factors:
        sq = convolve(f, f)
        acc = sq if acc is None else _add(acc, sq)
    pts = np.concatenate([spec.points, acc.points])
    lam = spec.values(pts)
    rec = acc.values(pts)
    scale = max(float(np.max(spec.table)), 1e-300)
    err = float(np.max(np.abs(lam - rec)))
    if err > 64 * EPS * scale * len(factors) * max(len(f.points) for f in factors):
        raise CertificateError(f"certificate mismatch: max deviation {err:.3e}")
    return tuple(factors)


def _add(a: Explicit, b: Explicit) -> Explicit:
    pts = np.concatenate([a.points, b.points])
    vals = np.concatenate([a.table, b.table])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    return Explicit(uniq, np.bincount(inv.ravel(), weights=vals, minlength=len(uniq)))


def bound_convolution_square(trunc: TruncatedSpectrum, n: int, factors=None) -> BoundReport:
    """``lam_0 (1 - n lam_0 / ||lam||_1)`` for a certified sum of convolution squares.

    Parameters
    ----------
    trunc : TruncatedSpectrum
        Truncation of an :class:`Explicit` spectrum.
    n : int
    factors : sequence of Explicit, optional
        Sequences whose convolution squares sum to ``lam``; defaults to the
        certificate stored on the spectrum.
    """
    factors = _certificate(trunc, factors)
    lam0 = trunc.lambda0
    l1_lo = trunc.mass
    val = lam0 * (1.0 - n * lam0 / l1_lo) if l1_lo > 0 else 0.0
    return BoundReport(
        "convolution-square", int(n), _clamp(val, lam0), lam0,
        {"ell1": Interval(l1_lo, l1_lo + trunc.tail_upper), "kappa": l1_lo, "factors": len(factors)},
        ("requires convolution-square structure",),
    )


def _is_norm_decreasing(spec: SpectrumSpec) -> bool:
    return bool(spec.norm_decreasing or _explicit_norm_decreasing(spec))


def _require_norm_decreasing(trunc: TruncatedSpectrum) -> str:
    """Check the hypothesis and return the norm (explicit tables use l2)."""
    if not _is_norm_decreasing(trunc.spec):
        raise ValueError(f"{trunc.spec.family} spectrum is not norm-decreasing")
    return getattr(trunc.spec, "norm", "l2")


def bound_norm_decreasing(trunc: TruncatedSpectrum, n: int) -> BoundReport:
    """``lam_0 (1 - 2 n lam_0 / (lam_0 + S))`` with ``S = sum_k lam_{2k}``.

    ``S`` is bounded from below by the in-support sum plus the certified
    lower bound on the out-of-support part of the even sublattice.
    """
    _require_norm_decreasing(trunc)
    lam0 = trunc.lambda0
    partial, tail = trunc.sublattice_sum(2)
    s_lo = partial + tail.lo
    val = lam0 * (1.0 - 2.0 * n * lam0 / (lam0 + s_lo))
    return BoundReport(
        "norm-decreasing", int(n), _clamp(val, lam0), lam0,
        {"S_partial": partial, "S_tail": tail, "S_lo": s_lo},
        ("requires norm-decreasing lambda",),
    )


def radius_rn(n: int, norm: str, d: int) -> float:
    """Norm of the ``(4n-1)``-th element of ``2 Z^d`` in increasing-norm order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    need = 4 * n - 1
    r = 1.0
    while True:
        pts = enumerate_ball(d, norm, r)
        if len(pts) >= need:
            break
        r *= 2.0
    radii = np.sort(norm_of(2 * pts, norm))
    return float(radii[need - 1])


def bound_rn_multivariate(trunc: TruncatedSpectrum, n: int) -> BoundReport:
    """``min{lam_0 / 2, (1/8n) sum_{||2k|| > r_n} lam_{2k}}``."""
    norm = _require_norm_decreasing(trunc)
    spec = trunc.spec
    lam0 = trunc.lambda0
    rn = radius_rn(n, norm, spec.d)
    pts = trunc.points
    even = np.all(pts % 2 == 0, axis=1)
    far = even & (norm_of(pts, norm) > rn * (1 + 1e-12))
    partial = float(np.sum(trunc.values[far]))
    full_partial, tail = trunc.sublattice_sum(2)
    radius = trunc.radius
    # out-of-support even points all lie beyond r_n only if the support covers the r_n ball
    tail_lo = tail.lo if radius is not None and radius >= rn else 0.0
    if isinstance(spec, Explicit):
        tail_lo = 0.0
    t_lo = partial + tail_lo
    val = min(lam0 / 2.0, t_lo / (8.0 * n))
    return BoundReport(
        "rn", int(n), _clamp(val, lam0), lam0,
        {"r_n": rn, "T_partial": partial, "T_tail_lo": tail_lo, "T_lo": t_lo},
        ("requires norm-decreasing lambda",),
    )


def _univariate_truncation(trunc: TruncatedSpectrum) -> TruncatedSpectrum:
    if trunc.d == 1:
        return trunc
    axis = trunc.spec.axis_restriction()
    if isinstance(axis, Explicit):
        return truncate_at(axis)
    radius = trunc.radius
    if trunc.support.shape[0] == "hyperbolic":
        radius = trunc.spec._max_index(radius)
    else:
        radius = math.floor(radius)
    return truncate_at(axis, radius)


def bound_univariate(trunc: TruncatedSpectrum, n: int) -> BoundReport:
    """``min{lam_0 / 2, (1/8n) sum_{k >= 4n} lam_k}`` for symmetric, monotone lam on Z.

    For ``d > 1`` the bound is applied to the axis restriction
    ``j -> lam_{j e_1}``: functions of the first coordinate form an isometric
    subspace, so its minimal errors bound those of ``H_lam`` from below.
    """
    t1 = _univariate_truncation(trunc)
    lam0 = trunc.lambda0
    k = t1.points[:, 0]
    v = t1.values
    pos = k >= 0
    order = np.argsort(k[pos])
    kp, vp = k[pos][order], v[pos][order]
    if np.any(np.diff(vp) > 0):
        bad = int(kp[1:][np.diff(vp) > 0][0])
        raise ValueError(f"lambda is not non-increasing on N_0 (violation at k={bad})")
    neg = t1.spec.values(-kp[:, None])
    if not np.array_equal(neg, vp):
        raise ValueError("lambda is not symmetric")
    partial = float(np.sum(vp[kp >= 4 * n]))
    _, tail = t1.sublattice_sum(1)
    kmax = int(kp.max()) if len(kp) else -1
    # the two-sided remainder splits evenly by symmetry
    tail_lo = tail.lo / 2.0 if kmax >= 4 * n - 1 else 0.0
    t_lo = partial + tail_lo
    val = min(lam0 / 2.0, t_lo / (8.0 * n))
    flags = ("requires symmetric non-increasing lambda on Z",)
    if trunc.d > 1:
        flags += ("applied to axis restriction",)
    return BoundReport(
        "univariate", int(n), _clamp(val, lam0), lam0,
        {"T_partial": partial, "T_tail_lo": tail_lo, "T_lo": t_lo}, flags,
    )


def bound_analytic(c: float, omega: float, n: int) -> float:
    """``(c/2) min{1, omega^(-4n) / (4n (1 - 1/omega))}`` for ``lam_k >= c omega^(-|k|)``."""
    if c <= 0 or omega <= 1 or n < 1:
        raise ValueError("need c > 0, omega > 1, n >= 1")
    return 0.5 * c * min(1.0, omega ** (-4.0 * n) / (4.0 * n * (1.0 - 1.0 / omega)))


def bound_curse_Fd2(tau: float, n: int, d: int) -> float | None:
    """``1/(2 tau)`` when ``4n - 1 <= 3^d``, otherwise None."""
    if not tau > 0 or not math.isfinite(tau):
        raise ValueError("tau must be positive and finite")
    if d < 2 or n < 0:
        raise ValueError("need d >= 2 and n >= 0")
    return 1.0 / (2.0 * tau) if 4 * int(n) - 1 <= 3 ** int(d) else None


# ---------------------------------------------------------------------------

BOUND_NAMES = ("convolution-square", "norm-decreasing", "rn", "univariate", "analytic")


def applicable_bounds(spec: SpectrumSpec) -> tuple:
    out = []
    if isinstance(spec, Explicit) and spec.factors:
        out.append("convolution-square")
    if _is_norm_decreasing(spec):
        out += ["norm-decreasing", "rn"]
    if isinstance(spec, Explicit):
        if spec.d == 1:
            out.append("univariate")
    else:
        try:
            axis = spec.axis_restriction()
            if axis.norm_decreasing or isinstance(axis, Explicit):
                out.append("univariate")
        except NotImplementedError:
            pass
    if spec.family == "geometric":
        out.append("analytic")
    return tuple(out)


def compute_bound(name: str, trunc: TruncatedSpectrum, n: int) -> BoundReport:
    """Dispatch by bound name; raises ValueError for inapplicable bounds."""
    spec = trunc.spec
    if name not in applicable_bounds(spec):
        raise ValueError(
            f"bound {name!r} is not applicable to {spec.family}; applicable: {', '.join(applicable_bounds(spec))}"
        )
    if name == "convolution-square":
        return bound_convolution_square(trunc, n)
    if name == "norm-decreasing":
        return bound_norm_decreasing(trunc, n)
    if name == "rn":
        return bound_rn_multivariate(trunc, n)
    if name == "univariate":
        return bound_univariate(trunc, n)
    # analytic: lam_k = c omega^(-|k|) on the first axis
    val = bound_analytic(spec.c, spec.omega, n)
    return BoundReport("analytic", int(n), val, trunc.lambda0,
                       {"c": spec.c, "omega": spec.omega}, ("requires lam_k >= c omega^-|k|",))
