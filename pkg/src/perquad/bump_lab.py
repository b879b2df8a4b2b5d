"""Fooling functions built from bumps, and the gamma weights of the difference norm.

A bump ``phi`` is supported in ``[0, h]`` with ``h = 1/(2n)``.  Shifting it to
``n`` points of the grid ``{j/(2n)}`` gives a function vanishing on the other
``n`` grid points; its integral-to-norm quotient is the lower bound that the
bump technique would deliver.  Everything is computed on the Fourier side:

    ||f||_{H_lam}^2 = sum_k |f^(k)|^2 / lam_k,    int f = f^(0).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import integrate

from .spectra import Explicit, Interval, NormDecreasing, SpectrumSpec, TruncatedSpectrum

__all__ = [
    "BumpSpec",
    "FourierTable",
    "FoolingReport",
    "adversarial_nodes",
    "full_grid",
    "placement_sum",
    "bump_fourier",
    "phi_n_fourier",
    "fooling_ratio",
    "phi_n_ratio_closed_form",
    "subset_ratios",
    "gamma_weight",
    "reports_to_csv",
]

FAMILIES = ("cosine-squared", "spline", "paper-phi")
_SERIES_REACH = 4e6  # frequency up to which sublattice series are summed term by term


@dataclass(frozen=True)
class BumpSpec:
    """A bump supported in ``[0, 1/(2n)]``.

    Parameters
    ----------
    family : {"cosine-squared", "spline", "paper-phi"}
        ``cosine-squared`` is ``sin^2(pi x / h)`` on ``[0, h]``; ``spline`` is
        the cardinal B-spline of the given degree stretched to ``[0, h]``;
        ``paper-phi`` is ``phi_n = sum_{m>=1} lam_{2nm} (1 - e_{2nm})`` on
        ``[0, h]``, which depends on the spectrum.
    n : int
    degree : int
        Spline degree (>= 1, so the bump is continuous).
    scale : float
        Positive multiplier applied to the bump.
    """

    family: str
    n: int
    degree: int = 3
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown bump family {self.family!r}; expected one of {FAMILIES}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.family == "spline" and self.degree < 1:
            raise ValueError("spline bumps need degree >= 1 to be continuous")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def width(self) -> float:
        return 1.0 / (2 * self.n)


@dataclass(frozen=True)
class FourierTable:
    """Fourier coefficients on a finite frequency set plus a remainder model.

    ``integral`` encloses the coefficient at 0.  Beyond ``max(|freqs|)`` the
    coefficients are described by ``remainder``:

    * ``("zero",)``: they vanish;
    * ``("decay", C, s)``: ``|c_k| <= C |k|^(-s)``;
    * ``("sublattice", step, sign)``: ``c_k = sign * lam_k`` on positive
      multiples of ``step`` and 0 elsewhere.
    """

    freqs: np.ndarray
    coeffs: np.ndarray
    integral: Interval
    remainder: tuple
    kmax: int

    @property
    def is_real(self) -> bool:
        lookup = dict(zip(self.freqs.tolist(), self.coeffs))
        return all(np.isclose(lookup.get(-k, 0), np.conj(c)) for k, c in lookup.items())


@dataclass(frozen=True)
class FoolingReport:
    n: int
    placement: str
    integral: float
    norm_lo: float
    norm_hi: float
    ratio: float
    ratio_lo: float
    ratio_hi: float

    def __post_init__(self):
        for name in ("integral", "norm_lo", "norm_hi", "ratio", "ratio_lo", "ratio_hi"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def row(self) -> list:
        return [self.n, self.placement, self.integral, self.norm_lo, self.norm_hi, self.ratio]


# ---------------------------------------------------------------------------
# placements


def adversarial_nodes(n: int) -> np.ndarray:
    """``z_{2j+1} = 4j/(2n)``, ``z_{2j+2} = (4j+1)/(2n)`` for ``j < n/2``."""
    if n < 2 or n % 2:
        raise ValueError("adversarial placement needs an even n >= 2")
    j = np.arange(n // 2)
    z = np.empty(n)
    z[0::2] = 4 * j / (2 * n)
    z[1::2] = (4 * j + 1) / (2 * n)
    return z


def full_grid(n: int) -> np.ndarray:
    return np.arange(2 * n) / (2 * n)


def _grid_indices(n: int, placements) -> np.ndarray:
    z = np.asarray(placements, dtype=float).ravel()
    idx = np.rint(z * 2 * n).astype(np.int64)
    if np.any(np.abs(idx - z * 2 * n) > 1e-9):
        return None
    return np.mod(idx, 2 * n)


def placement_sum(n: int, placements, freqs) -> np.ndarray:
    """``P(k) = sum_j exp(-2 pi i k z_j)``; periodic in ``k`` mod ``2n`` on the grid."""
    freqs = np.asarray(freqs, dtype=np.int64)
    idx = _grid_indices(n, placements)
    if idx is None:
        z = np.asarray(placements, dtype=float).ravel()
        return np.exp(-2j * np.pi * np.outer(freqs, z)).sum(axis=1)
    m = 2 * n
    r = np.arange(m)
    counts = np.bincount(idx, minlength=m)
    # residue table; exact phases from integer arithmetic
    table = (counts[None, :] * np.exp(-2j * np.pi * ((np.outer(r, r) % m) / m))).sum(axis=1)
    return table[np.mod(freqs, m)]


# ---------------------------------------------------------------------------
# single-bump transforms


def _phase_factor(k: np.ndarray, m: int) -> np.ndarray:
    # 1 - exp(-2 pi i k/m), with k reduced mod m
    r = np.mod(k, m) / m
    return 1.0 - np.exp(-2j * np.pi * r)


def bump_fourier(bump: BumpSpec, freqs) -> np.ndarray:
    """Fourier coefficients of a single bump at integer frequencies."""
    k = np.asarray(freqs, dtype=np.int64)
    h = bump.width
    m = 2 * bump.n
    out = np.zeros(k.shape, dtype=complex)
    if bump.family == "cosine-squared":
        q = k / m
        zero = k == 0
        one = np.abs(k) == m
        integer = (np.mod(k, m) == 0) & ~zero & ~one
        rest = ~(zero | one | integer)
        out[zero] = h / 2
        out[one] = -h / 4
        qr = q[rest]
        out[rest] = 0.5 * h * _phase_factor(k[rest], m) / (2j * np.pi) / (qr * (1.0 - qr * qr))
    elif bump.family == "spline":
        p = bump.degree + 1
        zero = k == 0
        out[zero] = h / p
        kr = k[~zero]
        # sinc-type factor of the unit box of width h/p
        x = kr * h / p
        box = _phase_factor(kr, m * p) / (2j * np.pi * x)
        out[~zero] = (h / p) * box**p
    else:
        raise ValueError("paper-phi bumps are built by phi_n_fourier from the spectrum")
    return bump.scale * out


def _decay_constant(bump: BumpSpec) -> tuple:
    """``(C, s, k0)`` with ``|phi^(k)| <= C |k|^(-s)`` for ``|k| >= k0``."""
    h = bump.width
    if bump.family == "cosine-squared":
        # q >= 2 gives q^2 - 1 >= 3 q^2 / 4
        return bump.scale * (2.0 / (3.0 * math.pi)) * h**-2, 3.0, 2 * 2 * bump.n
    p = bump.degree + 1
    return bump.scale * (h / p) * (p / (math.pi * h)) ** p, float(p), 1


def phi_n_fourier(bump: BumpSpec, placements, trunc_freq: int, spec: SpectrumSpec | None = None) -> FourierTable:
    """Coefficients of ``sum_j phi(x - z_j)`` for ``|k| <= trunc_freq``.

    For ``paper-phi`` the placement must be the full grid ``{j/(2n)}``; the
    sum is then ``Phi_n = sum_{m>=1} lam_{2nm} (1 - e_{2nm})`` with
    ``Phi^(0) = sum_m lam_{2nm}`` and ``Phi^(2nm) = -lam_{2nm}``.
    """
    n = bump.n
    trunc_freq = int(trunc_freq)
    if bump.family == "paper-phi":
        if spec is None:
            raise ValueError("paper-phi needs the spectrum")
        idx = _grid_indices(n, placements)
        if idx is None or len(idx) != 2 * n or len(np.unique(idx)) != 2 * n:
            raise ValueError("paper-phi coefficients are available for the full 2n-grid placement only")
        return _paper_phi_table(bump, trunc_freq, spec)
    freqs = np.arange(-trunc_freq, trunc_freq + 1, dtype=np.int64)
    coeffs = bump_fourier(bump, freqs) * placement_sum(n, placements, freqs)
    c0 = coeffs[trunc_freq].real
    C, s, k0 = _decay_constant(bump)
    amp = len(np.asarray(placements).ravel())
    if trunc_freq + 1 < k0:
        raise ValueError(f"trunc_freq must be at least {k0 - 1} for the decay bound")
    return FourierTable(freqs, coeffs, Interval(c0, c0), ("decay", amp * C, s), trunc_freq)


def _sublattice_series(spec: SpectrumSpec, step: int, m_first: int) -> Interval:
    """Enclosure of ``sum_{m >= m_first} lam_{step m}`` (positive side only)."""
    if isinstance(spec, Explicit):
        ks = spec.points[:, 0]
        sel = (ks > 0) & (ks % step == 0) & (ks >= step * m_first)
        v = float(np.sum(spec.table[sel]))
        return Interval(v, v)
    if not isinstance(spec, NormDecreasing) or spec.d != 1:
        raise ValueError("paper-phi needs a univariate radial or explicit spectrum")
    # run the explicit sum far enough out that the certified remainder is tight
    terms = int(min(max(1 << 12, math.ceil(_SERIES_REACH / step)), 1 << 22))
    return spec.profile.series_bounds(float(step * m_first), float(step), terms)


def _paper_phi_table(bump: BumpSpec, trunc_freq: int, spec: SpectrumSpec) -> FourierTable:
    step = 2 * bump.n
    M = trunc_freq // step
    ms = np.arange(1, M + 1, dtype=np.int64)
    lam = spec.values((step * ms)[:, None]) if M else np.zeros(0)
    rest = _sublattice_series(spec, step, M + 1)
    partial = float(np.sum(lam))
    S = Interval(partial + rest.lo, partial + rest.hi)
    freqs = np.concatenate([[0], step * ms]).astype(np.int64)
    coeffs = bump.scale * np.concatenate([[S.mid], -lam]).astype(complex)
    integral = Interval(bump.scale * S.lo, bump.scale * S.hi)
    return FourierTable(freqs, coeffs, integral, ("sublattice", step, -bump.scale), M * step)


# ---------------------------------------------------------------------------
# ratios


def _reciprocal_majorant(spec: SpectrumSpec, t: float):
    if isinstance(spec, NormDecreasing) and spec.d == 1:
        return spec.profile.reciprocal_power_majorant(t)
    return None


def _remainder_norm_sq(table: FourierTable, spec: SpectrumSpec) -> Interval:
    kind = table.remainder[0]
    K = table.kmax
    if kind == "zero":
        return Interval(0.0, 0.0)
    if kind == "sublattice":
        step, sign = table.remainder[1], table.remainder[2]
        s = _sublattice_series(spec, int(step), K // int(step) + 1)
        return Interval(sign * sign * s.lo, sign * sign * s.hi)
    C, s = table.remainder[1], table.remainder[2]
    maj = _reciprocal_majorant(spec, K + 1)
    if maj is None:
        if isinstance(spec, Explicit):
            return Interval(0.0, math.inf)
        raise ValueError("no reciprocal majorant available for this spectrum")
    A, e = maj
    a = 2.0 * s - e
    if a <= 1.0:
        return Interval(0.0, math.inf)
    t = K + 1.0
    series = t**-a + t ** (1.0 - a) / (a - 1.0)
    return Interval(0.0, 2.0 * C * C * A * series)


def fooling_ratio(table: FourierTable, trunc: TruncatedSpectrum, n: int | None = None,
                  placement: str = "custom", max_rel_remainder: float = 1e-3) -> FoolingReport:
    """Integral-to-norm quotient of the function described by ``table``.

    Raises
    ------
    ValueError
        If a coefficient is nonzero where ``lam`` vanishes, or if the
        enclosure of the frequencies beyond the table is wider than
        ``max_rel_remainder`` times the squared norm.
    """
    spec = trunc.spec
    if spec.d != 1:
        raise ValueError("fooling ratios are univariate")
    lam = spec.values(table.freqs[:, None])
    c = table.coeffs
    zero = lam == 0
    if np.any(zero & (np.abs(c) > 0)):
        k = int(table.freqs[np.argmax(zero & (np.abs(c) > 0))])
        raise ValueError(f"function is not in H_lambda: coefficient at k={k} but lambda_k = 0")
    at0 = table.freqs == 0
    terms = np.zeros(len(c))
    nz = ~zero & ~at0
    terms[nz] = np.abs(c[nz]) ** 2 / lam[nz]
    main = float(np.sum(terms))
    lam0 = trunc.lambda0
    I = table.integral
    lo0 = min(abs(I.lo), abs(I.hi)) ** 2 / lam0 if I.lo * I.hi > 0 else 0.0
    hi0 = max(abs(I.lo), abs(I.hi)) ** 2 / lam0
    rem = _remainder_norm_sq(table, spec)
    eps = np.finfo(float).eps * (len(c) + 4)
    nsq_lo = (main + lo0 + rem.lo) * (1 - eps)
    nsq_hi = (main + hi0 + rem.hi) * (1 + eps)
    if not rem.hi - rem.lo <= max_rel_remainder * nsq_lo:
        raise ValueError(
            f"frequency truncation {table.kmax} too small: remainder enclosure width "
            f"{rem.hi - rem.lo:.3e} vs norm^2 {nsq_lo:.3e}"
        )
    norm_lo, norm_hi = math.sqrt(nsq_lo), math.sqrt(nsq_hi)
    integral = I.mid
    ratio_lo = max(I.lo, 0.0) / norm_hi
    ratio_hi = max(I.hi, 0.0) / norm_lo if norm_lo > 0 else math.inf
    ratio = max(integral, 0.0) / math.sqrt(0.5 * (nsq_lo + nsq_hi))
    return FoolingReport(int(n if n is not None else 0), placement, float(integral),
                         norm_lo, norm_hi, ratio, ratio_lo, ratio_hi)


def phi_n_ratio_closed_form(spec: SpectrumSpec, n: int) -> Interval:
    """Enclosure of ``sqrt(S lam_0 / (lam_0 + S))``, ``S = sum_{m>=1} lam_{2nm}``."""
    lam0 = spec.lambda0
    S = _sublattice_series(spec, 2 * n, 1)

    def f(s):
        return math.sqrt(s * lam0 / (lam0 + s))

    return Interval(f(S.lo), f(S.hi))


def subset_ratios(bump: BumpSpec, trunc: TruncatedSpectrum, trunc_freq: int, subsets=None):
    """Ratios for n-subsets of the 2n-grid, via residue classes mod 2n.

    ``||f||^2 = sum_r |P_r|^2 W_r`` with ``W_r = sum_{k = r mod 2n} |phi^(k)|^2 / lam_k``,
    so every subset costs O(n^2).  Returns ``(subsets, ratios)`` with ratios
    computed from the frequency window ``|k| <= trunc_freq``.
    """
    n = bump.n
    m = 2 * n
    k = np.arange(-trunc_freq, trunc_freq + 1, dtype=np.int64)
    lam = trunc.spec.values(k[:, None])
    w = np.abs(bump_fourier(bump, k)) ** 2 / lam
    W = np.bincount(np.mod(k, m), weights=w, minlength=m)
    if subsets is None:
        subsets = list(combinations(range(m), n))
    r = np.arange(m)
    phases = np.exp(-2j * np.pi * ((np.outer(r, r) % m) / m))
    integral = n * bump_fourier(bump, np.array([0]))[0].real
    out = []
    for sub in subsets:
        P = phases[:, list(sub)].sum(axis=1)
        out.append(integral / math.sqrt(float(np.sum(np.abs(P) ** 2 * W))))
    return subsets, np.array(out)


# ---------------------------------------------------------------------------
# gamma weights


def gamma_weight(j: int, beta: float, quad_tol: float = 1e-10) -> float:
    """``1 + int_0^1 (1 - log h)^(2 beta) h^(-2) |e^(2 pi i j h) - 1|^2 dh``.

    The domain is split at ``a = 1/(2 pi |j|)``.  On ``[0, a]`` the
    substitution ``h = a exp(-v)`` removes the logarithmic endpoint; on
    ``[a, 1]`` the identity ``|e^(i t) - 1|^2 = 2 - 2 cos t`` separates a
    smooth part from an oscillatory one integrated with a cosine weight.

    Raises
    ------
    RuntimeError
        If the quadrature error estimate exceeds ``quad_tol`` relative.
    """
    if beta <= 0.5:
        raise ValueError("beta must exceed 1/2")
    j = abs(int(j))
    if j == 0:
        return 1.0
    a = 1.0 / (2.0 * math.pi * j)
    la = 1.0 - math.log(a)
    p = 2.0 * beta

    def inner(v):
        h = a * math.exp(-v)
        x = math.pi * j * h
        sinc = math.sin(x) / x if x > 0 else 1.0
        # h^-2 sin^2(pi j h) dh with dh = h dv
        return (la + v) ** p * 4.0 * (math.pi * j) ** 2 * h * sinc * sinc

    def w(h):
        return (1.0 - math.log(h)) ** p / (h * h)

    opts = dict(epsabs=0.0, epsrel=quad_tol, limit=1000)
    i1, e1 = integrate.quad(inner, 0.0, math.inf, **opts)
    i2, e2 = integrate.quad(w, a, 1.0, **opts)
    i3, e3 = integrate.quad(w, a, 1.0, weight="cos", wvar=2.0 * math.pi * j, **opts)
    total = 1.0 + i1 + 2.0 * i2 - 2.0 * i3
    err = e1 + 2.0 * e2 + 2.0 * e3
    if err > quad_tol * total * 10:
        raise RuntimeError(f"gamma_weight({j}) quadrature reached only {err / total:.2e} relative")
    return total


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "placement", "integral", "norm_lo", "norm_hi", "ratio"])
    for r in reports:
        wr.writerow([r.n, r.placement] + [repr(float(x)) for x in r.row()[2:]])
    return buf.getvalue()
