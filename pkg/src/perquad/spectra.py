"""Spectral sequences on Z^d, certified truncations and sequence convolution.

A spectrum ``lam`` is a non-negative, summable sequence indexed by Z^d.  It
defines the periodic space ``H_lam`` whose reproducing kernel is
``K(x, y) = sum_k lam_k exp(2 pi i <k, x - y>)``.  Everything downstream works
with a finite :class:`TruncatedSpectrum` that carries certified bounds on the
discarded mass.

Built-in families come in two flavours:

* radial families ``lam_k = g(||k||)`` with ``g`` non-increasing
  (:class:`NormDecreasing` and its named subclasses), truncated to norm balls;
* product families ``lam_k = prod_j f(|k_j|)`` (:class:`MixedLog`,
  :class:`SobolevMixed`), truncated to hyperbolic crosses (level sets of
  ``lam``).

Explicit finite tables are handled by :class:`Explicit`; they default to zero
outside the table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Interval",
    "TruncationError",
    "Profile",
    "PowerLog",
    "Sobolev",
    "Exponential",
    "Step",
    "SpectrumSpec",
    "NormDecreasing",
    "BorderUnivariate",
    "IsotropicLog",
    "SobolevIso",
    "Geometric",
    "ProductSpectrum",
    "MixedLog",
    "SobolevMixed",
    "Explicit",
    "IndexSet",
    "TruncatedSpectrum",
    "lambda_value",
    "truncate",
    "truncate_at",
    "ell1_norm",
    "convolve",
    "convolution_square",
    "add_spectra",
    "convolution_square_minorant",
    "norm_of",
    "dumps",
    "loads",
    "parse_spec_string",
]

EPS = np.finfo(float).eps
NORMS = ("l2", "l1", "linf")

# relative slack for level-set membership (hyperbolic crosses, counting)
LEVEL_RTOL = 1e-12


class Interval(NamedTuple):
    lo: float
    hi: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


class TruncationError(RuntimeError):
    """Raised when a truncation cannot reach the requested tail tolerance."""

    def __init__(self, message: str, radius: float, tail_upper: float, mass: float):
        super().__init__(message)
        self.radius = radius
        self.tail_upper = tail_upper
        self.mass = mass


def _sum_slack(total: float, count: int) -> float:
    # bound on the rounding error of a pairwise float sum of `count` non-negative terms
    return 4.0 * EPS * (math.log2(max(count, 1)) + 2.0) * abs(total)


# ---------------------------------------------------------------------------
# radial profiles


class Profile:
    """Non-increasing function ``g: [0, inf) -> [0, inf)``."""

    name = "profile"

    def __call__(self, u):
        raise NotImplementedError

    def params(self) -> tuple:
        raise NotImplementedError

    def moment_bounds(self, x: float, d: int) -> Interval:
        """Bounds on ``int_x^inf g(u) u^(d-1) du``."""
        raise NotImplementedError

    def summable(self, d: int) -> bool:
        raise NotImplementedError

    def reciprocal_power_majorant(self, t: float):
        """Return ``(C, e)`` with ``1/g(u) <= C u^e`` for ``u >= t >= 1``, or None."""
        return None

    def series_bounds(self, start: float, step: float, terms: int = 1 << 16) -> Interval:
        """Enclosure of ``sum_{m >= 0} g(start + step m)``."""
        m = np.arange(terms, dtype=float)
        part = float(np.sum(self(start + step * m)))
        x = start + step * terms
        rest = self.moment_bounds(x, 1)
        lo = part + rest.lo / step
        hi = part + float(self(np.array([x]))[0]) + rest.hi / step
        s = _sum_slack(part, terms)
        return Interval(max(lo - s, 0.0), hi + s)

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((type(self).__name__, self.params()))

    def __repr__(self):
        return f"{type(self).__name__}{self.params()}"


class PowerLog(Profile):
    """``g(u) = c (1+u)^(-p) log(e+u)^(-2 beta)``."""

    name = "powerlog"

    def __init__(self, p: float, beta: float, c: float = 1.0):
        if p <= 0 or c <= 0:
            raise ValueError("powerlog profile needs p > 0 and c > 0")
        self.p, self.beta, self.c = float(p), float(beta), float(c)

    def params(self):
        return (self.p, self.beta, self.c)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.c * (1.0 + u) ** (-self.p) * np.log(np.e + u) ** (-2.0 * self.beta)

    def summable(self, d):
        return self.p > d or (self.p == d and self.beta > 0.5)

    def moment_bounds(self, x, d):
        x = float(x)
        if self.p == d:
            if self.beta <= 0.5:
                return Interval(math.inf, math.inf)
            tail = math.log(math.e + x) ** (1.0 - 2.0 * self.beta) / (2.0 * self.beta - 1.0)
            hi = self.c * (math.e + x) / (1.0 + x) * tail
            lo = self.c * (x / (1.0 + x)) ** (d - 1) * tail
            return Interval(lo, hi)
        if self.p > d:
            hi = self.c * math.log(math.e + x) ** (-2.0 * self.beta) * (1.0 + x) ** (d - self.p) / (self.p - d)
            return Interval(0.0, hi)
        return Interval(math.inf, math.inf)

    def series_bounds(self, start: float, step: float, terms: int = 1 << 16) -> Interval:
        """Enclosure of ``sum_{m >= 0} g(start + step m)``.

        For ``p = 1`` the plain integral comparison is loose by about one
        term, which is large for this slowly decaying profile.  There ``g`` is
        convex and decreasing, so the trapezoid rule brackets the remainder:
        ``sum_{m>=0} g(x + s m) - I / s - g(x) / 2`` lies in
        ``[0, s |g'(x)| / 8]`` with ``I = int_x^inf g``.  With ``v = log(e+u)``,
        ``I / c = int_V^inf v^(-2 beta) / (1 - q e^(-v)) dv`` and ``q = e - 1``;
        the leading term is exact, the ``e^(-v)`` term is bracketed by its
        alternating asymptotic series and the rest by a geometric bound.
        """
        if self.p != 1.0 or self.beta <= 0.5:
            return super().series_bounds(start, step, terms)
        m = np.arange(terms, dtype=float)
        part = float(np.sum(self(start + step * m)))
        x = start + step * terms
        I = self._integral_p1(x)
        if I is None:
            return super().series_bounds(start, step, terms)
        gx = float(self(np.array([x]))[0])
        pw = 2.0 * self.beta
        # |g'(x)| = g(x) (1/(1+x) + 2 beta / ((e+x) log(e+x)))
        dg = gx * (1.0 / (1.0 + x) + pw / ((math.e + x) * math.log(math.e + x)))
        lo = part + I.lo / step + 0.5 * gx
        hi = part + I.hi / step + 0.5 * gx + step * dg / 8.0
        sl = _sum_slack(part, terms) + 16.0 * EPS * hi
        return Interval(max(lo - sl, 0.0), hi + sl)

    def _integral_p1(self, x: float):
        """Enclosure of ``int_x^inf g`` for ``p = 1``, or None when the series is not yet alternating-decreasing."""
        pw = 2.0 * self.beta
        V = math.log(math.e + x)
        q = math.e - 1.0
        ev = 1.0 / (math.e + x)  # e^(-V)
        if V < pw + 8.0:
            return None
        lead = V ** (1.0 - pw) / (pw - 1.0)
        # int_V^inf v^-pw e^-v dv = e^-V V^-pw sum_i (-1)^i (pw)_i / V^i, alternating with decreasing terms
        terms, t = [], 1.0
        for i in range(8):
            terms.append(t)
            t *= -(pw + i) / V
        s_even = sum(terms)            # ends on a negative term: lower bound
        s_odd = s_even + t             # adds a positive term: upper bound
        base = ev * V ** (-pw)
        one = (q * base * min(s_even, s_odd), q * base * max(s_even, s_odd))
        z = q * ev
        rest_hi = V ** (-pw) * z * z / (2.0 * (1.0 - z))
        return Interval(self.c * (lead + one[0]), self.c * (lead + one[1] + rest_hi))

    def reciprocal_power_majorant(self, t):
        t = max(float(t), 1.0)
        log_t = math.log(math.e + t)
        eta = 2.0 * self.beta / log_t
        const = 2.0 ** self.p * log_t ** (2.0 * self.beta) * t ** (-eta) / self.c
        return const, self.p + eta


class Sobolev(Profile):
    """``g(u) = c (1+u^2)^(-s)``."""

    name = "sobolev"

    def __init__(self, s: float, c: float = 1.0):
        if s <= 0 or c <= 0:
            raise ValueError("sobolev profile needs s > 0 and c > 0")
        self.s, self.c = float(s), float(c)

    def params(self):
        return (self.s, self.c)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.c * (1.0 + u * u) ** (-self.s)

    def summable(self, d):
        return 2.0 * self.s > d

    def moment_bounds(self, x, d):
        x = float(x)
        q = 2.0 * self.s - d
        if q <= 0:
            return Interval(math.inf, math.inf)
        lo = self.c * (x / (1.0 + x)) ** (d - 1) * (1.0 + x) ** (-q) / q
        if x > 0:
            hi = self.c * x ** (-q) / q
        else:
            hi = self.c * (1.0 / d + 1.0 / q)
        return Interval(lo, hi)

    def reciprocal_power_majorant(self, t):
        return 2.0 ** self.s / self.c, 2.0 * self.s


class Exponential(Profile):
    """``g(u) = c omega^(-u)``."""

    name = "exp"

    def __init__(self, c: float, omega: float):
        if c <= 0 or omega <= 1:
            raise ValueError("exponential profile needs c > 0 and omega > 1")
        self.c, self.omega = float(c), float(omega)

    def params(self):
        return (self.c, self.omega)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.c * self.omega ** (-u)

    def summable(self, d):
        return True

    def moment_bounds(self, x, d):
        a = math.log(self.omega)
        val = self.c * math.gamma(d) * float(special.gammaincc(d, a * max(x, 0.0))) / a**d
        return Interval(val * (1 - 8 * EPS), val * (1 + 8 * EPS))


class Step(Profile):
    """Piecewise constant ``g(u) = values[floor(u)]``, zero beyond the table."""

    name = "step"

    def __init__(self, values: Sequence[float]):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("step profile needs a non-empty list of values")
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("step profile values must be non-negative and non-increasing")
        self.values = v

    def params(self):
        return tuple(float(x) for x in self.values)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.floor(u).astype(np.int64)
        out = np.zeros(u.shape)
        ok = (idx >= 0) & (idx < self.values.size)
        out[ok] = self.values[idx[ok]]
        return out

    def summable(self, d):
        return True

    def moment_bounds(self, x, d):
        total = 0.0
        for i, v in enumerate(self.values):
            a, b = max(float(i), x), float(i + 1)
            if b > a:
                total += v * (b**d - a**d) / d
        return Interval(total, total)


def profile_from_tokens(tokens: Sequence[str]) -> Profile:
    name, args = tokens[0], [float(t) for t in tokens[1:]]
    if name == "powerlog":
        return PowerLog(*args)
    if name == "sobolev":
        return Sobolev(*args)
    if name == "exp":
        return Exponential(*args)
    if name == "step":
        return Step(args)
    raise ValueError(f"unknown profile {name!r}")


# ---------------------------------------------------------------------------
# norms and lattice enumeration


def _check_norm(norm: str) -> str:
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
    return norm


def norm_key(ks: np.ndarray, norm: str) -> np.ndarray:
    """Integer shell key: squared norm for l2, the norm itself otherwise."""
    a = np.abs(ks)
    if norm == "l2":
        return np.sum(a * a, axis=1)
    if norm == "l1":
        return np.sum(a, axis=1)
    return np.max(a, axis=1) if a.shape[1] else np.zeros(len(a), dtype=np.int64)


def norm_of(ks, norm: str) -> np.ndarray:
    ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
    key = norm_key(ks, norm).astype(float)
    return np.sqrt(key) if norm == "l2" else key


def _key_limit(radius: float, norm: str) -> float:
    return radius * radius if norm == "l2" else radius


def _cube_offset(d: int, norm: str) -> float:
    if norm == "l2":
        return math.sqrt(d) / 2.0
    if norm == "l1":
        return d / 2.0
    return 0.5


def _ball_volume(d: int, norm: str) -> float:
    if norm == "l2":
        return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    if norm == "l1":
        return 2.0**d / math.factorial(d)
    return 2.0**d


def _shell_order(points: np.ndarray, key: np.ndarray) -> np.ndarray:
    cols = [points[:, j] for j in range(points.shape[1] - 1, -1, -1)]
    return np.lexsort(cols + [key])


def enumerate_ball(d: int, norm: str, radius: float) -> np.ndarray:
    """Lattice points with ``||k|| <= radius`` in shell order."""
    b = int(math.floor(radius + 1e-12))
    if b < 0:
        return np.zeros((0, d), dtype=np.int64)
    axis = np.arange(-b, b + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    key = norm_key(pts, norm)
    keep = key <= _key_limit(radius, norm) + 1e-9
    pts, key = pts[keep], key[keep]
    return pts[_shell_order(pts, key)]


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Finite set of lattice points in deterministic enumeration order."""

    points: np.ndarray
    shape: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64)
        if pts.ndim != 2:
            raise ValueError("points must be an (m, d) array")
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @cached_property
    def _lookup(self) -> dict:
        return {tuple(p): i for i, p in enumerate(self.points.tolist())}

    def index_of(self, k) -> int | None:
        return self._lookup.get(tuple(int(x) for x in k))

    def contains(self, k) -> bool:
        return self.index_of(k) is not None


# ---------------------------------------------------------------------------
# spectrum specifications


class SpectrumSpec:
    """Symbolic description of a non-negative sequence on Z^d."""

    family = "abstract"
    d: int
    symmetric = True
    norm_decreasing = False
    norm: str | None = None

    def values(self, ks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def header(self) -> str:
        raise NotImplementedError

    @property
    def lambda0(self) -> float:
        return float(self.values(np.zeros((1, self.d), dtype=np.int64))[0])

    def truncation_at(self, radius: float) -> "TruncatedSpectrum":
        raise NotImplementedError

    def sublattice_tail(self, trunc: "TruncatedSpectrum", step: int, partial: float) -> Interval:
        """Bounds on ``sum lam_{step k}`` over ``step k`` outside the support."""
        raise NotImplementedError

    def outside_max(self, trunc: "TruncatedSpectrum") -> float:
        """Upper bound on ``lam_k`` for ``k`` outside the support."""
        raise NotImplementedError

    def axis_restriction(self) -> "SpectrumSpec":
        """Univariate sequence ``j -> lam_{j e_1}``."""
        raise NotImplementedError(f"{self.family} has no axis restriction")

    def _key(self):
        return (self.family, self.header())

    def __eq__(self, other):
        return isinstance(other, SpectrumSpec) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"<{type(self).__name__} {self.header()!r}>"


class NormDecreasing(SpectrumSpec):
    """``lam_k = g(||k||)`` with ``g`` non-increasing."""

    family = "normdec"
    norm_decreasing = True

    def __init__(self, d: int, norm: str, profile: Profile):
        if int(d) < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        self.norm = _check_norm(norm)
        self.profile = profile
        if not profile.summable(self.d):
            raise ValueError(f"{profile!r} is not summable in dimension {self.d}")

    def header(self):
        params = " ".join(repr(p) for p in self.profile.params())
        return f"normdec {self.d} {self.norm} {self.profile.name} {params}"

    def values(self, ks):
        ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
        if ks.shape[1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {ks.shape[1]}")
        return self.profile(norm_of(ks, self.norm))

    def truncation_at(self, radius):
        pts = enumerate_ball(self.d, self.norm, radius)
        support = IndexSet(pts, ("ball", self.norm, float(radius)))
        vals = self.values(pts)
        mass = float(np.sum(vals))
        tail = self._tail(float(radius), 1, mass, len(pts))
        return TruncatedSpectrum(self, support, vals, tail.hi, tail.lo)

    def sublattice_total(self, step: int) -> Interval | None:
        return None

    def _radial_tail(self, radius: float, step: int) -> Interval:
        g = self.profile
        d, s = self.d, float(step)
        if d == 1:
            m = math.floor(radius / s + 1e-12) + 1
            x = s * m
            mom = g.moment_bounds(x, 1)
            return Interval(2.0 * mom.lo / s, 2.0 * (float(g(np.array([x]))[0]) + mom.hi / s))
        rho = radius / s
        delta = _cube_offset(d, self.norm)
        surface = d * _ball_volume(d, self.norm)
        t_hi = rho - 2.0 * delta
        if t_hi > 0:
            hi = surface * (1.0 + delta / t_hi) ** (d - 1) * s ** (-d) * g.moment_bounds(s * t_hi, d).hi
        else:
            hi = math.inf
        t_lo = rho + 2.0 * delta
        lo = surface * (1.0 - delta / t_lo) ** (d - 1) * s ** (-d) * g.moment_bounds(s * t_lo, d).lo
        return Interval(lo, hi)

    def _tail(self, radius, step, partial, count) -> Interval:
        tail = self._radial_tail(radius, step)
        lo, hi = tail.lo, tail.hi
        total = self.sublattice_total(step)
        if total is not None:
            s = _sum_slack(partial, count)
            lo = max(lo, total.lo - partial - s)
            hi = min(hi, total.hi - partial + s)
        lo = max(lo * (1 - 8 * EPS), 0.0)
        hi = max(hi * (1 + 8 * EPS), lo)
        return Interval(lo, hi)

    def sublattice_tail(self, trunc, step, partial):
        radius = trunc.support.shape[2]
        count = len(trunc.support)
        return self._tail(radius, step, partial, count)

    def outside_max(self, trunc):
        radius = trunc.support.shape[2]
        return float(self.profile(np.array([radius]))[0])

    def axis_restriction(self):
        return NormDecreasing(1, "l2", self.profile)


class BorderUnivariate(NormDecreasing):
    """``lam_k = (1+|k|)^(-1) log(e+|k|)^(-2 beta)`` on Z, beta > 1/2."""

    family = "border"

    def __init__(self, beta: float):
        if beta <= 0.5:
            raise ValueError("border family needs beta > 1/2")
        self.beta = float(beta)
        super().__init__(1, "l2", PowerLog(1.0, self.beta))

    def header(self):
        return f"border {self.beta!r}"

    def axis_restriction(self):
        return self


class IsotropicLog(NormDecreasing):
    """``lam_k = (1+|k|)^(-d) log(e+|k|)^(-2 beta)`` with the Euclidean norm."""

    family = "iso"

    def __init__(self, d: int, beta: float):
        if beta <= 0.5:
            raise ValueError("isotropic log family needs beta > 1/2")
        self.beta = float(beta)
        super().__init__(int(d), "l2", PowerLog(float(d), self.beta))

    def header(self):
        return f"iso {self.d} {self.beta!r}"


class SobolevIso(NormDecreasing):
    """``lam_k = (1+|k|^2)^(-s)``, s > d/2."""

    family = "sobolev-iso"

    def __init__(self, d: int, s: float):
        if 2.0 * s <= d:
            raise ValueError("isotropic Sobolev family needs s > d/2")
        self.s = float(s)
        super().__init__(int(d), "l2", Sobolev(self.s))

    def header(self):
        return f"sobolev-iso {self.d} {self.s!r}"


class Geometric(NormDecreasing):
    """``lam_k = c omega^(-||k||_1)``; for d = 1 this is ``c omega^(-|k|)``."""

    family = "geometric"

    def __init__(self, c: float, omega: float, d: int = 1):
        self.c, self.omega = float(c), float(omega)
        super().__init__(int(d), "l1" if int(d) > 1 else "l2", Exponential(self.c, self.omega))

    def header(self):
        return f"geometric {self.c!r} {self.omega!r} {self.d}"

    def sublattice_total(self, step):
        q = self.omega ** float(step)
        val = self.c * ((q + 1.0) / (q - 1.0)) ** self.d
        return Interval(val * (1 - 16 * EPS), val * (1 + 16 * EPS))

    def axis_restriction(self):
        return Geometric(self.c, self.omega, 1)


@lru_cache(maxsize=256)
def _factor_total(profile: Profile, step: int) -> Interval:
    # f(0) + 2 sum_{m >= 1} f(step m)
    f0 = float(profile(np.array([0.0]))[0])
    ser = profile.series_bounds(float(step), float(step), 1 << 18)
    return Interval(f0 + 2.0 * ser.lo, f0 + 2.0 * ser.hi)


class ProductSpectrum(SpectrumSpec):
    """``lam_k = prod_j f(|k_j|)``, truncated to hyperbolic crosses."""

    family = "product"

    def __init__(self, d: int, factor: Profile):
        if int(d) < 1:
            raise ValueError("dimension must be >= 1")
        if not factor.summable(1):
            raise ValueError(f"{factor!r} is not summable")
        self.d = int(d)
        self.factor = factor
        self.f0 = float(factor(np.array([0.0]))[0])

    def header(self):
        params = " ".join(repr(p) for p in self.factor.params())
        return f"product {self.d} {self.factor.name} {params}"

    def factor_weights(self, a: np.ndarray) -> np.ndarray:
        """Per-coordinate weights ``f(0)/f(|k_j|)`` (1 at the origin)."""
        return self.f0 / self.factor(np.abs(a))

    def weights(self, ks: np.ndarray) -> np.ndarray:
        w = np.sort(self.factor_weights(ks), axis=1)
        return np.prod(w, axis=1)

    def values(self, ks):
        ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
        if ks.shape[1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {ks.shape[1]}")
        f = np.sort(self.factor(np.abs(ks)), axis=1)[:, ::-1]
        return np.prod(f, axis=1)

    def _max_index(self, level: float) -> int:
        # largest k >= 0 with factor weight <= level
        if level < 1.0 * (1 - LEVEL_RTOL):
            return -1
        lo, hi = 0, 1
        while self.factor_weights(np.array([hi]))[0] <= level * (1 + LEVEL_RTOL):
            lo, hi = hi, 2 * hi
            if hi > 1 << 40:
                raise OverflowError("hyperbolic cross level too large")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.factor_weights(np.array([mid]))[0] <= level * (1 + LEVEL_RTOL):
                lo = mid
            else:
                hi = mid
        return lo

    def enumerate_cross(self, level: float) -> np.ndarray:
        """Points with ``prod_j f(0)/f(|k_j|) <= level`` in increasing-weight order."""
        kmax = self._max_index(level)
        if kmax < 0:
            return np.zeros((0, self.d), dtype=np.int64)
        axis_w = self.factor_weights(np.arange(kmax + 1))
        # grow coordinate prefixes one axis at a time, tracking the remaining level
        pts = np.zeros((1, 0), dtype=np.int64)
        rem = np.array([float(level)])
        for _ in range(self.d):
            m = np.searchsorted(axis_w, rem * (1 + LEVEL_RTOL), side="right") - 1
            keep = m >= 0
            pts, rem, m = pts[keep], rem[keep], m[keep]
            counts = 2 * m + 1
            rep = np.repeat(np.arange(len(pts)), counts)
            starts = np.repeat(np.cumsum(counts) - counts, counts)
            k = np.arange(len(rep)) - starts - m[rep]
            pts = np.column_stack([pts[rep], k])
            rem = rem[rep] / axis_w[np.abs(k)]
        w = self.weights(pts)
        keep = w <= level * (1 + LEVEL_RTOL)
        pts, w = pts[keep], w[keep]
        cols = [pts[:, j] for j in range(self.d - 1, -1, -1)]
        return pts[np.lexsort(cols + [w])]

    def truncation_at(self, radius):
        pts = self.enumerate_cross(radius)
        support = IndexSet(pts, ("hyperbolic", float(radius)))
        vals = self.values(pts)
        mass = float(np.sum(vals))
        tail = self._tail_from_total(1, mass, len(pts))
        return TruncatedSpectrum(self, support, vals, tail.hi, tail.lo)

    def _tail_from_total(self, step, partial, count) -> Interval:
        f = _factor_total(self.factor, int(step))
        s = _sum_slack(partial, count)
        lo = max(f.lo**self.d * (1 - 8 * EPS) - partial - s, 0.0)
        hi = f.hi**self.d * (1 + 8 * EPS) - partial + s
        return Interval(lo, max(hi, lo))

    def sublattice_tail(self, trunc, step, partial):
        return self._tail_from_total(step, partial, len(trunc.support))

    def outside_max(self, trunc):
        return self.f0**self.d / trunc.support.shape[1]

    def axis_restriction(self):
        scaled = _scaled_profile(self.factor, self.f0 ** (self.d - 1))
        return NormDecreasing(1, "l2", scaled)


def _scaled_profile(profile: Profile, scale: float) -> Profile:
    if scale == 1.0:
        return profile
    if isinstance(profile, PowerLog):
        return PowerLog(profile.p, profile.beta, profile.c * scale)
    if isinstance(profile, Sobolev):
        return Sobolev(profile.s, profile.c * scale)
    if isinstance(profile, Exponential):
        return Exponential(profile.c * scale, profile.omega)
    if isinstance(profile, Step):
        return Step(profile.values * scale)
    raise TypeError(f"cannot rescale {profile!r}")


class MixedLog(ProductSpectrum):
    """``lam_k = prod_j (1+|k_j|)^(-1) log(e+|k_j|)^(-2 beta)``."""

    family = "mixed"

    def __init__(self, d: int, beta: float):
        if beta <= 0.5:
            raise ValueError("mixed log family needs beta > 1/2")
        self.beta = float(beta)
        super().__init__(int(d), PowerLog(1.0, self.beta))

    def header(self):
        return f"mixed {self.d} {self.beta!r}"

    def axis_restriction(self):
        return BorderUnivariate(self.beta)


class SobolevMixed(ProductSpectrum):
    """``lam_k = prod_j (1+k_j^2)^(-s)``, s > 1/2."""

    family = "sobolev-mixed"

    def __init__(self, d: int, s: float):
        if s <= 0.5:
            raise ValueError("mixed Sobolev family needs s > 1/2")
        self.s = float(s)
        super().__init__(int(d), Sobolev(self.s))

    def header(self):
        return f"sobolev-mixed {self.d} {self.s!r}"

    def axis_restriction(self):
        return SobolevIso(1, self.s)


class Explicit(SpectrumSpec):
    """Finite table on Z^d; zero outside the table.

    ``factors`` optionally certifies the table as ``sum_i f_i * f_i``
    (a sum of convolution squares).
    """

    family = "explicit"

    def __init__(self, points, values, factors: Sequence["Explicit"] | None = None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        vals = np.asarray(values, dtype=float).ravel()
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("points and values differ in length")
        if pts.shape[0] == 0:
            raise ValueError("explicit table must not be empty")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("explicit values must be finite and non-negative")
        order = _shell_order(pts, norm_key(pts, "l2"))
        pts, vals = pts[order], vals[order]
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("explicit table contains duplicate points")
        self.d = pts.shape[1]
        self.points, self.table = pts, vals
        self.factors = tuple(factors) if factors else ()
        self._radix = int(np.max(np.abs(pts))) + 1
        codes = self._encode(pts)
        self._order = np.argsort(codes)
        self._codes = codes[self._order]
        neg = self.values(-pts)
        self.symmetric = bool(np.array_equal(neg, vals))

    @classmethod
    def delta(cls, d: int = 1, value: float = 1.0) -> "Explicit":
        return cls(np.zeros((1, d), dtype=np.int64), [value])

    @classmethod
    def from_dict(cls, table: dict) -> "Explicit":
        keys = list(table)
        pts = [k if isinstance(k, tuple) else (k,) for k in keys]
        return cls(pts, [table[k] for k in keys])

    def _encode(self, ks):
        r = self._radix
        code = np.zeros(len(ks), dtype=np.int64)
        for j in range(ks.shape[1]):
            code = code * (2 * r + 1) + (ks[:, j] + r)
        return code

    def values(self, ks):
        ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
        if ks.shape[1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {ks.shape[1]}")
        out = np.zeros(len(ks))
        inside = np.all(np.abs(ks) < self._radix, axis=1)
        if np.any(inside):
            codes = self._encode(ks[inside])
            pos = np.searchsorted(self._codes, codes)
            pos = np.minimum(pos, len(self._codes) - 1)
            hit = self._codes[pos] == codes
            vals = np.zeros(len(codes))
            vals[hit] = self.table[self._order[pos[hit]]]
            out[inside] = vals
        return out

    def header(self):
        return f"explicit {self.d}"

    def _key(self):
        return (self.family, self.d, self.points.tobytes(), self.table.tobytes())

    @property
    def mass(self) -> float:
        return float(np.sum(self.table))

    def truncation_at(self, radius=None):
        support = IndexSet(self.points, ("explicit",))
        return TruncatedSpectrum(self, support, self.table.copy(), 0.0, 0.0)

    def sublattice_tail(self, trunc, step, partial):
        return Interval(0.0, 0.0)

    def outside_max(self, trunc):
        return 0.0

    def axis_restriction(self):
        on_axis = np.all(self.points[:, 1:] == 0, axis=1)
        return Explicit(self.points[on_axis, :1], self.table[on_axis])


# ---------------------------------------------------------------------------
# truncated spectra


@dataclass(frozen=True, eq=False)
class TruncatedSpectrum:
    """Finite support with lam values and certified bounds on the discarded mass.

    ``tail_upper`` (and ``tail_lower``) bound ``sum_{k not in support} lam_k``.
    """

    spec: SpectrumSpec
    support: IndexSet
    values: np.ndarray
    tail_upper: float
    tail_lower: float = 0.0

    @property
    def d(self) -> int:
        return self.spec.d

    @cached_property
    def mass(self) -> float:
        return float(np.sum(self.values))

    @cached_property
    def lambda0(self) -> float:
        return self.spec.lambda0

    @property
    def points(self) -> np.ndarray:
        return self.support.points

    @property
    def radius(self) -> float | None:
        shape = self.support.shape
        return shape[-1] if shape[0] != "explicit" else None

    def value_at(self, k) -> float:
        i = self.support.index_of(k)
        return 0.0 if i is None else float(self.values[i])

    def sublattice_sum(self, step: int) -> tuple[float, Interval]:
        """In-support sum of ``lam_{step k}`` and bounds on the remainder."""
        on = np.all(self.points % step == 0, axis=1)
        partial = float(np.sum(self.values[on]))
        return partial, self.spec.sublattice_tail(self, step, partial)


def lambda_value(spec: SpectrumSpec, k) -> float:
    """Evaluate ``lam_k`` for a single lattice point."""
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if k.ndim != 1 or k.shape[0] != spec.d:
        raise ValueError(f"expected a point of dimension {spec.d}, got shape {k.shape}")
    return float(spec.values(k[None, :])[0])


def truncate_at(spec: SpectrumSpec, radius: float | None = None) -> TruncatedSpectrum:
    """Truncate at a fixed shell radius (norm radius or hyperbolic level)."""
    if isinstance(spec, Explicit):
        return spec.truncation_at()
    if radius is None or radius < 0:
        raise ValueError("a non-negative radius is required")
    return spec.truncation_at(radius)


def truncate(spec: SpectrumSpec, rel_tol: float, max_radius: float) -> TruncatedSpectrum:
    """Smallest shell radius ``R <= max_radius`` whose tail bound is within ``rel_tol``.

    Raises
    ------
    TruncationError
        If ``max_radius`` is reached first; the achieved tail bound is attached.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    if isinstance(spec, Explicit):
        return spec.truncation_at()

    def ok(tr):
        return tr.tail_upper <= rel_tol * tr.mass

    radius = 1
    tr = truncate_at(spec, radius)
    prev = 0
    while not ok(tr):
        if radius >= max_radius:
            raise TruncationError(
                f"tail bound {tr.tail_upper:.3e} exceeds {rel_tol:g} x mass {tr.mass:.6g} "
                f"at max radius {max_radius}",
                radius, tr.tail_upper, tr.mass,
            )
        prev = radius
        radius = min(2 * radius, int(max_radius))
        tr = truncate_at(spec, radius)
    lo, hi = prev, radius
    best = tr
    while hi - lo > 1:
        mid = (lo + hi) // 2
        cand = truncate_at(spec, mid)
        if ok(cand):
            hi, best = mid, cand
        else:
            lo = mid
    return best


def ell1_norm(trunc: TruncatedSpectrum) -> Interval:
    """``[in-support mass, in-support mass + tail_upper]``, widened by summation rounding.

    A floating-point sum of ``m`` non-negative terms is within
    ``(m - 1) eps`` relative of the exact sum.
    """
    s = trunc.mass
    g = max(len(trunc.values) - 1, 0) * np.finfo(float).eps
    return Interval(float(s * (1 - g)), float((s + trunc.tail_upper) * (1 + g)))


# ---------------------------------------------------------------------------
# convolution


def _as_explicit(a) -> Explicit:
    if isinstance(a, TruncatedSpectrum):
        return Explicit(a.points, a.values)
    if not isinstance(a, Explicit):
        raise TypeError("convolution needs explicit (finite) spectra")
    return a


def convolve(a: Explicit, b: Explicit) -> Explicit:
    """``(a * b)_k = sum_l a_l b_{l+k}``; the support is ``supp b - supp a``."""
    a, b = _as_explicit(a), _as_explicit(b)
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    diff = (b.points[None, :, :] - a.points[:, None, :]).reshape(-1, a.d)
    prod = (a.table[:, None] * b.table[None, :]).ravel()
    uniq, inv = np.unique(diff, axis=0, return_inverse=True)
    vals = np.bincount(inv.ravel(), weights=prod, minlength=len(uniq))
    return Explicit(uniq, vals)


def convolution_square(mu: Explicit) -> Explicit:
    """``mu * mu`` carrying ``mu`` as its certificate factor."""
    sq = convolve(mu, mu)
    return Explicit(sq.points, sq.table, factors=(_as_explicit(mu),))


def add_spectra(*parts: Explicit) -> Explicit:
    """Entrywise sum of explicit spectra; certificates are concatenated when all carry one."""
    parts = [_as_explicit(p) for p in parts]
    d = parts[0].d
    if any(p.d != d for p in parts):
        raise ValueError("dimension mismatch")
    pts = np.concatenate([p.points for p in parts])
    vals = np.concatenate([p.table for p in parts])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    summed = np.bincount(inv.ravel(), weights=vals, minlength=len(uniq))
    factors = None
    if all(p.factors for p in parts):
        factors = tuple(f for p in parts for f in p.factors)
    return Explicit(uniq, summed, factors=factors)


def _explicit_norm_decreasing(spec, max_points: int = 200_000) -> bool:
    """Whether a small explicit table is non-increasing in the Euclidean norm on Z^d."""
    if not isinstance(spec, Explicit) or len(spec.table) == 0:
        return False
    pos = spec.points[spec.table > 0]
    if len(pos) == 0:
        return False
    rad = float(np.max(norm_of(pos, "l2")))
    if (2 * rad + 3) ** spec.d > max_points:
        return False
    ball = enumerate_ball(spec.d, "l2", rad + 1)
    key = norm_key(ball, "l2")
    v = spec.values(ball)
    # the largest value on each shell must not exceed the smallest on any earlier shell
    shells, start = np.unique(key, return_index=True)
    mins = np.minimum.reduceat(v, start)
    maxs = np.maximum.reduceat(v, start)
    return bool(np.all(maxs[1:] <= np.minimum.accumulate(mins)[:-1]))


def convolution_square_minorant(trunc: TruncatedSpectrum) -> Explicit:
    """Sum-of-convolution-squares minorant ``nu <= lam`` of a norm-decreasing spectrum.

    With ``S`` the in-support sum of ``lam_{2l}``, set ``mu_l = lam_{2l} / sqrt(2 S)``
    and ``nu = mu * mu + t delta_0`` with ``t`` chosen so that ``nu_0 = lam_0``.
    Then ``nu <= lam`` on Z^d and ``||nu||_1 >= (lam_0 + S) / 2``.
    """
    spec = trunc.spec
    if not (spec.norm_decreasing or _explicit_norm_decreasing(spec)):
        raise ValueError(f"{spec.family} spectrum is not norm-decreasing")
    pts, vals = trunc.points, trunc.values
    even = np.all(pts % 2 == 0, axis=1)
    s = float(np.sum(vals[even]))
    lam0 = trunc.lambda0
    if s <= 0:
        return Explicit.delta(trunc.d, lam0)
    mu = Explicit(pts[even] // 2, vals[even] / math.sqrt(2.0 * s))
    sq = convolve(mu, mu)
    t = lam0 - float(sq.values(np.zeros((1, trunc.d), dtype=np.int64))[0])
    nu = add_spectra(sq, Explicit.delta(trunc.d, t))
    lam_on_nu = spec.values(nu.points)
    slack = 64 * EPS * np.maximum(lam_on_nu, np.max(nu.table))
    bad = nu.table > lam_on_nu + slack
    if np.any(bad):
        k = nu.points[np.argmax(bad)]
        raise AssertionError(f"minorant exceeds lambda at {tuple(k)}: spectrum is not norm-decreasing")
    return Explicit(nu.points, nu.table, factors=(mu, Explicit.delta(trunc.d, math.sqrt(t))))


# ---------------------------------------------------------------------------
# text serialization


def dumps(spec: SpectrumSpec) -> str:
    """Header line ``family params...``; explicit tables list ``k_1 ... k_d value`` lines."""
    if isinstance(spec, Explicit):
        lines = [spec.header()]
        for k, v in zip(spec.points.tolist(), spec.table.tolist()):
            lines.append(" ".join(str(x) for x in k) + " " + repr(float(v)))
        return "\n".join(lines) + "\n"
    return spec.header() + "\n"


def loads(text: str) -> SpectrumSpec:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty spectrum description")
    tok = lines[0].split()
    fam, args = tok[0], tok[1:]
    if fam == "explicit":
        d = int(args[0])
        rows = [ln.split() for ln in lines[1:]]
        if any(len(r) != d + 1 for r in rows):
            raise ValueError("explicit rows must have d indices and a value")
        pts = [[int(x) for x in r[:d]] for r in rows]
        vals = [float(r[d]) for r in rows]
        return Explicit(np.array(pts, dtype=np.int64).reshape(-1, d), vals)
    return _from_tokens(fam, args)


def _from_tokens(fam: str, args: Sequence[str]) -> SpectrumSpec:
    try:
        if fam == "border":
            return BorderUnivariate(float(args[0]))
        if fam == "iso":
            return IsotropicLog(int(args[0]), float(args[1]))
        if fam == "mixed":
            return MixedLog(int(args[0]), float(args[1]))
        if fam == "sobolev-iso":
            return SobolevIso(int(args[0]), float(args[1]))
        if fam == "sobolev-mixed":
            return SobolevMixed(int(args[0]), float(args[1]))
        if fam == "geometric":
            d = int(args[2]) if len(args) > 2 else 1
            return Geometric(float(args[0]), float(args[1]), d)
        if fam == "normdec":
            return NormDecreasing(int(args[0]), args[1], profile_from_tokens(args[2:]))
        if fam == "product":
            return ProductSpectrum(int(args[0]), profile_from_tokens(args[1:]))
    except IndexError:
        raise ValueError(f"missing parameters for family {fam!r}") from None
    raise ValueError(f"unknown spectrum family {fam!r}")


def parse_spec_string(text: str) -> SpectrumSpec:
    """Parse the compact CLI form ``family:p1,p2,...`` (or ``file:path``)."""
    if ":" not in text:
        return _from_tokens(text, [])
    fam, rest = text.split(":", 1)
    if fam == "file":
        with open(rest, encoding="utf-8") as fh:
            return loads(fh.read())
    return _from_tokens(fam, [t for t in rest.split(",") if t])
