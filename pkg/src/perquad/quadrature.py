"""Worst-case errors of quadrature rules on ``H_lam``.

For integration on ``H_lam`` the representer is the constant ``h = lam_0``, so
the squared worst-case error of ``Q(f) = sum_j a_j f(x_j)`` is

    e^2 = lam_0 - 2 Re(a^* h) + a^* K a,    h_j = lam_0.

Truncating the kernel perturbs ``K`` by a positive semi-definite matrix whose
entries are bounded by the discarded spectral mass, which yields the
enclosures reported in :class:`ErrorInterval`.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .kernels import KernelApprox, as_nodes, gram_matrix, kernel_row
from .spectra import TruncatedSpectrum

__all__ = [
    "QuadratureRule",
    "ErrorInterval",
    "worst_case_error_sq",
    "optimal_weights",
    "equispaced_error_sq",
    "equispaced_rule",
    "lattice_nodes",
    "optimize_nodes",
    "rule_to_csv",
    "rule_from_csv",
]

EPS = np.finfo(float).eps
_PIVOT_RATIO = 1e-13
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes in ``[0, 1)^d`` (reduced mod 1) and complex weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=complex).ravel()
        if x.shape[0] != w.shape[0]:
            raise ValueError(f"{x.shape[0]} nodes but {w.shape[0]} weights")
        object.__setattr__(self, "nodes", np.mod(x, 1.0))
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, d: int = 1) -> "QuadratureRule":
        return cls(np.zeros((0, d)), np.zeros(0, dtype=complex))

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def d(self) -> int:
        return self.nodes.shape[1]


@dataclass(frozen=True)
class ErrorInterval:
    """Certified enclosure ``[lo, hi]`` of a squared worst-case error.

    ``value`` is the error computed with the truncated kernel.  The breakdown
    ``norm_h_sq + cross_term + quadratic_term`` reproduces ``value``; the
    kernel truncation only affects the quadratic term and is recorded in
    ``truncation_slack``.
    """

    lo: float
    hi: float
    value: float
    norm_h_sq: float = 0.0
    cross_term: float = 0.0
    quadratic_term: float = 0.0
    truncation_slack: float = 0.0
    rounding_slack: float = 0.0
    degenerate: bool = False
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("lo", "hi", "value", "norm_h_sq", "cross_term", "quadratic_term",
                     "truncation_slack", "rounding_slack"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def as_dict(self) -> dict:
        return {
            "lo": self.lo, "hi": self.hi, "value": self.value,
            "norm_h_sq": self.norm_h_sq, "cross_term": self.cross_term,
            "quadratic_term": self.quadratic_term,
            "truncation_slack": self.truncation_slack,
            "rounding_slack": self.rounding_slack, "degenerate": self.degenerate,
        }


def _error_terms(K: KernelApprox, G: np.ndarray, a: np.ndarray):
    lam0 = K.lambda0
    cross = -2.0 * lam0 * float(np.sum(a).real)
    quad = float(np.real(np.vdot(a, G @ a)))
    return lam0, cross, max(quad, 0.0)


def worst_case_error_sq(rule: QuadratureRule, K: KernelApprox, G: np.ndarray | None = None) -> ErrorInterval:
    """Enclosure of the squared worst-case error of ``rule`` on ``H_lam``.

    Parameters
    ----------
    rule : QuadratureRule
    K : KernelApprox
    G : ndarray, optional
        Precomputed Gram matrix of ``rule.nodes``.
    """
    if rule.n and rule.d != K.d:
        raise ValueError(f"rule dimension {rule.d} does not match kernel dimension {K.d}")
    lam0 = K.lambda0
    a = rule.weights
    if rule.n == 0 or not np.any(a):
        return ErrorInterval(lam0, lam0, lam0, lam0, 0.0, 0.0)
    if G is None:
        G = gram_matrix(K, rule.nodes)
    lam0, cross, quad = _error_terms(K, G, a)
    l1w = float(np.sum(np.abs(a)))
    trunc_slack = K.tail_upper * l1w * l1w
    value = lam0 + cross + quad
    rounding = 8.0 * EPS * rule.n * (lam0 + abs(cross) + K.diagonal_value * l1w * l1w)
    lo = max(value - rounding, 0.0)
    hi = max(value + trunc_slack + rounding, lo)
    return ErrorInterval(lo, hi, value, lam0, cross, quad, trunc_slack, rounding)


def _solve(G: np.ndarray, rhs: np.ndarray, ridge: float):
    """Solve ``(G + ridge I) a = rhs``; returns ``(a, degenerate)``."""
    n = len(G)
    A = G + ridge * np.eye(n) if ridge else G
    try:
        c, low = linalg.cho_factor(A, lower=True, check_finite=False)
        piv = np.abs(np.diag(c)) ** 2
        if piv.min() > _PIVOT_RATIO * piv.max():
            return linalg.cho_solve((c, low), rhs, check_finite=False), False
    except linalg.LinAlgError:
        pass
    # minimum-norm least-squares on the numerically singular system
    w, V = linalg.eigh(A, check_finite=False)
    cut = max(abs(w).max(), 0.0) * n * 1e-13
    inv = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return V @ (inv * (V.conj().T @ rhs)), True


def optimal_weights(nodes, K: KernelApprox, ridge: float = 0.0):
    """Weights minimizing the squared worst-case error on fixed nodes.

    Returns
    -------
    weights : ndarray of complex
    error : ErrorInterval
        Enclosure for the returned weights; ``degenerate`` is set when the
        Gram matrix was numerically singular (e.g. coincident nodes) and the
        minimum-norm solution was used.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    x = as_nodes(nodes, K.d)
    if len(x) == 0:
        raise ValueError("optimal_weights needs at least one node")
    G = gram_matrix(K, x)
    h = np.full(len(x), K.lambda0, dtype=complex)
    a, degenerate = _solve(G, h, ridge)
    err = worst_case_error_sq(QuadratureRule(x, a), K, G)
    if degenerate:
        err = ErrorInterval(**{**err.as_dict(), "degenerate": True}, notes=("min-norm fallback",))
    return a, err


def _objective(G: np.ndarray, lam0: float) -> float:
    h = np.full(len(G), lam0, dtype=complex)
    a, _ = _solve(G, h, 0.0)
    return float(lam0 - 2.0 * lam0 * np.sum(a).real + np.real(np.vdot(a, G @ a)))


# ---------------------------------------------------------------------------
# equispaced rules


def equispaced_rule(n: int, d: int = 1, weights="equal", trunc: TruncatedSpectrum | None = None) -> QuadratureRule:
    """Tensor grid with ``n`` points per axis and constant weights."""
    axis = np.arange(n) / n
    grid = np.stack([g.ravel() for g in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)
    N = n**d
    if weights == "equal":
        w = 1.0 / N
    elif weights == "optimal":
        if trunc is None:
            raise ValueError("optimal equispaced weights need the spectrum")
        partial, tail = trunc.sublattice_sum(n)
        w = trunc.lambda0 / (N * (partial + tail.mid))
    else:
        w = complex(weights)
    return QuadratureRule(grid, np.full(N, w, dtype=complex))


def equispaced_error_sq(n: int, trunc: TruncatedSpectrum, d: int = 1, weights="equal") -> ErrorInterval:
    """Closed-form squared error of the grid ``{j/n}^d`` with constant weights.

    With ``E = sum_{k in nZ^d, k != 0} lam_k`` the squared error is ``E`` for
    equal weights ``1/n^d``, and ``lam_0 E / (lam_0 + E)`` for the optimal
    (circulant) weights ``lam_0 / (n^d (lam_0 + E))``.  For a general constant
    weight ``w`` it is ``lam_0 - 2 lam_0 N Re w + N^2 |w|^2 (lam_0 + E)``.
    ``E`` uses the in-support sum plus the certified sublattice remainder.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d != trunc.d:
        raise ValueError(f"grid dimension {d} does not match spectrum dimension {trunc.d}")
    lam0 = trunc.lambda0
    partial, tail = trunc.sublattice_sum(n)
    count = int(np.sum(np.all(trunc.points % n == 0, axis=1)))
    rnd = 4.0 * EPS * (math.log2(max(count, 2)) + 2.0) * partial
    e_lo = max(partial - lam0 + tail.lo - rnd, 0.0)
    e_hi = partial - lam0 + tail.hi + rnd
    e_mid = partial - lam0 + tail.mid
    N = n**d
    if isinstance(weights, str) and weights == "equal":
        lo, hi, val = e_lo, e_hi, e_mid
    elif isinstance(weights, str) and weights == "optimal":
        def f(e):
            return lam0 * e / (lam0 + e) if lam0 + e > 0 else 0.0
        lo, hi, val = f(e_lo), f(e_hi), f(e_mid)
    else:
        w = complex(weights)
        def f(e):
            return lam0 - 2 * lam0 * N * w.real + N * N * abs(w) ** 2 * (lam0 + e)
        lo, hi, val = f(e_lo), f(e_hi), f(e_mid)
    slack = 8.0 * EPS * (lam0 + abs(hi))
    lo = max(lo - slack, 0.0)
    hi = max(hi + slack, lo)
    return ErrorInterval(lo, hi, val, lam0, notes=(f"E in [{float(e_lo)!r}, {float(e_hi)!r}]",),
                         truncation_slack=tail.hi - tail.lo, rounding_slack=slack)


# ---------------------------------------------------------------------------
# node optimization


def lattice_nodes(n: int, d: int) -> np.ndarray:
    """Rank-1 lattice ``{j z / n mod 1}`` with Korobov generator ``z = (1, g, g^2, ...)``.

    ``g`` maximizes the minimal toroidal distance between nodes; ``d = 1``
    gives the equispaced grid.
    """
    j = np.arange(n)[:, None]
    if d == 1 or n <= 2:
        z = np.ones(d, dtype=np.int64)
        return np.mod(j * z / n, 1.0)
    best, best_dist = None, -1.0
    for g in range(1, n):
        z = np.array([pow(g, i, n) for i in range(d)], dtype=np.int64)
        x = np.mod(j * z / n, 1.0)
        diff = np.abs(x[1:] - x[0])
        diff = np.minimum(diff, 1.0 - diff)
        dist = float(np.min(np.sum(diff * diff, axis=1)))
        if dist > best_dist + 1e-15:
            best, best_dist = x, dist
    return best


@dataclass
class _State:
    x: np.ndarray
    G: np.ndarray
    f: float


def _with_node(K: KernelApprox, st: _State, i: int, xi: np.ndarray) -> np.ndarray:
    G = st.G.copy()
    x = st.x.copy()
    x[i] = xi
    row = kernel_row(K, xi, x)
    G[i, :] = row
    G[:, i] = np.conj(row)
    G[i, i] = K.diagonal_value
    return G


def _descend(K: KernelApprox, x0: np.ndarray, sweeps: int, evals: int) -> _State:
    lam0 = K.lambda0
    n, d = x0.shape
    x = np.mod(x0, 1.0)
    G = gram_matrix(K, x)
    st = _State(x, G, _objective(G, lam0))
    width = 0.5 / n ** (1.0 / d)
    for _ in range(max(sweeps, 0)):
        improved = False
        for i in range(n):
            for c in range(d):
                base = st.x[i].copy()

                def trial(t):
                    xi = base.copy()
                    xi[c] = (xi[c] + t) % 1.0
                    G2 = _with_node(K, st, i, xi)
                    return _objective(G2, lam0), xi, G2

                a, b = -width, width
                p, q = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
                fp, fq = trial(p), trial(q)
                for _ in range(max(evals - 2, 0)):
                    if fp[0] <= fq[0]:
                        b, q, fq = q, p, fp
                        p = b - _GOLDEN * (b - a)
                        fp = trial(p)
                    else:
                        a, p, fp = p, q, fq
                        q = a + _GOLDEN * (b - a)
                        fq = trial(q)
                cand = fp if fp[0] <= fq[0] else fq
                if cand[0] < st.f * (1 - 1e-14) - 1e-300:
                    st.x[i] = cand[1]
                    st.G = cand[2]
                    st.f = cand[0]
                    improved = True
        width *= 0.5
        if not improved and width < 1e-9:
            break
    return st


def optimize_nodes(
    n: int,
    K: KernelApprox,
    restarts: int = 4,
    seed: int = 0,
    budget: int = 20,
    init=None,
    evals: int = 12,
    jobs: int = 1,
):
    """Multi-restart coordinate descent on node positions with optimal weights.

    Parameters
    ----------
    n : int
        Number of nodes.
    K : KernelApprox
    restarts : int
        Restart 0 starts from ``init`` (or the lattice), odd restarts from a
        randomly shifted lattice and even restarts from uniform random nodes.
    seed : int
        Restart ``r`` draws from ``SeedSequence([seed, r])``.
    budget : int
        Maximal number of coordinate sweeps per restart.
    evals : int
        Golden-section evaluations per coordinate.
    jobs : int
        Restarts evaluated concurrently; the result does not depend on it.

    Returns
    -------
    rule : QuadratureRule
    error : ErrorInterval
        Certified enclosure; ``error.hi`` is an upper bound on ``e_n(H_lam)^2``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    d = K.d
    if n == 0:
        return QuadratureRule.empty(d), worst_case_error_sq(QuadratureRule.empty(d), K)
    base = lattice_nodes(n, d)
    start0 = base if init is None else as_nodes(init, d)
    if len(start0) != n:
        raise ValueError(f"init has {len(start0)} nodes, expected {n}")

    def run(r: int) -> _State:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        if r == 0:
            x0 = start0
        elif r % 2 == 1:
            x0 = np.mod(base + rng.random(d), 1.0)
        else:
            x0 = rng.random((n, d))
        return _descend(K, x0, budget, evals)

    ids = list(range(max(int(restarts), 1)))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            states = list(pool.map(run, ids))
    else:
        states = [run(r) for r in ids]
    best = min(ids, key=lambda r: (states[r].f, r))
    x = states[best].x
    a, err = optimal_weights(x, K)
    return QuadratureRule(x, a), err


# ---------------------------------------------------------------------------
# CSV


def rule_to_csv(rule: QuadratureRule) -> str:
    """One line per node: ``x_1,...,x_d,re(a),im(a)`` after a header row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x_{j + 1}" for j in range(rule.d)] + ["re_a", "im_a"])
    for x, a in zip(rule.nodes, rule.weights):
        w.writerow([repr(float(v)) for v in x] + [repr(float(a.real)), repr(float(a.imag))])
    return buf.getvalue()


def rule_from_csv(text: str) -> QuadratureRule:
    rows = [r for r in csv.reader(text.splitlines()) if r]
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(-1, d + 2)
    return QuadratureRule(data[:, :d], data[:, d] + 1j * data[:, d + 1])
