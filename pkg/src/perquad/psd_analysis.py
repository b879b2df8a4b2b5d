"""PSD certification, the Schur-variant gap matrix and the kernel-matrix criterion.

The criterion used throughout: if ``K - alpha h h^*`` is PSD on the nodes
``x_1..x_n`` then every rule on these nodes has squared error at least
``||h||^2 - 1/alpha``.  For integration on ``H_lam`` the representer is the
constant ``h = lam_0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .kernels import KernelApprox, as_nodes, gram_matrix
from .quadrature import ErrorInterval, optimal_weights

__all__ = [
    "PsdVerdict",
    "CharactReport",
    "is_psd",
    "default_tolerance",
    "random_psd",
    "schur_gap_matrix",
    "charact_matrix",
    "verify_charact_direction",
    "largest_psd_alpha",
]

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class PsdVerdict:
    is_psd: bool
    min_eigenvalue: float
    tolerance: float

    def __bool__(self) -> bool:
        return self.is_psd


def _hermitian(M) -> np.ndarray:
    A = np.asarray(M)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    A = A.astype(complex if np.iscomplexobj(A) else float)
    scale = max(float(np.max(np.abs(A))) if A.size else 0.0, 1e-300)
    if A.size and float(np.max(np.abs(A - A.conj().T))) > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    return 0.5 * (A + A.conj().T)


def default_tolerance(M) -> float:
    """``1e-10 * ||M||_2 * n``."""
    A = np.asarray(M)
    if A.size == 0:
        return 0.0
    return 1e-10 * float(np.linalg.norm(A, 2)) * A.shape[0]


def is_psd(M, tol: float | None = None) -> PsdVerdict:
    """Minimum-eigenvalue test: PSD iff ``lambda_min >= -tol``.

    Parameters
    ----------
    M : array_like
        Hermitian up to 1e-12 relative; symmetrized before the eigensolve.
    tol : float, optional
        Defaults to :func:`default_tolerance`.
    """
    A = _hermitian(M)
    if tol is None:
        tol = default_tolerance(A)
    if A.shape[0] == 0:
        return PsdVerdict(True, float("inf"), float(tol))
    w = linalg.eigvalsh(A, check_finite=True)
    lam_min = float(w[0])
    return PsdVerdict(lam_min >= -tol, lam_min, float(tol))


def random_psd(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """``A A^*`` with complex Gaussian ``A`` of shape ``(n, rank)``."""
    r = n if rank is None else rank
    A = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    M = A @ A.conj().T
    return 0.5 * (M + M.conj().T)


def schur_gap_matrix(M) -> np.ndarray:
    """``M o conj(M) - (1/n) diag(M) diag(M)^T``, entries ``|M_jk|^2 - M_jj M_kk / n``."""
    A = np.asarray(M)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    dg = np.real(np.diag(A))
    return np.abs(A) ** 2 - np.outer(dg, dg) / n


def _charact_tolerance(K: KernelApprox, n: int, alpha: float) -> float:
    # scale by the operands: the difference cancels to ~0 at the sharp alpha
    return 1e-10 * n * (n * K.diagonal_value + alpha * n * K.lambda0**2)


def charact_matrix(K: KernelApprox, nodes, alpha: float) -> np.ndarray:
    """``[K(x_j, x_k) - alpha lam_0^2]``, the criterion matrix for ``h = lam_0``."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    G = gram_matrix(K, nodes)
    return G - alpha * K.lambda0**2


@dataclass(frozen=True)
class CharactReport:
    """Outcome of checking "criterion PSD implies error bound" on one node set."""

    alpha: float
    verdict: PsdVerdict
    implied_bound: float
    error: ErrorInterval
    slack: float
    holds: bool

    @property
    def gap(self) -> float:
        return self.error.value - self.implied_bound


def verify_charact_direction(K: KernelApprox, nodes, alpha: float, tol: float | None = None) -> CharactReport:
    """Check the implication at fixed nodes.

    If the criterion matrix is PSD (up to ``tol``), the optimal-weight error
    computed with the same truncated kernel must be at least
    ``lam_0 - 1/alpha`` up to ``tol * ||a||_2^2`` and rounding.  The truncated
    kernel defines an RKHS of its own, so the implication applies to it
    directly; the discarded part is PSD and only increases the true error.
    The default ``tol`` scales with the Gram diagonal and ``alpha lam_0^2``
    rather than with the difference, which cancels at the sharp ``alpha``.

    Raises
    ------
    AssertionError
        If the matrix is PSD and the bound is violated.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = as_nodes(nodes, K.d)
    C = charact_matrix(K, x, alpha)
    if tol is None:
        tol = _charact_tolerance(K, len(x), alpha)
    verdict = is_psd(C, tol)
    bound = K.lambda0 - 1.0 / alpha
    a, err = optimal_weights(x, K)
    slack = max(verdict.tolerance, 0.0) * float(np.sum(np.abs(a) ** 2)) + err.rounding_slack
    holds = (not verdict.is_psd) or err.value >= bound - slack
    report = CharactReport(float(alpha), verdict, float(bound), err, float(slack), bool(holds))
    if not holds:
        raise AssertionError(
            f"criterion PSD at alpha={alpha!r} but error {err.value!r} < {bound!r} - {slack!r}"
        )
    return report


def largest_psd_alpha(K: KernelApprox, nodes, tol: float | None = None, lo_exp: int = -60, hi_exp: int = 60) -> float:
    """Largest dyadic ``alpha = 2^m`` keeping the criterion matrix PSD (0 if none)."""
    x = as_nodes(nodes, K.d)

    def ok(m):
        t = _charact_tolerance(K, len(x), 2.0**m) if tol is None else tol
        return is_psd(charact_matrix(K, x, 2.0**m), t).is_psd

    if not ok(lo_exp):
        return 0.0
    if ok(hi_exp):
        return 2.0**hi_exp
    lo, hi = lo_exp, hi_exp
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 2.0**lo
