"""Truncated reproducing kernels of ``H_lam`` and their Gram matrices."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .spectra import TruncatedSpectrum

__all__ = [
    "KernelApprox",
    "kernel_eval",
    "kernel_row",
    "gram_matrix",
    "as_nodes",
    "matrix_to_csv",
    "matrix_from_csv",
]

_CHUNK = 1 << 20  # max entries of the phase matrix built at once
_FACTOR_MIN_NODES = 64  # Gram assembly switches to the factored form here


@dataclass(frozen=True)
class KernelApprox:
    """Kernel ``sum_{k in support} lam_k e_k(x - y)`` of a truncated spectrum.

    Attributes
    ----------
    trunc : TruncatedSpectrum
    diagonal_value : float
        In-support l1 mass, the exact value of ``K(x, x)``.
    tail_upper : float
        Certified bound on the discarded spectral mass, so
        ``|K_true(x, y) - K(x, y)| <= tail_upper`` for all ``x, y``.
    """

    trunc: TruncatedSpectrum
    diagonal_value: float
    tail_upper: float

    @classmethod
    def from_truncation(cls, trunc: TruncatedSpectrum) -> "KernelApprox":
        return cls(trunc, float(np.sum(trunc.values)), float(trunc.tail_upper))

    @property
    def d(self) -> int:
        return self.trunc.d

    @property
    def lambda0(self) -> float:
        return self.trunc.lambda0

    @property
    def symmetric(self) -> bool:
        return bool(getattr(self.trunc.spec, "symmetric", True))


def as_nodes(nodes, d: int) -> np.ndarray:
    """Coerce to an ``(n, d)`` float array reduced mod 1."""
    x = np.asarray(nodes, dtype=float)
    if x.ndim == 0 or (x.ndim == 1 and d == 1):
        x = x.reshape(-1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {x.shape[1]}")
    return np.mod(x, 1.0)


def _reduce(t: np.ndarray) -> np.ndarray:
    # representative of t mod 1 in (-1/2, 1/2]
    r = t - np.round(t)
    r[r == -0.5] = 0.5
    return r


def _eval_differences(K: KernelApprox, diffs: np.ndarray) -> np.ndarray:
    """Kernel at an ``(m, d)`` array of differences ``x - y``."""
    diffs = _reduce(diffs)
    pts = K.trunc.points.astype(float)
    vals = K.trunc.values
    out = np.empty(len(diffs), dtype=complex)
    step = max(1, _CHUNK // max(len(pts), 1))
    for s in range(0, len(diffs), step):
        phase = 2.0 * np.pi * (diffs[s : s + step] @ pts.T)
        re = np.cos(phase) @ vals
        if K.symmetric:
            out[s : s + step] = re
        else:
            out[s : s + step] = re + 1j * (np.sin(phase) @ vals)
    return out


def kernel_eval(K: KernelApprox, x, y) -> complex:
    """``K(x, y)``; Hermitian and real-valued for symmetric spectra."""
    xa, ya = as_nodes(x, K.d), as_nodes(y, K.d)
    if len(xa) != 1 or len(ya) != 1:
        raise ValueError("kernel_eval takes single points")
    if np.array_equal(xa, ya):
        return complex(K.diagonal_value)
    return complex(_eval_differences(K, xa - ya)[0])


def kernel_row(K: KernelApprox, x, nodes) -> np.ndarray:
    """``[K(x, y_j)]_j`` for one point ``x`` against all nodes."""
    xa, ya = as_nodes(x, K.d), as_nodes(nodes, K.d)
    row = _eval_differences(K, xa - ya)
    row[np.all(xa == ya, axis=1)] = K.diagonal_value
    return row


def gram_matrix(K: KernelApprox, nodes) -> np.ndarray:
    """Hermitian matrix ``[K(x_j, x_k)]`` with the diagonal set to ``diagonal_value``.

    Only the strict upper triangle is evaluated; the lower triangle is its
    conjugate, so the result is exactly Hermitian.
    """
    x = as_nodes(nodes, K.d)
    n = len(x)
    G = np.zeros((n, n), dtype=complex)
    if n == 0:
        return G
    if n >= _FACTOR_MIN_NODES:
        return _gram_factored(K, x)
    iu, ju = np.triu_indices(n, 1)
    if len(iu):
        vals = _eval_differences(K, x[iu] - x[ju])
        same = np.all(x[iu] == x[ju], axis=1)
        vals[same] = K.diagonal_value
        G[iu, ju] = vals
        G[ju, iu] = np.conj(vals)
    G[np.arange(n), np.arange(n)] = K.diagonal_value
    return G


def _gram_factored(K: KernelApprox, x: np.ndarray) -> np.ndarray:
    """``E diag(lam) E^*`` with ``E_jk = e_k(x_j)``, accumulated over support chunks.

    Same values as the difference form up to rounding, but the work is a
    matrix product instead of ``n^2 |support|`` trigonometric evaluations.
    """
    n = len(x)
    pts = K.trunc.points.astype(float)
    vals = K.trunc.values
    step = max(1, _CHUNK // n)
    G = np.zeros((n, n), dtype=float if K.symmetric else complex)
    for s in range(0, len(pts), step):
        phase = 2.0 * np.pi * (x @ pts[s : s + step].T)
        c, sn = np.cos(phase), np.sin(phase)
        v = vals[s : s + step]
        if K.symmetric:
            G += (c * v) @ c.T + (sn * v) @ sn.T
        else:
            E = c + 1j * sn
            G += (E * v) @ E.conj().T
    G = 0.5 * (G + G.conj().T)
    G = G.astype(complex)
    same = np.all(x[:, None, :] == x[None, :, :], axis=2)
    G[same] = K.diagonal_value
    return G


def matrix_to_csv(M: np.ndarray) -> str:
    """Row-major CSV; each entry becomes a ``re,im`` pair."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{p}_{j}" for j in range(M.shape[1]) for p in ("re", "im")])
    for row in M:
        w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])
    return buf.getvalue()


def matrix_from_csv(text: str | Iterable[str]) -> np.ndarray:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    rows = list(csv.reader(lines))[1:]
    data = np.array([[float(v) for v in r] for r in rows if r], dtype=float)
    if data.size == 0:
        return np.zeros((0, 0), dtype=complex)
    return data[:, 0::2] + 1j * data[:, 1::2]
