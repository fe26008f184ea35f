"""Truncated power series in the generating-function variable z.

A :class:`TruncatedSeries` of order N holds c_0..c_N; everything above z**N
is unknown, not zero.  Arithmetic only combines series of equal order.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .errors import DomainError, UsageError

DEFAULT_ORDER = 512


class TruncatedSeries:
    """Immutable coefficient vector ``c[n]`` of ``z**n`` for n = 0..order."""

    __slots__ = ("_c",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float, copy=True).ravel()
        if c.size == 0:
            raise UsageError("a series needs at least the constant term")
        c.flags.writeable = False
        self._c = c

    @classmethod
    def constant(cls, value: float, order: int) -> "TruncatedSeries":
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def monomial(cls, power: int, order: int, coeff: float = 1.0) -> "TruncatedSeries":
        c = np.zeros(order + 1)
        if power <= order:
            c[power] = coeff
        return cls(c)

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def order(self) -> int:
        return self._c.size - 1

    def __len__(self):
        return self._c.size

    def __repr__(self):
        head = ", ".join(f"{v:.6g}" for v in self._c[:4])
        return f"TruncatedSeries(order={self.order}, [{head}{', ...' if self.order > 3 else ''}])"

    def __call__(self, z):
        """Horner evaluation of the retained coefficients."""
        z = np.asarray(z, dtype=float)
        acc = np.zeros_like(z)
        for c in self._c[::-1]:
            acc = acc * z + c
        return acc if acc.ndim else float(acc)

    def __add__(self, other):
        return add(self, other)

    def __neg__(self):
        return TruncatedSeries(-self._c)

    def __sub__(self, other):
        return add(self, -other)

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            return mul(self, other)
        return TruncatedSeries(self._c * float(other))

    __rmul__ = __mul__


def _check_orders(a: TruncatedSeries, b: TruncatedSeries):
    if a.order != b.order:
        raise UsageError(f"series orders differ: {a.order} vs {b.order}")


def add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    _check_orders(a, b)
    return TruncatedSeries(a.coeffs + b.coeffs)


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated at the common order."""
    _check_orders(a, b)
    n = a.order + 1
    return TruncatedSeries(np.convolve(a.coeffs, b.coeffs)[:n])


def exp_series(a: TruncatedSeries) -> TruncatedSeries:
    """exp(a) by ``n b_n = sum_{k=1..n} k a_k b_{n-k}``."""
    c = a.coeffs
    if not math.isfinite(c[0]):
        raise DomainError("constant term must be finite")
    n_tot = c.size
    ka = np.arange(n_tot) * c
    b = np.empty(n_tot)
    b[0] = math.exp(c[0])
    for n in range(1, n_tot):
        b[n] = np.dot(ka[1:n + 1], b[n - 1::-1]) / n
    return TruncatedSeries(b)


def log_series(a: TruncatedSeries) -> TruncatedSeries:
    """Inverse of :func:`exp_series`; needs a positive constant term."""
    b = a.coeffs
    if not b[0] > 0:
        raise DomainError("log of a series needs a positive constant term")
    n_tot = b.size
    out = np.empty(n_tot)
    out[0] = math.log(b[0])
    k = np.arange(n_tot)
    for n in range(1, n_tot):
        # n b_n = sum_{k=1..n} k a_k b_{n-k}, solved for a_n
        s = np.dot(k[1:n] * out[1:n], b[n - 1:0:-1]) if n > 1 else 0.0
        out[n] = (n * b[n] - s) / (n * b[0])
    return TruncatedSeries(out)


def _binomial_cutoff(order: int, a: float, b: float, tol: float, j_cap: int) -> int:
    # dropping j > J costs at most (a+b)**J * P(Bin(J, a/(a+b)) <= order)
    c = a + b
    theta = a / c

    def bound(j):
        return math.exp(j * math.log(c)) * float(binom.cdf(order, j, theta))

    hi = max(order + 1, 16)
    while bound(hi) >= tol:
        hi *= 2
        if hi > j_cap:
            raise DomainError(
                f"binomial expansion would need more than {j_cap} batch terms "
                f"(a={a:g}); use the thinning kernel in infserver.analytic"
            )
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound(mid) < tol:
            hi = mid
        else:
            lo = mid
    return hi


def affine_compose(dist, a: float, b: float, order: int = DEFAULT_ORDER, *,
                   tol: float = 1e-16, j_cap: int = 1 << 24) -> TruncatedSeries:
    """Series of ``z -> phi(a z + b)`` where phi is the pgf of ``dist``.

    ``dist`` must provide a vectorised ``log_pmf`` on k >= 1 (support starts
    at 1).  The pgf is expanded as ``sum_k pmf(k) (a z + b)**k`` with each
    power opened binomially; batch sizes beyond the cutoff J contribute less
    than ``tol`` to every retained coefficient.  The cost is O(J * order)
    and J grows like ``order / a``, so tiny ``a`` is refused.
    """
    if a < 0 or b < 0 or a + b > 1.0 + 1e-15:
        raise DomainError("need a >= 0, b >= 0 and a + b <= 1")
    if a == 0.0:
        value = 1.0 if b >= 1.0 else float(dist.pgf(b)) if b > 0 else 0.0
        return TruncatedSeries.constant(value, order)
    c = min(a + b, 1.0)
    theta = min(a / c, 1.0)
    J = _binomial_cutoff(order, a, b, tol, j_cap)
    out = np.zeros(order + 1)
    n = np.arange(order + 1, dtype=float)
    log_c = math.log(c)
    chunk = max(1, 2_000_000 // (order + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        lt, l1t = math.log(theta), (math.log1p(-theta) if theta < 1 else -math.inf)
        for start in range(1, J + 1, chunk):
            j = np.arange(start, min(start + chunk, J + 1), dtype=float)[:, None]
            valid = n[None, :] <= j
            log_binom = gammaln(j + 1) - gammaln(n + 1) - gammaln(np.maximum(j - n, 0) + 1)
            # 0 * log(0) must be 0 when theta == 1 and j == n
            rest = np.where(j - n == 0, 0.0, (j - n) * l1t)
            logs = dist.log_pmf(j) + j * log_c + log_binom + n * lt + rest
            terms = np.where(valid, np.exp(logs), 0.0)
            out += terms.sum(axis=0)
    return TruncatedSeries(out)
