"""Discrete fractional power-law laws and the sojourn-time models.

The p-th order law puts mass on k = 1, 2, ... with hazard ``p / (p + k)``::

    P(X = k) = (1 - k / (p + k)) * prod_{i<k} i / (p + i)

Its survival ``P(X >= k) = Gamma(p+1) Gamma(k) / Gamma(p+k)`` decays like
``Gamma(p+1) k**-p``, so moments of order ``r >= p`` are infinite.  Survival
is the primitive everywhere; the pmf is derived from it in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln, hyp2f1

from ._numerics import log_gamma_ratio, tail_sum
from .errors import DomainError

K_MAX = 2**62
CLOSED_FORM_ORDERS = (0.5, 1.0, 2.0)


def _as_k(k):
    k = np.asarray(k, dtype=float)
    if np.any(~(k >= 1)):
        raise DomainError("k must be >= 1")
    return k


@dataclass(frozen=True)
class FracPowerLaw:
    """p-th order discrete fractional power law on {1, 2, ...}.

    Used both for batch sizes and for discrete sojourn times.  Functions of
    ``k`` accept arrays and real ``k >= 1`` (the log-gamma continuation).
    """

    p: float

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise DomainError(f"order p must be positive and finite, got {self.p}")

    # --- tail and mass -------------------------------------------------
    def _log_survival(self, k):
        return gammaln(self.p + 1.0) - log_gamma_ratio(k, self.p)

    def log_survival(self, k):
        return self._log_survival(_as_k(k))

    def survival(self, k):
        """P(X >= k)."""
        return np.exp(self.log_survival(k))

    def log_pmf(self, k):
        k = _as_k(k)
        return self._log_survival(k) + np.log(self.p / (self.p + k))

    def pmf(self, k):
        return np.exp(self.log_pmf(k))

    def tail(self, s):
        """P(S > s) for real s >= 0 when the law is used as a sojourn time."""
        s = np.asarray(s, dtype=float)
        return np.where(s < 0, 1.0, self.survival(np.floor(np.maximum(s, 0.0)) + 1.0))

    def log_tail(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return self._log_survival(np.floor(s) + 1.0)

    # --- moments -------------------------------------------------------
    def moment_finite(self, r: float) -> bool:
        if not r > 0:
            raise DomainError("moment order must be positive")
        return r < self.p

    def moment(self, r: float) -> float:
        """E[X**r]; ``inf`` when ``r >= p``."""
        if not self.moment_finite(r):
            return math.inf
        head_n = 4096
        k = np.arange(1, head_n, dtype=float)
        head = float(np.sum(k**r * self.pmf(k)))
        return head + tail_sum(lambda x: np.exp(r * np.log(x) + self.log_pmf(x)), float(head_n))

    # --- sampling ------------------------------------------------------
    def sample(self, u, k_max: int = K_MAX):
        """Inverse-CDF draw: smallest k with ``P(X >= k+1) <= u``.

        Values that would exceed ``k_max`` are returned as ``k_max``; use
        :meth:`sample_flagged` to see which.
        """
        return self.sample_flagged(u, k_max)[0]

    def sample_flagged(self, u, k_max: int = K_MAX):
        """Like :meth:`sample` but also returns the boolean overflow mask.

        The search starts at the asymptotic inverse ``(Gamma(p+1)/u)**(1/p)``,
        gallops outward to a bracket and then bisects, so the typical cost is
        a handful of log-survival evaluations per draw.  Above ``2**53`` the
        comparison is done in floating point and may be off by one.
        """
        u = np.asarray(u, dtype=float)
        if u.ndim > 1:
            k, over = self.sample_flagged(u.ravel(), k_max)
            return k.reshape(u.shape), over.reshape(u.shape)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        if np.any(~((u > 0) & (u <= 1))):
            raise DomainError("u must lie in (0, 1]")
        log_u = np.log(u)
        k_max = int(k_max)
        p = self.p

        def ok(k, lu):
            # P(X >= k+1) <= u, monotone false -> true in k
            return self._log_survival(k.astype(float) + 1.0) <= lu

        with np.errstate(over="ignore"):
            guess = np.exp((gammaln(p + 1.0) - log_u) / p)
        guess = np.clip(np.nan_to_num(guess, posinf=k_max), 1, k_max)
        g = np.floor(guess).astype(np.int64)

        out = np.empty(u.shape, dtype=np.int64)
        overflow = np.zeros(u.shape, dtype=bool)
        at_g = ok(g, log_u)

        # bracket: cond(lo) false (lo = 0 is always false), cond(hi) true
        lo = np.where(at_g, 0, g)
        hi = np.where(at_g, g, 0)
        # gallop downward for at_g, upward otherwise
        idx = np.nonzero(at_g)[0]
        step = np.ones(idx.size, dtype=np.int64)
        while idx.size:
            cand = np.maximum(hi[idx] - step, 0)
            good = cand > 0
            c_ok = np.zeros(idx.size, dtype=bool)
            if np.any(good):
                c_ok[good] = ok(cand[good], log_u[idx][good])
            hi[idx] = np.where(c_ok, cand, hi[idx])
            lo[idx] = np.where(c_ok, lo[idx], cand)
            keep = c_ok
            idx, step = idx[keep], step[keep] * 2
        idx = np.nonzero(~at_g)[0]
        step = np.ones(idx.size, dtype=np.int64)
        while idx.size:
            cand = np.minimum(lo[idx] + step, k_max)
            c_ok = ok(cand, log_u[idx])
            capped = (~c_ok) & (cand >= k_max)
            overflow[idx[capped]] = True
            hi[idx] = np.where(c_ok | capped, cand, hi[idx])
            lo[idx] = np.where(c_ok | capped, lo[idx], cand)
            keep = ~(c_ok | capped)
            idx, step = idx[keep], step[keep] * 2
        # bisection on (lo, hi]
        idx = np.nonzero((hi - lo > 1) & ~overflow)[0]
        while idx.size:
            mid = lo[idx] + (hi[idx] - lo[idx]) // 2
            m_ok = ok(mid, log_u[idx])
            hi[idx] = np.where(m_ok, mid, hi[idx])
            lo[idx] = np.where(m_ok, lo[idx], mid)
            idx = idx[hi[idx] - lo[idx] > 1]
        out[:] = hi
        if scalar:
            return int(out[0]), bool(overflow[0])
        return out, overflow

    # --- generating function --------------------------------------------
    def pgf(self, z):
        """E[z**X] for z in [0, 1).

        Closed forms for p in {1/2, 1, 2} when z > 1/2; otherwise (and for
        every other p) the power series is summed until the tail bound
        ``P(X >= K+1) z**(K+1) / (1 - z)`` drops below 1e-17.
        """
        z = np.asarray(z, dtype=float)
        if np.any((z < 0) | (z >= 1)):
            raise DomainError("pgf argument must lie in [0, 1)")
        out = np.empty_like(z)
        closed = (z > 0.5) & (self.p in CLOSED_FORM_ORDERS)
        if np.any(closed):
            out[closed] = self._pgf_closed(z[closed])
        rest = ~closed
        if np.any(rest):
            out[rest] = [self._pgf_sum(float(v)) for v in np.ravel(z[rest])]
        return out if out.ndim else out[()]

    def closed_form(self, z):
        """The closed-form pgf for p in {1/2, 1, 2}, any z in (0, 1)."""
        if self.p not in CLOSED_FORM_ORDERS:
            raise DomainError(f"no closed form for p = {self.p}")
        z = np.asarray(z, dtype=float)
        if np.any((z <= 0) | (z >= 1)):
            raise DomainError("closed form needs z in (0, 1)")
        return self._pgf_closed(z)

    def _pgf_closed(self, z):
        w = 1.0 - z
        if self.p == 1.0:
            return 1.0 + w / z * np.log1p(-z)
        if self.p == 2.0:
            return 1.0 - 2.0 * w * (z + w * np.log1p(-z)) / z**2
        return 1.0 - np.sqrt(w / z) * np.arcsin(np.sqrt(z))

    def _pgf_sum(self, z: float, tol: float = 1e-17) -> float:
        if z == 0.0:
            return 0.0
        total, start, chunk = 0.0, 1, 1024
        while True:
            k = np.arange(start, start + chunk, dtype=float)
            total += float(np.sum(np.exp(self.log_pmf(k) + k * math.log(z))))
            end = start + chunk
            bound = float(self.survival(end)) * z**end / (1.0 - z)
            if bound < tol:
                return total
            start, chunk = end, min(chunk * 2, 1 << 22)

    def pgf_complement(self, x):
        """``1 - E[(1 - x)**X]`` for x in (0, 1], accurate as x -> 0.

        This is P(at least one of X customers survives) when each survives
        independently with probability x.
        """
        x = np.asarray(x, dtype=float)
        if np.any((x <= 0) | (x > 1)):
            raise DomainError("complement argument must lie in (0, 1]")
        out = np.empty_like(x)
        small = x < 0.5
        xs = x[small]
        if self.p == 1.0:
            out[small] = -xs * np.log(xs) / (1.0 - xs)
        elif self.p == 0.5:
            out[small] = np.sqrt(xs / (1.0 - xs)) * np.arccos(np.sqrt(xs))
        elif self.p == 2.0:
            w = 1.0 - xs
            out[small] = 2.0 * xs * (w + xs * np.log(xs)) / w**2
        else:
            out[small] = _complement_general(self.p, xs)
        big = ~small
        if np.any(big):
            out[big] = 1.0 - np.atleast_1d(self.pgf(1.0 - x[big]))
        return out if out.ndim else out[()]


def _complement_general(p: float, x):
    """``x * 2F1(1, 1; p+1; 1-x)`` for x < 1/2.

    Non-integer p uses the 1-z connection formula, which splits off the
    singular ``x**p`` part exactly; scipy's direct evaluation loses digits
    there for p < 1.
    """
    if abs(p - round(p)) < 1e-3:
        return x * hyp2f1(1.0, 1.0, p + 1.0, 1.0 - x)
    # 2F1(1, 1; 2-p; x) = sum_n n! / (2-p)_n x**n
    term = np.ones_like(x)
    series = np.ones_like(x)
    for n in range(1, 80):
        term = term * x * n / (1.0 - p + n)
        series += term
    regular = p / (p - 1.0) * x * series
    singular = math.gamma(p + 1.0) * math.gamma(1.0 - p) * (x / (1.0 - x)) ** p
    return regular + singular


@dataclass(frozen=True)
class ExpSojourn:
    """Exponential sojourn time with rate ``mu``."""

    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError("rate mu must be positive")

    def tail(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-self.mu * np.maximum(s, 0.0))

    def log_tail(self, s):
        return -self.mu * np.maximum(np.asarray(s, dtype=float), 0.0)

    def moment(self, r: float) -> float:
        return math.gamma(r + 1.0) / self.mu**r

    def moment_finite(self, r: float) -> bool:
        return True


@dataclass(frozen=True)
class Deterministic:
    """Every customer stays exactly ``d`` time units."""

    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError("deterministic sojourn must be positive")

    def tail(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.d, 1.0, 0.0)

    def log_tail(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.d, 0.0, -np.inf)

    def moment(self, r: float) -> float:
        return self.d**r

    def moment_finite(self, r: float) -> bool:
        return True


@dataclass(frozen=True)
class PointMass:
    """Batch of fixed size ``k``; the light-tailed reference used in tests."""

    k: int = 1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError("fixed batch size must be a positive integer")

    def log_pmf(self, k):
        k = _as_k(k)
        return np.where(k == self.k, 0.0, -np.inf)

    def pmf(self, k):
        return np.exp(self.log_pmf(k))

    def survival(self, k):
        k = _as_k(k)
        return np.where(k <= self.k, 1.0, 0.0)

    def sample_flagged(self, u, k_max: int = K_MAX):
        u = np.asarray(u, dtype=float)
        if np.any(~((u > 0) & (u <= 1))):
            raise DomainError("u must lie in (0, 1]")
        kk = min(int(self.k), int(k_max))
        over = int(self.k) > int(k_max)
        if u.ndim == 0:
            return kk, over
        return np.full(u.shape, kk, dtype=np.int64), np.full(u.shape, over)

    def sample(self, u, k_max: int = K_MAX):
        return self.sample_flagged(u, k_max)[0]

    def pgf(self, z):
        return np.asarray(z, dtype=float) ** self.k

    def pgf_complement(self, x):
        x = np.asarray(x, dtype=float)
        return -np.expm1(self.k * np.log1p(-x))

    def moment_finite(self, r: float) -> bool:
        return True

    def moment(self, r: float) -> float:
        return float(self.k) ** r


SojournModel = Union[ExpSojourn, FracPowerLaw, Deterministic]
BatchLaw = Union[FracPowerLaw, PointMass]


def geometric_pmf(k, prob: float):
    """Geometric law on {1, 2, ...}; the light-tailed reference curve."""
    k = _as_k(k)
    return prob * (1.0 - prob) ** (k - 1.0)
