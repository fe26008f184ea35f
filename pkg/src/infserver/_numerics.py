"""Small numerical kernels shared by the distribution and queue modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln, roots_jacobi, roots_legendre

# B_{2j} / (2j (2j-1)) for j = 1..7, the Stirling series coefficients.
_STIRLING = np.array([
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
])
_STIRLING_CUTOFF = 32.0


def log_gamma_ratio(x, a):
    """Return ``log(Gamma(x + a) / Gamma(x))`` for ``x >= 1`` and ``a > 0``.

    Below the cutoff the plain ``gammaln`` difference is exact enough.  Above
    it the two Stirling series are subtracted term by term so that the
    result keeps full relative precision up to ``x ~ 1e300``; the naive
    difference loses every digit by ``x ~ 1e16``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < _STIRLING_CUTOFF
    if np.any(small):
        xs = x[small]
        out[small] = gammaln(xs + a) - gammaln(xs)
    big = ~small
    if np.any(big):
        xb = x[big]
        y = xb + a
        val = (xb - 0.5) * np.log1p(a / xb) - a + a * np.log(y)
        corr = np.zeros_like(xb)
        ry, rx = 1.0 / y, 1.0 / xb
        ry2, rx2 = ry * ry, rx * rx
        py, px = ry.copy(), rx.copy()
        for c in _STIRLING:
            corr += c * (py - px)
            py *= ry2
            px *= rx2
        out[big] = val + corr
    return out if out.ndim else out[()]


def tail_sum(f, start: float, *, rel: float = 1e-13) -> float:
    """Sum ``f(k)`` for ``k = start, start+1, ...`` via Euler-Maclaurin.

    ``f`` must accept real arguments, be smooth on ``[start - 1, inf)`` and
    vary on a scale much longer than one unit there (``start`` of a few
    thousand is plenty for power-law terms).  The integral runs over
    ``x = start * e^t``.
    """
    def g(t):
        x = start * np.exp(t)
        return float(f(x)) * x

    # stop where x would overflow; summable terms are long negligible there
    t_end = 700.0 - float(np.log(start))
    integral, _ = integrate.quad(g, 0.0, t_end, epsabs=0.0, epsrel=rel, limit=400)
    h = 0.5
    deriv = (float(f(start + h)) - float(f(start - h))) / (2 * h)
    return integral + 0.5 * float(f(start)) - deriv / 12.0


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    x, w = roots_legendre(n)
    return x, w


@lru_cache(maxsize=None)
def gauss_jacobi_left(n: int, beta: float):
    """Nodes/weights on [0, 1] for the weight ``y**beta`` (``beta > -1``)."""
    x, w = roots_jacobi(n, 0.0, beta)
    y = 0.5 * (x + 1.0)
    w = w / 2.0 ** (beta + 1.0)
    return y, w


def panel_rule(edges, n: int = 16):
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(n)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights
