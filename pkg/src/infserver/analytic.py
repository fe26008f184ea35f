"""Queue-length distributions of the M^X/G/inf queue from generating functions.

Starting empty, the number in system at time t has

    log E[z^L(t)] = -lam * int_0^t (1 - E[z^M(s)]) ds
                  = lam * sum_{n>=1} (z^n - 1) * beta_n(t),

where M(s) is the number of a batch still present s after arrival and
``beta_n(t) = int_0^t P(M(s) = n) ds``.  So L(t) is compound Poisson and
``sum_n beta_n(t) = int_0^t P(S_(X) > s) ds``; the stationary law is the
t -> inf limit, which exists iff E[S_(X)] is finite.

For the power-law batch the thinned count has a one-dimensional integral
form.  Writing the batch law as a Beta mixture of geometrics and keeping
each customer with probability a gives, for n >= 1,

    P(M = n) = p * int_0^1 r^(n-1) (1-r)^p kappa_a(r) dr,
    kappa_a(r) = (a / (a + (1-a) r))^p,

so every beta_n(t) is the same integral with kappa replaced by the
sojourn kernel W(r) = int_0^t kappa_{P(S>s)}(r) ds.  Discrete sojourns
make W an exact sum over whole time units (P(S > s) = P(S >= floor(s)+1));
the infinite sum gets an Euler-Maclaurin tail.  Exponential sojourns use
Gauss-Legendre in v = mu*s, i.e. in log u with u = exp(-mu*s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, psi, spence

from ._numerics import gauss_jacobi_left, log_gamma_ratio, panel_rule, tail_sum
from .dist import Deterministic, ExpSojourn, FracPowerLaw, SojournModel
from .errors import DivergenceError, DomainError, NumericalFailure, UsageError
from .series import DEFAULT_ORDER, TruncatedSeries, exp_series

_NODES = 16
_EXACT_TERMS = 4096
_NEG_TOL = 1e-8
_CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class ArrivalSpec:
    """Poisson batch arrivals at rate ``lam`` with i.i.d. batch sizes and sojourns."""

    lam: float
    batch: FracPowerLaw
    sojourn: SojournModel

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError("arrival rate must be finite and non-negative")


@dataclass
class QueueDistribution:
    """P(L = n) for n = 0..N plus the mass beyond N.

    ``time`` is None for the stationary law.  ``se`` is filled in for
    empirical (simulated) distributions.
    """

    probs: np.ndarray
    deficit: float
    time: Optional[float] = None
    se: Optional[np.ndarray] = None
    source: str = "analytic"

    @property
    def order(self) -> int:
        return self.probs.size - 1

    def tail_beyond(self, n: int) -> float:
        return float(self.probs[n + 1:].sum() + self.deficit)


# ----------------------------------------------------------------------------
# quadrature in y = -log r
# ----------------------------------------------------------------------------
@dataclass
class _YRule:
    # first panel [0, y0] is Gauss-Jacobi; the rest is composite Gauss-Legendre
    y_jac: np.ndarray           # nodes for the weight y**p
    w_jac: np.ndarray
    y_jac_total: np.ndarray     # nodes for the weight y**(p-1)
    w_jac_total: np.ndarray
    y_leg: np.ndarray
    w_leg: np.ndarray


def _y_rule(p: float, order: int, y_max: float) -> _YRule:
    y0 = 1.0 / (4.0 * max(order, 1))
    t_b, w_b = gauss_jacobi_left(_NODES, p)
    t_t, w_t = gauss_jacobi_left(_NODES, p - 1.0)
    geo = [y0]
    while geo[-1] < 1.0:
        geo.append(min(2.0 * geo[-1], 1.0))
    uni = np.arange(1.0, y_max + 0.5, 0.5)[1:]
    edges = np.concatenate([geo, uni])
    y_leg, w_leg = panel_rule(edges, _NODES)
    return _YRule(
        y_jac=y0 * t_b,
        w_jac=y0 ** (p + 1.0) * w_b,
        y_jac_total=y0 * t_t,
        w_jac_total=y0**p * w_t,
        y_leg=y_leg,
        w_leg=w_leg,
    )


def _kappa(log_a, y, p):
    """kappa_a(r) = (a / (a + (1-a) r))**p with r = exp(-y), from log a."""
    # log((1-a) r / a) = log(1-a) - log a - y
    with np.errstate(divide="ignore"):
        ell = np.log(-np.expm1(log_a)) - log_a - y
    return np.exp(-p * np.logaddexp(0.0, ell))


# ----------------------------------------------------------------------------
# sojourn kernels W(r)
# ----------------------------------------------------------------------------
def _kernel_discrete_finite(sojourn: FracPowerLaw, p: float, t: float):
    m = int(math.floor(t))
    frac = t - m
    k = np.arange(m + 1, dtype=float)
    log_s = sojourn.log_survival(k + 1.0)
    wts = np.ones(m + 1)
    wts[m] = frac

    def W(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for lo in range(0, m + 1, 2048):
            ls = log_s[lo:lo + 2048]
            kap = _kappa(ls[None, :], y[:, None], p)
            out += kap @ wts[lo:lo + 2048]
        return out

    return W


def _kernel_discrete_infinite(sojourn: FracPowerLaw, p: float, y_max: float):
    q = sojourn.p
    if not (p * q > 1 and q > 1):
        raise DivergenceError("sojourn kernel diverges unless pq > 1 and q > 1")
    K0 = _EXACT_TERMS
    k = np.arange(K0, dtype=float)
    log_s_head = sojourn.log_survival(k + 1.0)
    lg = gammaln(q + 1.0)

    def log_s(x):
        return lg - log_gamma_ratio(x + 1.0, q)

    # kappa ~ (s/r)^p ~ x^(-pq) beyond the transition x* ~ (Gamma(q+1)/r)^(1/q)
    x_star = math.exp((lg + y_max) / q)
    T = max(0.0, math.log(x_star / K0)) + 40.0 / (p * q - 1.0) + 2.0
    tau, w_tau = panel_rule(np.arange(0.0, T + 0.5, 0.5), _NODES)
    x_tau = K0 * np.exp(tau)
    ls_tau = log_s(x_tau)
    jac_tau = w_tau * x_tau
    ls_K0 = float(log_s(np.array([float(K0)]))[0])
    dls_K0 = float(psi(K0 + 1.0) - psi(K0 + 1.0 + q))
    X_end = K0 * math.exp(T)

    def W(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for lo in range(0, y.size, 128):
            yy = y[lo:lo + 128, None]
            head = _kappa(log_s_head[None, :], yy, p).sum(axis=1)
            integral = (_kappa(ls_tau[None, :], yy, p) * jac_tau).sum(axis=1)
            yv = yy[:, 0]
            kap0 = _kappa(ls_K0, yv, p)
            # d kappa/dx = -p sigma(ell) ell' kappa, ell' = -(log s)'/(1-s)
            ell = math.log(-math.expm1(ls_K0)) - ls_K0 - yv
            sig = 1.0 / (1.0 + np.exp(-ell))
            dkap = -p * sig * (-dls_K0 / (1.0 - math.exp(ls_K0))) * kap0
            # beyond X_end, kappa ~ (Gamma(q+1) x^-q / r)^p
            log_rem = p * (lg + yv) + (1.0 - p * q) * math.log(X_end) - math.log(p * q - 1.0)
            out[lo:lo + 128] = head + integral + 0.5 * kap0 - dkap / 12.0 + np.exp(log_rem)
        return out

    return W


def _kernel_exponential(sojourn: ExpSojourn, p: float, t: float, y_max: float):
    mu = sojourn.mu
    v_end = y_max + 40.0 / p + 5.0
    v_top = min(mu * t, v_end) if math.isfinite(t) else v_end
    edges = np.arange(0.0, v_top, 0.5)
    edges = np.append(edges, v_top) if edges[-1] < v_top else edges
    v, w_v = panel_rule(edges, _NODES)
    infinite = not math.isfinite(t) or mu * t > v_end

    def W(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for lo in range(0, y.size, 128):
            yy = y[lo:lo + 128, None]
            # (1 + (e^v - 1) r)^-p, in logs: r = e^-y
            log_term = np.logaddexp(0.0, np.log(np.expm1(np.maximum(v[None, :], 1e-300))) - yy)
            vals = np.exp(-p * log_term) @ w_v
            if infinite:
                vals = vals + np.exp(-p * (v_top - yy[:, 0])) / p
            out[lo:lo + 128] = vals
        return out / mu

    return W


# ----------------------------------------------------------------------------
# beta_n
# ----------------------------------------------------------------------------
def _compound_rates(spec: ArrivalSpec, t: float, order: int):
    """Return (beta[1..order], beta_total) for horizon t (inf = stationary)."""
    batch, sojourn = spec.batch, spec.sojourn
    n = np.arange(1, order + 1, dtype=float)
    if isinstance(sojourn, Deterministic):
        dur = min(t, sojourn.d)
        return dur * batch.pmf(n), dur
    if not isinstance(batch, FracPowerLaw):
        raise UsageError("the thinning kernel needs a power-law batch")
    p = batch.p
    if isinstance(sojourn, FracPowerLaw):
        if math.isfinite(t):
            y_max = 45.0
            W = _kernel_discrete_finite(sojourn, p, t)
        else:
            y_max = 38.0 / (1.0 - 1.0 / sojourn.p) + 5.0
            W = _kernel_discrete_infinite(sojourn, p, y_max)
    elif isinstance(sojourn, ExpSojourn):
        y_max = 45.0 if math.isfinite(t) else 50.0
        W = _kernel_exponential(sojourn, p, t, y_max)
    else:
        raise UsageError(f"unsupported sojourn model {sojourn!r}")
    rule = _y_rule(p, order, y_max)
    return _integrate_rates(rule, W, n, p)


def _integrate_rates(rule: _YRule, W, n, p):
    # beta_n = p int e^{-ny} (1 - e^{-y})^p W dy ; total uses (1-e^{-y})^(p-1) e^{-y}
    yj, yl = rule.y_jac, rule.y_leg
    Wj, Wl = W(yj), W(yl)
    fj = p * (-np.expm1(-yj) / yj) ** p * Wj * rule.w_jac
    fl = p * (-np.expm1(-yl)) ** p * Wl * rule.w_leg
    beta = np.exp(-np.outer(n, yj)) @ fj + np.exp(-np.outer(n, yl)) @ fl
    yt = rule.y_jac_total
    Wt = W(yt)
    tot = np.sum(p * np.exp(-yt) * (-np.expm1(-yt) / yt) ** (p - 1.0) * Wt * rule.w_jac_total)
    tot += np.sum(p * np.exp(-yl) * (-np.expm1(-yl)) ** (p - 1.0) * Wl * rule.w_leg)
    return beta, float(tot)


def thinned_pmf(batch: FracPowerLaw, a: float, order: int = DEFAULT_ORDER) -> np.ndarray:
    """P(M = n), n = 0..order, where M keeps each of X customers w.p. ``a``.

    This is the coefficient vector of ``phi(a z + 1 - a)``, computed from the
    mixture integral rather than the binomial expansion.
    """
    if not 0 < a <= 1:
        raise DomainError("thinning probability must lie in (0, 1]")
    p = batch.p
    log_a = math.log(a)
    rule = _y_rule(p, order, 45.0 + max(0.0, -log_a))
    beta, tot = _integrate_rates(rule, lambda y: _kappa(log_a, y, p), np.arange(1, order + 1.0), p)
    out = np.empty(order + 1)
    out[0] = 1.0 - tot
    out[1:] = beta
    return out


# ----------------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------------
def _log_pgf_series(beta, total, lam, order):
    c = np.empty(order + 1)
    c[0] = -lam * total
    c[1:] = lam * beta
    return TruncatedSeries(c)


def mm_rates(spec: ArrivalSpec, order: int):
    """beta_n = P(X >= n) / (mu n) for exponential sojourns, and their sum."""
    mu = spec.sojourn.mu
    batch = spec.batch
    n = np.arange(1, order + 1, dtype=float)
    beta = batch.survival(n) / (mu * n)
    head_n = max(_EXACT_TERMS, order + 1)
    k = np.arange(1, head_n, dtype=float)
    total = float(np.sum(batch.survival(k) / k))
    total += tail_sum(lambda x: batch.survival(x) / x, float(head_n))
    return beta, total / mu


def stationary_pgf(spec: ArrivalSpec, order: int = DEFAULT_ORDER) -> TruncatedSeries:
    """Series of E[z^L] for the stationary queue length.

    Raises :class:`DivergenceError` (carrying the stability verdict) when
    E[S_(X)] is infinite, since then L is infinite with probability one.
    """
    from .stability import Verdict, classify

    if spec.lam == 0:
        return TruncatedSeries.constant(1.0, order)
    verdict = classify(spec)
    if verdict.verdict is not Verdict.STABLE:
        raise DivergenceError(
            f"no stationary distribution: {verdict.criterion} gives {verdict.verdict.value}",
            evidence=verdict,
        )
    if isinstance(spec.sojourn, ExpSojourn):
        beta, total = mm_rates(spec, order)
    else:
        beta, total = _compound_rates(spec, math.inf, order)
    return exp_series(_log_pgf_series(beta, total, spec.lam, order))


def transient_pgf(spec: ArrivalSpec, t: float, order: int = DEFAULT_ORDER) -> TruncatedSeries:
    """Series of E[z^L(t)] starting from an empty system; works when unstable."""
    if not t > 0:
        raise DomainError("time must be positive")
    if spec.lam == 0:
        return TruncatedSeries.constant(1.0, order)
    beta, total = _compound_rates(spec, float(t), order)
    return exp_series(_log_pgf_series(beta, total, spec.lam, order))


def extract_distribution(pgf: TruncatedSeries, time: Optional[float] = None) -> QueueDistribution:
    c = np.array(pgf.coeffs)
    if not c[0] > 0:
        raise NumericalFailure("P(L=0) must be positive for a system that starts empty")
    if c.min() < -_NEG_TOL:
        raise NumericalFailure(
            f"coefficient {c.min():.3g} is negative; raise the order or check stability"
        )
    c[(c < 0) & (c >= -_CLAMP_TOL)] = 0.0
    c = np.maximum(c, 0.0)
    s = float(c.sum())
    if s > 1.0 + _NEG_TOL:
        raise NumericalFailure(f"coefficients sum to {s:.12g} > 1")
    return QueueDistribution(probs=c, deficit=max(0.0, 1.0 - s), time=time)


def stationary_distribution(spec: ArrivalSpec, order: int = DEFAULT_ORDER) -> QueueDistribution:
    return extract_distribution(stationary_pgf(spec, order))


def transient_distribution(spec: ArrivalSpec, t: float, order: int = DEFAULT_ORDER) -> QueueDistribution:
    return extract_distribution(transient_pgf(spec, t, order), time=float(t))


# ----------------------------------------------------------------------------
# scalar closed forms (independent of the series engine)
# ----------------------------------------------------------------------------
def _ksum(term, start: int = 2000) -> float:
    k = np.arange(1, start, dtype=float)
    return float(np.sum(term(k))) + tail_sum(term, float(start), rel=1e-13)


def battle1_pgf_scalar(z: float, rho: float) -> float:
    """exp(-rho * sum_n (1 - z^n)/n^2) via the dilogarithm."""
    if not 0 <= z <= 1:
        raise DomainError("z must lie in [0, 1]")
    # sum_n (1 - z^n)/n^2 = pi^2/6 - Li2(z), Li2(z) = spence(1 - z)
    return math.exp(-rho * (math.pi**2 / 6.0 - float(spence(1.0 - z))))


def battle2_pgf_scalar(z: float, lam: float) -> float:
    """Stationary pgf for batch order 1 and sojourn order 2.

    With x_k = 1 - alpha_k = 2(1-z)/(k(k+1)) the exponent's terms are
    ``-(x/(1-x)) log x``, each equal to 1 - phi(alpha_k) > 0, so the pgf is
    ``exp(-lam * sum_k ...)``.
    """
    if not 0 <= z < 1:
        raise DomainError("z must lie in [0, 1)")
    if lam == 0:
        return 1.0
    w = 1.0 - z

    def term(k):
        x = 2.0 * w / k / (k + 1.0)
        safe = np.where((x < 1.0) & (x > 0.0), x, 0.5)
        val = -safe * np.log(safe) / (1.0 - safe)
        return np.where(x >= 1.0, 1.0, np.where(x > 0.0, val, 0.0))

    return math.exp(-lam * _ksum(term))


def battle4_pgf_scalar(z: float, lam: float) -> float:
    """Stationary pgf for batch order 1/2 and sojourn order 3.

    Terms are ``sqrt((1-alpha)/alpha) * arcsin(sqrt(alpha))`` with
    ``alpha_k = 1 - 6(1-z)/(k(k+1)(k+2))``; the pgf is exp(-lam * sum).
    """
    if not 0 <= z < 1:
        raise DomainError("z must lie in [0, 1)")
    if lam == 0:
        return 1.0
    w = 1.0 - z

    def term(k):
        x = np.minimum(6.0 * w / k / (k + 1.0) / (k + 2.0), 1.0)
        safe = np.where(x < 1.0, x, 0.5)
        val = np.sqrt(safe / (1.0 - safe)) * np.arccos(np.sqrt(safe))
        return np.where(x < 1.0, val, 1.0)

    return math.exp(-lam * _ksum(term))


def pgf_scalar(spec: ArrivalSpec, z: float) -> float:
    """exp(-lam * sum_k (1 - phi(1 - (1-z) P(S >= k)))) for a discrete sojourn."""
    if not isinstance(spec.sojourn, FracPowerLaw):
        raise UsageError("scalar sum form needs a discrete power-law sojourn")
    if spec.lam == 0:
        return 1.0
    w = 1.0 - z
    batch, soj = spec.batch, spec.sojourn

    def term(k):
        x = np.atleast_1d(np.minimum(w * soj.survival(k), 1.0))
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = batch.pgf_complement(x[pos])
        return out if np.ndim(k) else out[0]
    return math.exp(-spec.lam * _ksum(term))
