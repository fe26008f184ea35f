"""Stability of the batch infinite-server queue.

The queue is stable when the batch's longest sojourn ``S_(X) = max_i S_i``
has finite mean.  For Poisson batch arrivals the converse also holds, so a
divergent E[S_(X)] certifies instability for that arrival model only.

Three ways to decide:

* Hoelder: ``E[S_(X)] <= E[S^a]^(1/a) E[X^(1/a)]`` for any a >= 1, finite when
  both moments are.  For power-law orders (p, q) this needs 1/p < a < q.
* Exponential sojourns: ``E[S_(X)] = E[H_X] / mu`` with H the harmonic
  number, finite iff E[log X] is.
* The series ``E[S_(X)] = sum_k (1 - phi(1 - P(S >= k+1)))`` for discrete
  sojourns, summed directly with a growth-rate divergence test.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import digamma

from ._numerics import tail_sum
from .dist import Deterministic, ExpSojourn, FracPowerLaw, SojournModel
from .errors import DivergenceError, DomainError, UsageError

_EXACT_TERMS = 4096
HOLDER_GRID = np.round(np.arange(1.0, 8.0 + 1e-9, 0.1), 10)

# divergence test settings: two decades starting at DIVERGENCE_T0
DIVERGENCE_T0 = 1e8
GROWTH_MIN = 0.01
RESIDUAL_MAX = 0.05
DECAY_RATIO_MIN = 0.8


class Verdict(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INDETERMINATE = "Indeterminate"


@dataclass
class StabilityVerdict:
    verdict: Verdict
    criterion: str
    evidence: dict = field(default_factory=dict)
    note: str = ""

    @property
    def bound_value(self) -> float:
        return float(self.evidence.get("bound_value", math.nan))

    @property
    def growth_rate(self) -> float:
        return float(self.evidence.get("growth_rate", math.nan))


@dataclass
class MaxSojournEstimate:
    """Estimate of E[S_(X)].

    ``status`` is ``finite``, ``divergent`` (value is +inf) or ``inconclusive``
    (value is nan: the partial sums neither settled nor fit a growth law).
    """

    value: float
    method: str
    terms: int
    status: str = "finite"
    growth_rate: Optional[float] = None
    evidence: dict = field(default_factory=dict)

    @property
    def is_infinite(self) -> bool:
        return self.status == "divergent"


# ----------------------------------------------------------------------------
# moment bounds
# ----------------------------------------------------------------------------
def holder_bound(p_exponent: float, batch: FracPowerLaw, sojourn: SojournModel) -> float:
    """``E[S^a]^(1/a) * E[X^(1/a)]`` with a = ``p_exponent``; ``inf`` if either moment is."""
    if not p_exponent >= 1:
        raise DomainError("Hoelder exponent must be >= 1")
    a = float(p_exponent)
    if not (sojourn.moment_finite(a) and batch.moment_finite(1.0 / a)):
        return math.inf
    return sojourn.moment(a) ** (1.0 / a) * batch.moment(1.0 / a)


def holder_search(batch: FracPowerLaw, sojourn: SojournModel, grid=HOLDER_GRID):
    """Smallest Hoelder bound over ``grid``; returns (exponent, bound)."""
    best = (math.nan, math.inf)
    for a in grid:
        b = holder_bound(float(a), batch, sojourn)
        if b < best[1]:
            best = (float(a), b)
    return best


def lemma1_bound(n: int, p_exponent: float, sojourn: SojournModel) -> float:
    """``{n E[S^a]}^(1/a)``, a bound on the mean maximum of n i.i.d. copies of S."""
    if not p_exponent >= 1:
        raise DomainError("exponent must be >= 1")
    if n < 1:
        raise DomainError("need at least one copy")
    if not sojourn.moment_finite(p_exponent):
        return math.inf
    return (n * sojourn.moment(p_exponent)) ** (1.0 / p_exponent)


def harmonic_number(x):
    """H_x = sum_{i<=x} 1/i for positive integers x (vectorised, via digamma)."""
    x = np.asarray(x, dtype=float)
    return digamma(x + 1.0) + np.euler_gamma


# ----------------------------------------------------------------------------
# E[S_(X)]
# ----------------------------------------------------------------------------
def _max_tail(batch: FracPowerLaw, sojourn: FracPowerLaw):
    """f(x) = P(S_(X) > x) = 1 - phi(1 - P(S >= x+1)), real x >= 0."""
    def f(x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        s = np.exp(sojourn.log_survival(x_arr + 1.0))
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = batch.pgf_complement(np.minimum(s[pos], 1.0))
        return out if np.ndim(x) else float(out[0])
    return f


def _log_quad(f, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    val, _ = integrate.quad(lambda t: f(math.exp(t)) * math.exp(t), math.log(a), math.log(b),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def esx_partial_sums(batch: FracPowerLaw, sojourn: FracPowerLaw, T_values):
    """sum_{0<=k<T} P(S_(X) > k) for each T (integers, any size)."""
    f = _max_tail(batch, sojourn)
    T_values = np.asarray(T_values, dtype=float)
    order = np.argsort(T_values)
    out = np.empty(T_values.size)
    K0 = _EXACT_TERMS
    head_terms = f(np.arange(K0 + 1, dtype=float))
    cum = np.concatenate([[0.0], np.cumsum(head_terms)])

    def d(x):
        return (f(x + 0.5) - f(x - 0.5))

    running, last = cum[K0], float(K0)
    for idx in order:
        T = math.floor(T_values[idx])
        if T <= K0:
            out[idx] = cum[int(T)]
            continue
        # sum_{k=last}^{T-1} f by Euler-Maclaurin, accumulated panel by panel
        running += _log_quad(f, last, T) + 0.5 * (f(last) - f(T)) + (d(T) - d(last)) / 12.0
        last = float(T)
        out[idx] = running
    return out


def _growth_fit(T, S):
    """Least squares S = a + b log T; returns (b, relative residual)."""
    x = np.log(T)
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, S, rcond=None)
    resid = S - A @ coef
    span = max(S.max() - S.min(), 1e-300)
    return float(coef[1]), float(np.sqrt(np.mean(resid**2)) / span)


def _power_fit(T, S):
    """Least squares log S = c + g log T; returns (g, relative residual)."""
    if np.any(S <= 0):
        return 0.0, math.inf
    x, y = np.log(T), np.log(S)
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[1]), float(np.sqrt(np.mean(resid**2)) / max(y.max() - y.min(), 1e-300))


def divergence_test(batch: FracPowerLaw, sojourn: FracPowerLaw, T0: float = DIVERGENCE_T0):
    """Partial sums over two decades from T0 and the fitted growth law."""
    T = T0 * 10.0 ** (np.arange(21) / 10.0)
    S = esx_partial_sums(batch, sojourn, T)
    b, res = _growth_fit(T, S)
    g1, g2 = S[10] - S[0], S[20] - S[10]
    ratio = g2 / g1 if g1 > 0 else 0.0
    log_growth = b > GROWTH_MIN and res < RESIDUAL_MAX and ratio > DECAY_RATIO_MIN
    # power-law growth (q < 1 tails) fails the log fit but is plainly unbounded;
    # it shows as a log-log slope with each decade adding more than the last
    gamma, pres = _power_fit(T, S)
    power_growth = gamma > GROWTH_MIN and pres < RESIDUAL_MAX and ratio > 1.0
    return {
        "T": T,
        "partial_sums": S,
        "growth_rate": b,
        "fit_residual": res,
        "decade_ratio": ratio,
        "power_exponent": gamma,
        "divergent": bool(log_growth or power_growth),
        # decade increments shrinking geometrically means a convergent power tail
        "settled": bool(ratio < DECAY_RATIO_MIN and not (log_growth or power_growth)),
    }


def esx_estimate(batch: FracPowerLaw, sojourn: SojournModel, tol: float = 1e-10) -> MaxSojournEstimate:
    """E[S_(X)] for i.i.d. sojourns, or a divergence flag with its evidence."""
    if isinstance(sojourn, Deterministic):
        return MaxSojournEstimate(sojourn.d, "closed-form series", 0)
    if isinstance(sojourn, ExpSojourn):
        # E[H_X] = sum_n P(X >= n)/n
        k = np.arange(1, _EXACT_TERMS, dtype=float)
        eh = float(np.sum(batch.survival(k) / k))
        eh += tail_sum(lambda x: batch.survival(x) / x, float(_EXACT_TERMS), rel=min(tol, 1e-10))
        return MaxSojournEstimate(eh / sojourn.mu, "closed-form series", _EXACT_TERMS,
                                  evidence={"mean_harmonic": eh})
    if not isinstance(sojourn, FracPowerLaw):
        raise UsageError(f"unsupported sojourn model {sojourn!r}")
    test = divergence_test(batch, sojourn)
    n_terms = int(test["T"][-1])
    if test["divergent"]:
        return MaxSojournEstimate(math.inf, "partial-sum divergence test", n_terms,
                                  status="divergent", growth_rate=test["growth_rate"],
                                  evidence=test)
    if not test["settled"]:
        return MaxSojournEstimate(math.nan, "partial-sum divergence test", n_terms,
                                  status="inconclusive", growth_rate=test["growth_rate"],
                                  evidence=test)
    f = _max_tail(batch, sojourn)
    head = float(np.sum(f(np.arange(_EXACT_TERMS, dtype=float))))
    value = head + tail_sum(f, float(_EXACT_TERMS), rel=min(tol, 1e-10))
    return MaxSojournEstimate(value, "closed-form series", n_terms, status="finite",
                              growth_rate=test["growth_rate"], evidence=test)


def mean_log(batch: FracPowerLaw) -> float:
    """E[log X] = sum_{k>=2} P(X >= k) log(k/(k-1))."""
    k = np.arange(2, _EXACT_TERMS, dtype=float)
    head = float(np.sum(batch.survival(k) * np.log(k / (k - 1.0))))
    return head + tail_sum(lambda x: batch.survival(x) * -np.log1p(-1.0 / x), float(_EXACT_TERMS))


# ----------------------------------------------------------------------------
# verdicts
# ----------------------------------------------------------------------------
_POISSON_NOTE = "Poisson-batch only"


def classify_pq(batch_order: float, sojourn_order: float) -> StabilityVerdict:
    """Verdict for power-law batch order p and discrete sojourn order q."""
    p, q = float(batch_order), float(sojourn_order)
    if not (p > 0 and q > 0):
        raise DomainError("orders must be positive")
    batch, sojourn = FracPowerLaw(p), FracPowerLaw(q)
    if p * q > 1 and q > 1:
        # any exponent a with max(1, 1/p) < a < q makes both moments finite
        lo = max(1.0, 1.0 / p)
        witness = 1.0 if p > 1 else 0.5 * (lo + q)
        best_a, best = holder_search(batch, sojourn)
        if not math.isfinite(best):
            best_a, best = witness, holder_bound(witness, batch, sojourn)
        return StabilityVerdict(
            Verdict.STABLE, "holder",
            {"bound_value": best, "exponent": best_a, "witness_exponent": witness,
             "growth_rate": math.nan},
        )
    est = esx_estimate(batch, sojourn)
    ev = {"bound_value": math.inf, "growth_rate": est.growth_rate, "esx": est.value,
          "fit_residual": est.evidence.get("fit_residual"),
          "decade_ratio": est.evidence.get("decade_ratio")}
    if est.status == "divergent":
        return StabilityVerdict(Verdict.UNSTABLE, "esx-divergence", ev, note=_POISSON_NOTE)
    if est.status == "finite":
        ev["bound_value"] = est.value
        return StabilityVerdict(Verdict.STABLE, "esx-convergence", ev)
    return StabilityVerdict(Verdict.INDETERMINATE, "esx-divergence", ev,
                            note="partial sums neither settle nor fit a growth law")


def classify(spec) -> StabilityVerdict:
    """Verdict for an :class:`~infserver.analytic.ArrivalSpec`."""
    if spec.lam == 0:
        return StabilityVerdict(Verdict.STABLE, "esx-convergence",
                                {"bound_value": 0.0, "growth_rate": math.nan, "note": "no arrivals"})
    batch, sojourn = spec.batch, spec.sojourn
    if isinstance(sojourn, ExpSojourn):
        el = mean_log(batch)
        est = esx_estimate(batch, sojourn)
        return StabilityVerdict(
            Verdict.STABLE, "log-criterion",
            {"bound_value": est.value, "mean_log": el,
             "harmonic_lower": el / sojourn.mu, "harmonic_upper": (1.0 + el) / sojourn.mu,
             "growth_rate": math.nan},
        )
    if isinstance(sojourn, Deterministic):
        return StabilityVerdict(Verdict.STABLE, "esx-convergence",
                                {"bound_value": sojourn.d, "growth_rate": math.nan})
    if isinstance(batch, FracPowerLaw):
        return classify_pq(batch.p, sojourn.p)
    est = esx_estimate(batch, sojourn)
    ev = {"bound_value": est.value, "growth_rate": est.growth_rate}
    if est.status == "finite":
        return StabilityVerdict(Verdict.STABLE, "esx-convergence", ev)
    if est.status == "divergent":
        return StabilityVerdict(Verdict.UNSTABLE, "esx-divergence", ev, note=_POISSON_NOTE)
    return StabilityVerdict(Verdict.INDETERMINATE, "esx-divergence", ev)


def expected_max_sojourn(spec) -> float:
    """E[S_(X)] for a stable spec; raises :class:`DivergenceError` otherwise."""
    verdict = classify(spec)
    if verdict.verdict is not Verdict.STABLE:
        raise DivergenceError("E[S_(X)] is not finite for this spec", evidence=verdict)
    if spec.lam == 0:
        return 0.0
    return esx_estimate(spec.batch, spec.sojourn).value


# ----------------------------------------------------------------------------
# Little's law
# ----------------------------------------------------------------------------
@dataclass
class LittleReport:
    k_bar: float
    se: float
    expected: float
    z_score: float
    passed: bool


def verify_little(sim_output, spec, n_se: float = 3.0) -> LittleReport:
    """Compare the time-averaged super-customer count with lam * E[S_(X)]."""
    from .sim import supercustomer_trace

    verdict = classify(spec)
    if verdict.verdict is not Verdict.STABLE:
        raise DivergenceError(
            f"Little's law needs a stable spec; {verdict.criterion} gives {verdict.verdict.value}",
            evidence=verdict,
        )
    k_bar, se = supercustomer_trace(sim_output)
    expected = spec.lam * expected_max_sojourn(spec)
    diff = k_bar - expected
    if se > 0:
        z = diff / se
        ok = abs(z) <= n_se
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        ok = diff == 0
    return LittleReport(k_bar, se, expected, z, bool(ok))
