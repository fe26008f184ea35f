"""Monte Carlo of the batch infinite-server queue started empty.

Each replication draws a Poisson number of batch epochs on [0, horizon],
a batch size per epoch, and then follows every batch's surviving customer
count across the sample times.  Between two looks at ages a < b a customer
present at age a is still present at age b with probability
P(S > b) / P(S > a), independently of the others, so the surviving count
is a binomial thinning of the previous one.  This reproduces the joint law
of the counts at the sample times exactly without drawing one sojourn per
customer, which matters when a batch holds 10**7 customers.

Replication r uses its own Philox stream keyed by (seed, r), so results do
not depend on how replications are spread over threads.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytic import ArrivalSpec, QueueDistribution
from .errors import DomainError, UsageError

DEFAULT_BATCH_CAP = 10**7
_BLOCK = 512
_BLOCK_ARRIVALS = 2_000_000


def stream(seed: int, replication: int) -> np.random.Generator:
    """Counter-based generator for one replication."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    spec: ArrivalSpec
    horizon: float
    replications: int
    seed: int
    sample_times: Sequence[float]
    batch_cap: int = DEFAULT_BATCH_CAP
    threads: Optional[int] = None

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError("horizon must be positive and finite")
        if self.replications < 1:
            raise DomainError("need at least one replication")
        if self.batch_cap < 1:
            raise DomainError("batch cap must be positive")
        t = np.asarray(self.sample_times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise DomainError("sample_times must be a non-empty list")
        if np.any(np.diff(t) <= 0):
            raise DomainError("sample_times must be strictly increasing")
        if t[0] < 0 or t[-1] > self.horizon:
            raise DomainError("sample_times must lie in [0, horizon]")
        object.__setattr__(self, "sample_times", tuple(float(v) for v in t))


@dataclass
class SimOutput:
    sample_times: np.ndarray
    counts: np.ndarray           # L(t), shape (replications, len(sample_times))
    k_counts: np.ndarray         # K(t), same shape
    overflow_events: int
    overflow_flags: np.ndarray   # per replication: any batch hit the cap
    batch_counts: np.ndarray     # N(horizon) per replication
    seed_trail: list
    horizon: float
    failures: list = field(default_factory=list)

    @property
    def replications(self) -> int:
        return self.counts.shape[0]

    def ok_rows(self) -> np.ndarray:
        bad = {r for r, _ in self.failures}
        return np.array([r not in bad for r in range(self.replications)], dtype=bool)


def _thread_count(threads: Optional[int]) -> int:
    env = os.environ.get("BATTLES_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise UsageError("BATTLES_THREADS must be an integer") from None
    return max(1, min(threads or cap, cap))


def _run_block(cfg: SimConfig, reps: range):
    spec = cfg.spec
    times = np.asarray(cfg.sample_times)
    m = times.size
    lam_h = spec.lam * cfg.horizon

    # phase 1: epochs and uniforms, per replication stream
    gens, arrivals, uniforms = [], [], []
    for r in reps:
        g = stream(cfg.seed, r)
        n = int(g.poisson(lam_h)) if lam_h > 0 else 0
        arrivals.append(np.sort(g.uniform(0.0, cfg.horizon, n)))
        uniforms.append(1.0 - g.random(n))
        gens.append(g)

    # phase 2: batch sizes for the whole block in one vectorised search
    sizes = np.concatenate(uniforms) if uniforms else np.empty(0)
    if sizes.size:
        x_all, of_all = spec.batch.sample_flagged(sizes, cfg.batch_cap)
    else:
        x_all, of_all = np.empty(0, dtype=np.int64), np.empty(0, dtype=bool)
    bounds = np.cumsum([0] + [a.size for a in arrivals])

    # phase 3: thinning across sample times, per replication
    L = np.zeros((len(reps), m), dtype=np.int64)
    K = np.zeros((len(reps), m), dtype=np.int64)
    overflow = np.zeros(len(reps), dtype=np.int64)
    failures = []
    log_tail = spec.sojourn.log_tail
    for i, r in enumerate(reps):
        T = arrivals[i]
        X = np.asarray(x_all[bounds[i]:bounds[i + 1]], dtype=np.int64)
        overflow[i] = int(np.count_nonzero(of_all[bounds[i]:bounds[i + 1]]))
        g = gens[i]
        try:
            live_T = np.empty(0)
            live_n = np.empty(0, dtype=np.int64)
            live_lt = np.empty(0)
            start = 0
            for j, t in enumerate(times):
                stop = int(np.searchsorted(T, t, side="right"))
                if stop > start:
                    live_T = np.concatenate([live_T, T[start:stop]])
                    live_n = np.concatenate([live_n, X[start:stop]])
                    live_lt = np.concatenate([live_lt, np.zeros(stop - start)])
                    start = stop
                if live_T.size:
                    lt = log_tail(t - live_T)
                    keep_p = np.exp(lt - live_lt)
                    live_n = g.binomial(live_n, keep_p)
                    alive = live_n > 0
                    live_T, live_n, live_lt = live_T[alive], live_n[alive], lt[alive]
                L[i, j] = int(live_n.sum())
                K[i, j] = live_n.size
        except (MemoryError, ValueError) as exc:
            failures.append((r, f"{type(exc).__name__}: {exc}"))
            L[i, :] = -1
            K[i, :] = -1
    n_batches = np.array([a.size for a in arrivals], dtype=np.int64)
    return L, K, overflow, n_batches, failures


def run(config: SimConfig) -> SimOutput:
    """Simulate ``config.replications`` independent paths."""
    R = config.replications
    # keep a block's arrival arrays to a few million entries
    per_rep = config.spec.lam * config.horizon
    size = max(1, min(_BLOCK, int(_BLOCK_ARRIVALS / max(per_rep, 1.0))))
    blocks = [range(s, min(s + size, R)) for s in range(0, R, size)]
    workers = _thread_count(config.threads)
    if workers == 1 or len(blocks) == 1:
        parts = [_run_block(config, b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _run_block(config, b), blocks))
    L = np.concatenate([p[0] for p in parts])
    K = np.concatenate([p[1] for p in parts])
    ov = np.concatenate([p[2] for p in parts])
    nb = np.concatenate([p[3] for p in parts])
    failures = [f for p in parts for f in p[4]]
    return SimOutput(
        sample_times=np.asarray(config.sample_times, dtype=float),
        counts=L,
        k_counts=K,
        overflow_events=int(ov.sum()),
        overflow_flags=ov > 0,
        batch_counts=nb,
        seed_trail=[f"{config.seed}/{r}" for r in range(R)],
        horizon=float(config.horizon),
        failures=failures,
    )


def _column(output: SimOutput, t: float) -> int:
    hits = np.nonzero(np.isclose(output.sample_times, t, rtol=0.0, atol=1e-9))[0]
    if hits.size == 0:
        raise UsageError(f"time {t} was not sampled")
    return int(hits[0])


def empirical_distribution(output: SimOutput, t: float, order: Optional[int] = None) -> QueueDistribution:
    """Histogram of L(t) with Wilson-score standard errors.

    With ``order`` given, P(L = n) is reported for n <= order and the rest
    goes to the deficit.
    """
    j = _column(output, t)
    x = output.counts[output.ok_rows(), j]
    R = x.size
    if R == 0:
        raise UsageError("no successful replications")
    top = int(x.max()) if order is None else int(order)
    hist = np.bincount(np.minimum(x, top + 1), minlength=top + 2).astype(float)
    probs = hist[:top + 1] / R
    deficit = hist[top + 1] / R
    # Wilson score interval (z = 1) half-width
    se = np.sqrt(probs * (1.0 - probs) / R + 1.0 / (4.0 * R * R)) / (1.0 + 1.0 / R)
    return QueueDistribution(probs=probs, deficit=float(deficit), time=float(output.sample_times[j]),
                             se=se, source="sim")


def supercustomer_trace(output: SimOutput, window_start: Optional[float] = None):
    """Time-average of K(t) over [window_start, horizon] and its standard error.

    The window defaults to the second half of the horizon.  Replications are
    the batches for the batch-means error; a single replication is cut into
    ten consecutive batches instead.
    """
    lo = output.horizon / 2.0 if window_start is None else float(window_start)
    cols = output.sample_times >= lo
    if not np.any(cols):
        raise UsageError("no sample times in the averaging window")
    K = output.k_counts[output.ok_rows()][:, cols].astype(float)
    if K.shape[0] >= 2:
        per_rep = K.mean(axis=1)
        return float(per_rep.mean()), float(per_rep.std(ddof=1) / math.sqrt(per_rep.size))
    row = K[0]
    chunks = [c for c in np.array_split(row, 10) if c.size]
    means = np.array([c.mean() for c in chunks])
    se = means.std(ddof=1) / math.sqrt(means.size) if means.size > 1 else 0.0
    return float(row.mean()), float(se)


def total_variation(p, q, n_max: int = 50) -> float:
    """TV distance on {0..n_max} plus one bin for everything above."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a = np.zeros(n_max + 2)
    b = np.zeros(n_max + 2)
    a[:min(p.size, n_max + 1)] = p[:n_max + 1]
    b[:min(q.size, n_max + 1)] = q[:n_max + 1]
    a[-1] = max(0.0, 1.0 - a[:-1].sum())
    b[-1] = max(0.0, 1.0 - b[:-1].sum())
    return 0.5 * float(np.abs(a - b).sum())


def sample_batch_max(batch, sojourn, rng: np.random.Generator, size: int, x_cap: int = 10**6):
    """Draw (X, S_(X)) pairs; X is capped at ``x_cap`` and the cap is reported.

    The maximum of x i.i.d. discrete sojourns is drawn exactly by inverting
    P(max >= k+1) = 1 - (1 - P(S >= k+1))**x.
    """
    X, _ = batch.sample_flagged(1.0 - rng.random(size), 2**62)
    capped = X > x_cap
    Xc = np.minimum(X, x_cap)
    v = 1.0 - rng.random(size)
    # P(S >= k+1) <= 1 - (1 - v)**(1/x)
    u = -np.expm1(np.log1p(-np.minimum(v, 1.0 - 1e-16)) / Xc)
    u = np.where(v >= 1.0, 1.0, u)
    return Xc, sojourn.sample(np.clip(u, 1e-300, 1.0)), int(capped.sum())


# ----------------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------------
CSV_FIELDS = ("replication", "time", "L", "K", "overflow_flag")


def write_csv(output: SimOutput, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in range(output.replications):
            flag = int(output.overflow_flags[r])
            for j, t in enumerate(output.sample_times):
                w.writerow((r, repr(float(t)), int(output.counts[r, j]), int(output.k_counts[r, j]), flag))


def read_csv(path) -> SimOutput:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError(f"{path}: no rows")
    reps = sorted({int(r["replication"]) for r in rows})
    times = sorted({float(r["time"]) for r in rows})
    ri = {r: i for i, r in enumerate(reps)}
    ti = {t: j for j, t in enumerate(times)}
    L = np.zeros((len(reps), len(times)), dtype=np.int64)
    K = np.zeros_like(L)
    flags = np.zeros(len(reps), dtype=bool)
    for row in rows:
        i, j = ri[int(row["replication"])], ti[float(row["time"])]
        L[i, j] = int(row["L"])
        K[i, j] = int(row["K"])
        flags[i] = bool(int(row["overflow_flag"]))
    return SimOutput(
        sample_times=np.array(times), counts=L, k_counts=K,
        overflow_events=int(flags.sum()), overflow_flags=flags,
        batch_counts=np.full(len(reps), -1, dtype=np.int64),
        seed_trail=[], horizon=float(times[-1]),
    )
