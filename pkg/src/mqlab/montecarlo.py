"""Seeded forward simulation of the market chain.

Replication ``r`` draws its uniforms from a Philox stream keyed by the seed
with counter block ``r``, so its trace depends only on ``(seed, r)`` and not on
chunking or worker count.  Each round consumes one decision draw and one
satisfaction draw per (product, customer), in (round, product, customer)
order.  Customers decide simultaneously on end-of-previous-round shares.

Within a chunk the replications are advanced together: histories are kept as
base-3 integer codes and the strategy is evaluated once per distinct
(cell, history, shares) combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError
from .exact import terminal_shares
from .history import ALPHABET, MAX_ENSEMBLE_CELLS, format_ensemble
from .market import MarketSpec

Z99 = 2.576
FLAG_SIGMAS = 4.0
CHUNK_UNIFORMS = 4_000_000  # uniforms held in memory per chunk


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, r, 0, 0]))


def _decode(code: int, depth: int) -> str:
    out = []
    for _ in range(depth):
        code, d = divmod(code, 3)
        out.append(ALPHABET[d])
    return "".join(reversed(out))


@dataclass
class SimulationRun:
    spec: MarketSpec
    t: int
    replications: int
    seed: int
    terminal: np.ndarray  # (R, m) int shares after round t
    trace: np.ndarray | None = None  # (R, m*n) base-3 history codes, product-major

    def ensemble(self, r: int):
        if self.trace is None:
            raise ContractError("run was simulated without traces")
        m, n = self.spec.m, self.spec.n
        flat = [_decode(int(c), self.t) for c in self.trace[r]]
        return tuple(tuple(flat[i * n:(i + 1) * n]) for i in range(m))

    def terminal_csv_rows(self) -> list[list]:
        rows = []
        for r in range(self.replications):
            row = [r] + [int(x) for x in self.terminal[r]]
            if self.trace is not None:
                row.append(format_ensemble(self.ensemble(r)))
            rows.append(row)
        return rows


def _simulate_chunk(spec: MarketSpec, t: int, seed: int, start: int, stop: int, trace: bool):
    m, n = spec.m, spec.n
    cells = m * n
    size = stop - start
    u = np.empty((size, t, m, n, 2))
    for k, r in enumerate(range(start, stop)):
        u[k] = replication_rng(seed, r).random((t, m, n, 2))
    codes = np.zeros((size, cells), dtype=np.int64)
    shares = np.tile(np.asarray(spec.initial_shares, dtype=np.int64), (size, 1))
    q = np.asarray(spec.quality)
    cache: dict = {}
    # pack (history code, shares) into one int64 key per replication
    base = max(spec.initial_shares) + n * t + 1
    share_weights = np.array([base ** p for p in range(m)], dtype=np.int64)
    share_radix = base ** m
    for k in range(t):
        events = np.empty((size, cells), dtype=np.int64)
        for cell in range(cells):
            i, j = divmod(cell, n)
            s = spec.strategies[i][j]
            keys = codes[:, cell]
            if s.share_aware:
                keys = keys * share_radix + shares @ share_weights
            uniq, inv = np.unique(keys, return_inverse=True)
            sig = np.empty(len(uniq))
            for u_idx, key in enumerate(uniq.tolist()):
                if s.share_aware:
                    key, packed = divmod(key, share_radix)
                    sh = tuple((packed // w) % base for w in share_weights.tolist())
                else:
                    sh = spec.initial_shares
                h = _decode(key, k)
                ck = (i, j, h, sh if s.share_aware else None)
                val = cache.get(ck)
                if val is None:
                    val = cache[ck] = spec.sigma(i, j, h, sh)
                sig[u_idx] = val
            sigma = sig[inv.reshape(-1)]
            consume = u[:, k, i, j, 0] < sigma
            happy = u[:, k, i, j, 1] < q[i]
            events[:, cell] = np.where(consume, np.where(happy, 0, 1), 2)
        codes = codes * 3 + events
        consumed = (events != 2).reshape(size, m, n).sum(axis=2)
        shares = shares + consumed
    return shares, (codes if trace else None)


def simulate_market(spec: MarketSpec, t: int | None = None, seed: int | None = None,
                    R: int | None = None, trace: bool = False) -> SimulationRun:
    t = spec.horizon if t is None else int(t)
    seed = spec.seed if seed is None else int(seed)
    R = spec.replications if R is None else int(R)
    if R < 1:
        raise ContractError("need at least one replication")
    if seed < 0:
        raise ContractError("seed must be non-negative")
    if 3 ** t * (max(spec.initial_shares) + spec.n * t + 1) ** spec.m >= 2 ** 62:
        raise ContractError("horizon and market size too large for packed history keys")
    per_rep = max(1, 2 * t * spec.m * spec.n)
    chunk = max(1, CHUNK_UNIFORMS // per_rep)
    terms, traces = [], []
    for start in range(0, R, chunk):
        sh, codes = _simulate_chunk(spec, t, seed, start, min(R, start + chunk), trace)
        terms.append(sh)
        if trace:
            traces.append(codes)
    terminal = np.concatenate(terms)
    return SimulationRun(spec, t, R, seed, terminal, np.concatenate(traces) if trace else None)


# -- estimation --------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    event: str
    mean: float
    se: float
    count: int
    hits: int
    pooled: bool = True

    @property
    def half_width(self) -> float:
        return Z99 * self.se

    def to_dict(self) -> dict:
        return {"event": self.event, "mean": self.mean, "se": self.se, "half_width_99": self.half_width,
                "replications": self.count, "hits": self.hits, "pooled": self.pooled}


def event_indicator(run: SimulationRun, event: str) -> np.ndarray:
    """Boolean indicator per replication for ``lead1``, ``lead2``, ``tie`` or ``tail:x``."""
    w = run.terminal
    if event in ("lead1", "lead2", "tie"):
        if run.spec.m < 2:
            raise DimensionError("leadership needs at least two products")
        if event == "lead1":
            return w[:, 0] > w[:, 1]
        if event == "lead2":
            return w[:, 1] > w[:, 0]
        return w[:, 0] == w[:, 1]
    if event.startswith("tail:"):
        x = int(event.split(":", 1)[1])
        return (w[:, 0] - run.spec.initial_shares[0]) >= x
    raise ValueError(f"unknown event {event!r}")


def estimate_event(run: SimulationRun, event: str) -> Estimate:
    ind = event_indicator(run, event)
    R = run.replications
    hits = int(ind.sum())
    mean = hits / R
    if R < 2:
        return Estimate(event, mean, 0.0, R, hits, pooled=False)
    # sample variance of a 0/1 indicator, ddof=1
    var = (hits - R * mean * mean) / (R - 1)
    return Estimate(event, mean, math.sqrt(max(var, 0.0) / R), R, hits)


def estimable_events(spec: MarketSpec, t: int) -> list[str]:
    events = ["lead1", "lead2", "tie"] if spec.m >= 2 else []
    return events + [f"tail:{x}" for x in range(1, spec.n * t + 1)]


def exact_event(spec: MarketSpec, t: int, event: str, dist: dict | None = None) -> float:
    """Exact probability of an event from the enumerated terminal share distribution."""
    if dist is None:
        dist = terminal_shares(spec, t, method="enumerate")
    a = spec.initial_shares[0]
    if event == "lead1":
        ps = [p for w, p in dist.items() if w[0] > w[1]]
    elif event == "lead2":
        ps = [p for w, p in dist.items() if w[1] > w[0]]
    elif event == "tie":
        ps = [p for w, p in dist.items() if w[0] == w[1]]
    elif event.startswith("tail:"):
        x = int(event.split(":", 1)[1])
        ps = [p for w, p in dist.items() if w[0] - a >= x]
    else:
        raise ValueError(f"unknown event {event!r}")
    return math.fsum(ps)


@dataclass
class AgreementReport:
    spec_name: str
    t: int
    seed: int
    replications: int
    rows: list[dict] = field(default_factory=list)
    skipped: str | None = None

    @property
    def flagged(self) -> list[dict]:
        return [r for r in self.rows if r["flag"]]

    @property
    def passed(self) -> bool:
        return self.skipped is None and not self.flagged

    def to_dict(self) -> dict:
        return {"spec": self.spec_name, "t": self.t, "seed": self.seed, "replications": self.replications,
                "skipped": self.skipped, "passed": self.passed, "flags": len(self.flagged), "events": self.rows}


def agreement_report(spec: MarketSpec, t: int | None = None, seed: int | None = None, R: int | None = None,
                     tamper: dict | None = None, sigmas: float = FLAG_SIGMAS,
                     run: SimulationRun | None = None) -> AgreementReport:
    """Compare Monte Carlo estimates with exact values; flag deviations beyond ``sigmas`` standard errors.

    ``tamper`` maps event names to additive offsets applied to the exact values
    (a test hook for exercising the flagging path).  When the sample standard
    error is zero (all indicators equal) the exact Bernoulli standard error is
    used instead, so a degenerate sample cannot hide a disagreement.
    """
    t = spec.horizon if t is None else t
    seed = spec.seed if seed is None else seed
    R = spec.replications if R is None else R
    report = AgreementReport(spec.name, t, seed, R)
    if spec.n * spec.m * t > MAX_ENSEMBLE_CELLS:
        report.skipped = f"n*m*t = {spec.n * spec.m * t} exceeds exact cap {MAX_ENSEMBLE_CELLS}"
        return report
    if run is None:
        run = simulate_market(spec, t, seed, R)
    tamper = tamper or {}
    dist = terminal_shares(spec, t, method="enumerate")
    for ev in estimable_events(spec, t):
        est = estimate_event(run, ev)
        exact = exact_event(spec, t, ev, dist) + tamper.get(ev, 0.0)
        se = est.se
        if se == 0.0:
            se = math.sqrt(max(exact * (1.0 - exact), 0.0) / R)
        dev = abs(est.mean - exact)
        z = dev / se if se > 0 else (0.0 if dev <= 1e-12 else math.inf)
        report.rows.append({**est.to_dict(), "exact": exact, "z": z, "flag": z > sigmas})
    return report

