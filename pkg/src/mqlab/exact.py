"""Exact probabilities by enumeration of histories and history ensembles.

Two ensemble routes exist.  :func:`ensemble_distribution` enumerates every
ensemble (capped at ``n*m*t <= 12``).  :func:`share_distribution` runs the same
chain on lumped states, merging histories whose strategy keys agree; it scales
to markets far beyond the enumeration cap and is cross-checked against the
full enumeration in the test suite.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ContractError, DimensionError, EnumerationLimitError, UndefinedPosteriorError
from .history import (
    MAX_ENSEMBLE_CELLS,
    MAX_HISTORY_DEPTH,
    Ensemble,
    History,
    consumption,
    ensemble_depth,
    market_share,
)
from .market import MarketSpec, PriorGrid, check_quality
from .strategies import Strategy, evaluate

MAX_LUMPED_STATES = 2_000_000


def _history_only(s: Strategy) -> None:
    if s.share_aware:
        raise ContractError(f"{s.name} is share-aware; use ensemble_prob with a MarketSpec")


def _check_q(q: float) -> None:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quality {q} outside [0, 1]")


# -- single customer, single product ----------------------------------------

def ex_ante(s: Strategy, h: History) -> float:
    """Product of sigma over consumption rounds and 1 - sigma over N-rounds."""
    _history_only(s)
    c = 1.0
    for k, ev in enumerate(h):
        p = evaluate(s, h[:k])
        c *= (1.0 - p) if ev == "N" else p
    return c


def quality_factor(h: History, q: float) -> float:
    return q ** h.count("S") * (1.0 - q) ** h.count("F")


def history_prob(s: Strategy, h: History, q: float) -> float:
    """``ex_ante(s, h) * q^S(h) * (1-q)^F(h)``."""
    _check_q(q)
    return ex_ante(s, h) * quality_factor(h, q)


def chain_path_prob(s: Strategy, h: History, q: float) -> float:
    """Probability of the path ``h`` in the round-by-round chain (S: q*sigma, F: (1-q)*sigma, N: 1-sigma)."""
    _history_only(s)
    _check_q(q)
    p = 1.0
    for k, ev in enumerate(h):
        sig = evaluate(s, h[:k])
        if ev == "S":
            p *= q * sig
        elif ev == "F":
            p *= (1.0 - q) * sig
        else:
            p *= 1.0 - sig
    return p


def history_distribution(s: Strategy, t: int, q: float, cap: int = MAX_HISTORY_DEPTH) -> dict[History, float]:
    """``P[Z; q]`` for every ``Z`` of depth ``t`` (zero-probability histories included)."""
    _history_only(s)
    _check_q(q)
    if t > cap:
        raise EnumerationLimitError(f"depth {t} exceeds enumeration cap {cap}")
    level = {"": 1.0}
    for _ in range(t):
        nxt = {}
        for h, p in level.items():
            sig = evaluate(s, h)
            nxt[h + "S"] = p * q * sig
            nxt[h + "F"] = p * (1.0 - q) * sig
            nxt[h + "N"] = p * (1.0 - sig)
        level = nxt
    return level


def consumption_distribution(s: Strategy, t: int, q: float) -> list[float]:
    """``P[con(Z) = x]`` for ``x = 0..t``."""
    buckets: list[list[float]] = [[] for _ in range(t + 1)]
    for h, p in history_distribution(s, t, q).items():
        buckets[consumption(h)].append(p)
    return [math.fsum(b) for b in buckets]


def tail_prob(s: Strategy, t: int, x: int, q: float) -> float:
    """``P[con(Z) >= x]`` over depth-``t`` histories."""
    dist = consumption_distribution(s, t, q)
    return math.fsum(dist[max(x, 0):])


def expected_consumption(s: Strategy, t: int, q: float) -> float:
    dist = consumption_distribution(s, t, q)
    return math.fsum(x * p for x, p in enumerate(dist))


# -- ensembles ---------------------------------------------------------------

def _quality(spec: MarketSpec, q) -> tuple[float, ...]:
    if q is None:
        return spec.quality
    q = check_quality(q)
    if len(q) != spec.m:
        raise DimensionError(f"quality vector has {len(q)} entries for {spec.m} products")
    return q


def ensemble_prob(spec: MarketSpec, e: Ensemble, q: Sequence[float] | None = None) -> float:
    """Probability of the ensemble ``e`` under ``spec`` (qualities ``q`` override the spec's)."""
    q = _quality(spec, q)
    if len(e) != spec.m or any(len(row) != spec.n for row in e):
        raise DimensionError(f"ensemble is not {spec.m} products x {spec.n} customers")
    p = 1.0
    for k in range(1, ensemble_depth(e) + 1):
        shares = market_share(e, spec.initial_shares, k - 1)
        for i, row in enumerate(e):
            for j, h in enumerate(row):
                sig = spec.sigma(i, j, h[:k - 1], shares)
                ev = h[k - 1]
                if ev == "S":
                    p *= sig * q[i]
                elif ev == "F":
                    p *= sig * (1.0 - q[i])
                else:
                    p *= 1.0 - sig
    return p


def _round_options(spec: MarketSpec, q, flat: tuple[str, ...], shares, keep_zero: bool):
    n = spec.n
    options = []
    for idx, h in enumerate(flat):
        i, j = divmod(idx, n)
        sig = spec.sigma(i, j, h, shares)
        opts = (("S", sig * q[i]), ("F", sig * (1.0 - q[i])), ("N", 1.0 - sig))
        if not keep_zero:
            opts = tuple(o for o in opts if o[1] > 0.0)
        options.append(opts)
    return options


def _nest(flat: tuple[str, ...], m: int, n: int) -> Ensemble:
    return tuple(flat[i * n:(i + 1) * n] for i in range(m))


def ensemble_distribution(spec: MarketSpec, t: int | None = None, q: Sequence[float] | None = None,
                          keep_zero: bool = False, cap: int = MAX_ENSEMBLE_CELLS) -> dict[Ensemble, float]:
    """``P[Z; q]`` for every depth-``t`` ensemble, by full enumeration."""
    t = spec.horizon if t is None else t
    q = _quality(spec, q)
    m, n = spec.m, spec.n
    if n * m * t > cap:
        raise EnumerationLimitError(f"n*m*t = {n * m * t} exceeds ensemble enumeration cap {cap}")
    level: dict[tuple[str, ...], tuple[float, tuple[int, ...]]] = {("",) * (m * n): (1.0, spec.initial_shares)}
    for _ in range(t):
        nxt = {}
        for flat, (p, shares) in level.items():
            partial = [((), p, list(shares))]
            for idx, opts in enumerate(_round_options(spec, q, flat, shares, keep_zero)):
                i = idx // n
                grown = []
                for evs, pp, sh in partial:
                    for ev, w in opts:
                        if ev == "N":
                            grown.append((evs + (ev,), pp * w, sh))
                        else:
                            sh2 = sh.copy()
                            sh2[i] += 1
                            grown.append((evs + (ev,), pp * w, sh2))
                partial = grown
            for evs, pp, sh in partial:
                nxt[tuple(h + ev for h, ev in zip(flat, evs))] = (pp, tuple(sh))
        level = nxt
    return {_nest(flat, m, n): p for flat, (p, _) in level.items()}


def share_distribution(spec: MarketSpec, t: int | None = None, q: Sequence[float] | None = None,
                       max_states: int = MAX_LUMPED_STATES) -> dict[tuple[int, ...], float]:
    """Exact distribution of the round-``t`` share vector via the lumped chain.

    States are (strategy keys of all cells, share vector); a representative
    history per cell stands in for every history with the same key.
    """
    t = spec.horizon if t is None else t
    q = _quality(spec, q)
    m, n = spec.m, spec.n
    strategies = [spec.strategies[idx // n][idx % n] for idx in range(m * n)]
    reps0 = ("",) * (m * n)
    keys0 = tuple(s.key(h) for s, h in zip(strategies, reps0))
    level: dict = {(keys0, spec.initial_shares): [1.0, reps0]}
    for _ in range(t):
        nxt: dict = {}
        for (_, shares), (p, reps) in level.items():
            # cells are added one at a time, merging partial states as we go
            partial = {((), shares): [p, ()]}
            for idx, opts in enumerate(_round_options(spec, q, reps, shares, keep_zero=False)):
                i = idx // n
                s = strategies[idx]
                h = reps[idx]
                grown: dict = {}
                for (ks, sh), (pp, rs) in partial.items():
                    for ev, w in opts:
                        h2 = h + ev
                        sh2 = sh if ev == "N" else sh[:i] + (sh[i] + 1,) + sh[i + 1:]
                        key = (ks + (s.key(h2),), sh2)
                        slot = grown.get(key)
                        if slot is None:
                            grown[key] = [pp * w, rs + (h2,)]
                        else:
                            slot[0] += pp * w
                partial = grown
            for (ks, sh), (pp, rs) in partial.items():
                state = (ks, sh)
                slot = nxt.get(state)
                if slot is None:
                    nxt[state] = [pp, rs]
                else:
                    slot[0] += pp
        if len(nxt) > max_states:
            raise EnumerationLimitError(f"lumped chain reached {len(nxt)} states (cap {max_states})")
        level = nxt
    out: dict[tuple[int, ...], list[float]] = defaultdict(list)
    for (_, shares), (p, _) in level.items():
        out[shares].append(p)
    return {sh: math.fsum(ps) for sh, ps in sorted(out.items())}


def shares_from_ensembles(spec: MarketSpec, dist: dict[Ensemble, float], t: int) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], list[float]] = defaultdict(list)
    for e, p in dist.items():
        out[market_share(e, spec.initial_shares, t)].append(p)
    return {sh: math.fsum(ps) for sh, ps in sorted(out.items())}


def terminal_shares(spec: MarketSpec, t: int | None = None, q: Sequence[float] | None = None,
                    method: str = "lumped") -> dict[tuple[int, ...], float]:
    t = spec.horizon if t is None else t
    if method == "lumped":
        return share_distribution(spec, t, q)
    if method == "enumerate":
        return shares_from_ensembles(spec, ensemble_distribution(spec, t, q), t)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class LeadProbs:
    lead1: float
    lead2: float
    tie: float


def lead_probs(spec: MarketSpec, t: int | None = None, q: Sequence[float] | None = None,
               method: str = "lumped") -> LeadProbs:
    """Probabilities of strict leadership of product 1, of product 2, and of a tie between them."""
    if spec.m < 2:
        raise DimensionError("leadership needs at least two products")
    dist = terminal_shares(spec, t, q, method)
    l1 = [p for sh, p in dist.items() if sh[0] > sh[1]]
    l2 = [p for sh, p in dist.items() if sh[1] > sh[0]]
    tie = [p for sh, p in dist.items() if sh[0] == sh[1]]
    return LeadProbs(math.fsum(l1), math.fsum(l2), math.fsum(tie))


def leadership_prob(spec: MarketSpec, t: int | None = None, q: Sequence[float] | None = None,
                    method: str = "lumped") -> float:
    """``P[share_1 > share_2]`` at the end of round ``t`` (strict)."""
    return lead_probs(spec, t, q, method).lead1


def total_consumption_tail(spec: MarketSpec, x: int, t: int | None = None, q: Sequence[float] | None = None,
                           product: int = 0, method: str = "enumerate") -> float:
    """``P[sum_j con(Z_ij) >= x]`` for one product, summed over customers."""
    dist = terminal_shares(spec, t, q, method)
    a = spec.initial_shares[product]
    return math.fsum(p for sh, p in dist.items() if sh[product] - a >= x)


def posterior_odds(spec: MarketSpec, prior: PriorGrid, t: int | None = None, theorem_mode: bool = False,
                   method: str = "lumped") -> tuple[float, float]:
    """``(P[q1 >= q2 | lead1], P[q2 >= q1 | lead1])`` by Bayes over the prior grid."""
    if theorem_mode and not prior.symmetric:
        raise ContractError("theorem-mode posterior needs a prior flagged symmetric")
    num_hi, num_lo, den = [], [], []
    for qv, w in prior.points:
        if w == 0.0:
            continue
        q = tuple(qv) + tuple(spec.quality[len(qv):])
        like = w * leadership_prob(spec, t, q, method)
        den.append(like)
        if q[0] >= q[1]:
            num_hi.append(like)
        if q[1] >= q[0]:
            num_lo.append(like)
    total = math.fsum(den)
    if total == 0.0:
        raise UndefinedPosteriorError("product 1 never strictly leads under any prior point")
    return math.fsum(num_hi) / total, math.fsum(num_lo) / total


# -- monotonicity scans ------------------------------------------------------

@dataclass
class ScanReport:
    quantity: str
    grid: list[float]
    values: list[float]
    tolerance: float = 1e-12
    decreases: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.decreases

    def rows(self) -> list[tuple[float, float, float | None, bool]]:
        out = []
        for k, (g, v) in enumerate(zip(self.grid, self.values)):
            if k == 0:
                out.append((g, v, None, True))
            else:
                diff = v - self.values[k - 1]
                out.append((g, v, diff, diff >= -self.tolerance))
        return out

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "points": len(self.grid),
            "decreases": [list(d) for d in self.decreases],
            "min_adjacent_difference": min((r[2] for r in self.rows()[1:]), default=None),
        }


SCAN_QUANTITIES = ("tail_prob", "expected_consumption", "leadership_prob")


def monotonicity_scan(quantity: str, target, t: int, grid: Sequence[float], x: int | None = None,
                      tolerance: float = 1e-12, method: str = "lumped") -> ScanReport:
    """Evaluate a theorem quantity along a quality grid and report adjacent decreases.

    ``target`` is a strategy for the single-customer quantities and a
    :class:`MarketSpec` for ``leadership_prob`` (which varies ``q1`` with the
    other qualities held at the spec's values).
    """
    grid = [float(g) for g in grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be sorted ascending")
    if quantity == "tail_prob":
        if x is None:
            raise ValueError("tail_prob scan needs x")
        values = [tail_prob(target, t, x, g) for g in grid]
    elif quantity == "expected_consumption":
        values = [expected_consumption(target, t, g) for g in grid]
    elif quantity == "leadership_prob":
        values = [leadership_prob(target, t, (g,) + target.quality[1:], method) for g in grid]
    else:
        raise ValueError(f"unknown scan quantity {quantity!r}; choose from {SCAN_QUANTITIES}")
    report = ScanReport(quantity, grid, values, tolerance)
    for k in range(1, len(grid)):
        diff = values[k] - values[k - 1]
        if diff < -tolerance:
            report.decreases.append((grid[k - 1], grid[k], diff))
    return report


def quality_grid(start: float = 0.0, stop: float = 1.0, step: float = 0.1) -> list[float]:
    """Inclusive uniform grid; points are rounded to suppress float drift."""
    count = int(round((stop - start) / step))
    return [round(start + k * step, 12) for k in range(count + 1)]
