"""Joint distributions of histories at two qualities, built row-wise and column-wise.

Given ``q' > q`` (for ensembles: only product 1's quality rises), the row
construction splits each ``P[Z; q]`` over partners ``Z'`` with per-round
factors ``r = g*h``; the column construction splits each ``P[Z'; q']`` over
partners ``Z`` with factors ``r' = g'*h'``.  When the strategies are monotone
(and, for ensembles, weakly or competitively weakly herding) both tables
coincide, are non-negative, and are supported on pairs where ``Z'`` dominates
``Z``.  :func:`verify_joint` checks all of that numerically.

Internally every table is built on flattened ensembles (one history per
product-customer cell, product-major).  A single history is the one-cell case.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .checks import check_monotone, check_weak_herding, share_grid
from .errors import (
    ContractError,
    EnumerationLimitError,
    NotInSupportError,
    ParameterError,
    UnsupportedConfigurationError,
)
from .exact import ensemble_distribution, history_distribution
from .history import (
    consumption,
    digest,
    digests_superior,
    format_ensemble,
    format_history,
    market_share,
)
from .market import MarketSpec
from .strategies import Strategy, evaluate

MAX_SINGLE_DEPTH = 5
MAX_ENSEMBLE_CELLS = 8
TOL = 1e-12

SigmaFn = Callable[[int, str, tuple], float]  # (cell, history prefix, shares) -> probability


@dataclass
class FactorViolation:
    side: str
    factor: str
    cell: int
    round: int
    value: float
    anchor: str
    partner_prefix: str


@dataclass
class JointCouplingTable:
    """Sparse ``f(Z, Z')``; keys are histories, or ensembles for market couplings."""

    entries: dict
    side: str
    t: int
    q: tuple[float, ...]
    q_prime: tuple[float, ...]
    target: object  # Strategy or MarketSpec
    ensemble: bool = False
    factor_violations: list[FactorViolation] = field(default_factory=list)

    def total_mass(self) -> float:
        return math.fsum(self.entries.values())

    def row_sums(self) -> dict:
        acc = defaultdict(list)
        for (z, _), p in self.entries.items():
            acc[z].append(p)
        return {z: math.fsum(ps) for z, ps in acc.items()}

    def column_sums(self) -> dict:
        acc = defaultdict(list)
        for (_, zp), p in self.entries.items():
            acc[zp].append(p)
        return {zp: math.fsum(ps) for zp, ps in acc.items()}

    def support(self) -> list:
        return [k for k, p in self.entries.items() if p != 0.0]

    def format_key(self, z) -> str:
        return format_ensemble(z) if self.ensemble else format_history(z)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["Z", "Z_prime", "f"])
            for (z, zp), p in sorted(self.entries.items()):
                w.writerow([self.format_key(z), self.format_key(zp), repr(p)])


# -- shared helpers ----------------------------------------------------------

def _ratio(num: float, den: float) -> float:
    # zero denominators only occur on zero-probability anchors
    return num / den if den != 0.0 else 0.0


def _prefix_cons(h: str) -> list[int]:
    out = [0]
    for ev in h:
        out.append(out[-1] + (ev != "N"))
    return out


class _Layout:
    """Cell bookkeeping for ``m`` products x ``n`` customers."""

    def __init__(self, m: int, n: int, initial: Sequence[int], sigma: SigmaFn):
        self.m = m
        self.n = n
        self.cells = m * n
        self.initial = tuple(initial)
        self.sigma = sigma

    def product(self, cell: int) -> int:
        return cell // self.n

    def shares_by_round(self, flat: tuple[str, ...], t: int) -> list[tuple[int, ...]]:
        out = []
        for k in range(t + 1):
            sh = list(self.initial)
            for cell, h in enumerate(flat):
                sh[cell // self.n] += consumption(h[:k])
            out.append(tuple(sh))
        return out

    def anchor_info(self, flat: tuple[str, ...], t: int):
        shares = self.shares_by_round(flat, t)
        sig = [[self.sigma(c, flat[c][:k], shares[k]) for k in range(t)] for c in range(self.cells)]
        cons = [_prefix_cons(h) for h in flat]
        digs = [digest(h) for h in flat]
        return sig, cons, digs


def _record(viol: list, side: str, factor: str, cell: int, k: int, value: float, anchor, prefix) -> None:
    if value < -TOL or value > 1 + TOL or math.isnan(value):
        viol.append(FactorViolation(side, factor, cell, k, value, "|".join(anchor), "|".join(prefix)))


def row_step(lay: _Layout, X, info, Yp, y_shares, k, q, qp, viol):
    """Per-cell ``[(event, r)]`` for round ``k`` of ``Z'`` given the whole of ``Z``."""
    sigX, consX, digX = info
    options = []
    for cell in range(lay.cells):
        i = lay.product(cell)
        c = consX[cell][k - 1]
        yp = Yp[cell]
        cp = len(yp) - yp.count("N")
        x_ev = X[cell][k - 1]
        sx = sigX[cell][k - 1]
        sy = lay.sigma(cell, yp, y_shares)
        if c == cp:
            if i == 0:
                g = 1.0 if x_ev != "N" else _ratio(sy - sx, 1.0 - sx)
            else:
                g = 0.0 if x_ev == "N" else _ratio(sy, sx)
        else:
            g = sy
        d = digX[cell]
        # the partner's next digest letter is coupled to the anchor letter at the same digest index
        if cp < len(d):
            h = 1.0 if d[cp] == "S" else _ratio(qp[i] - q[i], 1.0 - q[i])
        else:
            h = qp[i] if i == 0 else 1.0
        _record(viol, "row", "g", cell, k, g, X, Yp)
        if g != 0.0:
            _record(viol, "row", "h", cell, k, h, X, Yp)
        opts = [("S", g * h), ("F", g * (1.0 - h)), ("N", 1.0 - g)]
        options.append([o for o in opts if o[1] != 0.0])
    return options


def column_step(lay: _Layout, Y, info, Xp, x_shares, k, q, qp, viol):
    """Per-cell ``[(event, r')]`` for round ``k`` of ``Z`` given the whole of ``Z'``."""
    sigY, consY, digY = info
    options = []
    for cell in range(lay.cells):
        i = lay.product(cell)
        xp = Xp[cell]
        c = len(xp) - xp.count("N")
        cp = consY[cell][k - 1]
        y_ev = Y[cell][k - 1]
        sy = sigY[cell][k - 1]
        sx = lay.sigma(cell, xp, x_shares)
        if c == cp:
            if i == 0:
                g = 0.0 if y_ev == "N" else _ratio(sx, sy)
            else:
                g = 1.0 if y_ev != "N" else _ratio(sx - sy, 1.0 - sy)
        else:
            g = sx
        d = digY[cell]
        if c < len(d):
            h = 0.0 if d[c] == "F" else _ratio(q[i], qp[i])
        else:
            h = 1.0 if i == 0 else q[i]
        _record(viol, "column", "g", cell, k, g, Y, Xp)
        if g != 0.0:
            _record(viol, "column", "h", cell, k, h, Y, Xp)
        opts = [("S", g * h), ("F", g * (1.0 - h)), ("N", 1.0 - g)]
        options.append([o for o in opts if o[1] != 0.0])
    return options


def _expand(lay: _Layout, anchor, anchor_p, t, q, qp, side, viol):
    """All partners of ``anchor`` with their factor products, by round-wise DFS."""
    info = lay.anchor_info(anchor, t)
    step = row_step if side == "row" else column_step
    partial = [(("",) * lay.cells, 1.0, lay.initial)]
    for k in range(1, t + 1):
        grown = []
        for pre, R, shares in partial:
            opts = step(lay, anchor, info, pre, shares, k, q, qp, viol)
            combos = [((), R, list(shares))]
            for cell, cell_opts in enumerate(opts):
                i = lay.product(cell)
                nxt = []
                for evs, rr, sh in combos:
                    for ev, r in cell_opts:
                        if ev == "N":
                            nxt.append((evs + (ev,), rr * r, sh))
                        else:
                            sh2 = sh.copy()
                            sh2[i] += 1
                            nxt.append((evs + (ev,), rr * r, sh2))
                combos = nxt
            for evs, rr, sh in combos:
                grown.append((tuple(h + ev for h, ev in zip(pre, evs)), rr, tuple(sh)))
        partial = grown
    return [(partner, R * anchor_p) for partner, R, _ in partial]


def _build(lay: _Layout, anchors: dict, t, q, qp, side):
    viol: list[FactorViolation] = []
    entries = {}
    for anchor, p in anchors.items():
        if p == 0.0:
            continue
        for partner, f in _expand(lay, anchor, p, t, q, qp, side, viol):
            key = (anchor, partner) if side == "row" else (partner, anchor)
            entries[key] = f
    return entries, viol


# -- support criteria --------------------------------------------------------

def dominates_by_round(z: str, zp: str) -> bool:
    """For every round k some 0 < l <= k has ``dig(zp^l) ⪰ dig(z^k)``."""
    for k in range(1, len(z) + 1):
        dz = digest(z[:k])
        if not any(digests_superior(digest(zp[:l]), dz) for l in range(1, k + 1)):
            return False
    return True


def lags_by_round(z: str, zp: str) -> bool:
    """For every round k some 0 < l <= k has ``dig(z^l) = dig(zp^k)``."""
    for k in range(1, len(z) + 1):
        dzp = digest(zp[:k])
        if not any(digest(z[:l]) == dzp for l in range(1, k + 1)):
            return False
    return True


def criterion_single(z: str, zp: str) -> bool:
    return len(z) == len(zp) and dominates_by_round(z, zp)


def criterion_ensemble(z, zp) -> bool:
    """Product 1 of ``zp`` dominates ``z`` round by round; other products of ``zp`` lag ``z``."""
    for i, (row, row_p) in enumerate(zip(z, zp)):
        for h, hp in zip(row, row_p):
            ok = dominates_by_round(h, hp) if i == 0 else lags_by_round(h, hp)
            if not ok:
                return False
    return True


# -- single history ----------------------------------------------------------

def _single_layout(s: Strategy) -> _Layout:
    return _Layout(1, 1, (0,), lambda cell, h, shares: evaluate(s, h))


def _require_monotone(strategies, depth: int, share_set=None) -> None:
    for s in strategies:
        rep = check_monotone(s, depth, share_set)
        if not rep.passed:
            h1, h2, shares, i, v1, v2 = rep.witness
            raise ContractError(
                f"{s.name} is not monotone: sigma({format_history(h1)})={v1} < sigma({format_history(h2)})={v2}"
                + (f" at shares {shares}, product {i + 1}" if shares is not None else "")
            )


def build_joint(s: Strategy, t: int, q: float, q_prime: float, side: str = "row",
                check: bool = True, cap: int = MAX_SINGLE_DEPTH) -> JointCouplingTable:
    """Row (``side="row"``) or column construction of the single-history coupling."""
    if s.share_aware:
        raise ContractError(f"{s.name} is share-aware; use build_ensemble_joint")
    if not q_prime > q:
        raise ParameterError(f"need q' > q, got q={q}, q'={q_prime}")
    if not (0.0 <= q <= 1.0 and 0.0 <= q_prime <= 1.0):
        raise ParameterError("qualities must lie in [0, 1]")
    if side not in ("row", "column"):
        raise ValueError("side must be 'row' or 'column'")
    if t > cap:
        raise EnumerationLimitError(f"coupling depth {t} exceeds cap {cap}")
    if check:
        _require_monotone([s], t)
    lay = _single_layout(s)
    anchors_q = q if side == "row" else q_prime
    anchors = {(h,): p for h, p in history_distribution(s, t, anchors_q).items()}
    entries, viol = _build(lay, anchors, t, (q,), (q_prime,), side)
    return JointCouplingTable(
        {(z[0], zp[0]): f for (z, zp), f in entries.items()},
        side, t, (q,), (q_prime,), s, ensemble=False, factor_violations=viol,
    )


# -- ensembles ---------------------------------------------------------------

def herding_mode(spec: MarketSpec, depth: int, share_bound: int | None = None) -> str | None:
    """``"weak"`` if every strategy is weakly herding, else ``"competitive"`` if all are
    competitively weakly herding, else ``None``."""
    if share_bound is None:
        share_bound = max(spec.initial_shares) + spec.n * depth
    distinct = []
    for row in spec.strategies:
        for s in row:
            if s.share_aware and s not in distinct:
                distinct.append(s)
    if all(check_weak_herding(s, False, depth, share_bound, spec.m).passed for s in distinct):
        return "weak"
    if all(check_weak_herding(s, True, depth, share_bound, spec.m).passed for s in distinct):
        return "competitive"
    return None


def _spec_layout(spec: MarketSpec) -> _Layout:
    n = spec.n

    def sigma(cell, h, shares):
        return spec.sigma(cell // n, cell % n, h, shares)

    return _Layout(spec.m, n, spec.initial_shares, sigma)


def _flatten(e) -> tuple[str, ...]:
    return tuple(h for row in e for h in row)


def _nest(flat, m, n):
    return tuple(flat[i * n:(i + 1) * n] for i in range(m))


def validate_ensemble_coupling(spec: MarketSpec, t: int, q, q_prime, check: bool = True,
                               cap: int = MAX_ENSEMBLE_CELLS) -> str | None:
    """Parameter and hypothesis checks shared by both sides; returns the herding mode."""
    q, q_prime = tuple(q), tuple(q_prime)
    if len(q) != spec.m or len(q_prime) != spec.m:
        raise ParameterError("quality vectors must have one entry per product")
    if not q_prime[0] > q[0]:
        raise ParameterError(f"need q'_1 > q_1, got {q[0]} and {q_prime[0]}")
    if any(a != b for a, b in zip(q[1:], q_prime[1:])):
        raise ParameterError("q and q' may differ only in product 1")
    if spec.n * spec.m * t > cap:
        raise EnumerationLimitError(f"n*m*t = {spec.n * spec.m * t} exceeds ensemble coupling cap {cap}")
    if not check:
        return None
    bound = max(spec.initial_shares) + spec.n * t
    distinct = []
    for row in spec.strategies:
        for s in row:
            if s not in distinct:
                distinct.append(s)
    mode = herding_mode(spec, t, bound)
    if mode is None:
        raise ContractError("strategies are neither weakly nor competitively weakly herding")
    if mode == "competitive" and spec.m > 2:
        raise UnsupportedConfigurationError(
            "competitively weakly herding markets are supported only with two products"
        )
    grid = share_grid(spec.m, bound) if any(s.share_aware for s in distinct) else None
    _require_monotone(distinct, t, grid)
    return mode


def build_ensemble_joint(spec: MarketSpec, t: int, q: Sequence[float], q_prime: Sequence[float],
                         side: str = "row", check: bool = True,
                         cap: int = MAX_ENSEMBLE_CELLS) -> JointCouplingTable:
    """Row or column construction of the ensemble coupling (product 1 improves)."""
    if side not in ("row", "column"):
        raise ValueError("side must be 'row' or 'column'")
    q, q_prime = tuple(map(float, q)), tuple(map(float, q_prime))
    validate_ensemble_coupling(spec, t, q, q_prime, check, cap)
    lay = _spec_layout(spec)
    dist = ensemble_distribution(spec, t, q if side == "row" else q_prime)
    anchors = {_flatten(e): p for e, p in dist.items()}
    entries, viol = _build(lay, anchors, t, q, q_prime, side)
    m, n = spec.m, spec.n
    return JointCouplingTable(
        {(_nest(z, m, n), _nest(zp, m, n)): f for (z, zp), f in entries.items()},
        side, t, q, q_prime, spec, ensemble=True, factor_violations=viol,
    )


# -- round pairing and ratio identities --------------------------------------

def pair_rounds(z: str, zp: str) -> dict[int, int]:
    """Bijection of 1-based rounds of ``z`` onto rounds of ``zp``.

    Consumption rounds of ``z`` go to the first ``con(z)`` consumption rounds of
    ``zp``; the earliest ``con(zp) - con(z)`` N-rounds of ``z`` go to the
    remaining consumption rounds of ``zp``; leftover N-rounds pair up in
    ascending order.
    """
    if not criterion_single(z, zp):
        raise NotInSupportError(f"({format_history(z)}, {format_history(zp)}) violates the support criterion")
    cons_z = [k for k, ev in enumerate(z, 1) if ev != "N"]
    n_z = [k for k, ev in enumerate(z, 1) if ev == "N"]
    cons_zp = [k for k, ev in enumerate(zp, 1) if ev != "N"]
    n_zp = [k for k, ev in enumerate(zp, 1) if ev == "N"]
    extra = len(cons_zp) - len(cons_z)
    mapping = dict(zip(cons_z, cons_zp))
    mapping.update(zip(n_z[:extra], cons_zp[len(cons_z):]))
    mapping.update(zip(n_z[extra:], n_zp))
    return mapping


def _lag_pairing(z: str, zp: str) -> dict[int, int]:
    """Pairing for products other than 1, where ``zp`` has the shorter digest."""
    if not lags_by_round(z, zp):
        raise NotInSupportError(f"({format_history(z)}, {format_history(zp)}) violates the lag criterion")
    cons_z = [k for k, ev in enumerate(z, 1) if ev != "N"]
    n_z = [k for k, ev in enumerate(z, 1) if ev == "N"]
    cons_zp = [k for k, ev in enumerate(zp, 1) if ev != "N"]
    n_zp = [k for k, ev in enumerate(zp, 1) if ev == "N"]
    extra = len(cons_z) - len(cons_zp)
    inverse = dict(zip(cons_zp, cons_z))
    inverse.update(zip(n_zp[:extra], cons_z[len(cons_zp):]))
    inverse.update(zip(n_zp[extra:], n_z))
    return {k: kp for kp, k in inverse.items()}


def _q_step(ev: str, q: float) -> float:
    return q if ev == "S" else (1.0 - q if ev == "F" else 1.0)


def _h_of(options, ev: str) -> float:
    """Recover the h-factor of one cell from its option list (1 for N)."""
    if ev == "N":
        return 1.0
    vals = dict(options)
    s, f = vals.get("S", 0.0), vals.get("F", 0.0)
    g = s + f
    if g == 0.0:
        return 0.0
    return s / g if ev == "S" else f / g


def ratio_identity_residuals(target, z, zp, q, q_prime) -> dict[str, float]:
    """Largest residuals of the per-round g-ratio and per-pair h-ratio identities.

    In cross-multiplied form: ``g(k) * cZ(k) = g'(k) * cZ'(k)`` for each round and
    ``h(k') * QZ(k) = h'(k) * QZ'(k')`` for each paired ``k -> k'``.  Both vanish
    on support pairs when the two constructions agree.
    """
    if isinstance(target, MarketSpec):
        lay = _spec_layout(target)
        X, Y = _flatten(z), _flatten(zp)
        q, q_prime = tuple(q), tuple(q_prime)
    else:
        lay = _single_layout(target)
        X, Y = (z,), (zp,)
        q, q_prime = (q,), (q_prime,)
    t = len(X[0])
    viol: list = []
    x_info = lay.anchor_info(X, t)
    y_info = lay.anchor_info(Y, t)
    x_shares = lay.shares_by_round(X, t)
    y_shares = lay.shares_by_round(Y, t)
    g_res = 0.0
    h_row = [[1.0] * (t + 1) for _ in range(lay.cells)]
    h_col = [[1.0] * (t + 1) for _ in range(lay.cells)]
    for k in range(1, t + 1):
        Yp = tuple(h[:k - 1] for h in Y)
        Xp = tuple(h[:k - 1] for h in X)
        row = row_step(lay, X, x_info, Yp, y_shares[k - 1], k, q, q_prime, viol)
        col = column_step(lay, Y, y_info, Xp, x_shares[k - 1], k, q, q_prime, viol)
        for cell in range(lay.cells):
            y_ev, x_ev = Y[cell][k - 1], X[cell][k - 1]
            g_row = dict(row[cell])
            g_col = dict(col[cell])
            g = 1.0 - g_row.get("N", 0.0)
            gp = 1.0 - g_col.get("N", 0.0)
            g_fac = (1.0 - g) if y_ev == "N" else g
            gp_fac = (1.0 - gp) if x_ev == "N" else gp
            sx = x_info[0][cell][k - 1]
            sy = y_info[0][cell][k - 1]
            cz = (1.0 - sx) if x_ev == "N" else sx
            czp = (1.0 - sy) if y_ev == "N" else sy
            g_res = max(g_res, abs(g_fac * cz - gp_fac * czp))
            h_row[cell][k] = _h_of(row[cell], y_ev)
            h_col[cell][k] = _h_of(col[cell], x_ev)
    h_res = 0.0
    for cell in range(lay.cells):
        i = lay.product(cell)
        pairing = pair_rounds(X[cell], Y[cell]) if i == 0 else _lag_pairing(X[cell], Y[cell])
        for k, kp in pairing.items():
            lhs = h_row[cell][kp] * _q_step(X[cell][k - 1], q[i])
            rhs = h_col[cell][k] * _q_step(Y[cell][kp - 1], q_prime[i])
            h_res = max(h_res, abs(lhs - rhs))
    return {"g": g_res, "h": h_res}


# -- verification ------------------------------------------------------------

@dataclass
class VerificationReport:
    checks: dict = field(default_factory=dict)

    def add(self, name: str, passed: bool, **detail) -> None:
        self.checks[name] = {"passed": bool(passed), **detail}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c["passed"]]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def _exact_marginals(table: JointCouplingTable):
    if table.ensemble:
        spec = table.target
        return (ensemble_distribution(spec, table.t, table.q), ensemble_distribution(spec, table.t, table.q_prime))
    s = table.target
    return (history_distribution(s, table.t, table.q[0]), history_distribution(s, table.t, table.q_prime[0]))


def _marginal_error(sums: dict, exact: dict):
    worst, where = 0.0, None
    for key in set(sums) | {k for k, p in exact.items() if p != 0.0}:
        err = abs(sums.get(key, 0.0) - exact.get(key, 0.0))
        if err > worst:
            worst, where = err, key
    return worst, where


def verify_joint(row: JointCouplingTable, col: JointCouplingTable, tol: float = TOL) -> VerificationReport:
    """Entrywise agreement, both marginals, support criterion, dominance, factor bounds."""
    if (row.t, row.q, row.q_prime, row.ensemble) != (col.t, col.q, col.q_prime, col.ensemble) or row.target != col.target:
        raise ContractError("row and column tables were built with different parameters")
    fmt = row.format_key
    report = VerificationReport()

    worst, where = 0.0, None
    for key in set(row.entries) | set(col.entries):
        d = abs(row.entries.get(key, 0.0) - col.entries.get(key, 0.0))
        if d > worst:
            worst, where = d, key
    report.add("entrywise", worst <= tol, max_abs_diff=worst,
               witness=None if where is None or worst <= tol else [fmt(where[0]), fmt(where[1])])

    exact_q, exact_qp = _exact_marginals(row)
    err_r, at_r = _marginal_error(row.row_sums(), exact_q)
    err_c, at_c = _marginal_error(col.column_sums(), exact_qp)
    report.add("row_marginal", err_r <= tol, max_abs_error=err_r,
               witness=fmt(at_r) if at_r is not None and err_r > tol else None)
    report.add("column_marginal", err_c <= tol, max_abs_error=err_c,
               witness=fmt(at_c) if at_c is not None and err_c > tol else None)

    criterion = criterion_ensemble if row.ensemble else criterion_single
    bad_support = None
    negative = None
    for table in (row, col):
        for (z, zp), p in table.entries.items():
            if p < -tol and negative is None:
                negative = [table.side, fmt(z), fmt(zp), p]
            if p != 0.0 and bad_support is None and not criterion(z, zp):
                bad_support = [table.side, fmt(z), fmt(zp)]
    report.add("support", bad_support is None and negative is None, witness=bad_support, negative_entry=negative)

    dom_witness = None
    for (z, zp), p in row.entries.items():
        if p == 0.0:
            continue
        if row.ensemble:
            spec = row.target
            for k in range(1, row.t + 1):
                a = market_share(z, spec.initial_shares, k)
                b = market_share(zp, spec.initial_shares, k)
                if b[0] < a[0] or any(bi > ai for ai, bi in zip(a[1:], b[1:])):
                    dom_witness = [fmt(z), fmt(zp), k]
                    break
        elif any(consumption(zp[:k]) < consumption(z[:k]) for k in range(1, row.t + 1)):
            dom_witness = [fmt(z), fmt(zp)]
        if dom_witness:
            break
    tail_gaps = _tail_gaps(row, exact_q, exact_qp)
    worst_gap = min(tail_gaps.values(), default=0.0)
    report.add("dominance", dom_witness is None and worst_gap >= -tol, witness=dom_witness,
               min_tail_gap=worst_gap, tails={str(k): v for k, v in tail_gaps.items()})

    fv = row.factor_violations + col.factor_violations
    first = fv[0] if fv else None
    report.add("factor_bounds", not fv, count=len(fv),
               witness=None if first is None else {
                   "side": first.side, "factor": first.factor, "cell": first.cell,
                   "round": first.round, "value": first.value,
                   "anchor": first.anchor, "partner_prefix": first.partner_prefix})
    return report


def _tail_gaps(table: JointCouplingTable, exact_q: dict, exact_qp: dict) -> dict:
    """``P[event; q'] - P[event; q]`` for the monotone events the coupling implies."""
    if table.ensemble:
        spec = table.target

        def lead(d):
            return math.fsum(p for e, p in d.items() if (lambda w: w[0] > w[1] if len(w) > 1 else False)(
                market_share(e, spec.initial_shares, table.t)))

        gaps = {}
        if spec.m >= 2:
            gaps["lead1"] = lead(exact_qp) - lead(exact_q)
        for x in range(1, spec.n * table.t + 1):
            a = math.fsum(p for e, p in exact_q.items() if sum(consumption(h) for h in e[0]) >= x)
            b = math.fsum(p for e, p in exact_qp.items() if sum(consumption(h) for h in e[0]) >= x)
            gaps[f"product1_total>={x}"] = b - a
        return gaps
    gaps = {}
    for x in range(1, table.t + 1):
        a = math.fsum(p for h, p in exact_q.items() if consumption(h) >= x)
        b = math.fsum(p for h, p in exact_qp.items() if consumption(h) >= x)
        gaps[f"con>={x}"] = b - a
    return gaps


def verify_coupling(target, t: int, q, q_prime, check: bool = True) -> tuple[VerificationReport, JointCouplingTable, JointCouplingTable]:
    """Build both sides and verify them."""
    if isinstance(target, MarketSpec):
        row = build_ensemble_joint(target, t, q, q_prime, "row", check)
        col = build_ensemble_joint(target, t, q, q_prime, "column", check=False)
    else:
        row = build_joint(target, t, q, q_prime, "row", check)
        col = build_joint(target, t, q, q_prime, "column", check=False)
    return verify_joint(row, col), row, col
