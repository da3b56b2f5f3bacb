"""Experiment runners behind the CLI subcommands.

Each runner returns an :class:`ExperimentResult` holding CSV tables, a JSON
summary and optional figures; :func:`write_result` puts them on disk with
whole-file atomic replacement.  CSV bodies contain no timestamps, so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .checks import check_anonymous, check_monotone, check_weak_herding
from .coupling import build_ensemble_joint, build_joint, verify_joint
from .errors import ContractError, SpecError
from .exact import (
    ensemble_prob,
    expected_consumption,
    lead_probs,
    monotonicity_scan,
    posterior_odds,
    quality_grid,
    share_distribution,
    tail_prob,
)
from .history import MAX_ENSEMBLE_CELLS, format_ensemble
from .market import MarketSpec, PriorGrid, elitist_scenario
from .montecarlo import agreement_report, estimable_events, estimate_event, simulate_market
from .strategies import Strategy, strategy_from_config

TOL = 1e-12


@dataclass
class Table:
    header: list[str]
    rows: list[list]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(x) for x in row])
        return buf.getvalue()


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return ""
    return x


@dataclass
class ExperimentResult:
    subcommand: str
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    figures: list[Callable[[Path], Path]] = field(default_factory=list)
    failed: bool = False  # a theorem-mode verification failed


@dataclass
class RunOptions:
    seed: int | None = None
    reps: int | None = None
    grid: list[float] | None = None
    strict: bool = False
    theorem_mode: bool = False
    depth: int | None = None
    q: float | None = None
    q_prime: float | None = None
    strategy: str | None = None
    max_n: int = 8
    terminal: bool = False
    plots: bool = True


def parse_grid(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            grid = quality_grid(a, b, step)
        else:
            grid = [float(x) for x in text.split(",")]
    except ValueError:
        raise SpecError(f"bad grid {text!r}; expected a:b:step with step > 0") from None
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise SpecError("grid points must lie in [0, 1]")
    return grid


def parse_strategy_arg(text: str, strict: bool = False) -> Strategy:
    """A catalog name, ``name:key=value,...``, or an expression prefixed ``expr:``."""
    if text.startswith("expr:"):
        return strategy_from_config({"expr": text[5:]}, strict=strict)
    if ":" in text:
        name, params = text.split(":", 1)
        kw = {}
        for item in params.split(","):
            k, _, v = item.partition("=")
            kw[k.strip()] = float(v)
        return strategy_from_config({"builtin": name, "params": kw})
    return strategy_from_config(text)


def _distinct(spec: MarketSpec) -> list[Strategy]:
    out = []
    for row in spec.strategies:
        for s in row:
            if s not in out:
                out.append(s)
    return out


def _label(s: Strategy) -> str:
    cfg = s.to_config()
    params = cfg.get("params")
    if params:
        return s.name + "(" + ",".join(f"{k}={v}" for k, v in sorted(params.items())) + ")"
    return s.name


# -- enumerate ---------------------------------------------------------------

def run_enumerate(spec: MarketSpec, opts: RunOptions, doc: dict | None = None) -> ExperimentResult:
    t = opts.depth if opts.depth is not None else spec.horizon
    res = ExperimentResult("enumerate")
    dist = share_distribution(spec, t)
    res.tables["enumerate_shares"] = Table(
        [f"share_{i + 1}" for i in range(spec.m)] + ["probability"],
        [list(sh) + [p] for sh, p in dist.items()],
    )
    total = math.fsum(dist.values())
    rows = []
    for s in _distinct(spec):
        if s.share_aware:
            continue
        cells = [(i, j) for i in range(spec.m) for j in range(spec.n) if spec.strategies[i][j] == s]
        for i in sorted({i for i, _ in cells}):
            q = spec.quality[i]
            ec = expected_consumption(s, t, q)
            for x in range(t + 1):
                rows.append([_label(s), i + 1, q, x, tail_prob(s, t, x, q), ec])
    res.tables["enumerate_tails"] = Table(
        ["strategy", "product", "quality", "x", "tail_prob", "expected_consumption"], rows)
    ens = [e for e in (doc or {}).get("ensembles", [])]
    if ens:
        from .history import parse_ensemble

        rows = []
        for text in ens:
            e = parse_ensemble(text)
            rows.append([format_ensemble(e), ensemble_prob(spec, e)])
        res.tables["enumerate_ensembles"] = Table(["ensemble", "probability"], rows)
    res.summary = {"t": t, "total_probability": total, "normalized": abs(total - 1.0) <= TOL,
                   "support_size": len(dist)}
    if spec.m >= 2:
        lp = lead_probs(spec, t)
        res.summary["lead_probs"] = {"lead1": lp.lead1, "lead2": lp.lead2, "tie": lp.tie}
    res.failed = opts.theorem_mode and not res.summary["normalized"]
    return res


# -- scan --------------------------------------------------------------------

def run_scan(spec: MarketSpec, opts: RunOptions) -> ExperimentResult:
    t = opts.depth if opts.depth is not None else spec.horizon
    grid = opts.grid or quality_grid(0.0, 1.0, 0.1)
    res = ExperimentResult("scan")
    series = {}
    if spec.m >= 2:
        main = monotonicity_scan("leadership_prob", spec, t, grid)
        main_name = "leadership_prob"
    else:
        s = spec.strategies[0][0]
        if s.share_aware or any(x != s for row in spec.strategies for x in row) or spec.n != 1:
            raise SpecError("single-product scans need one customer with a history-only strategy")
        main = monotonicity_scan("expected_consumption", s, t, grid)
        main_name = "expected_consumption"
    res.tables["scan"] = Table(["grid", "value", "diff", "pass"], [list(r) for r in main.rows()])
    series[main_name] = (main.grid, main.values)
    # aggregate consumption tails of product 1, from the lumped share distribution
    tails = []
    tail_reports = []
    a = spec.initial_shares[0]
    per_point = []
    for g in grid:
        q = (g,) + spec.quality[1:]
        dist = share_distribution(spec, t, q)
        per_point.append(dist)
    for x in range(1, spec.n * t + 1):
        values = [math.fsum(p for sh, p in d.items() if sh[0] - a >= x) for d in per_point]
        bad = [(grid[k - 1], grid[k], values[k] - values[k - 1]) for k in range(1, len(grid))
               if values[k] - values[k - 1] < -TOL]
        tail_reports.append({"x": x, "passed": not bad, "decreases": [list(b) for b in bad]})
        for k, (g, v) in enumerate(zip(grid, values)):
            diff = None if k == 0 else v - values[k - 1]
            tails.append([f"tail:{x}", g, v, diff, diff is None or diff >= -TOL])
        series[f"P[total >= {x}]"] = (grid, values)
    res.tables["scan_tails"] = Table(["series", "grid", "value", "diff", "pass"], tails)
    passed = main.passed and all(r["passed"] for r in tail_reports)
    res.summary = {"t": t, "quantity": main_name, "fixed_quality": list(spec.quality[1:]),
                   "scan": main.to_dict(), "tails": tail_reports, "passed": passed}
    res.failed = opts.theorem_mode and not passed
    if opts.plots:
        from .plotting import plot_scan

        res.figures.append(lambda out: plot_scan(series, out / "scan.png"))
    return res


# -- couple ------------------------------------------------------------------

def run_couple(spec: MarketSpec, opts: RunOptions, doc: dict | None = None) -> ExperimentResult:
    block = dict((doc or {}).get("coupling", {}))
    res = ExperimentResult("couple")
    check = True if opts.theorem_mode else bool(block.get("check", False))
    strategy = opts.strategy or block.get("strategy")
    if strategy is not None:
        s = parse_strategy_arg(strategy, opts.strict) if isinstance(strategy, str) else strategy_from_config(strategy)
        t = opts.depth if opts.depth is not None else int(block.get("t", min(spec.horizon, 5)))
        q = opts.q if opts.q is not None else float(block.get("q", 0.3))
        qp = opts.q_prime if opts.q_prime is not None else float(block.get("q_prime", 0.7))
        row = build_joint(s, t, q, qp, "row", check)
        col = build_joint(s, t, q, qp, "column", False)
        params = {"kind": "single", "strategy": _label(s), "t": t, "q": q, "q_prime": qp}
    else:
        cells = spec.n * spec.m
        t = opts.depth if opts.depth is not None else int(block.get("t", max(1, min(spec.horizon, 8 // cells))))
        q = list(spec.quality)
        if opts.q is not None:
            q[0] = opts.q
        qp = list(q)
        qp[0] = opts.q_prime if opts.q_prime is not None else float(block.get("q_prime", min(1.0, q[0] + 0.3)))
        row = build_ensemble_joint(spec, t, q, qp, "row", check)
        col = build_ensemble_joint(spec, t, q, qp, "column", False)
        params = {"kind": "ensemble", "spec": spec.name, "t": t, "q": q, "q_prime": qp}
    report = verify_joint(row, col)
    keys = sorted(set(row.entries) | set(col.entries))
    res.tables["couple"] = Table(
        ["Z", "Z_prime", "f_row", "f_column"],
        [[row.format_key(z), row.format_key(zp), row.entries.get((z, zp), 0.0), col.entries.get((z, zp), 0.0)]
         for z, zp in keys],
    )
    res.summary = {**params, "hypotheses_checked": check, "pairs": len(keys),
                   "total_mass_row": row.total_mass(), "total_mass_column": col.total_mass(),
                   "report": report.to_dict()}
    res.failed = not report.passed and (opts.theorem_mode or check)
    return res


# -- simulate ----------------------------------------------------------------

def run_simulate(spec: MarketSpec, opts: RunOptions) -> ExperimentResult:
    t = opts.depth if opts.depth is not None else spec.horizon
    seed = spec.seed if opts.seed is None else opts.seed
    R = spec.replications if opts.reps is None else opts.reps
    res = ExperimentResult("simulate")
    run = simulate_market(spec, t, seed, R, trace=opts.terminal and spec.n * spec.m * t <= 24)
    agree = agreement_report(spec, t, seed, R, run=run)
    exact_by_event = {r["event"]: r for r in agree.rows}
    rows = []
    for ev in estimable_events(spec, t):
        est = estimate_event(run, ev)
        ex = exact_by_event.get(ev)
        rows.append([ev, est.mean, est.se, est.half_width, est.count, est.hits, est.pooled,
                     None if ex is None else ex["exact"], None if ex is None else ex["z"],
                     None if ex is None else ex["flag"]])
    res.tables["simulate"] = Table(
        ["event", "mean", "se", "half_width_99", "replications", "hits", "pooled", "exact", "z", "flag"], rows)
    if opts.terminal:
        header = ["replication"] + [f"share_{i + 1}" for i in range(spec.m)]
        if run.trace is not None:
            header.append("ensemble")
        res.tables["simulate_terminal"] = Table(header, run.terminal_csv_rows())
    res.summary = {"t": t, "replications": R, "rng": "numpy Philox, counter block = replication index",
                   "agreement": {"skipped": agree.skipped, "passed": agree.passed, "flags": len(agree.flagged)}}
    res.failed = opts.theorem_mode and agree.skipped is None and not agree.passed
    if opts.plots:
        from .plotting import plot_estimates

        events = [r[0] for r in rows]
        means = [r[1] for r in rows]
        hws = [r[3] for r in rows]
        exact = [r[7] for r in rows]
        res.figures.append(lambda out: plot_estimates(events, means, hws, exact, out / "simulate.png"))
    return res


# -- infer -------------------------------------------------------------------

def run_infer(spec: MarketSpec, opts: RunOptions) -> ExperimentResult:
    if spec.m < 2:
        raise SpecError("inference compares products 1 and 2; the spec has one product")
    t = opts.depth if opts.depth is not None else spec.horizon
    prior = spec.prior or PriorGrid.two_point(0.8, 0.3, spec.quality[2:])
    res = ExperimentResult("infer")
    rows, labels, post = [], [], []
    likes = []
    for qv, w in prior.points:
        q = tuple(qv) + tuple(spec.quality[len(qv):])
        lead = lead_probs(spec, t, q).lead1
        likes.append(w * lead)
        rows.append([q[0], q[1], w, lead])
    total = math.fsum(likes)
    for row, like in zip(rows, likes):
        pw = like / total if total > 0 else None
        row.append(pw)
        labels.append(f"({row[0]:g},{row[1]:g})")
        post.append(pw or 0.0)
    hi, lo = posterior_odds(spec, prior, t, theorem_mode=opts.theorem_mode)
    res.tables["infer"] = Table(["q1", "q2", "prior_weight", "p_lead1", "posterior_weight"], rows)
    holds = hi >= lo - TOL
    res.summary = {"t": t, "prior_symmetric": prior.is_symmetric(),
                   "p_q1_ge_q2_given_lead1": hi, "p_q2_ge_q1_given_lead1": lo, "inference_holds": holds}
    res.failed = opts.theorem_mode and not holds
    if opts.plots:
        from .plotting import plot_posterior

        res.figures.append(lambda out: plot_posterior(labels, post, out / "infer.png"))
    return res


# -- counterexample ----------------------------------------------------------

def elitist_reversal_table(quality, max_n: int, t: int = 3):
    """Lead probabilities of the elitist scenario for n = 2..max_n and rounds 1..t."""
    rows = []
    for n in range(2, max_n + 1):
        spec = elitist_scenario(n, quality)
        for k in range(1, t + 1):
            lp = lead_probs(spec, k)
            rows.append([n, k, lp.lead1, lp.lead2, lp.tie, lp.lead2 > lp.lead1])
    return rows


def minimal_reversal_n(quality, max_n: int, t: int = 3) -> int | None:
    for n in range(2, max_n + 1):
        lp = lead_probs(elitist_scenario(n, quality), t)
        if lp.lead2 > lp.lead1:
            return n
    return None


def run_counterexample(spec: MarketSpec, opts: RunOptions) -> ExperimentResult:
    q = tuple(spec.quality[:2])
    if len(q) != 2:
        raise SpecError("the elitist scenario has two products")
    t = max(3, opts.depth or 3)
    res = ExperimentResult("counterexample")
    rows = elitist_reversal_table(q, opts.max_n, t)
    res.tables["counterexample"] = Table(["n", "round", "lead1", "lead2", "tie", "reversed"], rows)
    predicted = q[0] * (1.0 - q[1])
    r2 = [r[2] for r in rows if r[1] == 2]
    r2_err = max(abs(v - predicted) for v in r2)
    n_min = minimal_reversal_n(q, opts.max_n, 3)
    summary = {"quality": list(q), "max_n": opts.max_n, "round2_lead1_predicted": predicted,
               "round2_lead1_max_abs_error": r2_err, "round2_matches": r2_err <= TOL,
               "minimal_reversal_n": n_min}
    if n_min is not None:
        at = elitist_scenario(n_min, q)
        lp = lead_probs(at, 3)
        summary["round3_at_minimal_n"] = {"lead1": lp.lead1, "lead2": lp.lead2, "tie": lp.tie}
        prior = PriorGrid.two_point(q[0], q[1])
        if q[0] != q[1]:
            hi, lo = posterior_odds(at, prior, 3)
            summary["posterior_at_minimal_n"] = {"p_q1_ge_q2_given_lead1": hi, "p_q2_ge_q1_given_lead1": lo}
    res.summary = summary
    if opts.plots:
        from .plotting import plot_counterexample

        r3 = [r for r in rows if r[1] == 3]
        ns, l1, l2 = [r[0] for r in r3], [r[2] for r in r3], [r[3] for r in r3]
        res.figures.append(lambda out: plot_counterexample(ns, l1, l2, 3, out / "counterexample.png"))
    return res


# -- check -------------------------------------------------------------------

def run_check(spec: MarketSpec, opts: RunOptions) -> ExperimentResult:
    depth = opts.depth if opts.depth is not None else min(spec.horizon, 5)
    bound = max(spec.initial_shares) + spec.n * spec.horizon
    m = max(spec.m, 2)
    strategies = _distinct(spec)
    if opts.strategy:
        strategies.append(parse_strategy_arg(opts.strategy, opts.strict))
    res = ExperimentResult("check")
    rows, reports = [], []
    from .checks import share_grid

    for s in strategies:
        shares = share_grid(m, bound) if s.share_aware else None
        checks = [check_monotone(s, depth, shares)]
        if s.share_aware:
            checks.append(check_weak_herding(s, False, depth, bound, m))
            checks.append(check_weak_herding(s, True, depth, bound, m))
        checks.append(check_anonymous(s, s, depth, bound, m))
        for rep in checks:
            d = rep.to_dict()
            rows.append([_label(s), rep.name, rep.passed, rep.pairs_checked,
                         json.dumps(d["violations"][0]) if d["violations"] else None])
            reports.append({"strategy": _label(s), **d, "violations": d["violations"][:5]})
    res.tables["check"] = Table(["strategy", "check", "passed", "pairs_checked", "first_witness"], rows)
    res.summary = {"depth": depth, "share_bound": bound, "reports": reports}
    return res


RUNNERS = {
    "enumerate": run_enumerate,
    "scan": run_scan,
    "couple": run_couple,
    "simulate": run_simulate,
    "infer": run_infer,
    "counterexample": run_counterexample,
    "check": run_check,
}


def run_experiment(subcommand: str, spec: MarketSpec, opts: RunOptions, doc: dict | None = None) -> ExperimentResult:
    if subcommand not in RUNNERS:
        raise ContractError(f"unknown subcommand {subcommand!r}")
    runner = RUNNERS[subcommand]
    if subcommand in ("enumerate", "couple"):
        return runner(spec, opts, doc)
    return runner(spec, opts)


# -- output ------------------------------------------------------------------

def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def run_metadata(spec: MarketSpec, digest: str, opts: RunOptions, subcommand: str) -> dict:
    versions = {"mqlab": __version__, "numpy": np.__version__, "python": platform.python_version()}
    if opts.plots:
        import matplotlib

        versions["matplotlib"] = matplotlib.__version__
    return {
        "subcommand": subcommand,
        "spec_name": spec.name,
        "spec_digest": digest,
        "seed": spec.seed if opts.seed is None else opts.seed,
        "caps": {"ensemble_enumeration_cells": MAX_ENSEMBLE_CELLS, **spec.caps},
        "theorem_mode": opts.theorem_mode,
        "strict": opts.strict,
        "versions": versions,
    }


def write_result(res: ExperimentResult, out: Path, meta: dict) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in res.tables.items():
        path = out / f"{name}.csv"
        _atomic_write(path, table.to_csv().encode())
        written.append(path)
    doc = {"metadata": meta, "failed": res.failed, "outputs": sorted(f"{n}.csv" for n in res.tables),
           "summary": res.summary}
    path = out / f"{res.subcommand}.json"
    _atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n").encode())
    written.append(path)
    for fig in res.figures:
        written.append(fig(out))
    return written


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")
