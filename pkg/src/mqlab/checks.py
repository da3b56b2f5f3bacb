"""Exhaustive checkers for monotonicity, (competitive) weak herding and anonymity.

All checkers enumerate their whole input space in a fixed order, so the
first violation reported is always the same one.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .errors import EnumerationLimitError
from .history import digest, digests_superior, enumerate_histories, format_history, swap12
from .strategies import Strategy, evaluate

MAX_CHECK_DEPTH = 8
MAX_GRID_POINTS = 100_000


@dataclass
class CheckReport:
    name: str
    passed: bool = True
    violations: list[tuple] = field(default_factory=list)
    pairs_checked: int = 0

    def add(self, witness: tuple, limit: int) -> None:
        self.passed = False
        if len(self.violations) < limit:
            self.violations.append(witness)

    @property
    def witness(self):
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "passed": self.passed,
            "pairs_checked": self.pairs_checked,
            "violations": [[_jsonable(x) for x in v] for v in self.violations],
        }


def _jsonable(x):
    if isinstance(x, str):
        return format_history(x)
    if isinstance(x, tuple):
        return list(x)
    return x


def share_grid(m: int, bound: int) -> list[tuple[int, ...]]:
    n_points = (bound + 1) ** m
    if n_points > MAX_GRID_POINTS:
        raise EnumerationLimitError(f"share grid of {n_points} points exceeds cap {MAX_GRID_POINTS}")
    return list(itertools.product(range(bound + 1), repeat=m))


def _check_depth(max_depth: int) -> None:
    if max_depth > MAX_CHECK_DEPTH:
        raise EnumerationLimitError(f"check depth {max_depth} exceeds cap {MAX_CHECK_DEPTH}")


def check_monotone(s: Strategy, max_depth: int, share_set: Sequence[Sequence[int]] | None = None,
                   limit: int = 50) -> CheckReport:
    """``s(h1) >= s(h2)`` for every comparable pair with ``h1 ⪰ h2``, all else equal.

    Witnesses are ``(h1, h2, shares, product, s(h1), s(h2))``.
    """
    _check_depth(max_depth)
    if s.share_aware:
        contexts = [(tuple(w), i) for w in (share_set or [(0, 0)]) for i in range(len(w))]
    else:
        contexts = [(None, 0)]
    report = CheckReport("monotone")
    for depth in range(max_depth + 1):
        classes = defaultdict(list)
        for h in enumerate_histories(depth):
            classes[len(h) - h.count("N")].append(h)
        for members in classes.values():
            digests = [digest(h) for h in members]
            for shares, i in contexts:
                values = [evaluate(s, h, shares, i) for h in members]
                for a, b in itertools.product(range(len(members)), repeat=2):
                    if a == b or not digests_superior(digests[a], digests[b]):
                        continue
                    report.pairs_checked += 1
                    if values[a] < values[b]:
                        report.add((members[a], members[b], shares, i, values[a], values[b]), limit)
    return report


def check_weak_herding(s: Strategy, competitive: bool, max_depth: int, share_bound: int,
                       m: int = 2, limit: int = 50) -> CheckReport:
    """Response of ``s`` to unit increases of each share on ``[0, share_bound]^m``.

    Weak mode: non-decreasing in the own share and unchanged by any other.
    Competitive mode: non-decreasing in the own share, non-increasing in others.
    Witnesses are ``(h, product, shares, raised_product, before, after)``.
    """
    _check_depth(max_depth)
    grid = share_grid(m, share_bound)
    report = CheckReport("competitive-weak-herding" if competitive else "weak-herding")
    for depth in range(max_depth + 1):
        for h in enumerate_histories(depth):
            for i in range(m):
                for w in grid:
                    before = evaluate(s, h, w, i)
                    for k in range(m):
                        if w[k] == share_bound:
                            continue
                        raised = w[:k] + (w[k] + 1,) + w[k + 1:]
                        after = evaluate(s, h, raised, i)
                        report.pairs_checked += 1
                        if k == i:
                            ok = after >= before
                        elif competitive:
                            ok = after <= before
                        else:
                            ok = after == before
                        if not ok:
                            report.add((h, i, w, k, before, after), limit)
    return report


def check_anonymous(s1: Strategy, s2: Strategy, max_depth: int, share_bound: int,
                    m: int = 2, limit: int = 50) -> CheckReport:
    """``s1(h, w)`` for product 1 equals ``s2(h, swap12(w))`` for product 2.

    Witnesses are ``(h, shares, s1 value, s2 value)``.
    """
    _check_depth(max_depth)
    if m < 2:
        raise ValueError("anonymity needs at least two products")
    grid = share_grid(m, share_bound)
    report = CheckReport("anonymous")
    for depth in range(max_depth + 1):
        for h in enumerate_histories(depth):
            for w in grid:
                a = evaluate(s1, h, w, 0)
                b = evaluate(s2, h, swap12(w), 1)
                report.pairs_checked += 1
                if a != b:
                    report.add((h, w, a, b), limit)
    return report
