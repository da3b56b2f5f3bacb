"""Market configuration: customers, products, qualities, strategy grid, priors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import DimensionError, SpecError
from .strategies import Strategy, evaluate


def check_quality(q: Sequence[float]) -> tuple[float, ...]:
    q = tuple(float(x) for x in q)
    for x in q:
        if not 0.0 <= x <= 1.0:
            raise SpecError(f"quality {x} outside [0, 1]")
    return q


@dataclass(frozen=True)
class TheoremMode:
    monotone: bool = False
    herding: str | None = None  # None, "weak" or "competitive"
    anonymous: bool = False

    @property
    def enabled(self) -> bool:
        return self.monotone or self.herding is not None or self.anonymous


@dataclass(frozen=True)
class MarketSpec:
    """``strategies[i][j]`` is customer ``j``'s strategy for product ``i``."""

    customers: int
    products: int
    quality: tuple[float, ...]
    strategies: tuple[tuple[Strategy, ...], ...]
    initial_shares: tuple[int, ...] = ()
    horizon: int = 3
    seed: int = 0
    replications: int = 10_000
    name: str = "market"
    theorem_mode: TheoremMode = field(default_factory=TheoremMode)
    prior: "PriorGrid | None" = None
    caps: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.customers < 1 or self.products < 1:
            raise SpecError("need at least one customer and one product")
        object.__setattr__(self, "quality", check_quality(self.quality))
        if not self.initial_shares:
            object.__setattr__(self, "initial_shares", (0,) * self.products)
        object.__setattr__(self, "initial_shares", tuple(int(a) for a in self.initial_shares))
        if len(self.quality) != self.products:
            raise DimensionError(f"quality has {len(self.quality)} entries for {self.products} products")
        if len(self.initial_shares) != self.products:
            raise DimensionError(f"initial shares have {len(self.initial_shares)} entries for {self.products} products")
        if any(a < 0 for a in self.initial_shares):
            raise SpecError("initial shares must be non-negative")
        if len(self.strategies) != self.products or any(len(row) != self.customers for row in self.strategies):
            raise DimensionError(f"strategy grid must be {self.products} products x {self.customers} customers")
        if self.horizon < 0:
            raise SpecError("horizon must be non-negative")

    @property
    def n(self) -> int:
        return self.customers

    @property
    def m(self) -> int:
        return self.products

    @property
    def share_aware(self) -> bool:
        return any(s.share_aware for row in self.strategies for s in row)

    def with_quality(self, q: Sequence[float]) -> "MarketSpec":
        return replace(self, quality=check_quality(q))

    def sigma(self, i: int, j: int, h: str, shares: Sequence[int]) -> float:
        return evaluate(self.strategies[i][j], h, shares, i)

    @classmethod
    def uniform(cls, strategy: Strategy, customers: int, products: int, quality: Sequence[float], **kw) -> "MarketSpec":
        grid = tuple(tuple(strategy for _ in range(customers)) for _ in range(products))
        return cls(customers=customers, products=products, quality=tuple(quality), strategies=grid, **kw)

    @classmethod
    def per_customer(cls, strategies: Sequence[Strategy], products: int, quality: Sequence[float], **kw) -> "MarketSpec":
        """Each customer uses one strategy for every product."""
        grid = tuple(tuple(strategies) for _ in range(products))
        return cls(customers=len(strategies), products=products, quality=tuple(quality), strategies=grid, **kw)


@dataclass(frozen=True)
class PriorGrid:
    """Discrete prior over quality vectors of the first two products."""

    points: tuple[tuple[tuple[float, ...], float], ...]
    symmetric: bool = False

    def __post_init__(self):
        if not self.points:
            raise SpecError("prior grid is empty")
        pts = tuple((check_quality(q), float(w)) for q, w in self.points)
        if any(w < 0 for _, w in pts):
            raise SpecError("prior weights must be non-negative")
        total = math.fsum(w for _, w in pts)
        if not math.isclose(total, 1.0, abs_tol=1e-12):
            raise SpecError(f"prior weights sum to {total}, not 1")
        object.__setattr__(self, "points", pts)
        if self.symmetric and not self.is_symmetric():
            raise SpecError("prior flagged symmetric but weight(q1,q2,...) != weight(q2,q1,...)")

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        weights: dict[tuple, float] = {}
        for q, w in self.points:
            weights[q] = weights.get(q, 0.0) + w
        for q, w in weights.items():
            swapped = (q[1], q[0]) + q[2:]
            if abs(weights.get(swapped, 0.0) - w) > tol:
                return False
        return True

    @classmethod
    def two_point(cls, a: float, b: float, rest: Sequence[float] = ()) -> "PriorGrid":
        rest = tuple(rest)
        if a == b:
            return cls((((a, b) + rest, 1.0),), symmetric=True)
        return cls((((a, b) + rest, 0.5), ((b, a) + rest, 0.5)), symmetric=True)

    @classmethod
    def product_uniform(cls, values: Sequence[float], rest: Sequence[float] = ()) -> "PriorGrid":
        values = list(values)
        w = 1.0 / len(values) ** 2
        pts = tuple(((x, y) + tuple(rest), w) for x in values for y in values)
        return cls(pts, symmetric=True)


def elitist_scenario(customers: int, quality: Sequence[float] = (0.8, 0.3), **kw) -> MarketSpec:
    """Two products, no initial shares; customer 1 follows her last experience,
    every other customer avoids the strict share leader."""
    from .strategies import Elitist, LastExperience

    if customers < 2:
        raise SpecError("the elitist scenario needs at least two customers")
    kw.setdefault("name", f"elitist_n{customers}")
    row = (LastExperience(),) + (Elitist(),) * (customers - 1)
    return MarketSpec(customers=customers, products=2, quality=tuple(quality),
                      strategies=(row, row), initial_shares=(0, 0), **kw)
