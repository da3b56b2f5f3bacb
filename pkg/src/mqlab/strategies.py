"""Partiality strategies: the built-in catalog, expression- and table-backed rules.

A strategy maps ``(history, shares, product)`` to the probability of consuming
``product`` in the next round.  ``product`` is a 0-based index into
``shares``.  History-only strategies ignore the last two arguments.

Every strategy also exposes :meth:`Strategy.key`, a summary of the history that
determines its output and that can be advanced one event at a time (the next
key depends only on the current key and the new event).  The exact engine uses
it to lump histories that the strategy cannot tell apart.
"""

from __future__ import annotations

import math
import warnings
from pathlib import Path
from typing import Callable, Hashable, Mapping, Sequence

from . import expr as _expr
from .errors import ContractError, ExpressionEvalError, SpecError
from .history import History, digest, format_history, parse_history


class ClampWarning(RuntimeWarning):
    pass


class Strategy:
    """Base class.  Subclasses implement :meth:`prob`."""

    name = "strategy"
    share_aware = False

    def prob(self, h: History, shares: Sequence[int] | None, product: int) -> float:
        raise NotImplementedError

    def key(self, h: History) -> Hashable:
        return h

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.to_config()}>"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_config() == other.to_config()

    def __hash__(self):
        return hash((type(self).__name__, repr(sorted(self.to_config().items()))))


def evaluate(s: Strategy, h: History, shares: Sequence[int] | None = None, product: int = 0,
             strict: bool = False) -> float:
    """Consumption probability, clamped to [0, 1] (``strict`` raises instead)."""
    if s.share_aware and shares is None:
        raise ContractError(f"{s.name} needs a share vector")
    p = s.prob(h, shares, product)
    if not 0.0 <= p <= 1.0:
        if strict or math.isnan(p):
            raise ExpressionEvalError(f"{s.name} returned {p} outside [0, 1] for history {format_history(h)!r}")
        warnings.warn(f"{s.name} returned {p}; clamped to [0, 1]", ClampWarning, stacklevel=2)
        p = min(1.0, max(0.0, p))
    return p


# -- built-ins ---------------------------------------------------------------

class Constant(Strategy):
    name = "constant"

    def __init__(self, p: float = 0.5):
        if not 0.0 <= p <= 1.0:
            raise SpecError(f"constant strategy needs p in [0, 1], got {p}")
        self.p = float(p)

    def prob(self, h, shares=None, product=0):
        return self.p

    def key(self, h):
        return None

    def to_config(self):
        return {"builtin": self.name, "params": {"p": self.p}}


class BetaPosterior(Strategy):
    """Posterior mean of quality under a Beta(a, b) prior: (S + a) / (con + a + b)."""

    name = "beta-posterior"

    def __init__(self, a: float = 1.0, b: float = 1.0):
        if a <= 0 or b <= 0:
            raise SpecError("beta-posterior needs positive a and b")
        self.a = float(a)
        self.b = float(b)

    def prob(self, h, shares=None, product=0):
        s = h.count("S")
        c = s + h.count("F")
        return (s + self.a) / (c + self.a + self.b)

    def key(self, h):
        return (h.count("S"), h.count("F"))

    def to_config(self):
        return {"builtin": self.name, "params": {"a": self.a, "b": self.b}}


class LastExperience(Strategy):
    """Consume if there is no experience yet or the last one was good."""

    name = "last-experience"

    def prob(self, h, shares=None, product=0):
        d = digest(h)
        return 1.0 if not d or d[-1] == "S" else 0.0

    def key(self, h):
        return digest(h)[-1:]

    def to_config(self):
        return {"builtin": self.name, "params": {}}


class WindowAverage(Strategy):
    """Fraction of satisfied consumptions among the last ``k`` consumptions."""

    name = "window-average"

    def __init__(self, k: int = 2, empty: float = 1.0):
        if k < 1:
            raise SpecError("window-average needs k >= 1")
        if not 0.0 <= empty <= 1.0:
            raise SpecError("window-average needs empty in [0, 1]")
        self.k = int(k)
        self.empty = float(empty)

    def prob(self, h, shares=None, product=0):
        w = digest(h)[-self.k:]
        if not w:
            return self.empty
        return w.count("S") / len(w)

    def key(self, h):
        return digest(h)[-self.k:]

    def to_config(self):
        return {"builtin": self.name, "params": {"k": self.k, "empty": self.empty}}


def is_strict_leader(shares: Sequence[int], product: int) -> bool:
    own = shares[product]
    return all(own > w for k, w in enumerate(shares) if k != product)


class Elitist(Strategy):
    """Avoid the strict market-share leader, otherwise consume.  Ties mean no leader."""

    name = "elitist"
    share_aware = True

    def prob(self, h, shares=None, product=0):
        return 0.0 if is_strict_leader(shares, product) else 1.0

    def key(self, h):
        return None

    def to_config(self):
        return {"builtin": self.name, "params": {}}


class LeaderFollower(Strategy):
    """Consume exactly when the product's share is maximal (ties included)."""

    name = "leader-follower"
    share_aware = True

    def prob(self, h, shares=None, product=0):
        return 1.0 if shares[product] >= max(shares) else 0.0

    def key(self, h):
        return None

    def to_config(self):
        return {"builtin": self.name, "params": {}}


class HerdingBeta(Strategy):
    """Beta posterior with the product's own share added as pseudo-evidence.

    ``(S + 1 + w*share) / (con + 2 + w*share)`` is monotone in the history and
    non-decreasing in the own share, and ignores every other share.
    """

    name = "herding-beta"
    share_aware = True

    def __init__(self, weight: float = 0.5):
        if weight < 0:
            raise SpecError("herding-beta needs a non-negative weight")
        self.weight = float(weight)

    def prob(self, h, shares=None, product=0):
        s = h.count("S")
        c = s + h.count("F")
        x = self.weight * shares[product]
        return (s + 1 + x) / (c + 2 + x)

    def key(self, h):
        return (h.count("S"), h.count("F"))

    def to_config(self):
        return {"builtin": self.name, "params": {"weight": self.weight}}


class ExprStrategy(Strategy):
    """Strategy given by an expression in the strategy language."""

    name = "expr"

    def __init__(self, text: str, strict: bool = False):
        self.text = text
        self.tree = _expr.parse_strategy_expr(text)
        self.strict = strict
        self.share_aware = _expr.uses_shares(self.tree)
        self._lag = _expr.max_lag(self.tree)
        used = _expr.variables(self.tree)
        self._needs_depth = "d" in used

    def env(self, h: History, shares, product: int) -> dict:
        s = h.count("S")
        f = h.count("F")
        d = digest(h)
        env = {"s": float(s), "f": float(f), "c": float(s + f), "d": float(len(h))}
        for lag in range(1, self._lag + 1):
            env[f"last{lag}"] = 1.0 if len(d) >= lag and d[-lag] == "S" else 0.0
        if shares is not None:
            own = shares[product]
            others = [w for k, w in enumerate(shares) if k != product]
            env["shares"] = shares
            env["myshare"] = float(own)
            env["maxothershare"] = float(max(others, default=0))
            env["isleader"] = 1.0 if all(own > w for w in others) else 0.0
        return env

    def prob(self, h, shares=None, product=0):
        return _expr.evaluate_node(self.tree, self.env(h, shares, product), self.strict)

    def key(self, h):
        d = digest(h)
        return (h.count("S"), h.count("F"), len(h) if self._needs_depth else None, d[-self._lag:] if self._lag else "")

    def to_config(self):
        return {"expr": self.text}


class TableStrategy(Strategy):
    """Explicit lookup table keyed by history string."""

    name = "table"

    def __init__(self, table: Mapping[str, float], default: float | None = None):
        for h, p in table.items():
            parse_history(h)
            if not 0.0 <= p <= 1.0:
                raise SpecError(f"table probability {p} for {h!r} outside [0, 1]")
        self.table = dict(table)
        self.default = default

    def prob(self, h, shares=None, product=0):
        try:
            return self.table[h]
        except KeyError:
            if self.default is None:
                raise ContractError(f"history {format_history(h)!r} not in strategy table") from None
            return self.default

    def to_config(self):
        return {"table": {format_history(h): p for h, p in self.table.items()}, "default": self.default}

    def dumps(self) -> str:
        lines = [f"{format_history(h)}\t{p!r}" for h, p in sorted(self.table.items(), key=lambda kv: (len(kv[0]), kv[0]))]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, default: float | None = None) -> "TableStrategy":
        table = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SpecError(f"line {lineno}: expected 'history probability'")
            table[parse_history(parts[0])] = float(parts[1])
        return cls(table, default)

    @classmethod
    def load(cls, path: str | Path, default: float | None = None) -> "TableStrategy":
        return cls.loads(Path(path).read_text(), default)


# -- catalog -----------------------------------------------------------------

CATALOG: dict[str, Callable[..., Strategy]] = {
    "constant": Constant,
    "beta-posterior": BetaPosterior,
    "last-experience": LastExperience,
    "window-average": WindowAverage,
    "elitist": Elitist,
    "leader-follower": LeaderFollower,
    "herding-beta": HerdingBeta,
}

# Catalog entries whose history response is monotone for every parameter choice.
MONOTONE_BUILTINS = ("constant", "beta-posterior", "last-experience", "window-average", "herding-beta")


def make_strategy(name: str, **params) -> Strategy:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise SpecError(f"unknown built-in strategy {name!r}; known: {sorted(CATALOG)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise SpecError(f"bad parameters for {name!r}: {exc}") from None


def strategy_from_config(cfg, base_dir: Path | None = None, strict: bool = False) -> Strategy:
    """Build a strategy from a spec-file entry (a catalog name, or a dict)."""
    if isinstance(cfg, str):
        return make_strategy(cfg)
    if not isinstance(cfg, dict):
        raise SpecError(f"strategy entry must be a name or an object, got {cfg!r}")
    if "builtin" in cfg:
        return make_strategy(cfg["builtin"], **cfg.get("params", {}))
    if "expr" in cfg:
        return ExprStrategy(cfg["expr"], strict=strict)
    if "table" in cfg:
        table = cfg["table"]
        default = cfg.get("default")
        if isinstance(table, str):
            path = Path(table)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return TableStrategy.load(path, default)
        return TableStrategy({parse_history(h): float(p) for h, p in table.items()}, default)
    raise SpecError(f"strategy entry needs one of builtin/expr/table: {cfg!r}")


def catalog_instances() -> dict[str, Strategy]:
    """One representative instance per catalog entry (default parameters)."""
    return {name: factory() for name, factory in CATALOG.items()}
