"""Histories, digests, superiority and market-share bookkeeping.

A history is a plain string over the alphabet ``S``, ``F``, ``N`` (one
character per round).  An ensemble is a tuple of tuples of histories indexed
``[product][customer]``.  Share vectors are tuples of ints.
"""

from __future__ import annotations

import enum
import itertools
from typing import Iterator, Sequence

from .errors import DimensionError, EnumerationLimitError

History = str
Ensemble = tuple[tuple[str, ...], ...]
ShareVector = tuple[int, ...]

ALPHABET = "SFN"
MAX_HISTORY_DEPTH = 12
MAX_ENSEMBLE_CELLS = 12


class Event(str, enum.Enum):
    S = "S"
    F = "F"
    N = "N"

    @property
    def consumed(self) -> bool:
        return self is not Event.N


def parse_history(text: str) -> History:
    """Validate a serialized history.  ``"-"`` denotes the empty history."""
    if text == "-":
        return ""
    bad = set(text) - set(ALPHABET)
    if bad:
        raise ValueError(f"invalid history {text!r}: unexpected {sorted(bad)}")
    return text


def format_history(h: History) -> str:
    return h if h else "-"


def digest(h: History) -> History:
    return h.replace("N", "")


def consumption(h: History) -> int:
    return len(h) - h.count("N")


def successes(h: History) -> int:
    return h.count("S")


def failures(h: History) -> int:
    return h.count("F")


def digests_superior(d1: History, d2: History) -> bool:
    """Superiority of two equal-length digests: no index where d1 has F and d2 has S."""
    if len(d1) != len(d2):
        return False
    return not any(a == "F" and b == "S" for a, b in zip(d1, d2))


def comparable(h1: History, h2: History) -> bool:
    return len(h1) == len(h2) and consumption(h1) == consumption(h2)


def is_superior(h1: History, h2: History) -> bool:
    """``h1 ⪰ h2``; false for incomparable pairs (see :func:`comparable`)."""
    if not comparable(h1, h2):
        return False
    return digests_superior(digest(h1), digest(h2))


def enumerate_histories(t: int, cap: int = MAX_HISTORY_DEPTH) -> list[History]:
    """All ``3**t`` histories of depth ``t`` in lexicographic S < F < N order."""
    if t < 0:
        raise ValueError("depth must be non-negative")
    if t > cap:
        raise EnumerationLimitError(f"depth {t} exceeds enumeration cap {cap}")
    return ["".join(p) for p in itertools.product(ALPHABET, repeat=t)]


def iter_histories_upto(max_depth: int, cap: int = MAX_HISTORY_DEPTH) -> Iterator[History]:
    for d in range(max_depth + 1):
        yield from enumerate_histories(d, cap)


# -- ensembles ---------------------------------------------------------------

def make_ensemble(grid: Sequence[Sequence[str]]) -> Ensemble:
    ens = tuple(tuple(parse_history(h) for h in row) for row in grid)
    if not ens or not ens[0]:
        raise DimensionError("ensemble needs at least one product and one customer")
    n = len(ens[0])
    depths = {len(h) for row in ens for h in row}
    if any(len(row) != n for row in ens) or len(depths) != 1:
        raise DimensionError("ensemble entries must form a rectangular grid of equal depth")
    return ens


def ensemble_depth(e: Ensemble) -> int:
    return len(e[0][0])


def prefix(e: Ensemble, k: int) -> Ensemble:
    return tuple(tuple(h[:k] for h in row) for row in e)


def enumerate_ensembles(m: int, n: int, t: int, cap: int = MAX_ENSEMBLE_CELLS) -> Iterator[Ensemble]:
    if n * m * t > cap:
        raise EnumerationLimitError(f"n*m*t = {n * m * t} exceeds ensemble cap {cap}")
    hs = enumerate_histories(t)
    for flat in itertools.product(hs, repeat=m * n):
        yield tuple(tuple(flat[i * n:(i + 1) * n]) for i in range(m))


def market_share(e: Ensemble, initial: Sequence[int], k: int) -> ShareVector:
    """Initial share plus units of each product consumed through round ``k``."""
    if len(initial) != len(e):
        raise DimensionError(f"share vector has length {len(initial)}, ensemble has {len(e)} products")
    depth = ensemble_depth(e)
    if not 0 <= k <= depth:
        raise ValueError(f"round {k} outside [0, {depth}]")
    return tuple(a + sum(consumption(h[:k]) for h in row) for a, row in zip(initial, e))


def swap12(shares: Sequence[int]) -> ShareVector:
    """Exchange the first two entries of a share vector."""
    s = list(shares)
    s[0], s[1] = s[1], s[0]
    return tuple(s)


def format_ensemble(e: Ensemble) -> str:
    """Products separated by ``|``, customers by ``,``: ``"SN,FF|NN,SS"``."""
    return "|".join(",".join(format_history(h) for h in row) for row in e)


def parse_ensemble(text: str) -> Ensemble:
    return make_ensemble([row.split(",") for row in text.split("|")])
