"""Market spec files: a single JSON document with a ``schema_version`` field.

Minimal example::

    {
      "schema_version": 1,
      "name": "herding_baseline",
      "customers": 2, "products": 2,
      "quality": [0.5, 0.5],
      "initial_shares": [0, 0],
      "horizon": 3,
      "strategies": {"builtin": "herding-beta", "params": {"weight": 0.5}},
      "theorem_mode": {"monotone": true, "herding": "weak", "anonymous": true},
      "prior": {"two_point": [0.8, 0.3]}
    }

``strategies`` is one strategy entry used everywhere, a list with one entry per
customer (used for every product), or ``{"grid": [[...], ...]}`` indexed
``[product][customer]``.  A strategy entry is a catalog name, ``{"builtin":
name, "params": {...}}``, ``{"expr": text}`` or ``{"table": path-or-object}``.
``"scenario": "elitist"`` builds the two-product elitist example instead (only
``customers``, ``quality`` and run fields are read).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Any

from .checks import MAX_CHECK_DEPTH, CheckReport, check_anonymous, check_monotone, check_weak_herding, share_grid
from .errors import SpecError, UnsupportedConfigurationError
from .history import parse_ensemble
from .market import MarketSpec, PriorGrid, TheoremMode, elitist_scenario
from .strategies import strategy_from_config

SCHEMA_VERSION = 1
SUPPORTED_SCHEMAS = (1,)
BUNDLED = ("elitist_example", "herding_baseline")

_TOP_KEYS = {
    "schema_version", "name", "scenario", "customers", "products", "quality", "initial_shares", "horizon",
    "seed", "replications", "strategies", "theorem_mode", "prior", "caps", "ensembles", "coupling",
}


def bundled_spec_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".spec") else name
    if stem not in BUNDLED:
        raise SpecError(f"no bundled spec named {name!r}; bundled: {list(BUNDLED)}")
    return Path(str(resources.files("mqlab") / "specs" / f"{stem}.spec"))


def resolve_spec_path(path: str | Path) -> Path:
    """A filesystem path, or the name of a bundled spec."""
    p = Path(path)
    if p.exists():
        return p
    if p.parent == Path(".") and p.stem in BUNDLED:
        return bundled_spec_path(p.name)
    raise SpecError(f"spec file {str(path)!r} not found")


def spec_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()[:16]


def _require(doc: dict, key: str, kind):
    if key not in doc:
        raise SpecError(f"spec is missing required field {key!r}")
    val = doc[key]
    if not isinstance(val, kind) or isinstance(val, bool):
        raise SpecError(f"field {key!r} has the wrong type")
    return val


def _parse_theorem_mode(raw) -> TheoremMode:
    if raw is None or raw is False:
        return TheoremMode()
    if raw is True:
        return TheoremMode(monotone=True, herding="weak", anonymous=True)
    if not isinstance(raw, dict):
        raise SpecError("theorem_mode must be a boolean or an object")
    unknown = set(raw) - {"monotone", "herding", "anonymous"}
    if unknown:
        raise SpecError(f"unknown theorem_mode fields {sorted(unknown)}")
    herding = raw.get("herding")
    if herding not in (None, "weak", "competitive"):
        raise SpecError("theorem_mode.herding must be null, 'weak' or 'competitive'")
    return TheoremMode(bool(raw.get("monotone", False)), herding, bool(raw.get("anonymous", False)))


def _parse_prior(raw, m: int, quality) -> PriorGrid | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise SpecError("prior must be an object")
    rest = tuple(quality[2:])
    if "two_point" in raw:
        a, b = raw["two_point"]
        return PriorGrid.two_point(float(a), float(b), rest)
    if "product_uniform" in raw:
        return PriorGrid.product_uniform([float(v) for v in raw["product_uniform"]], rest)
    if "points" in raw:
        pts = []
        for entry in raw["points"]:
            qv, w = entry
            pts.append((tuple(float(x) for x in qv), float(w)))
        return PriorGrid(tuple(pts), bool(raw.get("symmetric", False)))
    raise SpecError("prior needs one of two_point, product_uniform, points")


def _strategy_grid(raw, m: int, n: int, base_dir: Path, strict: bool):
    def build(cfg):
        return strategy_from_config(cfg, base_dir, strict)

    if isinstance(raw, dict) and "grid" in raw:
        grid = raw["grid"]
        if not isinstance(grid, list) or len(grid) != m or any(not isinstance(r, list) or len(r) != n for r in grid):
            raise SpecError(f"strategies.grid must be {m} rows of {n} entries")
        return tuple(tuple(build(c) for c in row) for row in grid)
    if isinstance(raw, list):
        if len(raw) != n:
            raise SpecError(f"strategies list has {len(raw)} entries for {n} customers")
        row = tuple(build(c) for c in raw)
        return tuple(row for _ in range(m))
    s = build(raw)
    return tuple(tuple(s for _ in range(n)) for _ in range(m))


def parse_market_spec(doc: dict, base_dir: Path | None = None, strict: bool = False,
                      overrides: dict | None = None) -> MarketSpec:
    """Build a validated :class:`MarketSpec` from a decoded spec document."""
    if not isinstance(doc, dict):
        raise SpecError("spec must be a JSON object")
    doc = {**doc, **(overrides or {})}
    version = doc.get("schema_version")
    if version not in SUPPORTED_SCHEMAS:
        raise SpecError(f"unsupported schema_version {version!r}; supported: {list(SUPPORTED_SCHEMAS)}")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SpecError(f"unknown spec fields {sorted(unknown)}")
    base_dir = base_dir or Path(".")
    n = _require(doc, "customers", int)
    mode = _parse_theorem_mode(doc.get("theorem_mode"))
    run = {
        "horizon": int(doc.get("horizon", 3)),
        "seed": int(doc.get("seed", 0)),
        "replications": int(doc.get("replications", 10_000)),
        "caps": dict(doc.get("caps", {})),
        "theorem_mode": mode,
    }
    scenario = doc.get("scenario")
    if scenario is not None:
        if scenario != "elitist":
            raise SpecError(f"unknown scenario {scenario!r}")
        quality = tuple(doc.get("quality", (0.8, 0.3)))
        spec = elitist_scenario(n, quality, name=doc.get("name", "elitist_example"), **run)
        prior = _parse_prior(doc.get("prior"), 2, spec.quality)
        return replace(spec, prior=prior)
    m = _require(doc, "products", int)
    quality = doc.get("quality")
    if not isinstance(quality, list):
        raise SpecError("field 'quality' must be a list")
    if "strategies" not in doc:
        raise SpecError("spec is missing required field 'strategies'")
    grid = _strategy_grid(doc["strategies"], m, n, base_dir, strict)
    return MarketSpec(
        customers=n, products=m, quality=tuple(quality), strategies=grid,
        initial_shares=tuple(doc.get("initial_shares", ())), name=str(doc.get("name", "market")),
        prior=_parse_prior(doc.get("prior"), m, quality), **run,
    )


def hypothesis_reports(spec: MarketSpec, mode: TheoremMode | None = None, depth: int | None = None) -> list[CheckReport]:
    """Run the theorem-mode checks the spec (or ``mode``) asks for."""
    mode = spec.theorem_mode if mode is None else mode
    t = spec.horizon if depth is None else depth
    t = min(t, MAX_CHECK_DEPTH)
    bound = max(spec.initial_shares) + spec.n * spec.horizon
    if mode.herding == "competitive" and spec.m > 2:
        raise UnsupportedConfigurationError("competitive weak herding is supported only with two products")
    distinct = []
    for row in spec.strategies:
        for s in row:
            if s not in distinct:
                distinct.append(s)
    reports = []
    if mode.monotone:
        shares = share_grid(spec.m, bound) if spec.share_aware else None
        for s in distinct:
            rep = check_monotone(s, t, shares)
            rep.name = f"monotone[{s.name}]"
            reports.append(rep)
    if mode.herding is not None:
        for s in distinct:
            if not s.share_aware:
                continue  # history-only strategies trivially ignore shares
            rep = check_weak_herding(s, mode.herding == "competitive", t, bound, spec.m)
            rep.name = f"{rep.name}[{s.name}]"
            reports.append(rep)
    if mode.anonymous:
        if spec.m < 2:
            raise SpecError("anonymity needs at least two products")
        for j in range(spec.n):
            rep = check_anonymous(spec.strategies[0][j], spec.strategies[1][j], t, bound, spec.m)
            rep.name = f"anonymous[customer {j + 1}]"
            reports.append(rep)
    return reports


def enforce_theorem_mode(spec: MarketSpec, mode: TheoremMode | None = None) -> list[CheckReport]:
    reports = hypothesis_reports(spec, mode)
    failed = [r for r in reports if not r.passed]
    if failed:
        lines = [f"{r.name}: first witness {r.to_dict()['violations'][0]}" for r in failed]
        raise SpecError("theorem-mode precondition failed; " + "; ".join(lines))
    return reports


def read_spec_document(path: str | Path) -> tuple[dict, bytes, Path]:
    p = resolve_spec_path(path)
    raw = p.read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return doc, raw, p


def load_market_spec(path: str | Path, overrides: dict[str, Any] | None = None, strict: bool = False,
                     theorem_mode: bool | None = None) -> MarketSpec:
    """Load, validate and (when theorem mode is on) hypothesis-check a spec file.

    ``theorem_mode=True`` forces checking with the file's declared flags, or
    with all flags if none are declared; ``False`` disables it.
    """
    doc, _, p = read_spec_document(path)
    spec = parse_market_spec(doc, p.parent, strict, overrides)
    mode = spec.theorem_mode
    if theorem_mode is True and not mode.enabled:
        mode = TheoremMode(monotone=True, herding="weak", anonymous=spec.m >= 2)
    if theorem_mode is not False and mode.enabled:
        enforce_theorem_mode(spec, mode)
    return spec


def spec_ensembles(doc: dict):
    """Ensembles listed in the spec (``"ensembles": ["SN,FF|NN,SS", ...]``)."""
    return [parse_ensemble(e) for e in doc.get("ensembles", [])]
