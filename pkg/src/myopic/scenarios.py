"""Configuration families: the impossibility constructions, the worst-case
chain, random clouds, and scenario files."""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .engine import CrashEvent, inject_crash
from .errors import UsageError
from .model import Configuration
from .policies import ORDER_BASED, FIXED_POSITIVE, OrthogonalChoice, TiePolicy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def substream_seed(seed: int, name: str) -> int:
    """Independent seed for a named consumer of the run seed."""
    ss = np.random.SeedSequence([seed, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


def _pad(xy: Sequence[float], d: int) -> tuple[float, ...]:
    return tuple(xy) + (0.0,) * (d - len(xy))


def triangle_vertices(side: float, centered: bool = False) -> list[tuple[float, float]]:
    h = side * math.sqrt(3) / 2
    if not centered:
        return [(0.0, 0.0), (side, 0.0), (side / 2, h)]
    # barycenter at the origin; keeps relative precision as the triangle shrinks
    return [(-side / 2, -h / 3), (side / 2, -h / 3), (0.0, 2 * h / 3)]


@dataclass
class Scenario:
    """A configuration bundled with the policies its construction needs."""

    config: Configuration
    tie: TiePolicy = ORDER_BASED
    ortho: OrthogonalChoice = FIXED_POSITIVE
    crashes: tuple[CrashEvent, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()

    def to_json(self) -> dict[str, Any]:
        out = self.config.to_json()
        out["policy"] = {"tie": self.tie.to_json(), "ortho": self.ortho.to_json()}
        if self.crashes:
            out["crashes"] = [{"t": e.time, "ids": list(e.ids)} for e in self.crashes]
        return out


def make_equilateral(side: float = 1.0, d: int = 2, centered: bool = False) -> Scenario:
    """Three processes on an equilateral triangle in the first two axes,
    bound to the cyclic adversary."""
    if d < 2:
        raise UsageError("the equilateral scenario needs d >= 2")
    if not side > 0:
        raise UsageError("side must be positive")
    pts = [_pad(v, d) for v in triangle_vertices(side, centered)]
    return Scenario(Configuration.from_positions(pts), TiePolicy("cyclic-equilateral"))


def make_two_triangles(D_bound: float = 1.0, separation_factor: float = 10.0, d: int = 2) -> Scenario:
    """Two equilateral triangles of side D_bound whose barycenters are
    separation_factor * D_bound apart, each run by its own cyclic adversary."""
    if not D_bound > 0:
        raise UsageError("D_bound must be positive")
    if separation_factor < 0:
        raise UsageError("separation_factor must be nonnegative")
    if d < 2:
        raise UsageError("the two-triangle scenario needs d >= 2")
    tri = triangle_vertices(D_bound, centered=True)
    shift = separation_factor * D_bound
    pts = [_pad(v, d) for v in tri] + [_pad((x + shift, y), d) for x, y in tri]
    groups = ((0, 1, 2), (3, 4, 5))
    return Scenario(Configuration.from_positions(pts), TiePolicy("cyclic-equilateral", groups=groups), groups=groups)


def make_chain(n: int, D: float = 1.0, d: int = 1) -> Scenario:
    """n processes at (i*D, 0, ..., 0)."""
    if n < 2:
        raise UsageError("the chain needs n >= 2")
    if not D > 0:
        raise UsageError("spacing D must be positive")
    if d < 1:
        raise UsageError("d must be at least 1")
    return Scenario(Configuration.from_positions([_pad((i * D,), d) for i in range(n)]))


def make_random_cloud(n: int, d: int = 2, seed: int = 0, scale: float = 1.0) -> Scenario:
    """i.i.d. uniform positions in [0, scale]^d; process i draws from its own
    stream keyed by (seed, i)."""
    if n < 1 or d < 1:
        raise UsageError("random cloud needs n >= 1 and d >= 1")
    pts = [
        tuple((np.random.default_rng([seed, i]).random(d) * scale).tolist())
        for i in range(n)
    ]
    return Scenario(Configuration.from_positions(pts))


KINDS: dict[str, dict[str, Any]] = {
    "equilateral-triangle": {
        "params": {"side": "float > 0 (default 1)", "d": "int >= 2 (default 2)", "centered": "bool (default false)"},
        "about": "three processes, cyclic adversary; gathering never happens for d >= 2",
    },
    "two-triangles": {
        "params": {"D_bound": "float > 0 (default 1)", "separation": "float >= 0 (default 10)", "d": "int >= 2"},
        "about": "six processes in two livelocked triangles; convergence never happens",
    },
    "collinear-chain": {
        "params": {"n": "int >= 2", "D": "float > 0 (default 1)", "d": "int >= 1 (default 1)"},
        "about": "worst case for order-based gathering: exactly n-1 steps",
    },
    "random-cloud": {
        "params": {"n": "int >= 1", "d": "int >= 1", "seed": "int", "scale": "float (default 1)"},
        "about": "uniform random instance",
    },
    "custom": {
        "params": {"processes": "list of {pos, crashed}"},
        "about": "explicit configuration",
    },
}
_KIND_ALIASES = {"equilateral": "equilateral-triangle", "triangle": "equilateral-triangle",
                 "chain": "collinear-chain", "random": "random-cloud", "cloud": "random-cloud"}


def build(kind: str, params: dict[str, Any], seed: int = 0) -> Scenario:
    kind = _KIND_ALIASES.get(kind, kind)
    try:
        if kind == "equilateral-triangle":
            return make_equilateral(float(params.get("side", 1.0)), int(params.get("d", 2)),
                                    bool(params.get("centered", False)))
        if kind == "two-triangles":
            return make_two_triangles(float(params.get("D_bound", 1.0)),
                                      float(params.get("separation", 10.0)), int(params.get("d", 2)))
        if kind == "collinear-chain":
            return make_chain(int(params["n"]), float(params.get("D", 1.0)), int(params.get("d", 1)))
        if kind == "random-cloud":
            s = params.get("seed")
            return make_random_cloud(int(params["n"]), int(params.get("d", 2)),
                                     substream_seed(seed, "scenario") if s is None else int(s),
                                     float(params.get("scale", 1.0)))
        if kind == "custom":
            return Scenario(Configuration.from_json(params))
    except KeyError as exc:
        raise UsageError(f"scenario {kind!r} is missing parameter {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad parameters for {kind!r}: {exc}") from exc
    raise UsageError(f"unknown scenario kind {kind!r}")


def from_json(obj: Any, seed: int = 0) -> Scenario:
    """Scenario from a spec object ``{"kind", "params", "policy", "crashes"}``
    or a configuration object ``{"time", "dimension", "processes", ...}``."""
    if not isinstance(obj, dict) or not obj:
        raise UsageError("scenario must be a non-empty object")
    if "processes" in obj:
        sc = Scenario(Configuration.from_json(obj))
    elif "kind" in obj:
        sc = build(obj["kind"], obj.get("params", {}), seed)
    else:
        raise UsageError("scenario needs either 'kind' or 'processes'")
    policy = obj.get("policy")
    if isinstance(policy, str):
        sc.tie = TiePolicy.from_json(policy)
    elif isinstance(policy, dict):
        try:
            if "tie" in policy:
                sc.tie = TiePolicy.from_json(policy["tie"])
            if "ortho" in policy:
                sc.ortho = OrthogonalChoice.from_json(policy["ortho"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"bad policy: {exc}") from exc
    crashes: tuple[CrashEvent, ...] = ()
    for c in obj.get("crashes", ()):
        if isinstance(c, int):
            crashes = inject_crash(sc.config, ids=[c], plan=crashes)
        elif isinstance(c, dict):
            crashes = inject_crash(sc.config, ids=c.get("ids", ()), positions=c.get("positions", ()),
                                   at_time=c.get("t"), plan=crashes)
        else:
            raise UsageError(f"bad crash entry {c!r}")
    sc.crashes = crashes
    return sc


def load(path: Path | str, seed: int = 0) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from exc
    if not text.strip():
        raise UsageError(f"scenario file {path} is empty")
    try:
        if path.suffix == ".toml":
            obj = tomllib.loads(text)
        else:
            obj = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse scenario {path}: {exc}") from exc
    return from_json(obj, seed)
