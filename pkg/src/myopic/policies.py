"""Movement rules and the choices an adversary (or an order) makes for them.

A movement rule only ever sees the distance D to the chosen neighbor; the
neighbor itself and, for d >= 2, the orthogonal direction are picked by a
``TiePolicy`` and an ``OrthogonalChoice``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ScenarioError, UsageError
from .geometry import (
    Point,
    Vector,
    distance,
    midpoint,
    orthonormal_complement_sample,
    unit_vector,
)
from .model import EPS_TIE, Configuration, NeighborView, Occupancy, occupancy


@dataclass(frozen=True)
class MoveRule:
    fx: Callable[[float], float]
    fy: Callable[[float], float]
    name: str
    exact_midpoint: bool = False


def _half(D: float) -> float:
    return D / 2


def _zero(D: float) -> float:
    return 0.0


MM = MoveRule(_half, _zero, "mm", exact_midpoint=True)


def linear_rule(a: float, b: float = 0.0) -> MoveRule:
    """fx(D) = a*D, fy(D) = b*D."""
    if a == 0.5 and b == 0.0:
        return MM
    return MoveRule(lambda D: a * D, lambda D: b * D, f"linear:{a:g},{b:g}")


def rule_from_name(name: str) -> MoveRule:
    if name == "mm":
        return MM
    if name == "full-hop":
        return linear_rule(1.0, 0.0)
    if name.startswith("linear:"):
        try:
            parts = [float(v) for v in name.split(":", 1)[1].split(",")]
        except ValueError as exc:
            raise UsageError(f"bad rule {name!r}") from exc
        if len(parts) == 1:
            parts.append(0.0)
        if len(parts) != 2:
            raise UsageError(f"bad rule {name!r}")
        return linear_rule(*parts)
    raise UsageError(f"unknown rule {name!r} (mm, full-hop, linear:a,b)")


TIE_KINDS = ("order-based", "scripted-adversary", "seeded-random", "lowest-id", "cyclic-equilateral")
_TIE_ALIASES = {
    "order": "order-based",
    "script": "scripted-adversary",
    "scripted": "scripted-adversary",
    "random": "seeded-random",
    "cyclic": "cyclic-equilateral",
}


@dataclass(frozen=True)
class ScriptEntry:
    t: int
    rank: int
    choice: int


def parse_script(entries: Iterable[dict[str, Any]]) -> tuple[ScriptEntry, ...]:
    out = []
    for e in entries:
        try:
            out.append(ScriptEntry(int(e["t"]), int(e["rank"]), int(e["choice"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad script entry {e!r}") from exc
    return tuple(out)


@dataclass(frozen=True)
class TiePolicy:
    """How C(p) is picked from the tie set N(p).

    scripted-adversary entries are keyed by (step, rank of the process's
    position in Omega); unmatched steps fall back to order-based.
    cyclic-equilateral runs the equilateral adversary on each group of
    process ids and falls back to order-based where a group is not an
    equilateral triple.
    """

    kind: str = "order-based"
    seed: int = 0
    script: tuple[ScriptEntry, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        kind = _TIE_ALIASES.get(self.kind, self.kind)
        if kind not in TIE_KINDS:
            raise UsageError(f"unknown tie policy {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "scripted-adversary":
            object.__setattr__(self, "_table", {(e.t, e.rank): e.choice for e in self.script})

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "seeded-random":
            out["seed"] = self.seed
        if self.script:
            out["script"] = [{"t": e.t, "rank": e.rank, "choice": e.choice} for e in self.script]
        if self.groups:
            out["groups"] = [list(g) for g in self.groups]
        return out

    @classmethod
    def from_json(cls, obj: Union[str, dict[str, Any]]) -> "TiePolicy":
        if isinstance(obj, str):
            return cls(obj)
        return cls(
            obj.get("kind", "order-based"),
            int(obj.get("seed", 0)),
            parse_script(obj.get("script", ())),
            tuple(tuple(int(i) for i in g) for g in obj.get("groups", ())),
        )


ORDER_BASED = TiePolicy("order-based")

ORTHO_KINDS = ("fixed-positive", "fixed-negative", "scripted", "seeded-random")
_ORTHO_ALIASES = {"positive": "fixed-positive", "negative": "fixed-negative", "random": "seeded-random"}


@dataclass(frozen=True)
class OrthogonalChoice:
    """Picks the orthogonal direction y for rules with a nonzero fy.

    Script entries are ``{"t", "rank", "sign"}`` with optional
    ``"direction"`` (a d-vector projected on the complement for d >= 3).
    """

    kind: str = "fixed-positive"
    seed: int = 0
    script: tuple[tuple[int, int, int, Optional[tuple[float, ...]]], ...] = ()

    def __post_init__(self) -> None:
        kind = _ORTHO_ALIASES.get(self.kind, self.kind)
        if kind not in ORTHO_KINDS:
            raise UsageError(f"unknown orthogonal choice {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    def vector(self, x: Vector, t: int = 0, p: int = 0, rank: int = 0) -> Vector:
        if self.kind == "fixed-positive":
            return orthonormal_complement_sample(x, 1)
        if self.kind == "fixed-negative":
            return orthonormal_complement_sample(x, -1)
        if self.kind == "seeded-random":
            rng = np.random.default_rng([self.seed, t, p])
            sign = 1 if rng.random() < 0.5 else -1
            direction = rng.standard_normal(len(x)) if len(x) > 2 else None
            return orthonormal_complement_sample(x, sign, direction)
        for et, erank, sign, direction in self.script:
            if et == t and erank == rank:
                return orthonormal_complement_sample(x, sign, direction)
        return orthonormal_complement_sample(x, 1)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "seeded-random":
            out["seed"] = self.seed
        if self.script:
            out["script"] = [
                {"t": t, "rank": r, "sign": s, **({"direction": list(d)} if d else {})}
                for t, r, s, d in self.script
            ]
        return out

    @classmethod
    def from_json(cls, obj: Union[str, dict[str, Any]]) -> "OrthogonalChoice":
        if isinstance(obj, str):
            return cls(obj)
        script = tuple(
            (int(e["t"]), int(e["rank"]), int(e.get("sign", 1)),
             tuple(e["direction"]) if e.get("direction") else None)
            for e in obj.get("script", ())
        )
        return cls(obj.get("kind", "fixed-positive"), int(obj.get("seed", 0)), script)


FIXED_POSITIVE = OrthogonalChoice("fixed-positive")


def _sorted_candidates(view: NeighborView, config: Configuration) -> list[int]:
    return sorted(view.candidates, key=lambda q: (config.records[q].position, q))


def _order_based(view: NeighborView, config: Configuration) -> int:
    # largest position; co-located candidates resolved by lowest id
    return max(view.candidates, key=lambda q: (config.records[q].position, -q))


def select_neighbor(
    view: NeighborView,
    config: Configuration,
    policy: TiePolicy = ORDER_BASED,
    occ: Optional[Occupancy] = None,
    eps_tie: float = EPS_TIE,
) -> int:
    """Choose C(p) among ``view.candidates``. The step is ``config.time``."""
    if view.empty:
        raise UsageError("cannot select a neighbor from an empty view")
    if len(view.candidates) == 1:
        return view.candidates[0]
    kind = policy.kind
    if kind == "order-based":
        return _order_based(view, config)
    if kind == "lowest-id":
        return min(view.candidates)
    if kind == "seeded-random":
        ordered = _sorted_candidates(view, config)
        rng = np.random.default_rng([policy.seed, config.time, view.process])
        return ordered[int(rng.integers(len(ordered)))]
    if kind == "scripted-adversary":
        if occ is None:
            occ = occupancy(config, eps_tie)
        choice = policy._table.get((config.time, occ.cluster_of[view.process]))  # type: ignore[attr-defined]
        if choice is None:
            return _order_based(view, config)
        ordered = _sorted_candidates(view, config)
        if not 0 <= choice < len(ordered):
            raise UsageError(
                f"script choice {choice} out of range for {len(ordered)} candidates at t={config.time}"
            )
        return ordered[choice]
    # cyclic-equilateral
    plan = cyclic_assignments(config, MM, policy, eps_tie)
    if view.process in plan:
        return plan[view.process][0]
    return _order_based(view, config)


def next_position(
    p_pos: Point,
    c_pos: Point,
    rule: MoveRule = MM,
    ortho: Union[OrthogonalChoice, Vector, None] = None,
    *,
    t: int = 0,
    p: int = 0,
    rank: int = 0,
) -> Point:
    """M_p + fx(D) x + fy(D) y, where x points from p toward its neighbor.

    ``ortho`` is either a policy or an explicit unit vector y.
    """
    if tuple(p_pos) == tuple(c_pos):
        raise UsageError("next_position needs two distinct positions")
    if rule.exact_midpoint:
        return midpoint(p_pos, c_pos)
    D = distance(p_pos, c_pos)
    x = unit_vector(p_pos, c_pos)
    a = rule.fx(D)
    out = [pi + a * xi for pi, xi in zip(p_pos, x)]
    if len(p_pos) >= 2:
        b = rule.fy(D)
        if b != 0:
            if ortho is None:
                ortho = FIXED_POSITIVE
            y = ortho.vector(x, t, p, rank) if isinstance(ortho, OrthogonalChoice) else tuple(ortho)
            out = [o + b * yi for o, yi in zip(out, y)]
    return tuple(out)


def _is_equilateral(pts: Sequence[Point], tol: float) -> bool:
    sides = [distance(pts[0], pts[1]), distance(pts[1], pts[2]), distance(pts[2], pts[0])]
    lo, hi = min(sides), max(sides)
    return lo > 0 and hi <= lo * (1 + tol)


def equilateral_adversary(
    config: Configuration,
    rule: MoveRule = MM,
    eps_tie: float = EPS_TIE,
    group: Optional[Iterable[int]] = None,
) -> dict[int, tuple[int, Vector]]:
    """Neighbor and orthogonal direction for every process of an equilateral triple.

    The vertices are ordered counterclockwise in the triangle's plane; each
    vertex takes its successor as neighbor, and y is the in-plane normal of
    that edge pointing away from the barycenter (flipped when fy(D) < 0), so
    the next positions form another equilateral triangle around the same
    barycenter.
    """
    ids = list(range(config.n)) if group is None else sorted(group)
    if config.dimension < 2:
        raise ScenarioError("the equilateral construction needs d >= 2")
    by_pos: dict[Point, list[int]] = {}
    for q in ids:
        by_pos.setdefault(config.records[q].position, []).append(q)
    verts = sorted(by_pos)
    if len(verts) != 3 or not _is_equilateral(verts, eps_tie):
        raise ScenarioError("configuration is not an equilateral triple")
    P = np.asarray(verts, dtype=float)
    G = P.mean(axis=0)
    e1 = P[0] - G
    e1 /= np.linalg.norm(e1)
    w = P[1] - G
    e2 = w - (w @ e1) * e1
    e2 /= np.linalg.norm(e2)
    angles = [math.atan2((v - G) @ e2, (v - G) @ e1) for v in P]
    cyc = sorted(range(3), key=lambda i: angles[i])
    succ = {cyc[i]: cyc[(i + 1) % 3] for i in range(3)}
    plan: dict[int, tuple[int, Vector]] = {}
    for i in range(3):
        j = succ[i]
        u = (P[j] - P[i]) / np.linalg.norm(P[j] - P[i])
        inward = G - P[i]
        inward = inward - (inward @ u) * u
        v = -inward / np.linalg.norm(inward)
        D = float(np.linalg.norm(P[j] - P[i]))
        y = v if rule.fy(D) >= 0 else -v
        target = min(by_pos[verts[j]])
        for q in by_pos[verts[i]]:
            plan[q] = (target, tuple(y.tolist()))
    return plan


def cyclic_assignments(
    config: Configuration, rule: MoveRule, policy: TiePolicy, eps_tie: float = EPS_TIE
) -> dict[int, tuple[int, Vector]]:
    groups = policy.groups or (tuple(range(config.n)),)
    plan: dict[int, tuple[int, Vector]] = {}
    for g in groups:
        try:
            plan.update(equilateral_adversary(config, rule, eps_tie, g))
        except ScenarioError:
            continue
    return plan
