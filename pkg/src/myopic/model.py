"""Swarm state and what each process can observe of it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import UsageError
from .geometry import Point, as_point, smallest_enclosing_ball

EPS_TIE = 1e-9


class ProcessRecord(NamedTuple):
    id: int
    position: Point
    crashed: bool = False


@dataclass(frozen=True)
class Configuration:
    time: int
    dimension: int
    records: tuple[ProcessRecord, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise UsageError("a configuration needs at least one process")
        if self.time < 0:
            raise UsageError("time must be nonnegative")
        for i, r in enumerate(self.records):
            if r.id != i:
                raise UsageError("process ids must be 0..n-1 in order")
            if len(r.position) != self.dimension:
                raise UsageError(
                    f"process {i} has dimension {len(r.position)}, expected {self.dimension}"
                )

    @classmethod
    def from_positions(
        cls,
        positions: Iterable[Sequence[float]],
        crashed: Optional[Iterable[bool]] = None,
        time: int = 0,
    ) -> "Configuration":
        pts = [as_point(p) for p in positions]
        if not pts:
            raise UsageError("a configuration needs at least one process")
        flags = [False] * len(pts) if crashed is None else [bool(c) for c in crashed]
        if len(flags) != len(pts):
            raise UsageError("crashed flags do not match the number of processes")
        recs = tuple(ProcessRecord(i, p, c) for i, (p, c) in enumerate(zip(pts, flags)))
        return cls(time, len(pts[0]), recs)

    @property
    def n(self) -> int:
        return len(self.records)

    @cached_property
    def positions(self) -> tuple[Point, ...]:
        return tuple(r.position for r in self.records)

    @property
    def crashed(self) -> tuple[bool, ...]:
        return tuple(r.crashed for r in self.records)

    def with_positions(self, positions: Sequence[Point], time: Optional[int] = None) -> "Configuration":
        if len(positions) != self.n:
            raise UsageError("position count does not match the number of processes")
        recs = tuple(ProcessRecord(r.id, tuple(p), r.crashed) for r, p in zip(self.records, positions))
        return Configuration(self.time if time is None else time, self.dimension, recs)

    def with_crashed(self, ids: Iterable[int]) -> "Configuration":
        ids = set(ids)
        recs = tuple(r._replace(crashed=r.crashed or r.id in ids) for r in self.records)
        return Configuration(self.time, self.dimension, recs)

    def to_json(self) -> dict[str, Any]:
        return {
            "time": self.time,
            "dimension": self.dimension,
            "processes": [{"pos": list(r.position), "crashed": r.crashed} for r in self.records],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Configuration":
        try:
            procs = obj["processes"]
            positions = [p["pos"] for p in procs]
            crashed = [bool(p.get("crashed", False)) for p in procs]
            time = int(obj.get("time", 0))
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed configuration: {exc}") from exc
        config = cls.from_positions(positions, crashed, time)
        if "dimension" in obj and int(obj["dimension"]) != config.dimension:
            raise UsageError("declared dimension does not match the positions")
        return config


@dataclass(frozen=True)
class Occupancy:
    """Distinct occupied positions, sorted in position order.

    ``cluster_of[p]`` is the index of process p's position in
    ``positions``.
    """

    positions: tuple[Point, ...]
    multiplicity: tuple[int, ...]
    cluster_of: tuple[int, ...]
    distances: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.positions)

    def members(self, k: int) -> list[int]:
        return [p for p, c in enumerate(self.cluster_of) if c == k]


def _distance_matrix(points: Sequence[Point]) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    diff = arr[:, None, :] - arr[None, :, :]
    # scale each difference by its largest component so squaring neither
    # underflows for tiny swarms nor overflows for huge ones
    scale = np.abs(diff).max(axis=2)
    safe = np.where(scale > 0, scale, 1.0)
    unit = diff / safe[:, :, None]
    return scale * np.sqrt(np.einsum("ijk,ijk->ij", unit, unit))


def occupancy(config: Configuration, eps_tie: float = EPS_TIE) -> Occupancy:
    """Collapse positions closer than ``eps_tie`` times the diameter.

    Clusters are single-linkage; each is represented by its
    lexicographically smallest member.
    """
    if eps_tie < 0:
        raise UsageError("eps_tie must be nonnegative")
    pts = config.positions
    distinct = sorted(set(pts))
    index = {p: i for i, p in enumerate(distinct)}
    rep = list(range(len(distinct)))
    dist = _distance_matrix(distinct)
    near = None
    if len(distinct) > 1 and eps_tie > 0:
        near = dist <= eps_tie * float(dist.max())
        # the diagonal always qualifies; skip union-find when nothing else does
        if np.count_nonzero(near) == len(distinct):
            near = None
    if near is not None:
        close = np.argwhere(np.triu(near, k=1))

        def find(i: int) -> int:
            while rep[i] != i:
                rep[i] = rep[rep[i]]
                i = rep[i]
            return i

        for i, j in close:
            a, b = find(int(i)), find(int(j))
            if a != b:
                # distinct is sorted, so the smaller index is the smaller point
                rep[max(a, b)] = min(a, b)
        rep = [find(i) for i in range(len(distinct))]
    roots = sorted(set(rep))
    slot = {r: k for k, r in enumerate(roots)}
    cluster_of = tuple(slot[rep[index[p]]] for p in pts)
    mult = [0] * len(roots)
    for c in cluster_of:
        mult[c] += 1
    if len(roots) < len(distinct):
        dist = dist[np.ix_(roots, roots)]
    return Occupancy(tuple(distinct[r] for r in roots), tuple(mult), cluster_of, dist)


@dataclass(frozen=True)
class NeighborView:
    """What process ``process`` observes: its closest distance and the tie set."""

    process: int
    D: float
    candidates: tuple[int, ...] = field(default_factory=tuple)

    @property
    def empty(self) -> bool:
        return not self.candidates


def cluster_ties(occ: Occupancy, eps_tie: float = EPS_TIE) -> tuple[np.ndarray, np.ndarray]:
    """Closest distance per occupied position and the boolean tie matrix
    (row k marks the positions within ``D_k * (1 + eps_tie)``)."""
    dist = occ.distances.copy() if occ.distances is not None else _distance_matrix(occ.positions)
    np.fill_diagonal(dist, np.inf)
    D = dist.min(axis=1)
    return D, dist <= (D * (1 + eps_tie))[:, None]


def neighbor_views(
    config: Configuration, eps_tie: float = EPS_TIE, occ: Optional[Occupancy] = None
) -> list[NeighborView]:
    """Views of every process, computed once per distinct position.

    A candidate is a process at a distinct position whose distance is within
    ``D * (1 + eps_tie)``. Co-located processes never see each other.
    """
    if occ is None:
        occ = occupancy(config, eps_tie)
    m = len(occ)
    if m == 1:
        return [NeighborView(p, 0.0, ()) for p in range(config.n)]
    D, mask = cluster_ties(occ, eps_tie)
    members: list[list[int]] = [[] for _ in range(m)]
    for p, c in enumerate(occ.cluster_of):
        members[c].append(p)
    rows, cols = np.nonzero(mask)
    near: list[list[int]] = [[] for _ in range(m)]
    for r, c in zip(rows.tolist(), cols.tolist()):
        near[r].extend(members[c])
    per_cluster = [(d, tuple(cands)) for d, cands in zip(D.tolist(), near)]
    return [NeighborView(p, *per_cluster[c]) for p, c in enumerate(occ.cluster_of)]


def neighbor_view(config: Configuration, p: int, eps_tie: float = EPS_TIE) -> NeighborView:
    if not 0 <= p < config.n:
        raise UsageError(f"unknown process {p}")
    return neighbor_views(config, eps_tie)[p]


def is_gathered(config: Configuration, eps: float = 0.0) -> tuple[bool, Optional[Point]]:
    """(G, eps)-gathering test.

    The witness G is the center of the smallest enclosing ball, returned only
    when the test succeeds.
    """
    if eps < 0:
        raise UsageError("eps must be nonnegative")
    pts = set(config.positions)
    if len(pts) == 1:
        return True, next(iter(pts))
    if eps == 0:
        return False, None
    arr = np.asarray(sorted(pts))
    spread = float((arr.max(axis=0) - arr.min(axis=0)).max())
    if spread > 2 * eps * (1 + 1e-12):
        # the ball radius is at least half the widest axis extent
        return False, None
    ball = smallest_enclosing_ball(pts)
    if ball.radius <= eps:
        return True, ball.center
    return False, None


def crashed_positions(config: Configuration) -> tuple[Point, ...]:
    return tuple(sorted({r.position for r in config.records if r.crashed}))


def fault_count(config: Configuration) -> int:
    """f: the number of distinct positions holding a crashed process."""
    return len(crashed_positions(config))


def diameter(points: Sequence[Point]) -> float:
    best = 0.0
    for i, a in enumerate(points):
        for b in points[i + 1:]:
            best = max(best, math.dist(a, b))
    return best
