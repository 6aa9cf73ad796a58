"""Synchronous rounds: every target is computed from the time-t snapshot, then
all moves are applied at once."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import IO, Any, Iterable, Optional, Sequence

from .errors import UsageError
from .geometry import Point
import numpy as np

from .model import (
    EPS_TIE,
    Configuration,
    Occupancy,
    cluster_ties,
    fault_count,
    is_gathered,
    neighbor_views,
    occupancy,
)
from .policies import (
    FIXED_POSITIVE,
    MM,
    ORDER_BASED,
    MoveRule,
    OrthogonalChoice,
    TiePolicy,
    cyclic_assignments,
    next_position,
    select_neighbor,
)

log = logging.getLogger(__name__)

STOP_CONDITIONS = ("gathered", "fixpoint", "converged")


@dataclass(frozen=True)
class CrashEvent:
    time: int
    ids: tuple[int, ...]


def inject_crash(
    config: Configuration,
    ids: Iterable[int] = (),
    positions: Iterable[Sequence[float]] = (),
    at_time: Optional[int] = None,
    plan: Sequence[CrashEvent] = (),
) -> tuple[CrashEvent, ...]:
    """Add a crash event to ``plan``.

    ``positions`` selects every process currently at one of those points.
    Processes crash at ``at_time`` (default: now) and never move again.
    """
    chosen = set()
    for p in ids:
        if not 0 <= p < config.n:
            raise UsageError(f"unknown process id {p}")
        chosen.add(int(p))
    for pos in positions:
        pos = tuple(float(c) for c in pos)
        hits = [r.id for r in config.records if r.position == pos]
        if not hits:
            raise UsageError(f"no process at position {pos}")
        chosen.update(hits)
    if not chosen:
        raise UsageError("inject_crash needs at least one target")
    t = config.time if at_time is None else at_time
    if t < config.time:
        raise UsageError("cannot crash processes in the past")
    return tuple(plan) + (CrashEvent(t, tuple(sorted(chosen))),)


def apply_crashes(config: Configuration, plan: Sequence[CrashEvent]) -> Configuration:
    due = [p for e in plan if e.time <= config.time for p in e.ids]
    if not due or all(config.records[p].crashed for p in due):
        return config
    return config.with_crashed(due)


@dataclass(frozen=True)
class StepRecord:
    time: int
    config: Configuration
    choices: tuple[Optional[int], ...]
    targets: tuple[Point, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "t": self.time,
            "config": self.config.to_json(),
            "choices": list(self.choices),
            "targets": [list(p) for p in self.targets],
        }


@dataclass(frozen=True)
class RunSettings:
    max_steps: int = 1000
    eps_tie: float = EPS_TIE
    eps_gather: float = 0.0
    eps_converge: Optional[float] = None
    stop_on: tuple[str, ...] = ("gathered", "fixpoint")
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise UsageError("max_steps must be at least 1")
        if self.eps_tie < 0 or self.eps_gather < 0:
            raise UsageError("tolerances must be nonnegative")
        if self.eps_converge is not None and self.eps_converge < 0:
            raise UsageError("tolerances must be nonnegative")
        unknown = set(self.stop_on) - set(STOP_CONDITIONS)
        if unknown:
            raise UsageError(f"unknown stop conditions {sorted(unknown)}")

    def to_json(self) -> dict[str, Any]:
        return {
            "max_steps": self.max_steps,
            "eps_tie": self.eps_tie,
            "eps_gather": self.eps_gather,
            "eps_converge": self.eps_converge,
            "stop_on": list(self.stop_on),
            "seed": self.seed,
        }


def plan_step(
    config: Configuration,
    rule: MoveRule = MM,
    tie: TiePolicy = ORDER_BASED,
    ortho: OrthogonalChoice = FIXED_POSITIVE,
    eps_tie: float = EPS_TIE,
) -> StepRecord:
    """Neighbor choice and target of every process, read-only over ``config``."""
    occ = occupancy(config, eps_tie)
    if tie.kind == "order-based" and rule.exact_midpoint:
        return _plan_order_mm(config, occ, eps_tie)
    views = neighbor_views(config, eps_tie, occ)
    adversary = cyclic_assignments(config, rule, tie, eps_tie) if tie.kind == "cyclic-equilateral" else {}
    fallback = ORDER_BASED if tie.kind == "cyclic-equilateral" else tie
    # co-located processes share a view; reuse the decision when nothing
    # else (process id, private stream) enters it
    per_cluster = tie.kind in ("order-based", "lowest-id", "scripted-adversary") and ortho.kind != "seeded-random"
    cache: dict[int, tuple[int, Point]] = {}
    choices: list[Optional[int]] = []
    targets: list[Point] = []
    for rec, view in zip(config.records, views):
        if rec.crashed or view.empty:
            choices.append(None)
            targets.append(rec.position)
            continue
        k = occ.cluster_of[rec.id]
        if per_cluster and k in cache:
            c, target = cache[k]
            choices.append(c)
            targets.append(target)
            continue
        y = None
        planned = adversary.get(rec.id)
        if planned is not None and planned[0] in view.candidates:
            c, y = planned
        else:
            c = select_neighbor(view, config, fallback, occ, eps_tie)
        target = next_position(occ.positions[k], occ.positions[occ.cluster_of[c]], rule,
                               y if y is not None else ortho, t=config.time, p=rec.id, rank=k)
        if per_cluster:
            cache[k] = (c, target)
        choices.append(c)
        targets.append(target)
    return StepRecord(config.time, config, tuple(choices), tuple(targets))


def _plan_order_mm(config: Configuration, occ: Occupancy, eps_tie: float) -> StepRecord:
    """Vectorized plan for MM with order-based ties.

    Occupied positions are sorted in position order, so the largest tied
    candidate of row k is its last marked column.
    """
    m = len(occ)
    if m == 1:
        return StepRecord(config.time, config, (None,) * config.n, config.positions)
    _, mask = cluster_ties(occ, eps_tie)
    chosen = m - 1 - np.argmax(mask[:, ::-1], axis=1)
    P = np.asarray(occ.positions, dtype=float)
    mids = [tuple(m) for m in ((P + P[chosen]) / 2).tolist()]
    lowest = [-1] * m
    for p, k in enumerate(occ.cluster_of):
        if lowest[k] < 0:
            lowest[k] = p
    chosen_l = chosen.tolist()
    choices: list[Optional[int]] = []
    targets: list[Point] = []
    for rec, k in zip(config.records, occ.cluster_of):
        if rec.crashed:
            choices.append(None)
            targets.append(rec.position)
        else:
            choices.append(lowest[chosen_l[k]])
            targets.append(mids[k])
    return StepRecord(config.time, config, tuple(choices), tuple(targets))


def step(
    config: Configuration,
    rule: MoveRule = MM,
    tie: TiePolicy = ORDER_BASED,
    ortho: OrthogonalChoice = FIXED_POSITIVE,
    eps_tie: float = EPS_TIE,
) -> Configuration:
    rec = plan_step(config, rule, tie, ortho, eps_tie)
    return config.with_positions(rec.targets, config.time + 1)


@dataclass
class Trace:
    initial: Configuration
    records: list[StepRecord] = field(default_factory=list)
    final: Optional[Configuration] = None
    stop: str = ""
    rule: str = "mm"
    tie: dict[str, Any] = field(default_factory=dict)
    ortho: dict[str, Any] = field(default_factory=dict)
    settings: Optional[RunSettings] = None

    @property
    def steps(self) -> int:
        return len(self.records)

    @property
    def configs(self) -> list[Configuration]:
        """Configurations at t = 0, 1, ..., steps."""
        out = [r.config for r in self.records]
        if self.final is not None:
            out.append(self.final)
        return out

    @property
    def gathered(self) -> bool:
        eps = self.settings.eps_gather if self.settings else 0.0
        return self.final is not None and is_gathered(self.final, eps)[0]

    def summary(self) -> dict[str, Any]:
        from .analysis import metrics

        assert self.final is not None
        eps_tie = self.settings.eps_tie if self.settings else EPS_TIE
        m = metrics(self.final, eps_tie)
        return {
            "stop": self.stop,
            "steps": self.steps,
            "final_R": m.R,
            "final_omega": m.omega_count,
            "gathered": self.gathered,
            "f": fault_count(self.final),
        }

    def write_jsonl(self, fh: IO[str]) -> None:
        for r in self.records:
            fh.write(json.dumps(r.to_json()) + "\n")
        fh.write(json.dumps(self.summary()) + "\n")


def run(
    initial: Configuration,
    rule: MoveRule = MM,
    tie: TiePolicy = ORDER_BASED,
    ortho: OrthogonalChoice = FIXED_POSITIVE,
    settings: RunSettings = RunSettings(),
    crashes: Sequence[CrashEvent] = (),
) -> Trace:
    """Iterate synchronous steps until a stop condition fires.

    Stop reasons: ``gathered`` (within eps_gather), ``converged`` (smallest
    enclosing ball radius within eps_converge), ``fixpoint`` (no process
    moved at all) or ``budget``.
    """
    trace = Trace(initial, rule=rule.name, tie=tie.to_json(), ortho=ortho.to_json(), settings=settings)
    config = apply_crashes(initial, crashes)
    stop_on = settings.stop_on
    while True:
        if "gathered" in stop_on and is_gathered(config, settings.eps_gather)[0]:
            trace.stop = "gathered"
            break
        if (
            "converged" in stop_on
            and settings.eps_converge is not None
            and is_gathered(config, settings.eps_converge)[0]
        ):
            trace.stop = "converged"
            break
        if trace.steps >= settings.max_steps:
            trace.stop = "budget"
            break
        rec = plan_step(config, rule, tie, ortho, settings.eps_tie)
        trace.records.append(rec)
        # exact comparison: a shrinking livelock moves by less than 1e-15
        # long before it stops moving
        moved = any(p != q for p, q in zip(config.positions, rec.targets))
        config = apply_crashes(config.with_positions(rec.targets, config.time + 1), crashes)
        if not moved and "fixpoint" in stop_on:
            trace.stop = "fixpoint"
            break
    trace.final = config
    log.debug("run stopped: %s after %d steps", trace.stop, trace.steps)
    return trace
