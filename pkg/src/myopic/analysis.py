"""Per-step metrics, closest-neighbor graph structure, and inequality
certificates evaluated over traces."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import IO, Any, Optional, Sequence

from .engine import Trace, plan_step
from .errors import UsageError
from .geometry import Point, distance, midpoint, smallest_enclosing_ball
from .model import EPS_TIE, Configuration, crashed_positions, occupancy
from .policies import MM, ORDER_BASED, TiePolicy

REL_TOL = 1e-9
ABS_TOL = 1e-12


def tolerance(rhs: float, rel: float = REL_TOL) -> float:
    return max(rel * abs(rhs), ABS_TOL)


@dataclass(frozen=True)
class MetricsRow:
    t: int
    omega_count: int
    d_min: float
    d_max: float
    R: float
    gathered: bool
    L: Optional[float] = None

    def csv_row(self) -> list[Any]:
        return [self.t, self.omega_count, repr(self.d_min), repr(self.d_max), repr(self.R),
                int(self.gathered), "" if self.L is None else repr(self.L)]


CSV_HEADER = ["t", "omega", "d_min", "d_max", "R", "gathered", "L"]


def pairwise_extremes(points: Sequence[Point]) -> tuple[float, float]:
    if len(points) < 2:
        return 0.0, 0.0
    ds = [math.dist(a, b) for a, b in itertools.combinations(points, 2)]
    return min(ds), max(ds)


def metrics(config: Configuration, eps_tie: float = EPS_TIE, eps_gather: float = 0.0) -> MetricsRow:
    """d_min, d_max and R are taken over distinct occupied positions."""
    omega = occupancy(config, eps_tie).positions
    d_min, d_max = pairwise_extremes(omega)
    R = smallest_enclosing_ball(omega).radius
    L = None
    xs = crashed_positions(config)
    if len(xs) == 1:
        L = max(distance(xs[0], p) for p in config.positions)
    return MetricsRow(config.time, len(omega), d_min, d_max, R, R <= eps_gather, L)


def metrics_table(trace: Trace, eps_tie: Optional[float] = None) -> list[MetricsRow]:
    if eps_tie is None:
        eps_tie = trace.settings.eps_tie if trace.settings else EPS_TIE
    eps_gather = trace.settings.eps_gather if trace.settings else 0.0
    return [metrics(c, eps_tie, eps_gather) for c in trace.configs]


def write_metrics_csv(rows: Sequence[MetricsRow], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_row())


def alpha(K: float) -> float:
    """Contraction factor sqrt(1 - 1/(4K^2)) of one MM step when R <= K d_min."""
    if K < 1:
        raise UsageError("alpha(K) needs K >= 1")
    return math.sqrt(1 - 1 / (4 * K * K))


def k_factor(n: int) -> float:
    """Contraction factor sqrt(1 - 1/(2n)^2) of the distance to a single crash."""
    if n < 1:
        raise UsageError("k(n) needs n >= 1")
    return math.sqrt(1 - 1 / (2 * n) ** 2)


@dataclass
class CertificateReport:
    name: str
    inequality: str
    tolerance: str
    per_step: list[bool] = field(default_factory=list)
    first_violation: Optional[dict[str, Any]] = None
    applicable: bool = True
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.applicable and self.first_violation is None

    def check(self, t: int, lhs: float, rhs: float, tol: float, **extra: Any) -> bool:
        ok = lhs <= rhs + tol
        self.per_step.append(ok)
        if not ok and self.first_violation is None:
            self.first_violation = {"t": t, "lhs": lhs, "rhs": rhs, "tol": tol, **extra}
        return ok

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "inequality": self.inequality,
            "tolerance": self.tolerance,
            "applicable": self.applicable,
            "passed": self.passed,
            "checked": len(self.per_step),
            "per_step": self.per_step,
            "first_violation": self.first_violation,
            "details": self.details,
        }


def monotonicity_certificates(trace: Trace, rows: Optional[list[MetricsRow]] = None) -> list[CertificateReport]:
    """R(t+1) <= R(t) and d_max(t+1) <= d_max(t) along an MM trace."""
    rows = metrics_table(trace) if rows is None else rows
    r_rep = CertificateReport("R-nonincreasing", "R(t+1) <= R(t)", "1e-9 relative, 1e-12 floor")
    d_rep = CertificateReport("dmax-nonincreasing", "d_max(t+1) <= d_max(t)", "1e-9 relative, 1e-12 floor")
    for a, b in zip(rows, rows[1:]):
        r_rep.check(b.t, b.R, a.R, tolerance(a.R))
        d_rep.check(b.t, b.d_max, a.d_max, tolerance(a.d_max))
    return [r_rep, d_rep]


def alpha_certificate(trace: Trace, K: float, rows: Optional[list[MetricsRow]] = None) -> CertificateReport:
    """R(t+1) <= alpha(K) R(t) on every step whose start satisfies R <= K d_min."""
    a = alpha(K)
    rows = metrics_table(trace) if rows is None else rows
    rep = CertificateReport(f"alpha({K:g})", f"R <= {K:g}*d_min  =>  R(t+1) <= alpha({K:g})*R(t)",
                            "1e-9 relative, 1e-12 floor")
    rep.details["alpha"] = a
    for r0, r1 in zip(rows, rows[1:]):
        if r0.omega_count < 2 or r0.R > K * r0.d_min:
            continue
        rep.check(r1.t, r1.R, a * r0.R, tolerance(a * r0.R))
    return rep


@dataclass(frozen=True)
class MidpointLemmaResult:
    applicable: bool
    holds: bool
    lhs: float = math.nan
    rhs: float = math.nan


def midpoint_lemma_check(A: Point, B: Point, C: Point, D: Point, E: Point) -> MidpointLemmaResult:
    """Five-point midpoint contraction.

    With x = d(A,D)/100 and d(A,B) <= x, d(A,C) <= x, d(A,E) <= 100x,
    d(D,E) >= 40x, the midpoints of all pairs of distinct labels have
    diameter at most 0.99 times the diameter of the five points.
    Inputs outside those hypotheses are reported as not applicable.
    """
    S = [A, B, C, D, E]
    x = distance(A, D) / 100
    if not (
        x > 0
        and distance(A, B) <= x
        and distance(A, C) <= x
        and distance(A, E) <= 100 * x
        and distance(D, E) >= 40 * x
    ):
        return MidpointLemmaResult(False, True)
    mids = [midpoint(P, Q) for P, Q in itertools.combinations(S, 2)]
    lhs = pairwise_extremes(mids)[1]
    rhs = 0.99 * pairwise_extremes(S)[1]
    return MidpointLemmaResult(True, lhs <= rhs, lhs, rhs)


@dataclass
class CGraph:
    """Closest-neighbor graph p -> C(p); crashed processes are sinks.

    ``kind[p]`` is one of ``crashed``, ``attracted``, ``loop`` (on a cycle)
    or ``feeds-loop``; ``loops`` lists each cycle once, starting at its
    smallest id. Processes with an empty view are ``idle``.
    """

    edges: dict[int, int]
    crashed: frozenset[int]
    kind: dict[int, str]
    loops: list[tuple[int, ...]]

    @property
    def attracted(self) -> set[int]:
        return {p for p, k in self.kind.items() if k == "attracted"}

    @property
    def pairs(self) -> list[tuple[int, ...]]:
        return [l for l in self.loops if len(l) == 2]

    def all_attracted(self) -> bool:
        return all(k in ("attracted", "crashed") for k in self.kind.values())


def cgraph_from_choices(config: Configuration, choices: Sequence[Optional[int]]) -> CGraph:
    crashed = frozenset(r.id for r in config.records if r.crashed)
    edges = {p: c for p, c in enumerate(choices) if c is not None and p not in crashed}
    kind: dict[int, str] = {p: "crashed" for p in crashed}
    loops: list[tuple[int, ...]] = []
    state: dict[int, int] = {}  # 1 = on current path, 2 = done
    for start in range(config.n):
        if start in kind:
            continue
        path: list[int] = []
        p: Optional[int] = start
        while p is not None and p not in kind and state.get(p) != 1:
            state[p] = 1
            path.append(p)
            p = edges.get(p)
        if p is None:
            # walked into an idle process
            for q in path:
                kind[q] = "idle"
        elif p in kind:
            end = kind[p]
            label = "attracted" if end in ("crashed", "attracted") else ("idle" if end == "idle" else "feeds-loop")
            for q in path:
                kind[q] = label
        else:
            i = path.index(p)
            cycle = path[i:]
            k = cycle.index(min(cycle))
            loops.append(tuple(cycle[k:] + cycle[:k]))
            for q in cycle:
                kind[q] = "loop"
            for q in path[:i]:
                kind[q] = "feeds-loop"
        for q in path:
            state[q] = 2
    loops.sort()
    return CGraph(edges, crashed, kind, loops)


def cgraph(config: Configuration, tie: TiePolicy = ORDER_BASED, eps_tie: float = EPS_TIE) -> CGraph:
    rec = plan_step(config, MM, tie, eps_tie=eps_tie)
    return cgraph_from_choices(config, rec.choices)


def has_mutual_pair(config: Configuration, g: CGraph) -> bool:
    return any(
        config.records[p].position != config.records[q].position
        for p, q in g.pairs
    )


def fault_contraction_check(trace: Trace, X: Optional[Point] = None) -> CertificateReport:
    """Single-crash contraction: once every correct process is attracted,
    L(t+1) <= k(n) L(t); and every attracted p has d(M_p, M_C(p)) >= d(M_p, X)/n.
    """
    n = trace.initial.n
    kn = k_factor(n)
    rep = CertificateReport(
        "fault-contraction",
        "t >= t_A  =>  L(t+1) <= k(n)*L(t);  attracted p: d(M_p,M_C(p)) >= d(M_p,X)/n",
        "1e-9 relative, 1e-12 floor",
    )
    rep.details["k(n)"] = kn
    if not trace.records:
        rep.applicable = False
        rep.details["reason"] = "empty trace"
        return rep
    xs = crashed_positions(trace.records[0].config)
    if len(xs) != 1:
        rep.applicable = False
        rep.details["reason"] = f"f = {len(xs)}, the certificate needs f = 1"
        return rep
    X = xs[0] if X is None else tuple(X)
    graphs = [cgraph_from_choices(r.config, r.choices) for r in trace.records]
    attracted_flags = [g.all_attracted() for g in graphs]
    t_A = None
    for i in range(len(graphs) - 1, -1, -1):
        if not attracted_flags[i]:
            break
        t_A = trace.records[i].time
    rep.details["t_A"] = t_A
    if t_A is None:
        rep.applicable = False
        rep.details["reason"] = "correct processes not all attracted by the end of the trace"
        return rep
    Ls = [max(distance(X, p) for p in c.positions) for c in trace.configs]
    rep.details["L0"] = Ls[0]
    rep.details["L_final"] = Ls[-1]
    for i, (rec, g) in enumerate(zip(trace.records, graphs)):
        if rec.time < t_A:
            continue
        rep.check(rec.time + 1, Ls[i + 1], kn * Ls[i], tolerance(kn * Ls[i]), kind="L-contraction")
        for p in g.attracted:
            mp = rec.config.records[p].position
            mc = rec.config.records[g.edges[p]].position
            bound = distance(mp, X) / n
            # the edge bound is a lower bound: check -d <= -bound
            rep.check(rec.time, -distance(mp, mc), -bound, tolerance(bound), kind="edge-bound", process=p)
    return rep


def convergence_verdict(config: Configuration) -> str:
    """What the crash count allows: f >= 2 rules out convergence."""
    f = len(crashed_positions(config))
    if f == 0:
        return "solvable"
    if f == 1:
        return "convergence-only"
    return "impossible"


def fault_f2_check(trace: Trace) -> CertificateReport:
    """With two or more crashed positions the crashed processes stay put and
    the swarm can neither gather nor converge."""
    rep = CertificateReport("fault-f2", "d(X1,X2) constant and > 0 at every step", "exact")
    first = trace.configs[0] if not trace.records else trace.records[0].config
    crashed = [r.id for r in first.records if r.crashed]
    xs = crashed_positions(first)
    rep.details["f"] = len(xs)
    if len(xs) < 2:
        rep.applicable = False
        rep.details["reason"] = "needs f >= 2"
        return rep
    a = min(crashed, key=lambda p: first.records[p].position)
    b = max(crashed, key=lambda p: first.records[p].position)
    d0 = distance(first.records[a].position, first.records[b].position)
    for c in trace.configs:
        d = distance(c.records[a].position, c.records[b].position)
        rep.per_step.append(d == d0)
        if d != d0 and rep.first_violation is None:
            rep.first_violation = {"t": c.time, "lhs": d, "rhs": d0}
    final = trace.final
    rep.details["inter_crash_distance"] = d0
    rep.details["stop"] = trace.stop
    rep.details["gathered"] = trace.gathered
    rep.details["verdict"] = convergence_verdict(final) if final is not None else "impossible"
    if trace.gathered:
        rep.first_violation = rep.first_violation or {"t": final.time, "reason": "gathered with f >= 2"}
    return rep
