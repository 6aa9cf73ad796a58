"""Verification sweeps: each suite is a trial function over a seeded index.

Trials are independent, so ``run_suite(..., jobs=k)`` fans them out over
worker processes and merges the outcomes in index order.
"""
from __future__ import annotations

import math
import time
import zlib
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Optional

import numpy as np

from .analysis import (
    alpha,
    cgraph_from_choices,
    convergence_verdict,
    fault_contraction_check,
    fault_f2_check,
    has_mutual_pair,
    metrics,
    midpoint_lemma_check,
    monotonicity_certificates,
)
from .engine import RunSettings, inject_crash, plan_step, run
from .errors import UsageError
from .geometry import seb_bruteforce, smallest_enclosing_ball
from .model import Configuration, occupancy
from .policies import MM, ORDER_BASED, TiePolicy
from .scenarios import make_chain, make_equilateral, make_random_cloud, make_two_triangles, triangle_vertices


@dataclass
class Outcome:
    ok: bool
    info: dict[str, Any] = field(default_factory=dict)
    counterexample: Optional[dict[str, Any]] = None


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: int
    first_counterexample: Optional[dict[str, Any]]
    stats: dict[str, Any]
    elapsed: float

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_json(self) -> dict[str, Any]:
        return {
            "suite": self.name,
            "trials": self.trials,
            "failures": self.failures,
            "passed": self.passed,
            "elapsed_s": round(self.elapsed, 3),
            "stats": self.stats,
            "first_counterexample": self.first_counterexample,
        }


def trial_rng(seed: int, name: str, i: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode()), i])


def _lattice_config(rng: np.random.Generator, n: int, d: int, span: int = 3) -> Configuration:
    """Integer lattice points: dense with exact ties and co-located processes."""
    pts = rng.integers(0, span + 1, size=(n, d)).astype(float)
    return Configuration.from_positions(pts.tolist())


def _cloud(rng: np.random.Generator, n: int, d: int) -> Configuration:
    return Configuration.from_positions(rng.random((n, d)).tolist())


_TIES = ("order-based", "lowest-id", "seeded-random", "scripted-adversary")


def _random_tie(rng: np.random.Generator, kind: str) -> TiePolicy:
    if kind == "scripted-adversary":
        script = [{"t": int(t), "rank": int(r), "choice": 0} for t in range(5) for r in range(12)
                  if rng.random() < 0.5]
        return TiePolicy.from_json({"kind": kind, "script": script})
    return TiePolicy(kind, seed=int(rng.integers(2**31)))


def _random_triangle(rng: np.random.Generator, d: int) -> Configuration:
    tri = np.asarray(triangle_vertices(float(10 ** rng.uniform(-2, 2)), centered=True))
    basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    offset = rng.normal(0, 1, d)
    return Configuration.from_positions((tri @ basis.T + offset).tolist())


def trial_monotonicity(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "monotonicity", i)
    n = int(rng.integers(2, 13))
    d = int(rng.integers(1, 4))
    if i % 5 == 4:
        # long traces: a rotated, scaled triangle under the cyclic adversary
        config = _random_triangle(rng, max(d, 2))
        tie = TiePolicy("cyclic-equilateral")
    else:
        config = _lattice_config(rng, n, d) if i % 2 else _cloud(rng, n, d)
        tie = _random_tie(rng, _TIES[i % len(_TIES)])
    trace = run(config, MM, tie, settings=RunSettings(max_steps=int(rng.integers(1, 51))))
    reps = monotonicity_certificates(trace)
    ok = all(r.passed for r in reps)
    cx = None if ok else {"config": config.to_json(), "tie": tie.to_json(),
                          "reports": [r.to_json() for r in reps if not r.passed]}
    return Outcome(ok, {"steps": trace.steps, "checks": sum(len(r.per_step) for r in reps)}, cx)


def _regular_polygon(rng: np.random.Generator, n: int, d: int, jitter: float) -> np.ndarray:
    ang = 2 * np.pi * np.arange(n) / n + rng.random() * 2 * np.pi
    flat = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if d == 1:
        pts = flat[:, :1]
    else:
        basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
        pts = flat @ basis.T
    return pts + jitter * rng.standard_normal(pts.shape)


def sample_alpha_config(rng: np.random.Generator, K: float, max_tries: int = 10_000) -> Configuration:
    """Rejection-sample a configuration with R <= K * d_min (n in 2..5, d in 1..3)."""
    for _ in range(max_tries):
        n = int(rng.integers(2, 6))
        d = int(rng.integers(1, 4))
        if rng.random() < 0.5:
            pts = rng.random((n, d))
        else:
            pts = _regular_polygon(rng, n, d, float(rng.random()) * 0.3)
        config = Configuration.from_positions(pts.tolist())
        m = metrics(config)
        if m.omega_count >= 2 and m.R <= K * m.d_min:
            return config
    raise RuntimeError("alpha sampler exhausted its budget")


ALPHA_KS = (1.0, 2.0, 10.0)


def trial_alpha(i: int, seed: int = 0) -> Outcome:
    K = ALPHA_KS[i % len(ALPHA_KS)]
    rng = trial_rng(seed, "alpha-contraction", i)
    config = sample_alpha_config(rng, K)
    before = metrics(config)
    nxt = config.with_positions(plan_step(config, MM).targets, config.time + 1)
    after = metrics(nxt)
    bound = alpha(K) * before.R
    ok = after.R <= bound + max(1e-9 * bound, 1e-12)
    cx = None if ok else {"config": config.to_json(), "K": K, "R": before.R, "d_min": before.d_min,
                          "R_next": after.R, "bound": bound}
    return Outcome(ok, {"K": K, "ratio": after.R / before.R}, cx)


def sample_midpoint_set(rng: np.random.Generator, max_tries: int = 10_000) -> tuple[tuple[float, ...], ...]:
    """Five labeled points satisfying the midpoint-lemma hypotheses.

    A and the scale are random; B, C, E are drawn uniformly from boxes around
    A and rejected until every hypothesis holds. A third of the draws push E
    onto the extreme sphere d(A,E) = 100x, where the bound is tightest.
    """
    for _ in range(max_tries):
        d = int(rng.integers(2, 4))
        x = float(10 ** rng.uniform(-3, 3))
        A = rng.normal(0, 10 * x, d)
        u = rng.standard_normal(d)
        D = A + 100 * x * u / np.linalg.norm(u)
        B = A + rng.uniform(-x, x, d)
        C = A + rng.uniform(-x, x, d)
        if rng.random() < 1 / 3:
            w = rng.standard_normal(d)
            E = A + 100 * x * (1 - 1e-12) * w / np.linalg.norm(w)
        else:
            E = A + rng.uniform(-100 * x, 100 * x, d)
        pts = tuple(tuple(p.tolist()) for p in (A, B, C, D, E))
        res = midpoint_lemma_check(*pts)
        if res.applicable:
            return pts
    raise RuntimeError("midpoint sampler exhausted its budget")


def trial_midpoint(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "midpoint-lemma", i)
    pts = sample_midpoint_set(rng)
    res = midpoint_lemma_check(*pts)
    cx = None if res.holds else {"points": dict(zip("ABCDE", map(list, pts))), "lhs": res.lhs, "rhs": res.rhs}
    return Outcome(res.holds, {"ratio": res.lhs / (res.rhs / 0.99)}, cx)


def trial_order_gathering(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "order-gathering", i)
    n = int(rng.integers(2, 65))
    d = int(rng.integers(1, 4))
    config = _lattice_config(rng, n, d, span=6) if i % 4 == 3 else _cloud(rng, n, d)
    trace = run(config, MM, ORDER_BASED, settings=RunSettings(max_steps=n))
    ok = trace.stop == "gathered" and trace.steps <= n - 1
    cx = None if ok else {"config": config.to_json(), "stop": trace.stop, "steps": trace.steps}
    return Outcome(ok, {"n": n, "steps": trace.steps}, cx)


def trial_pair_structure(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "pair-structure", i)
    while True:
        n = int(rng.integers(2, 8))
        d = int(rng.integers(1, 4))
        config = _lattice_config(rng, n, d, span=2) if i % 2 else _cloud(rng, n, d)
        if len(occupancy(config)) >= 2:
            break
    rec = plan_step(config, MM, ORDER_BASED)
    g = cgraph_from_choices(config, rec.choices)
    mutual = has_mutual_pair(config, g)
    all_pairs = all(len(loop) == 2 for loop in g.loops)
    ok = mutual and all_pairs
    cx = None if ok else {"config": config.to_json(), "choices": list(rec.choices),
                          "loops": [list(l) for l in g.loops]}
    return Outcome(ok, {"loops": len(g.loops)}, cx)


def trial_fault_f1(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "fault-f1", i)
    n = int(rng.integers(3, 11))
    d = int(rng.integers(1, 4))
    config = _cloud(rng, n, d)
    victim = int(rng.integers(n))
    plan = inject_crash(config, ids=[victim])
    X = config.records[victim].position
    L0 = max(math.dist(X, p) for p in config.positions)
    settings = RunSettings(max_steps=2000 * n, eps_converge=0.05e-6 * L0, stop_on=("converged",))
    trace = run(config, MM, ORDER_BASED, settings=settings, crashes=plan)
    rep = fault_contraction_check(trace)
    Ls = [max(math.dist(X, p) for p in c.positions) for c in trace.configs]
    hit = next((k for k, L in enumerate(Ls) if L < 1e-6 * L0), None)
    ok = rep.passed and hit is not None and hit <= 2000 * n
    cx = None if ok else {"config": config.to_json(), "crashed": victim, "report": rep.to_json(),
                          "steps_to_1e-6": hit}
    return Outcome(ok, {"n": n, "t_A": rep.details.get("t_A"), "steps_to_1e-6": hit}, cx)


def trial_fault_f2(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "fault-f2", i)
    n = int(rng.integers(2, 9))
    d = int(rng.integers(1, 4))
    a = np.zeros(d)
    b = np.zeros(d)
    b[0] = 1.0
    others = rng.uniform(-1, 2, (n - 2, d))
    config = Configuration.from_positions([a.tolist(), b.tolist()] + others.tolist())
    plan = inject_crash(config, ids=[0, 1])
    trace = run(config, MM, ORDER_BASED, settings=RunSettings(max_steps=300), crashes=plan)
    rep = fault_f2_check(trace)
    verdict = convergence_verdict(trace.final)
    ok = rep.passed and verdict == "impossible" and not trace.gathered and trace.stop in ("fixpoint", "budget")
    cx = None if ok else {"config": config.to_json(), "report": rep.to_json(), "stop": trace.stop}
    return Outcome(ok, {"stop": trace.stop, "verdict": verdict, "distance": rep.details.get("inter_crash_distance")}, cx)


def two_triangle_distances(config: Configuration) -> tuple[float, float]:
    P = np.asarray(config.positions)
    a, b = P[:3], P[3:6]
    inter = float(min(np.linalg.norm(x - y) for x in a for y in b))
    return inter, float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))


def trial_impossibility_n6(i: int, seed: int = 0, steps: int = 60) -> Outcome:
    sc = make_two_triangles(1.0)
    trace = run(sc.config, MM, sc.tie, settings=RunSettings(max_steps=steps, stop_on=()))
    first_bad = None
    worst_inter, worst_bary = math.inf, math.inf
    for c in trace.configs:
        inter, bary = two_triangle_distances(c)
        worst_inter, worst_bary = min(worst_inter, inter), min(worst_bary, bary)
        if first_bad is None and (inter < 8 - 1e-6 or bary < 9.9):
            first_bad = {"t": c.time, "inter_group": inter, "barycenters": bary, "config": c.to_json()}
    ok = first_bad is None
    return Outcome(ok, {"steps": trace.steps, "min_inter_group": worst_inter, "min_barycenter_gap": worst_bary},
                   first_bad)


def trial_seb_oracle(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "seb-oracle", i)
    n = int(rng.integers(1, 9))
    d = int(rng.integers(1, 4))
    if i % 3 == 2:
        pts = rng.integers(0, 3, (n, d)).astype(float)
    else:
        pts = rng.normal(0, 1, (n, d)) * 10 ** rng.uniform(-3, 3)
    pts = [tuple(p) for p in pts.tolist()]
    fast = smallest_enclosing_ball(pts, seed=i)
    ref = seb_bruteforce(pts)
    ok = abs(fast.radius - ref.radius) <= 1e-9 * max(ref.radius, 1e-300) + 1e-300 or (
        abs(fast.radius - ref.radius) <= 1e-9 * max(1.0, ref.radius) and ref.radius < 1
    )
    cx = None if ok else {"points": [list(p) for p in pts], "incremental": fast.radius, "oracle": ref.radius}
    return Outcome(ok, {"n": n, "d": d}, cx)


def trial_chain(i: int, seed: int = 0) -> Outcome:
    """Chain of n = i + 2 processes at spacing 1 under order-based MM."""
    n = i + 2
    sc = make_chain(n, 1.0)
    trace = run(sc.config, MM, ORDER_BASED, settings=RunSettings(max_steps=n))
    bad = None
    for k, c in enumerate(trace.configs):
        want = [(j + k / 2) for j in range(n - k)]
        got = sorted(p[0] for p in occupancy(c).positions)
        if len(got) != len(want) or any(abs(g - w) > 1e-12 for g, w in zip(got, want)):
            bad = {"k": k, "expected": want, "got": got}
            break
        if k < n - 1 and len(got) == 1:
            bad = {"k": k, "reason": "gathered early"}
            break
    ok = bad is None and trace.stop == "gathered" and trace.steps == n - 1
    return Outcome(ok, {"n": n, "steps": trace.steps}, None if ok else {"n": n, "detail": bad, "stop": trace.stop})


def trial_triangle(i: int, seed: int = 0, steps: int = 40) -> Outcome:
    sc = make_equilateral(1.0, 2 + i % 2, centered=True)
    trace = run(sc.config, MM, sc.tie, settings=RunSettings(max_steps=steps))
    bad = None
    for c in trace.configs:
        pts = sorted(set(c.positions))
        if len(pts) != 3:
            bad = {"t": c.time, "reason": f"|Omega| = {len(pts)}"}
            break
        sides = [math.dist(pts[0], pts[1]), math.dist(pts[1], pts[2]), math.dist(pts[2], pts[0])]
        want = 2.0 ** -c.time
        if max(sides) > min(sides) * (1 + 1e-9) or any(abs(s - want) > 1e-9 * want for s in sides):
            bad = {"t": c.time, "sides": sides, "expected": want}
            break
    ok = bad is None and trace.stop == "budget" and not trace.gathered
    return Outcome(ok, {"steps": trace.steps, "stop": trace.stop}, None if ok else bad or {"stop": trace.stop})


def trial_convergence_n5(i: int, seed: int = 0) -> Outcome:
    rng = trial_rng(seed, "convergence-n5", i)
    n = 2 + i % 4
    d = 1 + (i // 4) % 3
    sc = make_random_cloud(n, d, seed=int(rng.integers(2**31)))
    trace = run(sc.config, MM, ORDER_BASED, settings=RunSettings(max_steps=n))
    ok = trace.stop == "gathered" and trace.steps <= n - 1
    return Outcome(ok, {"n": n, "d": d, "steps": trace.steps},
                   None if ok else {"config": sc.config.to_json(), "stop": trace.stop, "steps": trace.steps})


@dataclass(frozen=True)
class Suite:
    trial: Callable[..., Outcome]
    default_trials: int
    about: str


SUITES: dict[str, Suite] = {
    "monotonicity": Suite(trial_monotonicity, 500, "R and d_max never increase along MM traces"),
    "alpha-contraction": Suite(trial_alpha, 30_000,
                               "R <= K d_min => R' <= alpha(K) R, K cycling over 1, 2, 10"),
    "midpoint-lemma": Suite(trial_midpoint, 10_000, "five-point midpoint diameter bound 0.99"),
    "order-gathering": Suite(trial_order_gathering, 200, "order-based MM gathers in <= n-1 steps, n in 2..64"),
    "pair-structure": Suite(trial_pair_structure, 10_000, "a mutual pair exists and every loop is a pair"),
    "fault-f1": Suite(trial_fault_f1, 200, "one crash: contraction by k(n) after t_A, L -> 0"),
    "fault-f2": Suite(trial_fault_f2, 20, "two crashed positions: convergence impossible"),
    "impossibility-n6": Suite(trial_impossibility_n6, 1, "two livelocked triangles stay >= 8 D apart"),
    "seb-oracle": Suite(trial_seb_oracle, 3000, "incremental ball matches the brute-force oracle"),
    "chain": Suite(trial_chain, 63, "collinear chain gathers in exactly n-1 steps, n = 2..64"),
    "triangle-livelock": Suite(trial_triangle, 2, "equilateral triangle never gathers under the cyclic adversary"),
    "convergence-n5": Suite(trial_convergence_n5, 1000, "random clouds with n <= 5 gather within n-1 steps"),
}


def run_suite(name: str, trials: Optional[int] = None, seed: int = 0, jobs: int = 1) -> SuiteResult:
    try:
        suite = SUITES[name]
    except KeyError:
        raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    trials = suite.default_trials if trials is None else trials
    if trials < 1:
        raise UsageError("trials must be at least 1")
    fn = partial(suite.trial, seed=seed)
    start = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(fn, range(trials), chunksize=max(1, trials // (8 * jobs))))
    else:
        outcomes = [fn(i) for i in range(trials)]
    elapsed = time.perf_counter() - start
    failures = [k for k, o in enumerate(outcomes) if not o.ok]
    first = None
    if failures:
        k = failures[0]
        first = {"trial": k, **(outcomes[k].counterexample or {})}
    return SuiteResult(name, trials, len(failures), first, _stats(outcomes), elapsed)


def _stats(outcomes: list[Outcome]) -> dict[str, Any]:
    """Min/max of numeric trial info and value counts of everything else."""
    numeric: dict[str, list[float]] = {}
    labels: dict[str, Counter] = {}
    for o in outcomes:
        for key, v in o.info.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                numeric.setdefault(key, []).append(float(v))
            elif v is not None:
                labels.setdefault(key, Counter())[str(v)] += 1
    stats: dict[str, Any] = {k: {"min": min(v), "max": max(v)} for k, v in numeric.items()}
    stats.update({k: dict(sorted(c.items())) for k, c in labels.items()})
    return stats
