import io
import math

import numpy as np
import pytest
from hypothesis import given

from myopic.analysis import (
    CSV_HEADER,
    CertificateReport,
    alpha,
    alpha_certificate,
    cgraph,
    cgraph_from_choices,
    fault_contraction_check,
    fault_f2_check,
    has_mutual_pair,
    k_factor,
    metrics,
    metrics_table,
    midpoint_lemma_check,
    monotonicity_certificates,
    write_metrics_csv,
)
from myopic.engine import RunSettings, inject_crash, plan_step, run
from myopic.errors import UsageError
from myopic.model import Configuration
from myopic.policies import MM, ORDER_BASED, TiePolicy
from myopic.scenarios import make_chain, make_equilateral, make_random_cloud
from strategies import point_sets


def test_metrics_examples():
    m = metrics(Configuration.from_positions([(0,), (1,)]))
    assert (m.omega_count, m.d_min, m.d_max, m.R) == (2, 1, 1, pytest.approx(0.5))
    h = math.sqrt(3) / 2
    m = metrics(Configuration.from_positions([(0, 0), (1, 0), (0.5, h)]))
    assert m.d_min == pytest.approx(1) and m.d_max == pytest.approx(1)
    assert m.R == pytest.approx(1 / math.sqrt(3), rel=1e-12)
    m = metrics(Configuration.from_positions([(2, 2), (2, 2)]))
    assert (m.omega_count, m.R, m.gathered) == (1, 0, True)


def test_metrics_uses_distinct_positions():
    m = metrics(Configuration.from_positions([(0,), (0,), (0,), (3,)]))
    assert m.d_min == 3 and m.omega_count == 2


def test_metrics_L_only_with_one_crash():
    c = Configuration.from_positions([(0,), (2,), (5,)], crashed=[True, False, False])
    assert metrics(c).L == 5
    assert metrics(Configuration.from_positions([(0,), (2,)])).L is None


@given(point_sets(min_size=2))
def test_metric_ordering(pts):
    m = metrics(Configuration.from_positions(pts))
    assert m.R >= 0
    if m.omega_count >= 2:
        assert m.d_min <= m.d_max <= 2 * m.R * (1 + 1e-9) + 1e-12


def test_alpha_values():
    assert alpha(1) == pytest.approx(0.8660254037844386, rel=1e-15)
    assert alpha(1000) == pytest.approx(math.sqrt(1 - 2.5e-7), rel=1e-15)
    with pytest.raises(UsageError):
        alpha(0.5)


def test_k_values():
    assert k_factor(2) == pytest.approx(math.sqrt(15) / 4, rel=1e-15)
    assert k_factor(5) == pytest.approx(math.sqrt(0.99), rel=1e-15)
    assert k_factor(5) == pytest.approx(0.99499, abs=1e-5)


def test_alpha_sweep_with_K2():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 300:
        n = int(rng.integers(2, 6))
        c = Configuration.from_positions(rng.random((n, int(rng.integers(1, 4)))).tolist())
        m = metrics(c)
        if m.R > 2 * m.d_min:
            continue
        nxt = c.with_positions(plan_step(c).targets, 1)
        assert metrics(nxt).R <= alpha(2) * m.R + 1e-9
        checked += 1


def test_alpha_certificate_on_triangle():
    sc = make_equilateral(1.0, centered=True)
    trace = run(sc.config, MM, sc.tie, settings=RunSettings(max_steps=20))
    rep = alpha_certificate(trace, 1.0)
    assert rep.passed
    assert len(rep.per_step) == 20


def test_midpoint_lemma_example():
    res = midpoint_lemma_check((0, 0), (0, 0), (0, 0), (100, 0), (50, 40))
    assert res.applicable and res.holds
    assert res.lhs <= res.rhs


def test_midpoint_lemma_not_applicable():
    res = midpoint_lemma_check((0, 0), (0, 0), (0, 0), (100, 0), (100, 0))
    assert not res.applicable
    assert not midpoint_lemma_check((0, 0), (5, 0), (0, 0), (100, 0), (50, 40)).applicable


def test_monotonicity_on_random_traces():
    for s in range(20):
        c = make_random_cloud(8, 2, seed=s).config
        reps = monotonicity_certificates(run(c, MM, TiePolicy("random", seed=s)))
        assert all(r.passed for r in reps)


def test_certificate_report_records_violation():
    rep = CertificateReport("toy", "lhs <= rhs", "exact")
    assert rep.check(0, 1.0, 2.0, 0.0)
    assert not rep.check(1, 3.0, 2.0, 0.0, note="x")
    rep.check(2, 5.0, 2.0, 0.0)
    assert not rep.passed
    out = rep.to_json()
    assert out["first_violation"]["t"] == 1
    assert out["first_violation"]["lhs"] == 3.0 and out["first_violation"]["rhs"] == 2.0
    assert out["inequality"] == "lhs <= rhs"


def test_metrics_csv():
    trace = run(make_chain(3).config)
    buf = io.StringIO()
    write_metrics_csv(metrics_table(trace), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == trace.steps + 2


def test_cgraph_two_processes_pair():
    g = cgraph(Configuration.from_positions([(0,), (1,)]))
    assert g.loops == [(0, 1)]
    assert g.pairs == [(0, 1)]


def test_cgraph_chain_to_crash():
    c = Configuration.from_positions([(0,), (1,), (2.2,), (3.6,)], crashed=[True, False, False, False])
    g = cgraph(c)
    assert g.loops == []
    assert g.attracted == {1, 2, 3}
    assert g.all_attracted()


def _oracle(config, choices):
    """Follow each C-chain for n steps; classify by where it ends."""
    n = config.n
    crashed = {r.id for r in config.records if r.crashed}
    kinds, loops = {}, set()
    for p in range(n):
        if p in crashed:
            kinds[p] = "crashed"
            continue
        seen = [p]
        q = p
        for _ in range(n + 1):
            q = choices[q] if q not in crashed else None
            if q is None:
                break
            seen.append(q)
        if q is None:
            last = seen[-1]
            kinds[p] = "attracted" if last in crashed else "idle"
        else:
            tail = seen[-(n + 1):]
            cyc_start = tail[-1]
            cycle = [cyc_start]
            r = choices[cyc_start]
            while r != cyc_start:
                cycle.append(r)
                r = choices[r]
            loops.add(frozenset(cycle))
            kinds[p] = "loop" if p in cycle else "feeds-loop"
    return kinds, loops


def test_cgraph_matches_chain_following_oracle():
    rng = np.random.default_rng(8)
    for i in range(1500):
        n = int(rng.integers(2, 8))
        d = int(rng.integers(1, 4))
        pts = rng.integers(0, 3, (n, d)).astype(float) if i % 2 else rng.random((n, d))
        crashed = (rng.random(n) < 0.25).tolist()
        c = Configuration.from_positions(pts.tolist(), crashed=crashed)
        tie = [ORDER_BASED, TiePolicy("random", seed=i), TiePolicy("lowest-id")][i % 3]
        choices = plan_step(c, MM, tie).choices
        g = cgraph_from_choices(c, choices)
        kinds, loops = _oracle(c, choices)
        assert g.kind == kinds
        assert {frozenset(l) for l in g.loops} == loops


def test_random_ties_can_form_long_loops():
    # three collinear equidistant pairs are not enough; a square with
    # lowest-id ties gives 0 -> 1 -> 0 while random ties may cycle longer
    sq = Configuration.from_positions([(0, 0), (1, 0), (1, 1), (0, 1)])
    lengths = set()
    for s in range(50):
        g = cgraph(sq, TiePolicy("random", seed=s))
        lengths.update(len(l) for l in g.loops)
    assert max(lengths) > 2


@given(point_sets(min_size=2, max_size=7))
def test_order_based_loops_are_pairs(pts):
    c = Configuration.from_positions(pts)
    if len(set(c.positions)) < 2:
        return
    g = cgraph(c)
    assert has_mutual_pair(c, g)
    assert all(len(l) == 2 for l in g.loops)


def test_fault_contraction_example():
    c = make_random_cloud(5, 2, seed=3).config
    plan = inject_crash(c, ids=[2])
    trace = run(c, settings=RunSettings(max_steps=500), crashes=plan)
    rep = fault_contraction_check(trace)
    assert rep.applicable and rep.passed
    assert rep.details["L_final"] < 1e-12 * rep.details["L0"]


def test_fault_contraction_not_applicable_without_one_crash():
    trace = run(make_chain(4).config)
    assert not fault_contraction_check(trace).applicable


def test_fault_f2_report():
    c = Configuration.from_positions([(0, 0), (1, 0), (0.4, 0.7), (2, 2)])
    trace = run(c, settings=RunSettings(max_steps=200), crashes=inject_crash(c, ids=[0, 1]))
    rep = fault_f2_check(trace)
    assert rep.passed
    assert rep.details["verdict"] == "impossible"
    assert rep.details["inter_crash_distance"] == 1.0
    assert not trace.gathered
