import math
import random

import pytest
from hypothesis import given

from myopic.errors import ScenarioError, UsageError
from myopic.geometry import distance
from myopic.model import Configuration, neighbor_view, neighbor_views, occupancy
from myopic.policies import (
    FIXED_POSITIVE,
    MM,
    ORDER_BASED,
    OrthogonalChoice,
    TiePolicy,
    equilateral_adversary,
    linear_rule,
    next_position,
    parse_script,
    rule_from_name,
    select_neighbor,
)
from myopic.scenarios import triangle_vertices
from strategies import points


def test_mm_rule_values():
    for D in (1e-9, 0.3, 1.0, 7e5):
        assert MM.fx(D) == D / 2
        assert MM.fy(D) == 0


def test_rule_from_name():
    assert rule_from_name("mm") is MM
    full = rule_from_name("full-hop")
    assert full.fx(3.0) == 3.0
    lin = rule_from_name("linear:0.25,0.5")
    assert (lin.fx(2.0), lin.fy(2.0)) == (0.5, 1.0)
    with pytest.raises(UsageError):
        rule_from_name("teleport")


def test_order_based_picks_largest_position():
    c = Configuration.from_positions([(0, 0), (0, 1), (1, 0)])
    v = neighbor_view(c, 0)
    assert sorted(v.candidates) == [1, 2]
    assert select_neighbor(v, c, ORDER_BASED) == 2


def test_single_candidate():
    c = Configuration.from_positions([(0,), (1,), (5,)])
    assert select_neighbor(neighbor_view(c, 2), c, TiePolicy("random", seed=4)) == 1


def test_scripted_pick_smaller():
    c = Configuration.from_positions([(2,), (3.5,), (5,)])
    rank = occupancy(c).cluster_of[1]
    tie = TiePolicy("scripted-adversary", script=parse_script([{"t": 0, "rank": rank, "choice": 0}]))
    assert select_neighbor(neighbor_view(c, 1), c, tie) == 0
    # no entry for t=1: falls back to order-based
    later = Configuration.from_positions([(2,), (3.5,), (5,)], time=1)
    assert select_neighbor(neighbor_view(later, 1), later, tie) == 2


def test_scripted_choice_out_of_range():
    c = Configuration.from_positions([(2,), (3.5,), (5,)])
    tie = TiePolicy("scripted", script=parse_script([{"t": 0, "rank": 1, "choice": 5}]))
    with pytest.raises(UsageError):
        select_neighbor(neighbor_view(c, 1), c, tie)


def test_empty_view_rejected():
    c = Configuration.from_positions([(1,), (1,)])
    with pytest.raises(UsageError):
        select_neighbor(neighbor_view(c, 0), c)


def test_lowest_id_and_seeded_random_deterministic():
    c = Configuration.from_positions([(0,), (-1,), (1,)])
    v = neighbor_view(c, 0)
    assert select_neighbor(v, c, TiePolicy("lowest-id")) == 1
    picks = {select_neighbor(v, c, TiePolicy("random", seed=s)) for s in range(30)}
    assert picks == {1, 2}
    assert select_neighbor(v, c, TiePolicy("random", seed=9)) == select_neighbor(v, c, TiePolicy("random", seed=9))


def test_unknown_tie_kind():
    with pytest.raises(UsageError):
        TiePolicy("coin-flip")


def test_tie_policy_json_round_trip():
    tie = TiePolicy("scripted", script=parse_script([{"t": 1, "rank": 0, "choice": 1}]))
    assert TiePolicy.from_json(tie.to_json()) == tie
    tie = TiePolicy("cyclic", groups=((0, 1, 2),))
    assert TiePolicy.from_json(tie.to_json()) == tie


def test_next_position_examples():
    assert next_position((0, 0), (2, 0), MM) == (1, 0)
    assert next_position((0,), (3,), linear_rule(1.0)) == (3,)
    rule = linear_rule(0.5, 1.0)
    assert next_position((0, 0), (2, 0), rule, FIXED_POSITIVE) == pytest.approx((1, 2))
    assert next_position((0, 0), (2, 0), rule, OrthogonalChoice("negative")) == pytest.approx((1, -2))
    with pytest.raises(UsageError):
        next_position((1, 1), (1, 1), MM)


@given(points(3, 2, 2))
def test_mm_target_is_exact_midpoint(pts):
    a, b = pts
    if a == b:
        return
    m = next_position(a, b, MM)
    assert abs(distance(m, a) - distance(m, b)) <= 1e-12 * max(1.0, distance(a, b))


def test_order_based_permutation_invariant():
    rng = random.Random(5)
    for _ in range(200):
        pts = [(rng.randint(0, 3), rng.randint(0, 3)) for _ in range(5)]
        if len(set(pts)) != len(pts):
            continue
        c = Configuration.from_positions(pts)
        perm = list(range(5))
        rng.shuffle(perm)
        c2 = Configuration.from_positions([pts[i] for i in perm])
        for new_id, old_id in enumerate(perm):
            a = select_neighbor(neighbor_view(c, old_id), c)
            b = select_neighbor(neighbor_view(c2, new_id), c2)
            assert c.positions[a] == c2.positions[b]


def _apply_adversary(pts, rule):
    c = Configuration.from_positions(pts)
    plan = equilateral_adversary(c, rule)
    out = []
    for p in range(3):
        q, y = plan[p]
        out.append(next_position(c.positions[p], c.positions[q], rule, y))
    return out


def _sides(pts):
    return [distance(pts[0], pts[1]), distance(pts[1], pts[2]), distance(pts[2], pts[0])]


def test_adversary_mm_gives_medial_triangle():
    nxt = _apply_adversary(triangle_vertices(1.0), MM)
    assert _sides(nxt) == pytest.approx([0.5, 0.5, 0.5], rel=1e-12)


@pytest.mark.parametrize("a", [-1.0, -0.3, 0.25, 0.5, 0.9, 1.7])
@pytest.mark.parametrize("b", [-0.5, 0.0, 0.1, 0.4])
def test_adversary_keeps_triangle_equilateral(a, b):
    pts = triangle_vertices(1.0, centered=True)
    nxt = _apply_adversary(pts, linear_rule(a, b))
    s = _sides(nxt)
    if max(s) < 1e-12:
        return
    assert max(s) <= min(s) * (1 + 1e-9)
    # barycenter is kept, and with fy != 0 the triangle does not collapse onto it
    assert sum(p[0] for p in nxt) / 3 == pytest.approx(0, abs=1e-12)
    if b:
        assert min(s) > 0


def test_adversary_nonzero_fy_example():
    rule = linear_rule(0.5, 0.1)
    nxt = _apply_adversary(triangle_vertices(1.0), rule)
    s = _sides(nxt)
    assert max(s) <= min(s) * (1 + 1e-9)
    G = (0.5, math.sqrt(3) / 6)
    assert all(distance(p, G) > 0.1 for p in nxt)


def test_adversary_in_3d_stays_in_plane():
    pts = [(x, y, 0.0) for x, y in triangle_vertices(2.0)]
    nxt = _apply_adversary(pts, linear_rule(0.5, 0.3))
    assert all(p[2] == pytest.approx(0, abs=1e-12) for p in nxt)
    s = _sides(nxt)
    assert max(s) <= min(s) * (1 + 1e-9)


def test_adversary_rejects_bad_input():
    with pytest.raises(ScenarioError):
        equilateral_adversary(Configuration.from_positions([(0, 0), (1, 0), (2, 0)]))
    with pytest.raises(ScenarioError):
        equilateral_adversary(Configuration.from_positions([(0,), (1,), (2,)]))
    with pytest.raises(ScenarioError):
        equilateral_adversary(Configuration.from_positions([(0, 0), (1, 0), (0.5, 0.8)]))


def test_adversary_choices_are_in_the_tie_set():
    c = Configuration.from_positions(triangle_vertices(1.0))
    plan = equilateral_adversary(c)
    views = neighbor_views(c)
    assert sorted(q for q, _ in plan.values()) == [0, 1, 2]
    for p, (q, _) in plan.items():
        assert q in views[p].candidates
