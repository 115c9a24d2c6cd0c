import json
import math
from fractions import Fraction

import pytest

from genflow.market import (Buyer, MarketError, MarketInstance, build_adnb, build_fisher, component_prices,
                            extract_equilibrium, feasibility_lp, is_forest, kkt_residuals, load_market,
                            random_adnb, recover_exact_adnb, solve_market, solve_support_system)
from genflow.sink import Infeasible


def square(budgets=(1, 3)):
    buyers = [Buyer(f"b{k}", m) for k, m in enumerate(budgets)]
    return MarketInstance(buyers, ["g", "h"], {(i, j): 1 for i in range(2) for j in range(2)})


def test_fisher_graph_shape():
    m = MarketInstance([Buyer("a", 1)], ["g"], {(0, 0): 1})
    g = build_fisher(m)
    net = g.instance.network
    assert net.n == 3 and net.m == 2
    assert net.b[g.good_node(0)] == -1


def test_fisher_dense_counts():
    g = build_fisher(square())
    net = g.instance.network
    assert net.n == 2 + 2 + 1
    assert net.m == 4 + 2


def test_fisher_rejects_disagreement():
    m = MarketInstance([Buyer("a", 1, 1)], ["g"], {(0, 0): 2})
    with pytest.raises(MarketError):
        build_fisher(m)


def test_adnb_without_disagreement_matches_fisher_graph():
    m = square()
    f, a = build_fisher(m).instance.network, build_adnb(m).instance.network
    assert f.b == a.b
    assert [(x.tail, x.head) for x in f.arcs] == [(x.tail, x.head) for x in a.arcs]
    # only capacities differ, and ADNB's are larger so they never bind first
    assert all(y.upper > x.upper for x, y in zip(f.arcs, a.arcs))
    assert [x.gain.spec() for x in f.arcs] == [x.gain.spec() for x in a.arcs]


def test_eg_sink_value():
    # all utilities 1: z is proportional to budgets, z = (1/2, 3/2)
    graph = build_fisher(square())
    rep = solve_market(graph, 1e-7)
    target = math.log(0.5) + 3 * math.log(1.5)
    assert rep.extra["e_t"] == pytest.approx(target, abs=1e-6)


def test_fisher_single_pair():
    m = MarketInstance([Buyer("a", 1)], ["g"], {(0, 0): 1})
    graph = build_fisher(m)
    eq = extract_equilibrium(solve_market(graph, 1e-8), graph)
    assert eq.prices[0] == pytest.approx(1, abs=1e-6)
    assert eq.allocation[(0, 0)] == pytest.approx(1, abs=1e-6)


def test_fisher_and_adnb_agree_when_c_is_zero():
    m = square((2, 1))
    eps = 1e-7
    a = extract_equilibrium(solve_market(build_fisher(m), eps), build_fisher(m))
    b = extract_equilibrium(solve_market(build_adnb(m), eps), build_adnb(m))
    for pa, pb in zip(a.prices, b.prices):
        assert pa == pytest.approx(pb, rel=1e-5)


def test_adnb_single_pair_exact():
    m = MarketInstance([Buyer("a", 1, 1)], ["g"], {(0, 0): 2})
    eq = recover_exact_adnb(m)
    assert eq.exact
    assert eq.allocation == {(0, 0): 1}
    assert eq.prices == [2]


def test_adnb_fisher_case_exact():
    m = MarketInstance([Buyer("a", 1), Buyer("b", 2)], ["g"], {(0, 0): 1, (1, 0): 1})
    eq = recover_exact_adnb(m)
    assert eq.prices == [3]
    assert eq.allocation == {(0, 0): Fraction(1, 3), (1, 0): Fraction(2, 3)}
    res = kkt_residuals(m, eq.prices, eq.allocation)
    assert res["max"] == 0


def test_adnb_infeasible():
    m = MarketInstance([Buyer("a", 1, 5)], ["g"], {(0, 0): 2})
    res = recover_exact_adnb(m)
    assert isinstance(res, Infeasible)
    assert feasibility_lp(m) <= 0
    graph = build_adnb(m)
    assert isinstance(solve_market(graph, 1e-6), Infeasible)


def test_component_prices_match_system():
    for seed in range(12):
        m = random_adnb(300 + seed)
        eq = recover_exact_adnb(m)
        if isinstance(eq, Infeasible):
            continue
        support = sorted(eq.allocation)
        assert is_forest(support, len(m.goods), len(m.buyers))
        sol = solve_support_system(m, support)
        assert sol is not None
        assert component_prices(m, support) == sol[1] == eq.prices


def test_component_prices_proportional():
    # one buyer, two goods: prices follow the utility ratio
    m = MarketInstance([Buyer("a", 4)], ["g", "h"], {(0, 0): 1, (0, 1): 3})
    p = component_prices(m, [(0, 0), (0, 1)])
    assert p[1] / p[0] == 3 and sum(p) == 4


def test_is_forest():
    assert is_forest([(0, 0), (0, 1), (1, 1)], 2, 2)
    assert not is_forest([(0, 0), (0, 1), (1, 0), (1, 1)], 2, 2)


def test_market_json_round_trip(tmp_path):
    m = random_adnb(4)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(m.to_dict()))
    assert load_market(p).to_dict() == m.to_dict()


@pytest.mark.parametrize("payload", [
    {"buyers": [{"id": "a", "budget": 1.5}], "goods": ["g"], "utilities": [["a", "g", 1]]},
    {"buyers": [{"id": "a", "budget": 1}], "goods": ["g"], "utilities": [["a", "x", 1]]},
    {"buyers": [{"id": "a", "budget": 1}, {"id": "a", "budget": 1}], "goods": ["g"], "utilities": []},
    {"goods": ["g"], "utilities": []},
])
def test_market_json_errors(tmp_path, payload):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(payload))
    with pytest.raises(MarketError):
        load_market(p)


def test_market_json_syntax_error_has_line(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{\n "buyers": [\n')
    with pytest.raises(MarketError, match="line"):
        load_market(p)


def test_discrimination_gain():
    m = MarketInstance.from_dict({"buyers": [{"id": "a", "budget": 1}], "goods": ["g"],
                                  "utilities": [["a", "g", "pwl 3 0 0 1/2 1 1 3/2"]]})
    assert m.discrimination
    graph = build_fisher(m)
    eq = extract_equilibrium(solve_market(graph, 1e-7), graph)
    assert eq.allocation[(0, 0)] == pytest.approx(1, abs=1e-5)
