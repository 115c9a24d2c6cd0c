"""The ten acceptance criteria, each printing one PASS/FAIL line."""

import math
import time
from fractions import Fraction

import pytest

from genflow.market import (Buyer, MarketInstance, build_fisher, extract_equilibrium, feasibility_lp,
                            random_adnb, recover_exact_adnb, solve_market)
from genflow.network import normalize
from genflow.reference import (check_conservative_certificate, kappa_of, lp_reference_linear,
                               pwl_reference)
from genflow.sink import Infeasible


def _line(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def _U(net):
    """Complexity parameter of a normalized float instance, computed here from scratch."""
    U = max([abs(float(x)) for x in net.b] + [0.0])
    for a in net.arcs:
        U = max(U, float(a.upper))
        for x in (0.0, float(a.upper)):
            g = float(a.gain.value(x))
            if math.isfinite(g):
                U = max(U, abs(g))
    return U


def test_c1_exact_linear_equivalence(capsys, linear_runs):
    mism = []
    for k, (net, rep) in enumerate(linear_runs):
        ref = lp_reference_linear(net)
        if ref.kappa != rep.kappa:
            mism.append((k, rep.kappa, ref.kappa))
    runtime = sum(rep.wall_time for _, rep in linear_runs)
    ok = not mism and runtime < 60
    _line(capsys, 1, ok, f"{len(linear_runs)} instances, {len(mism)} mismatches, solver time {runtime:.1f}s")
    assert not mism
    assert runtime < 60


def test_c2_phase_iteration_bound(capsys, linear_runs, concave_on_linear_runs, concave_runs):
    bad = []
    phases = 0
    for name, runs in (("linear", linear_runs), ("concave/linear", concave_on_linear_runs),
                       ("concave", concave_runs)):
        for k, (net, rep) in enumerate(runs):
            bound = 2 * net.n + 3 * net.m
            for p in rep.phases:
                phases += 1
                if p["iterations"] > bound:
                    bad.append((name, k, p["iterations"], bound))
    _line(capsys, 2, not bad, f"{phases} phases checked, {len(bad)} over 2n+3m")
    assert not bad


def test_c3_phase_start_excess(capsys, linear_runs, concave_on_linear_runs, concave_runs):
    bad = []
    checked = 0
    for name, runs, rel in (("linear", linear_runs, 0), ("concave/linear", concave_on_linear_runs, 1e-12),
                            ("concave", concave_runs, 1e-12)):
        for k, (net, rep) in enumerate(runs):
            bound = 2 * net.n + 3 * net.m
            for p in rep.phases:
                checked += 1
                lim = bound * p["delta"]
                if p["ex_start"] > lim * (1 + rel):
                    bad.append((name, k, p["ex_start"], lim))
    _line(capsys, 3, not bad, f"{checked} phase starts, {len(bad)} above (2n+3m)*delta")
    assert not bad


def test_c4_adjust_bounds(capsys, linear_runs, concave_on_linear_runs, concave_runs):
    bad = []
    checked = 0
    for name, runs in (("concave/linear", concave_on_linear_runs), ("concave", concave_runs)):
        for k, (net, rep) in enumerate(runs):
            for p in rep.phases:
                checked += 1
                d = p["delta"]
                tau = 1e-10 * d
                if p["adjust_ex_after"] - p["adjust_ex_before"] > 1.5 * net.m * d + tau:
                    bad.append((name, k, "excess"))
                if p["adjust_max_tail_change"] > d / 2 + tau or p["adjust_max_head_change"] > d / 2 + tau:
                    bad.append((name, k, "per-arc"))
    for k, (net, rep) in enumerate(linear_runs):
        for p in rep.phases:
            checked += 1
            d = p["delta"]
            # linear repair goes from delta to delta/2: 3m(delta - delta/2)
            if p["adjust_ex_after"] - p["adjust_ex_before"] > 3 * net.m * (d - d / 2):
                bad.append(("linear", k, "excess"))
    _line(capsys, 4, not bad, f"{checked} adjust steps, {len(bad)} violations")
    assert not bad


def test_c5_phase_count(capsys, concave_on_linear_runs, concave_runs):
    bad = []
    runs = [(net, rep, 1e-9) for net, rep in concave_on_linear_runs] + \
        [(net, rep, 1e-6) for net, rep in concave_runs]
    for k, (net, rep, eps) in enumerate(runs):
        norm = normalize(net.cast(float)).network
        bound = math.ceil(math.log2((max(norm.M) * _U(norm) + 1) * (2 * norm.n + 3 * norm.m) / eps)) + 1
        if rep.phase_count > bound:
            bad.append((k, rep.phase_count, bound))
    _line(capsys, 5, not bad, f"{len(runs)} runs, {len(bad)} above the phase bound")
    assert not bad


def test_c6_eps_sandwich(capsys, concave_runs):
    t0 = time.perf_counter()
    eps = 1e-6
    bad = []
    worst_gap = 0.0
    for k, (net, rep) in enumerate(concave_runs):
        ref = pwl_reference(net, k=64)
        worst_gap = max(worst_gap, ref.gap)
        if not (ref.kappa - (eps + ref.gap) <= rep.kappa <= ref.kappa + eps):
            bad.append((k, rep.kappa, ref.kappa, ref.gap))
    runtime = time.perf_counter() - t0 + sum(rep.wall_time for _, rep in concave_runs)
    ok = not bad and runtime < 300
    _line(capsys, 6, ok, f"{len(concave_runs)} instances, {len(bad)} outside, worst gap {worst_gap:.3g}, "
          f"{runtime:.1f}s")
    assert not bad
    assert runtime < 300


def test_c7_fisher_closed_forms(capsys):
    m = MarketInstance([Buyer("a", 1), Buyer("b", 2)], ["g"], {(0, 0): 1, (1, 0): 1})
    graph = build_fisher(m)
    eq = extract_equilibrium(solve_market(graph, 1e-7), graph)
    p_err = abs(eq.prices[0] - 3)
    x_err = max(abs(eq.allocation[(0, 0)] - 1 / 3), abs(eq.allocation[(1, 0)] - 2 / 3))
    one = MarketInstance([Buyer("a", 3)], ["g"], {(0, 0): 2})
    ex = recover_exact_adnb(one)
    ok = p_err <= 1e-6 and x_err <= 1e-6 and ex.prices == [Fraction(3)] and ex.allocation == {(0, 0): 1}
    _line(capsys, 7, ok, f"2x1 price error {p_err:.2g}, allocation error {x_err:.2g}; 1x1 exact p = {ex.prices[0]}")
    assert p_err <= 1e-6 and x_err <= 1e-6
    assert ex.prices == [Fraction(3)]
    assert ex.allocation == {(0, 0): Fraction(1)}


def _exact_kkt_zero(market, prices, alloc) -> bool:
    """Equilibrium conditions checked with Fractions, independently of the library."""
    z = [Fraction(0)] * len(market.buyers)
    for (i, j), x in alloc.items():
        if not isinstance(x, Fraction) or x < 0:
            return False
        z[i] += market.utility(i, j) * x
    for j in range(len(market.goods)):
        if sum(x for (i, jj), x in alloc.items() if jj == j) != 1:
            return False
    if not all(isinstance(p, Fraction) and p > 0 for p in prices):
        return False
    for i, b in enumerate(market.buyers):
        if z[i] <= b.disagreement:
            return False
        best = (z[i] - b.disagreement) / b.budget
        for j in range(len(market.goods)):
            ratio = market.utility(i, j) / prices[j]
            if ratio > best:
                return False
            if alloc.get((i, j), 0) > 0 and ratio != best:
                return False
    return True


def test_c8_adnb_exact_recovery(capsys):
    exact = infeasible = 0
    bad = []
    for s in range(30):
        market = random_adnb(7000 + s, infeasible=(s % 5 == 4))
        res = recover_exact_adnb(market)
        lp = feasibility_lp(market)
        if isinstance(res, Infeasible):
            infeasible += 1
            if lp > 0:
                bad.append((s, "infeasible verdict but LP is positive"))
            continue
        exact += 1
        if lp <= 0:
            bad.append((s, "solution returned but LP is nonpositive"))
        if not _exact_kkt_zero(market, res.prices, res.allocation):
            bad.append((s, "nonzero KKT residual"))
        denom = 1
        for x in res.allocation.values():
            denom = math.lcm(denom, x.denominator)
        if denom > market.K ** market.n:
            bad.append((s, f"denominator {denom} above K^n"))
    _line(capsys, 8, not bad, f"{exact} exact, {infeasible} infeasible (LP-confirmed), {len(bad)} failures")
    assert not bad
    assert infeasible >= 1 and exact >= 1


def test_c9_linear_as_concave(capsys, linear_runs, concave_on_linear_runs):
    worst = 0.0
    for (net, lin), (_, con) in zip(linear_runs, concave_on_linear_runs):
        worst = max(worst, abs(float(con.kappa) - float(lin.kappa)))
    _line(capsys, 9, worst <= 1e-8, f"max |kappa_concave - kappa_linear| = {worst:.3g}")
    assert worst <= 1e-8


def _flow_mutation(net, flows, kappa):
    """A single-arc change that makes kappa strictly worse, or None."""
    for k, a in enumerate(net.arcs):
        for step in (Fraction(1), Fraction(1, 2), Fraction(-1), Fraction(-1, 2)):
            x = flows[k] + step
            if not a.lower <= x <= a.upper:
                continue
            g = list(flows)
            g[k] = x
            if kappa_of(net, g) > kappa:
                return g
    return None


def test_c10_certificates(capsys, linear_runs):
    passed = 0
    mutations = 0
    escaped = []
    for k, (net, rep) in enumerate(linear_runs):
        cert = check_conservative_certificate(net, rep.flows, rep.labels, "linear")
        if cert.ok:
            passed += 1
        muts = []
        # a label below 1/M is never conservative
        lo = list(rep.labels)
        lo[0] = Fraction(1, 2 * net.M[0])
        muts.append(("flows", rep.flows, lo))
        # raising a deficit node's label breaks complementary slackness
        for i, e in enumerate(rep.excesses):
            if e < 0:
                hi = list(rep.labels)
                hi[i] = hi[i] * 2
                muts.append(("labels", rep.flows, hi))
                break
        worse = _flow_mutation(net, rep.flows, rep.kappa)
        if worse is not None:
            muts.append(("flow", worse, rep.labels))
        for what, f, mu in muts:
            mutations += 1
            if check_conservative_certificate(net, f, mu, "linear").ok:
                escaped.append((k, what))
    ok = passed == len(linear_runs) and not escaped
    _line(capsys, 10, ok, f"{passed}/{len(linear_runs)} certificates pass, "
          f"{mutations - len(escaped)}/{mutations} mutations rejected")
    assert passed == len(linear_runs)
    assert not escaped


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
