from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from genflow.concave import solve_symmetric_concave
from genflow.gains import LinearGain, LogGain, PiecewiseLinearGain, PowerGain
from genflow.generate import random_linear
from genflow.linear import solve_symmetric_linear
from genflow.network import (Arc, Network, Pseudoflow, excess_discrepancy, excesses, modified_excess,
                             normalize)
from genflow.reference import check_conservative_certificate, lp_reference_linear

small = st.integers(min_value=-4, max_value=4)
pos = st.integers(min_value=1, max_value=6)
frac = st.fractions(min_value=0, max_value=1, max_denominator=8)


@st.composite
def linear_network(draw):
    n = draw(st.integers(min_value=2, max_value=5))
    m = draw(st.integers(min_value=0, max_value=7))
    arcs = []
    for _ in range(m):
        t = draw(st.integers(min_value=0, max_value=n - 1))
        h = draw(st.integers(min_value=0, max_value=n - 2))
        h = h + 1 if h >= t else h
        lo = draw(st.integers(min_value=0, max_value=2))
        up = lo + draw(st.integers(min_value=0, max_value=4))
        g = Fraction(draw(pos), draw(pos))
        arcs.append(Arc(t, h, lo, up, LinearGain(g)))
    b = [draw(small) for _ in range(n)]
    M = [draw(pos) for _ in range(n)]
    return Network.build(b, M, arcs)


@st.composite
def network_and_flow(draw):
    net = draw(linear_network())
    f = [a.lower + draw(frac) * (a.upper - a.lower) for a in net.arcs]
    return net, f


@given(network_and_flow())
def test_normalization_keeps_excesses(nf):
    net, f = nf
    nz = normalize(net)
    assert excesses(nz.network, nz.normalize_flow(f)) == excesses(net, f)
    assert nz.denormalize(nz.normalize_flow(f)) == f


@given(network_and_flow(), st.data())
def test_set_flow_round_trip(nf, data):
    net, f = nf
    if not net.arcs:
        return
    pf = Pseudoflow(net, f)
    k = data.draw(st.integers(min_value=0, max_value=net.m - 1))
    a = net.arcs[k]
    x = a.lower + data.draw(frac) * (a.upper - a.lower)
    before = list(pf.e)
    pf.set_flow(k, x)
    assert pf.e == excesses(net, pf.f)
    pf.set_flow(k, f[k])
    assert pf.e == before


@given(network_and_flow())
def test_kappa_zero_iff_nonnegative(nf):
    net, f = nf
    e = excesses(net, f)
    k = excess_discrepancy(net, e)
    assert k >= 0
    assert (k == 0) == all(x >= 0 for x in e)


@given(st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=6), min_size=1, max_size=6),
       st.fractions(min_value=Fraction(1, 8), max_value=4, max_denominator=8),
       st.fractions(min_value=Fraction(1, 8), max_value=4, max_denominator=8))
def test_modified_excess_monotone_in_delta(e, d1, d2):
    mu = [1] * len(e)
    deg = [1] * len(e)
    lo, hi = min(d1, d2), max(d1, d2)
    assert modified_excess(e, mu, deg, hi) <= modified_excess(e, mu, deg, lo)


gains = st.one_of(
    st.floats(min_value=0.1, max_value=5).map(LogGain),
    st.tuples(st.floats(min_value=0.1, max_value=5), st.floats(min_value=0.1, max_value=0.9)).map(
        lambda cp: PowerGain(*cp)),
    st.floats(min_value=0.1, max_value=5).map(LinearGain),
)


@given(gains, st.floats(min_value=0.05, max_value=20))
def test_gain_inverse_round_trip(g, x):
    assert abs(g.inverse(g.value(x)) - x) <= 1e-9 * max(1.0, x)


@given(gains, st.floats(min_value=0.05, max_value=10), st.floats(min_value=0.01, max_value=5))
def test_increment_inverse_matches_value(g, f, d):
    step = g.increment_inverse(f, d)
    assert step > 0
    assert abs(g.value(f + step) - g.value(f) - d) <= 1e-8 * max(1.0, abs(d), abs(g.value(f)))


@given(gains, st.floats(min_value=0.05, max_value=10), st.floats(min_value=0.05, max_value=10))
def test_concavity_of_secants(g, x, y):
    x, y = min(x, y), max(x, y)
    if y - x < 1e-6:
        return
    mid = g.value((x + y) / 2)
    assert mid >= (g.value(x) + g.value(y)) / 2 - 1e-9 * max(1.0, abs(mid))


@given(st.lists(st.tuples(st.fractions(min_value=Fraction(1, 4), max_value=3, max_denominator=4),
                          st.fractions(min_value=0, max_value=2, max_denominator=4)), min_size=1, max_size=4))
def test_pwl_from_slopes_is_concave(pieces):
    # build breakpoints from decreasing slopes
    pieces = sorted(pieces, key=lambda p: -p[1])
    pts = [(Fraction(0), Fraction(0))]
    for w, s in pieces:
        x, y = pts[-1]
        pts.append((x + w, y + s * w))
    g = PiecewiseLinearGain(pts)
    for (x0, _), (x1, _) in zip(pts, pts[1:]):
        assert g.left_derivative(x1) >= g.right_derivative(x1)
        assert g.value((x0 + x1) / 2) == (g.value(x0) + g.value(x1)) / 2


@settings(max_examples=25)
@given(linear_network())
def test_linear_solver_matches_lp(net):
    rep = solve_symmetric_linear(net)
    assert rep.kappa == lp_reference_linear(net).kappa
    assert check_conservative_certificate(net, rep.flows, rep.labels).ok
    assert all(mu >= Fraction(1, Mi) for mu, Mi in zip(rep.labels, net.M))


@settings(max_examples=10)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_concave_solver_on_linear_gains(seed):
    net = random_linear(seed, max_n=5, max_m=8)
    exact = solve_symmetric_linear(net).kappa
    approx = solve_symmetric_concave(net, 1e-8).kappa
    assert abs(float(exact) - approx) <= 1e-7


@settings(max_examples=10)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_phase_excess_invariants(seed):
    net = random_linear(seed, max_n=5, max_m=8)
    rep = solve_symmetric_linear(net)
    bound = 2 * net.n + 3 * net.m
    for p in rep.phases:
        assert p["ex_start"] <= bound * p["delta"]
        assert p["iterations"] <= bound
