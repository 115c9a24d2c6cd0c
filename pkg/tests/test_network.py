import math
from fractions import Fraction

import pytest

from genflow.gains import LinearGain, LogGain, PiecewiseLinearGain
from genflow.network import (Arc, Network, NetworkError, Pseudoflow, ResidualArc, excess_discrepancy,
                             excesses, fatness, modified_excess, normalize, residual_arcs)


def two(arcs, b=(0, 0), M=(1, 1)):
    return Network.build(list(b), list(M), arcs)


def test_normalize_shifts_lower_bound():
    net = two([Arc(0, 1, 1, 3, LinearGain(2))])
    norm = normalize(net).network
    assert norm.b == (1, -2)
    assert norm.arcs[0].lower == 0 and norm.arcs[0].upper == 2
    assert norm.arcs[0].gain.value(1) == 2


def test_normalize_truncates_flat_tail():
    net = two([Arc(0, 1, 0, 3, PiecewiseLinearGain([(0, 0), (2, 2), (3, 2)]))])
    assert normalize(net).network.arcs[0].upper == 2


def test_normalize_identity():
    net = two([Arc(0, 1, 0, 4, LinearGain(3))], b=(-1, 2))
    norm = normalize(net).network
    assert norm.b == net.b and norm.arcs == net.arcs


def test_normalize_keeps_excess():
    net = two([Arc(0, 1, Fraction(1, 2), 3, LinearGain(Fraction(5, 3)))], b=(-1, 0))
    nz = normalize(net)
    f = [Fraction(2)]
    assert excesses(nz.network, nz.normalize_flow(f)) == excesses(net, f)


def test_excess_examples():
    assert excesses(two([Arc(0, 1, 0, 4, LinearGain(2))]), [0]) == [0, 0]
    assert excesses(two([Arc(0, 1, 0, 4, LinearGain(2))]), [3]) == [-3, 6]
    assert excesses(two([Arc(0, 1, 0, 4, LogGain(1.0))]), [0.0])[1] == -math.inf


def test_fatness():
    net = two([Arc(0, 1, 0, 3, LinearGain(2))])
    assert fatness(net, [1], ResidualArc(0, True, 0, 1), [1, 1]) == 4
    # backward copy: f - l = 1, relabeled by the label of its head (node 0)
    assert fatness(net, [1], ResidualArc(0, False, 1, 0), [2, 1]) == Fraction(1, 2)
    assert [r.forward for r in residual_arcs(net, [3])] == [False]


def test_kappa_examples():
    net = Network.build([0, 0], [5, 1], [])
    assert excess_discrepancy(net, [1, 2]) == 0
    assert excess_discrepancy(net, [-2, 3]) == 10
    assert excess_discrepancy(Network.build([0, 0], [1, 1], []), [-1, -1]) == 2


def test_modified_excess():
    assert modified_excess([2, 4], [1, 2], [2, 2], 1) == 0
    assert modified_excess([Fraction(2)], [1], [1], Fraction(1, 2)) == Fraction(3, 2)


def test_pseudoflow_matches_recompute():
    net = two([Arc(0, 1, 0, 5, LinearGain(Fraction(3, 2))), Arc(1, 0, 0, 2, LinearGain(2))], b=(-1, 1))
    pf = Pseudoflow(net, [Fraction(1), Fraction(0)])
    pf.set_flow(1, Fraction(2))
    pf.set_flow(0, Fraction(4))
    assert pf.e == excesses(net, pf.f)
    with pytest.raises(NetworkError):
        Pseudoflow(net, [Fraction(6), Fraction(0)])


def test_network_validation():
    with pytest.raises(NetworkError):
        Network.build([0], [1], [Arc(0, 1, 0, 1, LinearGain(1))])
    with pytest.raises(NetworkError):
        normalize(two([Arc(0, 1, 2, 1, LinearGain(1))]))
