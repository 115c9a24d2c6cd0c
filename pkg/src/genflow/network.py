"""Problem instances, pseudoflows and the normalization transform."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .gains import GainFunction, LinearGain


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    lower: object
    upper: object
    gain: GainFunction


@dataclass(frozen=True)
class Network:
    """Directed multigraph with gains, capacities, demands and penalties.

    Nodes are ``0 .. n-1``.  The instance is immutable; degrees are cached.
    """

    b: tuple
    M: tuple
    arcs: tuple
    degree: tuple = field(init=False, repr=False, compare=False)
    out_arcs: tuple = field(init=False, repr=False, compare=False)
    in_arcs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.b)
        if len(self.M) != n:
            raise NetworkError("b and M must have the same length")
        for i, Mi in enumerate(self.M):
            if Mi != int(Mi) or Mi < 1:
                raise NetworkError(f"node {i}: penalty M must be an integer >= 1")
        deg = [0] * n
        outs = [[] for _ in range(n)]
        ins = [[] for _ in range(n)]
        for k, a in enumerate(self.arcs):
            if not (0 <= a.tail < n and 0 <= a.head < n):
                raise NetworkError(f"arc {k}: endpoint out of range")
            if a.tail == a.head:
                raise NetworkError(f"arc {k}: self-loops are not allowed")
            if a.upper < a.lower:
                raise NetworkError(f"arc {k}: upper capacity below lower capacity")
            deg[a.tail] += 1
            deg[a.head] += 1
            outs[a.tail].append(k)
            ins[a.head].append(k)
        object.__setattr__(self, "b", tuple(self.b))
        object.__setattr__(self, "M", tuple(int(x) for x in self.M))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "degree", tuple(deg))
        object.__setattr__(self, "out_arcs", tuple(tuple(x) for x in outs))
        object.__setattr__(self, "in_arcs", tuple(tuple(x) for x in ins))

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def m(self) -> int:
        return len(self.arcs)

    @classmethod
    def build(cls, b: Sequence, M: Sequence, arcs: Sequence) -> "Network":
        """Convenience constructor taking ``(tail, head, lower, upper, gain)`` tuples."""
        return cls(tuple(b), tuple(M), tuple(a if isinstance(a, Arc) else Arc(*a) for a in arcs))

    def is_linear(self) -> bool:
        return all(isinstance(a.gain, LinearGain) for a in self.arcs)

    def is_exact(self) -> bool:
        """True when every number (and gain factor) is an int or Fraction."""
        def ok(x):
            return isinstance(x, (int, Fraction))
        return (all(ok(x) for x in self.b)
                and all(ok(a.lower) and ok(a.upper) for a in self.arcs)
                and all(isinstance(a.gain, LinearGain) and ok(a.gain.gamma) for a in self.arcs))

    def is_normalized(self) -> bool:
        return all(a.lower == 0 for a in self.arcs)

    def with_data(self, b=None, M=None, arcs=None) -> "Network":
        return Network(tuple(self.b if b is None else b), tuple(self.M if M is None else M),
                       tuple(self.arcs if arcs is None else arcs))

    def cast(self, convert) -> "Network":
        """Convert every number (including gain parameters) with ``convert``."""
        arcs = [Arc(a.tail, a.head, convert(a.lower), convert(a.upper), a.gain.cast(convert))
                for a in self.arcs]
        return Network(tuple(convert(x) for x in self.b), self.M, tuple(arcs))


# excess / objective ------------------------------------------------------

def arc_output(arc: Arc, f):
    """Gain(f) on an arc (may be -inf on immense arcs at f = 0)."""
    return arc.gain.value(f)


def excesses(network: Network, flow: Sequence) -> list:
    """e_i = sum of incoming gains - outgoing flow - b_i, for every node."""
    e = [-bi for bi in network.b]
    for a, f in zip(network.arcs, flow):
        e[a.tail] -= f
        e[a.head] += arc_output(a, f)
    return e


def excess(network: Network, flow: Sequence, node: int):
    e = -network.b[node]
    for k in network.out_arcs[node]:
        e -= flow[k]
    for k in network.in_arcs[node]:
        e += arc_output(network.arcs[k], flow[k])
    return e


def excess_discrepancy(network: Network, e: Sequence):
    """kappa = sum M_i max(-e_i, 0) for a vector of excesses."""
    total = 0
    for Mi, ei in zip(network.M, e):
        if ei < 0:
            total += Mi * -ei
    return total


def modified_excess(e: Sequence, mu: Sequence, degree: Sequence, delta, nodes=None):
    """sum over nodes of max(e_i / mu_i - d_i * delta, 0)."""
    total = 0
    idx = range(len(e)) if nodes is None else nodes
    for i in idx:
        v = e[i] / mu[i] - degree[i] * delta
        if v > 0:
            total += v
    return total


def classify(e_mu, d, delta) -> int:
    """-1 negative, 0 neutral, +1 positive w.r.t. the reserve d * delta."""
    r = d * delta
    return -1 if e_mu < r else (0 if e_mu == r else 1)


# residual arcs -------------------------------------------------------------

@dataclass(frozen=True)
class ResidualArc:
    """Forward (``forward=True``) or backward copy of original arc ``index``."""

    index: int
    forward: bool
    tail: int
    head: int


def residual_arcs(network: Network, flow: Sequence) -> list[ResidualArc]:
    out = []
    for k, (a, f) in enumerate(zip(network.arcs, flow)):
        if f < a.upper:
            out.append(ResidualArc(k, True, a.tail, a.head))
        if f > a.lower:
            out.append(ResidualArc(k, False, a.head, a.tail))
    return out


def fatness(network: Network, flow: Sequence, r: ResidualArc, mu: Sequence | None = None):
    """Largest possible increase at the head of ``r``; relabeled when ``mu`` is given."""
    a = network.arcs[r.index]
    f = flow[r.index]
    if r.forward:
        s = a.gain.value(a.upper) - a.gain.value(f)
    else:
        s = f - a.lower
    return s if mu is None else s / mu[r.head]


def residual_gain(network: Network, r: ResidualArc, mu: Sequence):
    """Relabeled gain of a residual arc (linear gains only)."""
    g = network.arcs[r.index].gain
    gamma = g.gamma if r.forward else 1 / g.gamma
    return gamma * mu[r.tail] / mu[r.head]


# pseudoflow ------------------------------------------------------------------

class Pseudoflow:
    """Arc flows with incrementally maintained node excesses."""

    def __init__(self, network: Network, flow: Sequence):
        self.network = network
        self.f = list(flow)
        for k, (a, x) in enumerate(zip(network.arcs, self.f)):
            if x < a.lower or x > a.upper:
                raise NetworkError(f"arc {k}: flow {x} outside [{a.lower}, {a.upper}]")
        self.e = excesses(network, self.f)

    def copy(self) -> "Pseudoflow":
        other = Pseudoflow.__new__(Pseudoflow)
        other.network = self.network
        other.f = list(self.f)
        other.e = list(self.e)
        return other

    def set_flow(self, k: int, value) -> None:
        """Set f_k and update the two affected excesses."""
        a = self.network.arcs[k]
        old = self.f[k]
        self.e[a.tail] += old - value
        self.e[a.head] += a.gain.value(value) - a.gain.value(old)
        self.f[k] = value

    def push(self, k: int, delta_tail, delta_head) -> None:
        """Record a flow change whose endpoint effects are known exactly."""
        a = self.network.arcs[k]
        self.f[k] += delta_tail
        self.e[a.tail] -= delta_tail
        self.e[a.head] += delta_head

    def recompute(self) -> list:
        self.e = excesses(self.network, self.f)
        return self.e

    def kappa(self):
        return excess_discrepancy(self.network, self.e)


# normalization ---------------------------------------------------------------

@dataclass(frozen=True)
class Normalized:
    """A normalized instance and the shift that maps its flows back."""

    network: Network
    original: Network
    lowers: tuple

    def denormalize(self, flow: Sequence) -> list:
        return [x + lo for x, lo in zip(flow, self.lowers)]

    def normalize_flow(self, flow: Sequence) -> list:
        return [x - lo for x, lo in zip(flow, self.lowers)]


def normalize(network: Network) -> Normalized:
    """Shift lower capacities to 0, recenter gains and truncate flat tails.

    Excesses are invariant: e computed on the normalized instance at ``f - l``
    equals e on the original instance at ``f``.
    """
    b = list(network.b)
    arcs = []
    for k, a in enumerate(network.arcs):
        if a.upper < a.lower:
            raise NetworkError(f"arc {k}: upper capacity below lower capacity")
        g = a.gain
        lo = a.lower
        base = g.value(lo)
        if base == -math.inf:
            # immense arc: keep -inf at the new lower end, no demand shift
            g2 = g.shifted(lo, 0) if lo != 0 else g
        else:
            offset = base
            g2 = g.shifted(lo, offset) if (lo != 0 or offset != 0) else g
            b[a.head] -= offset
        b[a.tail] += lo
        up = a.upper - lo
        up = g2.flat_start(up)
        arcs.append(Arc(a.tail, a.head, lo - lo, up, g2))
    norm = Network(tuple(b), network.M, tuple(arcs))
    return Normalized(norm, network, tuple(a.lower for a in network.arcs))
