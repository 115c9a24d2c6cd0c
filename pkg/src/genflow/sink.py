"""Sink formulation: maximize the excess at one node, keep the rest nonnegative.

Solved by reduction to the symmetric problem.  Concave mode raises ``b_t``
above any reachable inflow and puts a large penalty on every other node;
linear mode uses the exact penalty ``B^n + 1`` and the exact solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .concave import complexity_U, solve_symmetric_concave
from .fatpath import FLOAT, Arith
from .linear import integer_scale, size_parameter, solve_symmetric_linear, to_exact
from .network import Network, excesses, normalize
from .report import SolverReport, _encode


class UStarError(ValueError):
    """No valid default for U* (immense arcs enter the sink)."""


@dataclass(frozen=True)
class SinkInstance:
    network: Network
    sink: int
    ustar: object = None

    def __post_init__(self):
        if not 0 <= self.sink < self.network.n:
            raise ValueError(f"sink {self.sink} out of range")


@dataclass
class Infeasible:
    """Verdict that no solution keeps every non-sink excess nonnegative."""

    reason: str
    kappa: object = None
    threshold: object = None
    report: SolverReport | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"schema": 1, "status": "infeasible", "reason": self.reason,
             "kappa": self.kappa, "threshold": self.threshold, "extra": self.extra}
        d = _encode(d)
        d["schema"] = 1
        return d


def default_ustar(instance: SinkInstance, override=None):
    """d_t * U when every arc into the sink has a finite gain at its lower bound.

    ``override`` (for markets, where log arcs enter the sink) is returned
    after raising it to at least U.
    """
    net = instance.network
    U = complexity_U(normalize(net).network)
    if override is not None:
        return max(override, U)
    t = instance.sink
    for k in net.in_arcs[t]:
        a = net.arcs[k]
        if a.gain.value(a.lower) == -math.inf:
            raise UStarError(f"arc {k} into the sink is immense; supply U* explicitly")
    return net.degree[t] * U


def _with_sink_data(net: Network, t: int, bt, M: list) -> Network:
    b = list(net.b)
    b[t] = bt
    return net.with_data(b=b, M=M)


def solve_sink(instance: SinkInstance, eps=None, *, mode: str = "concave",
               arith: Arith = FLOAT, **kw) -> SolverReport | Infeasible:
    """eps-approximate (concave mode) or exact (linear mode) sink solution."""
    if mode == "linear":
        return _solve_sink_linear(instance)
    if mode != "concave":
        raise ValueError(f"unknown mode {mode!r}")
    if eps is None or not eps > 0:
        raise ValueError("eps must be positive")
    net = instance.network
    t = instance.sink
    ustar = instance.ustar if instance.ustar is not None else default_ustar(instance)
    penalty = math.ceil(2 * ustar / eps) + 1
    M = [penalty] * net.n
    M[t] = 1
    # b_t sits U*+1 above the instance's own b_t so e_t < 0 for every pseudoflow
    bt = net.b[t] + ustar + 1
    sym = _with_sink_data(net, t, bt, M)
    rep = solve_symmetric_concave(sym, eps, arith=arith, **kw)
    threshold = 2 * ustar + eps
    e = excesses(net, rep.flows)
    info = _interpret(net, t, e, rep, bt, penalty, ustar)
    info["mode"] = "concave"
    if rep.kappa > threshold:
        return Infeasible(f"symmetric kappa {float(rep.kappa):.6g} exceeds 2U*+eps",
                          rep.kappa, threshold, rep, info)
    rep.solver = "sink-concave"
    rep.extra.update(info)
    return rep


def _interpret(net, t, e, rep, bt, penalty, ustar) -> dict:
    infeas = sum(max(0, -x) for i, x in enumerate(e) if i != t)
    lift = bt - net.b[t]
    return {
        "sink": t,
        "ustar": ustar,
        "penalty": penalty,
        "b_t": bt,
        "e_t": e[t],
        # kappa_t = lift - e_t exactly; the whole kappa also counts the
        # (penalized) non-sink deficits, so this is a lower estimate of e_t
        "kappa_t": lift - e[t],
        "e_t_from_kappa": lift - rep.kappa,
        "symmetric_kappa": rep.kappa,
        "infeasibility": infeas,
    }


def _solve_sink_linear(instance: SinkInstance) -> SolverReport | Infeasible:
    net = to_exact(instance.network)
    t = instance.sink
    scaled, _ = integer_scale(normalize(net).network)
    B = max(2, size_parameter(scaled))
    penalty = B ** net.n + 1
    M = [penalty] * net.n
    M[t] = 1
    reach = sum(a.gain.gamma * a.upper for a in net.arcs if a.head == t) \
        - sum(a.lower for a in net.arcs if a.tail == t)
    bt = net.b[t] + math.ceil(Fraction(reach) + 1)
    rep = solve_symmetric_linear(_with_sink_data(net, t, bt, M))
    e = excesses(net, rep.flows)
    info = _interpret(net, t, e, rep, bt, penalty, None)
    info["mode"] = "linear"
    bad = [i for i, x in enumerate(e) if i != t and x < 0]
    if bad:
        return Infeasible(f"node {bad[0]} keeps a deficit at the optimum", rep.kappa, None, rep, info)
    rep.solver = "sink-linear"
    rep.extra.update(info)
    return rep
