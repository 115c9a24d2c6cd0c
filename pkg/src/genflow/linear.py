"""Exact scaling fat-path solver for linear gains."""

from __future__ import annotations

import math
import time
from collections import deque
from fractions import Fraction
from typing import Callable

from gmpy2 import mpq

from .fatpath import EXACT, FatPathEngine, InvariantError, PhaseRecord
from .gains import LinearGain
from .network import Arc, Network, excess_discrepancy, excesses, normalize
from .report import SolverReport, phase_dict


class LinearSolverError(ValueError):
    pass


def _exact(x) -> Fraction:
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, float) and math.isfinite(x):
        return Fraction(x)
    raise LinearSolverError(f"non-rational value {x!r}")


def to_exact(network: Network) -> Network:
    """Copy of a linear-gain network with every number as a Fraction."""
    for k, a in enumerate(network.arcs):
        if not isinstance(a.gain, LinearGain):
            raise LinearSolverError(f"arc {k}: linear solver needs linear gains")
    return network.cast(_exact)


def integer_scale(network: Network) -> tuple[Network, int]:
    """Scale b and u by their common denominator so both become integers."""
    L = 1
    for x in list(network.b) + [a.upper for a in network.arcs]:
        L = math.lcm(L, Fraction(x).denominator)
    if L == 1:
        return network, 1
    arcs = [Arc(a.tail, a.head, a.lower * L, a.upper * L, a.gain) for a in network.arcs]
    return Network(tuple(x * L for x in network.b), network.M, tuple(arcs)), L


def size_parameter(network: Network) -> int:
    """Largest integer among demands, capacities and gain numerators/denominators."""
    B = 1
    for x in network.b:
        B = max(B, abs(int(x)))
    for a in network.arcs:
        g = a.gain.gamma
        B = max(B, abs(int(a.upper)), int(g.numerator), int(g.denominator))
    return B


def tight_max_flow(engine: FatPathEngine) -> int:
    """Route positive relabeled excess to deficits over tight residual arcs.

    Runs breadth-first augmenting paths in the relabeled network, where every
    tight arc has unit gain.  Returns the number of augmenting paths used.
    """
    net = engine.net
    mu = engine.mu
    f = engine.pf.f
    e = engine.pf.e
    inf = float("inf")
    n = net.n
    src, snk = n, n + 1
    head: list[int] = []
    cap: list = []
    zero = engine.arith.convert(0)
    adj: list[list[int]] = [[] for _ in range(n + 2)]
    tight_arc: dict[int, int] = {}

    def add(u, v, c):
        adj[u].append(len(head))
        head.append(v)
        cap.append(c)
        adj[v].append(len(head))
        head.append(u)
        cap.append(zero)
        return len(head) - 2

    for k, a in enumerate(net.arcs):
        mi, mj = mu[a.tail], mu[a.head]
        if mi == inf or mj == inf:
            continue
        if a.gain.gamma * mi != mj:
            continue
        eid = add(a.tail, a.head, (a.upper - f[k]) / mi)
        cap[eid + 1] = f[k] / mi
        tight_arc[k] = eid
    supplies = {}
    for i in range(n):
        if e[i] > 0 and mu[i] != inf:
            supplies[i] = add(src, i, e[i] / mu[i])
        elif e[i] < 0:
            add(i, snk, -e[i] / mu[i])

    paths = 0
    while True:
        prev = [-1] * (n + 2)
        prev[src] = -2
        dq = deque([src])
        while dq and prev[snk] == -1:
            x = dq.popleft()
            for eid in adj[x]:
                y = head[eid]
                if prev[y] == -1 and cap[eid] > 0:
                    prev[y] = eid
                    dq.append(y)
        if prev[snk] == -1:
            break
        amt = None
        y = snk
        while y != src:
            eid = prev[y]
            amt = cap[eid] if amt is None else min(amt, cap[eid])
            y = head[eid ^ 1]
        y = snk
        while y != src:
            eid = prev[y]
            cap[eid] -= amt
            cap[eid ^ 1] += amt
            y = head[eid ^ 1]
        paths += 1

    for k, eid in tight_arc.items():
        a = net.arcs[k]
        mi = mu[a.tail]
        new_f = f[k] + ((a.upper - f[k]) / mi - cap[eid]) * mi
        if new_f != f[k]:
            engine.pf.set_flow(k, new_f)
    for i in supplies:
        if engine.pf.e[i] > 0:
            raise InvariantError(f"node {i} keeps positive excess after the final max-flow")
    return paths


def solve_symmetric_linear(network: Network, *, check: bool = False,
                           on_phase: Callable | None = None) -> SolverReport:
    """Exact optimum of the symmetric problem with linear gains.

    Returns flows on the original instance, labels that certify optimality
    (``inf`` for nodes that cannot reach a deficit) and per-phase counters.
    """
    t0 = time.perf_counter()
    exact = to_exact(network)
    normed = normalize(exact)
    scaled, L = integer_scale(normed.network)
    work = scaled.cast(mpq)
    n, m = work.n, work.m
    B = size_parameter(work)
    Mmax = max(work.M) if n else 1
    mu = [mpq(1, Mi) for Mi in work.M]
    eng = FatPathEngine(work, [mpq(0)] * m, mu, EXACT)
    delta = mpq(Mmax * B * B + 1)
    floor = mpq(1, B ** m)
    bound = 2 * n + 3 * m
    phases: list[PhaseRecord] = []

    while (2 * n + 6 * m) * delta >= floor:
        rec = PhaseRecord(delta=delta)
        rec.ex_start = eng.ex_delta(delta)
        rec.psi_start = eng.psi(delta)
        eng.run_phase(delta, rec, max_iterations=10 * bound + 10)
        if check:
            _check(eng, delta)
        eng.adjust_linear(delta, delta / 2, rec)
        if check:
            _check(eng, delta / 2)
        rec.kappa_end = eng.kappa()
        phases.append(rec)
        if on_phase is not None:
            on_phase(rec)
        delta = delta / 2

    eng.adjust_linear(delta, mpq(0))
    eng.tighten_label_zero()
    paths = tight_max_flow(eng)

    flows_norm = [to_fraction(x) / L for x in eng.pf.f]
    flows = normed.denormalize(flows_norm)
    e = excesses(exact, flows)
    kappa = excess_discrepancy(exact, e)
    report = SolverReport(
        solver="linear",
        status="optimal",
        flows=flows,
        labels=[to_fraction(x) for x in eng.mu],
        excesses=e,
        kappa=kappa,
        phases=[_plain(phase_dict(r)) for r in phases],
        params={"B": B, "M": Mmax, "delta0": Fraction(Mmax * B * B + 1),
                "scale": L, "iteration_bound": bound, "final_maxflow_paths": paths},
        tolerances={"arithmetic": "exact"},
    )
    report.wall_time = time.perf_counter() - t0
    return report


def to_fraction(x):
    """gmpy2 rational (or any rational) to Fraction; infinities pass through."""
    if isinstance(x, float):
        return x
    return Fraction(int(x.numerator), int(x.denominator))


def _plain(d: dict) -> dict:
    return {k: (to_fraction(v) if type(v).__name__ == "mpq" else v) for k, v in d.items()}


def _check(eng: FatPathEngine, delta) -> None:
    bad = eng.conservativity_violations(delta)
    if bad:
        raise InvariantError(f"delta={delta}: {bad[0]}")
