"""Approximate scaling fat-path solver for concave gains."""

from __future__ import annotations

import math
import time
from typing import Callable

import mpmath

from .fatpath import FLOAT, Arith, FatPathEngine, InvariantError, PhaseRecord
from .network import Network, excess_discrepancy, excesses, normalize
from .report import SolverReport, phase_dict


def complexity_U(network: Network):
    """max of |b_i|, capacities, finite |gain(0)| and |gain(u)| on a normalized instance."""
    U = 0
    for x in network.b:
        U = max(U, abs(x))
    for a in network.arcs:
        U = max(U, abs(a.upper), abs(a.lower))
        for x in (a.lower, a.upper):
            g = a.gain.value(x)
            if g != -math.inf:
                U = max(U, abs(g))
    return U


def phase_bound(network: Network, eps) -> int:
    """Upper bound on the number of scaling phases for accuracy ``eps``."""
    norm = normalize(network.cast(float)).network
    U = float(complexity_U(norm))
    M = max(norm.M)
    n, m = norm.n, norm.m
    return math.ceil(math.log2((M * U + 1) * (2 * n + 3 * m) / eps)) + 1


def solve_symmetric_concave(network: Network, eps, *, arith: Arith = FLOAT,
                            check: bool = False, on_phase: Callable | None = None,
                            trace: list | None = None) -> SolverReport:
    """eps-approximate optimum of the symmetric problem with concave gains.

    ``arith`` selects float (default) or mpmath arithmetic; for the latter
    call inside ``mpmath.workdps``.  ``trace``, when given, receives one row
    ``(delta, ex_start, iterations, kappa_end)`` per phase.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    t0 = time.perf_counter()
    conv = arith.convert
    original = network.cast(conv)
    normed = normalize(original)
    work = normed.network
    n, m = work.n, work.m
    U = complexity_U(work)
    Mmax = max(work.M) if n else 1
    eps = conv(eps)
    one = conv(1)
    mu = [one / Mi for Mi in work.M]
    flow = [a.upper for a in work.arcs]
    eng = FatPathEngine(work, flow, mu, arith)
    delta = Mmax * U + 1
    bound = 2 * n + 3 * m
    phases: list[PhaseRecord] = []

    while bound * delta >= eps:
        rec = PhaseRecord(delta=delta)
        rec.ex_start = eng.ex_delta(delta)
        rec.psi_start = eng.psi(delta)
        eng.run_phase(delta, rec, max_iterations=10 * bound + 10)
        if check:
            _check(eng, delta)
        eng.adjust_concave(delta, rec)
        if check:
            _check(eng, delta / 2)
        rec.kappa_end = eng.kappa()
        phases.append(rec)
        if on_phase is not None:
            on_phase(rec)
        if trace is not None:
            trace.append((delta, rec.ex_start, rec.iterations, rec.kappa_end))
        delta = delta / 2

    flows = normed.denormalize(eng.pf.f)
    e = excesses(original, flows)
    kappa = excess_discrepancy(original, e)
    report = SolverReport(
        solver="concave",
        status="approximate",
        flows=flows,
        labels=list(eng.mu),
        excesses=e,
        kappa=kappa,
        phases=[phase_dict(r) for r in phases],
        params={"eps": eps, "U": U, "M": Mmax, "delta0": Mmax * U + 1,
                "final_delta": delta, "iteration_bound": bound},
        tolerances={"arithmetic": arith.kind, "tau_theta": arith.tau_theta,
                    "band_factor": arith.band_factor},
    )
    report.wall_time = time.perf_counter() - t0
    return report


def _check(eng: FatPathEngine, delta) -> None:
    bad = eng.conservativity_violations(delta)
    if bad:
        raise InvariantError(f"delta={delta}: {bad[0]}")


def mp_solve(network: Network, eps, dps: int, **kw) -> SolverReport:
    """Run the concave solver in mpmath arithmetic at ``dps`` digits."""
    from .fatpath import mp_arith

    with mpmath.workdps(dps):
        return solve_symmetric_concave(network, eps, arith=mp_arith(dps), **kw)
