"""Independent reference oracles used to verify the solvers.

* ``lp_reference_linear``: exact optimum of the symmetric LP by the rational
  simplex in ``simplex.py``.
* ``pwl_discretize`` / ``pwl_reference``: concave gains replaced by secant
  pieces on parallel linear arcs, solved as an LP.
* ``check_conservative_certificate``: optimality conditions for a flow and
  labeling pair.
* ``optimal_labels_linear``: labels derived from a flow by a multiplicative
  Bellman-Ford; fails exactly when a generalized augmenting path exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .gains import LinearGain, PiecewiseLinearGain
from .network import Arc, Network, excess_discrepancy, excesses, normalize
from .simplex import solve_lp

INF = float("inf")


class SizeCapError(ValueError):
    pass


@dataclass
class LPReference:
    kappa: object
    flows: list
    status: str = "optimal"


def lp_reference_linear(network: Network, max_size: tuple[int, int] | None = (10, 25)) -> LPReference:
    """Exact optimum of min sum M_i k_i s.t. e_i + k_i >= 0, l <= f <= u, k >= 0."""
    n, m = network.n, network.m
    if max_size is not None and (n > max_size[0] or m > max_size[1]):
        raise SizeCapError(f"instance {n}x{m} exceeds reference cap {max_size}")
    for k, a in enumerate(network.arcs):
        if not isinstance(a.gain, LinearGain):
            raise ValueError(f"arc {k}: exact LP reference needs linear gains")
    F = Fraction
    # columns: g_0..g_{m-1} (flow above l), kappa_0..kappa_{n-1}, s_0..s_{n-1}
    ncol = m + 2 * n
    A = [[F(0)] * ncol for _ in range(n)]
    rhs = [F(bi) for bi in network.b]
    for k, a in enumerate(network.arcs):
        g = F(a.gain.gamma)
        A[a.head][k] += g
        A[a.tail][k] -= 1
        rhs[a.head] -= g * F(a.lower)
        rhs[a.tail] += F(a.lower)
    for i in range(n):
        A[i][m + i] = F(1)
        A[i][m + n + i] = F(-1)
    c = [F(0)] * m + [F(Mi) for Mi in network.M] + [F(0)] * n
    lo = [F(0)] * ncol
    hi = [F(a.upper) - F(a.lower) for a in network.arcs] + [None] * (2 * n)
    basis = [m + i if rhs[i] >= 0 else m + n + i for i in range(n)]
    res = solve_lp(c, A, rhs, lo, hi, basis=basis)
    if res.status != "optimal":
        raise RuntimeError(f"reference LP ended {res.status}")
    flows = [F(a.lower) + res.x[k] for k, a in enumerate(network.arcs)]
    return LPReference(res.objective, flows)


# piecewise-linear discretization ---------------------------------------------

@dataclass
class Discretization:
    network: Network
    arc_map: list            # for each new arc, index of the original arc
    gap: float               # additive bound on kappa_pwl - kappa_opt
    fixed_flow: list         # flow forced on each original (normalized) arc
    normalized: object = None
    segment_errors: list = field(default_factory=list)


def _secant_error(gain, x0, x1) -> float:
    """max over [x0, x1] of gain(x) minus the chord through the endpoints."""
    y0, y1 = float(gain.value(x0)), float(gain.value(x1))
    slope = (y1 - y0) / (x1 - x0)

    def neg_gap(x):
        return -(float(gain.value(x)) - (y0 + slope * (x - x0)))

    res = minimize_scalar(neg_gap, bounds=(x0, x1), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, x1 - x0)})
    mid = neg_gap(0.5 * (x0 + x1))
    return max(0.0, -res.fun, -mid)


def _breakpoints(gain, x0: float, u: float, k: int) -> list[float]:
    """k + 1 points on [x0, u] with density near sqrt(|gain''|).

    That density roughly equalizes the secant error of the pieces; for log
    gains it gives geometric spacing.  A piecewise-linear gain with at most
    k pieces keeps its own breakpoints, which makes its error zero.
    """
    if isinstance(gain, PiecewiseLinearGain):
        own = [float(x) for x, _ in gain.points if x0 < float(x) < u]
        if len(own) + 1 <= k:
            return [x0] + own + [u]
    start = x0 if x0 > 0 else u * 1e-12
    grid = np.union1d(np.geomspace(start, u, 2049), np.linspace(start, u, 2049))
    if x0 < start:
        grid = np.concatenate([[x0], grid])
    ys = np.array([float(gain.value(float(x))) for x in grid])
    dx = np.diff(grid)
    slopes = np.diff(ys) / dx
    # curvature mass between consecutive slope estimates
    mass = np.sqrt(np.abs(np.diff(slopes)) * 0.5 * (dx[:-1] + dx[1:]))
    cum = np.concatenate([[0.0], np.cumsum(mass)])
    if cum[-1] <= 0:
        return list(np.linspace(x0, u, k + 1))
    # map the cumulative mass to the interior grid points (midpoints of slope pairs)
    pts = grid[1:-1]
    cum = cum[1:]
    targets = np.linspace(0.0, cum[-1], k + 1)[1:-1]
    inner = np.interp(targets, cum, pts)
    xs = sorted({x0, u, *(float(x) for x in inner)})
    return [x for x in xs if x0 <= x <= u]


def pwl_discretize(network: Network, k: int, clip: float = 1e-4) -> Discretization:
    """Secant approximation with ``k`` pieces per nonlinear arc.

    Works on the normalized instance.  Immense arcs carry a forced flow of
    ``clip`` that is folded into the demands.  The result is a restriction,
    so its optimum is at least the concave optimum and at most that plus
    ``gap``.
    """
    if k < 1:
        raise ValueError("need at least one segment")
    normed = normalize(network)
    net = normed.network
    b = [float(x) for x in net.b]
    new_arcs: list[Arc] = []
    arc_map: list[int] = []
    fixed = [0.0] * net.m
    gap = 0.0
    seg_err = []
    for idx, a in enumerate(net.arcs):
        g = a.gain
        u = float(a.upper)
        if isinstance(g, LinearGain):
            new_arcs.append(Arc(a.tail, a.head, 0.0, u, LinearGain(float(g.gamma))))
            arc_map.append(idx)
            seg_err.append(0.0)
            continue
        x0 = 0.0
        if g.immense:
            x0 = min(clip, u)
            fixed[idx] = x0
            b[a.tail] += x0
            b[a.head] -= float(g.value(x0)) if x0 > 0 else 0.0
            gap += net.M[a.tail] * x0
            if x0 <= 0 or x0 >= u:
                seg_err.append(0.0)
                continue
        if u <= x0:
            seg_err.append(0.0)
            continue
        xs = _breakpoints(g, x0, u, k)
        worst = 0.0
        for s in range(len(xs) - 1):
            lo_x, hi_x = float(xs[s]), float(xs[s + 1])
            slope = (float(g.value(hi_x)) - float(g.value(lo_x))) / (hi_x - lo_x)
            if slope > 0:
                new_arcs.append(Arc(a.tail, a.head, 0.0, hi_x - lo_x, LinearGain(slope)))
                arc_map.append(idx)
            worst = max(worst, _secant_error(g, lo_x, hi_x))
        seg_err.append(worst)
        gap += net.M[a.head] * worst
    disc = Network(tuple(b), net.M, tuple(new_arcs))
    return Discretization(disc, arc_map, gap, fixed, normed, seg_err)


def lp_float(network: Network) -> tuple[float, list]:
    """Symmetric LP for a linear-gain network solved by HiGHS."""
    n, m = network.n, network.m
    # variables: f (m), kappa (n); constraint -e_i - kappa_i <= 0
    c = np.concatenate([np.zeros(m), np.array(network.M, dtype=float)])
    A = np.zeros((n, m + n))
    rhs = np.array([-float(x) for x in network.b])
    for k, a in enumerate(network.arcs):
        A[a.head, k] -= float(a.gain.gamma)
        A[a.tail, k] += 1.0
    for i in range(n):
        A[i, m + i] = -1.0
    bounds = [(float(a.lower), float(a.upper)) for a in network.arcs] + [(0, None)] * n
    res = linprog(c, A_ub=A, b_ub=rhs, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    return float(res.fun), list(res.x[:m])


@dataclass
class PwlReference:
    kappa: float
    gap: float
    segments: int


def pwl_reference(network: Network, k: int = 64, clip: float = 1e-4) -> PwlReference:
    disc = pwl_discretize(network, k, clip)
    kappa, _ = lp_float(disc.network)
    return PwlReference(kappa, disc.gap, k)


# certificates -------------------------------------------------------------

@dataclass
class Certificate:
    ok: bool
    violations: list
    slack: dict

    def as_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations), "slack": dict(self.slack)}


def _rel_gain(ratio_num, mu_t, mu_h):
    """Relabeled gain with the conventions for infinite labels."""
    if mu_h == INF:
        return 0
    if mu_t == INF:
        return INF
    return ratio_num * mu_t / mu_h


def check_conservative_certificate(network: Network, flow: Sequence, labels: Sequence,
                                   mode: str = "linear", tol: float = 1e-9,
                                   delta=None) -> Certificate:
    """Check the conservative-labeling optimality conditions.

    ``mode="linear"`` is exact (no tolerance) and uses gain factors;
    ``mode="concave"`` uses one-sided derivatives and reports measured slack.
    With ``delta`` (concave mode) the arc test becomes the secant test on
    delta-fat residual arcs, recomputed from the value and inverse oracles;
    this is the condition an eps-approximate solution can satisfy, and the
    leftover relabeled surplus is reported as slack in units of delta.
    """
    if delta is not None:
        return _check_delta(network, flow, labels, tol, delta)
    e = excesses(network, flow)
    viol: list[str] = []
    exact = mode == "linear"
    worst_arc = 0.0
    worst_node = 0.0
    for k, (a, f) in enumerate(zip(network.arcs, flow)):
        mi, mj = labels[a.tail], labels[a.head]
        if f < a.upper:
            d = a.gain.gamma if exact else a.gain.right_derivative(f)
            if d is None:
                raise ValueError(f"arc {k}: gain has no derivative oracle")
            r = _rel_gain(d, mi, mj)
            if (r > 1) if exact else (r > 1 + tol):
                viol.append(f"arc {k}: forward relabeled gain {r} > 1")
            worst_arc = max(worst_arc, float(r) - 1)
        if f > a.lower:
            d = a.gain.gamma if exact else a.gain.left_derivative(f)
            if d is None:
                raise ValueError(f"arc {k}: gain has no derivative oracle")
            inv = INF if d == 0 else 1 / d
            r = _rel_gain(inv, mj, mi)
            if (r > 1) if exact else (r > 1 + tol):
                viol.append(f"arc {k}: backward relabeled gain {r} > 1")
            worst_arc = max(worst_arc, float(r) - 1)
    for i, (Mi, mu, ei) in enumerate(zip(network.M, labels, e)):
        below, raised = _label_position(mu, Mi, exact, tol)
        if below:
            viol.append(f"node {i}: label {mu} below 1/M")
        if ei < 0 and raised:
            if exact or -ei > tol:
                viol.append(f"node {i}: deficit with label {mu} above 1/M")
        if raised and mu != INF:
            if (ei != 0) if exact else abs(ei) > tol * max(1.0, abs(float(mu))):
                viol.append(f"node {i}: excess {ei} nonzero with finite raised label")
            worst_node = max(worst_node, abs(float(ei)) / float(mu))
        elif not raised and ei > 0:
            # a finite label is a positive dual price, so the node may not keep a surplus
            if exact or ei > tol * max(1.0, abs(float(mu))):
                viol.append(f"node {i}: positive excess {ei} with finite label")
            worst_node = max(worst_node, float(ei) / float(mu))
    return Certificate(not viol, viol, {"arc_gain_excess": worst_arc, "node_relabeled_excess": worst_node})


def _label_position(mu, Mi, exact, tol):
    lo = Fraction(1, Mi) if exact else 1.0 / Mi
    if exact:
        return mu < lo, mu > lo
    return mu < lo * (1 - tol), mu > lo * (1 + tol)


def _check_delta(network, flow, labels, tol, delta) -> Certificate:
    normed = normalize(network)
    net = normed.network
    f = [float(x) for x in normed.normalize_flow(flow)]
    mu = [float(x) for x in labels]
    delta = float(delta)
    viol: list[str] = []
    worst_arc = 0.0
    for k, a in enumerate(net.arcs):
        g = a.gain
        u = float(a.upper)
        mi, mj = mu[a.tail], mu[a.head]
        x = f[k]
        gx = float(g.value(x))
        if x < u and float(g.value(u)) - gx >= delta * mj:
            step = float(g.inverse(gx + delta * mj)) - x
            th = delta * mi / step if step > 0 else INF
            worst_arc = max(worst_arc, th - 1)
            if th > 1 + tol:
                viol.append(f"arc {k}: forward secant ratio {th} > 1")
        if x > 0 and x >= delta * mi:
            drop = gx - float(g.value(max(0.0, x - delta * mi)))
            th = delta * mj / drop if drop > 0 else INF
            worst_arc = max(worst_arc, th - 1)
            if th > 1 + tol:
                viol.append(f"arc {k}: backward secant ratio {th} > 1")
    e = excesses(net, f)
    surplus = 0.0
    for i, (Mi, m, ei) in enumerate(zip(net.M, mu, e)):
        below, raised = _label_position(m, Mi, False, tol)
        if below:
            viol.append(f"node {i}: label {m} below 1/M")
        if ei < 0 and raised and -ei > tol:
            viol.append(f"node {i}: deficit with label {m} above 1/M")
        if net.degree[i] and ei > 0:
            surplus = max(surplus, ei / m / delta)
    return Certificate(not viol, viol, {"arc_secant_excess": worst_arc, "node_surplus_in_delta": surplus})


def optimal_labels_linear(network: Network, flow: Sequence):
    """Labels certifying optimality of ``flow``, or ``None`` if a GAP exists.

    best_i is the largest gain of a residual walk from i to a deficit node t,
    times M_t; the certificate is mu_i = 1/best_i (``inf`` when unreachable).
    """
    n = network.n
    e = excesses(network, flow)
    best: list = [None] * n
    for i in range(n):
        if e[i] < 0:
            best[i] = Fraction(network.M[i])
    res_arcs = []
    for a, f in zip(network.arcs, flow):
        g = Fraction(a.gain.gamma)
        if f < a.upper:
            res_arcs.append((a.tail, a.head, g))
        if f > a.lower:
            res_arcs.append((a.head, a.tail, 1 / g))
    for rnd in range(n + 1):
        changed = False
        for x, y, g in res_arcs:
            if best[y] is not None:
                cand = g * best[y]
                if best[x] is None or cand > best[x]:
                    best[x] = cand
                    changed = True
        if not changed:
            break
        if rnd == n:
            return None  # flow-generating cycle reaching a deficit
    labels = []
    for i in range(n):
        if best[i] is None:
            labels.append(INF)
            continue
        if e[i] > 0 or best[i] > network.M[i]:
            return None
        labels.append(1 / best[i])
    return labels


def kappa_of(network: Network, flow: Sequence):
    return excess_discrepancy(network, excesses(network, flow))
