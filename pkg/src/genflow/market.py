"""Market equilibria as concave generalized flows.

Goods, buyers and a sink form the graph: good j sends its unit supply to
buyers over arcs with utility gains, buyer i forwards utility to the sink
over ``m_i * log``.  Maximizing the sink excess is the Eisenberg-Gale
program (Fisher) or its Nash-bargaining variant with disagreement points.

Exact recovery: solve with a tiny eps in mpmath, read off which allocations
are positive, solve the resulting square linear system over the rationals
and verify the equilibrium conditions with zero residual.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import mpmath

from .fatpath import FLOAT, mp_arith
from .gains import GainError, GainFunction, LinearGain, LogGain, parse_gain
from .network import Arc, Network
from .report import SolverReport, _encode
from .simplex import solve_lp
from .sink import Infeasible, SinkInstance, default_ustar, solve_sink


class MarketError(ValueError):
    pass


class RecoveryError(RuntimeError):
    """Exact recovery could not certify a solution."""


@dataclass(frozen=True)
class Buyer:
    id: object
    budget: int
    disagreement: int = 0


@dataclass
class MarketInstance:
    """Buyers, unit-supply goods and utilities keyed by (buyer index, good index).

    A utility is a nonnegative number (linear) or a concave ``GainFunction``
    (price discrimination).
    """

    buyers: list
    goods: list
    utilities: dict

    def __post_init__(self):
        nb, ng = len(self.buyers), len(self.goods)
        if nb == 0 or ng == 0:
            raise MarketError("need at least one buyer and one good")
        for b in self.buyers:
            if not b.budget > 0:
                raise MarketError(f"buyer {b.id}: budget must be positive")
            if b.disagreement < 0:
                raise MarketError(f"buyer {b.id}: disagreement utility must be nonnegative")
        for (i, j), u in self.utilities.items():
            if not (0 <= i < nb and 0 <= j < ng):
                raise MarketError(f"utility pair ({i}, {j}) out of range")
            if not isinstance(u, GainFunction) and u < 0:
                raise MarketError(f"utility of pair ({i}, {j}) is negative")
        pos = self.positive_pairs()
        for i, b in enumerate(self.buyers):
            if not any(p[0] == i for p in pos):
                raise MarketError(f"buyer {b.id} has no positive utility")
        for j, g in enumerate(self.goods):
            if not any(p[1] == j for p in pos):
                raise MarketError(f"good {g} has no positive utility")

    def positive_pairs(self) -> list[tuple[int, int]]:
        out = []
        for key in sorted(self.utilities):
            u = self.utilities[key]
            if isinstance(u, GainFunction) or u > 0:
                out.append(key)
        return out

    @property
    def discrimination(self) -> bool:
        return any(isinstance(u, GainFunction) for u in self.utilities.values())

    @property
    def is_fisher(self) -> bool:
        return all(b.disagreement == 0 for b in self.buyers)

    def utility(self, i: int, j: int):
        return self.utilities.get((i, j), 0)

    @property
    def n(self) -> int:
        return len(self.buyers) + len(self.goods)

    @property
    def R(self):
        return max(b.budget for b in self.buyers)

    @property
    def C(self):
        return max(b.disagreement for b in self.buyers)

    @property
    def Umax(self):
        if self.discrimination:
            raise MarketError("Umax is defined for linear utilities only")
        return max(self.utilities[p] for p in self.positive_pairs())

    @property
    def K(self):
        return self.n * self.R * self.Umax

    def ustar(self) -> float:
        """max{C, n K ln K}; also the label bound T used in exact recovery."""
        K = self.K
        return max(float(self.C), self.n * K * math.log(K))

    # serialization -------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "MarketInstance":
        try:
            buyers = [Buyer(b["id"], _int(b["budget"], "budget"), _int(b.get("disagreement", 0), "disagreement"))
                      for b in d["buyers"]]
            goods = [g["id"] if isinstance(g, dict) else g for g in d["goods"]]
            bidx = {b.id: k for k, b in enumerate(buyers)}
            gidx = {g: k for k, g in enumerate(goods)}
            if len(bidx) != len(buyers) or len(gidx) != len(goods):
                raise MarketError("duplicate buyer or good id")
            util = {}
            for entry in d["utilities"]:
                i, j, u = entry
                if i not in bidx or j not in gidx:
                    raise MarketError(f"utility entry {entry!r} names an unknown buyer or good")
                key = (bidx[i], gidx[j])
                if key in util:
                    raise MarketError(f"duplicate utility entry for {entry[:2]!r}")
                if isinstance(u, str):
                    util[key] = parse_gain(u.split())
                else:
                    util[key] = _int(u, "utility") if float(u).is_integer() else Fraction(str(u))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, MarketError):
                raise
            raise MarketError(f"malformed market: {exc}") from exc
        return cls(buyers, goods, util)

    def to_dict(self) -> dict:
        util = []
        for (i, j), u in sorted(self.utilities.items()):
            val = u.spec() if isinstance(u, GainFunction) else (int(u) if u == int(u) else str(u))
            util.append([self.buyers[i].id, self.goods[j], val])
        return {
            "buyers": [{"id": b.id, "budget": b.budget, "disagreement": b.disagreement} for b in self.buyers],
            "goods": list(self.goods),
            "utilities": util,
        }


def _int(x, what):
    if isinstance(x, bool) or int(x) != x:
        raise MarketError(f"{what} must be an integer, got {x!r}")
    return int(x)


def load_market(path) -> MarketInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MarketError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return MarketInstance.from_dict(data)


# graph construction ----------------------------------------------------------

@dataclass
class MarketGraph:
    """A sink instance built from a market plus the node/arc bookkeeping."""

    market: MarketInstance
    instance: SinkInstance
    mode: str
    pair_arc: dict
    buyer_arc: list

    def good_node(self, j: int) -> int:
        return j

    def buyer_node(self, i: int) -> int:
        return len(self.market.goods) + i

    @property
    def sink(self) -> int:
        return self.instance.sink


def _build(market: MarketInstance, mode: str, ustar=None) -> MarketGraph:
    ng, nb = len(market.goods), len(market.buyers)
    t = ng + nb
    cap = 1 if mode == "fisher" else 2
    arcs = []
    pair_arc = {}
    reach = [0] * nb
    for (i, j) in market.positive_pairs():
        u = market.utility(i, j)
        gain = u if isinstance(u, GainFunction) else LinearGain(u)
        pair_arc[(i, j)] = len(arcs)
        arcs.append(Arc(j, ng + i, 0, cap, gain))
        reach[i] += gain.value(cap) if isinstance(u, GainFunction) else u * cap
    buyer_arc = []
    for i, b in enumerate(market.buyers):
        buyer_arc.append(len(arcs))
        # twice the reachable utility in ADNB so the capacity never binds
        v = reach[i] if mode == "fisher" else 2 * reach[i]
        arcs.append(Arc(ng + i, t, 0, v, LogGain(b.budget)))
    b = [-1] * ng
    b += [0 if mode == "fisher" else bb.disagreement for bb in market.buyers]
    b.append(0)
    net = Network(tuple(b), tuple([1] * (t + 1)), tuple(arcs))
    if ustar is None:
        override = market.ustar() if not market.discrimination else _discrimination_ustar(market, reach)
        # b_t must exceed every reachable sink inflow
        inflow = sum(bb.budget * math.log(float(v)) for bb, v in
                     zip(market.buyers, (arcs[k].upper for k in buyer_arc)) if v > 1)
        ustar = default_ustar(SinkInstance(net, t), max(override, inflow))
    return MarketGraph(market, SinkInstance(net, t, ustar), mode, pair_arc, buyer_arc)


def _discrimination_ustar(market, reach) -> float:
    n = market.n
    K = n * market.R * max(2.0, max(float(r) for r in reach))
    return max(float(market.C), n * K * math.log(K))


def build_fisher(market: MarketInstance, ustar=None) -> MarketGraph:
    if not market.is_fisher:
        raise MarketError("Fisher markets have zero disagreement utilities; use build_adnb")
    return _build(market, "fisher", ustar)


def build_adnb(market: MarketInstance, ustar=None) -> MarketGraph:
    return _build(market, "adnb", ustar)


def required_dps(graph: MarketGraph, eps) -> int:
    """Working precision that resolves eps against the largest scaled quantity."""
    U = graph.instance.ustar
    M = math.ceil(2 * U / eps) + 1
    return 20 + math.ceil(math.log10((M * U + 1) / eps))


def solve_market(graph: MarketGraph, eps, dps: int | None = None, **kw) -> SolverReport | Infeasible:
    """Approximate sink solve in floats, or in mpmath when ``dps`` is given."""
    if dps is None:
        return solve_sink(graph.instance, eps, arith=FLOAT, **kw)
    with mpmath.workdps(dps):
        if isinstance(eps, Fraction):
            eps = mpmath.mpf(eps.numerator) / eps.denominator
        return solve_sink(graph.instance, mpmath.mpf(eps), arith=mp_arith(dps), **kw)


# equilibria ---------------------------------------------------------------

@dataclass
class Equilibrium:
    prices: list
    allocation: dict            # (buyer, good) -> amount, positive entries only
    utilities: list
    exact: bool = False
    residuals: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self, market: MarketInstance | None = None) -> dict:
        def bid(i):
            return market.buyers[i].id if market else i

        def gid(j):
            return market.goods[j] if market else j

        d = {
            "schema": 1,
            "status": "exact" if self.exact else "approximate",
            "prices": {str(gid(j)): p for j, p in enumerate(self.prices)},
            "allocation": [[bid(i), gid(j), x] for (i, j), x in sorted(self.allocation.items())],
            "utilities": {str(bid(i)): z for i, z in enumerate(self.utilities)},
            "residuals": self.residuals,
            "flags": self.flags,
            "extra": self.extra,
        }
        d = _encode(d)
        d["schema"] = 1
        return d


def utilities_of(market: MarketInstance, alloc: dict) -> list:
    z = [0] * len(market.buyers)
    for (i, j), x in alloc.items():
        u = market.utility(i, j)
        z[i] += u.value(x) if isinstance(u, GainFunction) else u * x
    return z


def kkt_residuals(market: MarketInstance, prices, alloc: dict) -> dict:
    """Equilibrium-condition violations; all entries are exactly 0 for an exact solution.

    clearing: max |sum_i x_ij - 1|; bang_per_buck: how far some pair beats the
    buyer's best ratio (z_i - c_i)/m_i; tightness: how far a bought pair falls
    below it; negativity: most negative allocation; surplus: min z_i - c_i
    (must be positive, not part of ``max``).
    """
    z = utilities_of(market, alloc)
    zero = 0
    clearing = zero
    for j in range(len(market.goods)):
        s = sum((x for (i, jj), x in alloc.items() if jj == j), zero)
        clearing = max(clearing, abs(s - 1))
    bpb = zero
    tight = zero
    neg = zero
    for (i, j) in market.positive_pairs():
        b = market.buyers[i]
        best = (z[i] - b.disagreement) / b.budget
        x = alloc.get((i, j), zero)
        u = market.utility(i, j)
        p = prices[j]
        up = u.right_derivative(x) if isinstance(u, GainFunction) else u
        down = u.left_derivative(x) if isinstance(u, GainFunction) and x > 0 else up
        if p == 0:
            bpb = math.inf
            continue
        bpb = max(bpb, up / p - best)
        if x > 0:
            tight = max(tight, best - down / p)
        neg = max(neg, -x)
    surplus = min(zi - b.disagreement for zi, b in zip(z, market.buyers))
    return {"clearing": clearing, "bang_per_buck": bpb, "tightness": tight,
            "negativity": neg, "surplus": surplus,
            "max": max(clearing, bpb, tight, neg)}


def extract_equilibrium(report: SolverReport, graph: MarketGraph, tol: float = 1e-6) -> Equilibrium:
    """Prices mu_t/mu_j, allocations f_ji and utilities from a solver report."""
    market = graph.market
    mu = report.labels
    mu_t = mu[graph.sink]
    prices = []
    for j in range(len(market.goods)):
        mj = mu[graph.good_node(j)]
        prices.append(0.0 if mj == math.inf else mu_t / mj)
    alloc = {}
    for key, k in graph.pair_arc.items():
        x = report.flows[k]
        if x > 0:
            alloc[key] = x
    z = utilities_of(market, alloc)
    res = kkt_residuals(market, prices, alloc)
    flags = []
    if res["max"] > tol:
        flags.append(f"kkt residual {float(res['max']):.3g} above {tol:g}")
    for i, (zi, b) in enumerate(zip(z, market.buyers)):
        if zi - b.disagreement <= tol:
            flags.append(f"buyer {b.id} near-infeasible: surplus {float(zi - b.disagreement):.3g}")
    sink_flow = {market.buyers[i].id: report.flows[k] for i, k in enumerate(graph.buyer_arc)}
    return Equilibrium(prices, alloc, z, False, res, flags, {"sink_flow": sink_flow})


# exact recovery ---------------------------------------------------------------

def is_forest(pairs, n_goods: int, n_buyers: int) -> bool:
    parent = list(range(n_goods + n_buyers))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in pairs:
        a, b = find(j), find(n_goods + i)
        if a == b:
            return False
        parent[a] = b
    return True


def solve_support_system(market: MarketInstance, support) -> tuple[dict, list] | None:
    """Solve the square system fixed by a support set, over the rationals.

    Unknowns are x_ij on the support and q_j = 1/p_j.  Equations: every good
    sells one unit; every supported pair has bang-per-buck equal to
    (z_i - c_i)/m_i.  Returns ``(allocation, prices)`` or ``None`` when
    the system is singular.
    """
    support = sorted(support)
    ng = len(market.goods)
    nx = len(support)
    col = {p: k for k, p in enumerate(support)}
    rows = []
    for j in range(ng):
        r = [Fraction(0)] * (nx + ng + 1)
        for p in support:
            if p[1] == j:
                r[col[p]] = Fraction(1)
        r[-1] = Fraction(1)
        rows.append(r)
    for (i, j) in support:
        b = market.buyers[i]
        r = [Fraction(0)] * (nx + ng + 1)
        for p in support:
            if p[0] == i:
                r[col[p]] += Fraction(market.utility(*p))
        r[nx + j] -= Fraction(market.utility(i, j)) * b.budget
        r[-1] = Fraction(b.disagreement)
        rows.append(r)
    sol = _gauss_jordan(rows, nx + ng)
    if sol is None:
        return None
    alloc = {p: sol[col[p]] for p in support}
    q = sol[nx:]
    if any(v <= 0 for v in q):
        return None
    return alloc, [1 / v for v in q]


def _gauss_jordan(rows: list, ncols: int):
    A = [list(r) for r in rows]
    if len(A) != ncols:
        return None
    for c in range(ncols):
        piv = next((r for r in range(c, ncols) if A[r][c] != 0), None)
        if piv is None:
            return None
        A[c], A[piv] = A[piv], A[c]
        p = A[c][c]
        A[c] = [v / p for v in A[c]]
        for r in range(ncols):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return [A[r][-1] for r in range(ncols)]


def component_prices(market: MarketInstance, support) -> list | None:
    """Prices from the support forest by propagation, without a linear solve.

    Within a component a reference good gets price alpha; along a path good
    j -> buyer i -> good k prices scale by U_ik/U_ij.  Buyer i then spends
    r_i = m_i + c_i/beta_i with beta_i its bang-per-buck, and the component's
    prices must add up to its spending, which fixes alpha.
    """
    ng, nb = len(market.goods), len(market.buyers)
    adj = {("g", j): [] for j in range(ng)}
    adj.update({("b", i): [] for i in range(nb)})
    for i, j in support:
        adj[("g", j)].append(("b", i))
        adj[("b", i)].append(("g", j))
    prices: list = [None] * ng
    for root in range(ng):
        if prices[root] is not None:
            continue
        # rel[g] = p_g / alpha; beta_rel[i] = beta_i * alpha
        rel = {root: Fraction(1)}
        beta_rel = {}
        stack = [("g", root)]
        seen = {("g", root)}
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if nxt in seen:
                    continue
                seen.add(nxt)
                if node[0] == "g":
                    i, j = nxt[1], node[1]
                    beta_rel[i] = Fraction(market.utility(i, j)) / rel[j]
                else:
                    i, k = node[1], nxt[1]
                    rel[k] = Fraction(market.utility(i, k)) / beta_rel[i]
                stack.append(nxt)
        sum_rel = sum(rel.values())
        money = sum(Fraction(market.buyers[i].budget) for i in beta_rel)
        reserve = sum(Fraction(market.buyers[i].disagreement) / beta_rel[i] for i in beta_rel)
        denom = sum_rel - reserve
        if denom <= 0:
            return None
        alpha = money / denom
        for j, r in rel.items():
            prices[j] = alpha * r
    return prices


def feasibility_lp(market: MarketInstance) -> Fraction:
    """max s such that every buyer can get utility c_i + s; exact rationals.

    The bargaining problem is feasible iff the optimum is positive.
    """
    pairs = market.positive_pairs()
    nb, ng = len(market.buyers), len(market.goods)
    P = len(pairs)
    shift = Fraction(market.C + 1)
    # columns: x (P), s' = s + shift, w (nb buyer slacks), v (ng good slacks)
    ncol = P + 1 + nb + ng
    A, rhs = [], []
    for i, b in enumerate(market.buyers):
        r = [Fraction(0)] * ncol
        for k, (ii, j) in enumerate(pairs):
            if ii == i:
                r[k] = Fraction(market.utility(ii, j))
        r[P] = Fraction(-1)
        r[P + 1 + i] = Fraction(-1)
        A.append(r)
        rhs.append(Fraction(b.disagreement) - shift)
    for j in range(ng):
        r = [Fraction(0)] * ncol
        for k, (i, jj) in enumerate(pairs):
            if jj == j:
                r[k] = Fraction(1)
        r[P + 1 + nb + j] = Fraction(1)
        A.append(r)
        rhs.append(Fraction(1))
    c = [Fraction(0)] * ncol
    c[P] = Fraction(-1)
    lo = [Fraction(0)] * ncol
    hi = [Fraction(1)] * P + [None] * (1 + nb) + [Fraction(1)] * ng
    res = solve_lp(c, A, rhs, lo, hi)
    if res.status != "optimal":
        raise RuntimeError(f"feasibility LP ended {res.status}")
    return res.x[P] - shift


def perturb(market: MarketInstance, level: int) -> MarketInstance:
    """U_ij -> U_ij * Q + rank_ij with distinct ranks, c_i -> c_i * Q.

    Ties between allocations break by the ranks; ``level`` selects both the
    scale Q and the (seeded) rank order.
    """
    pairs = market.positive_pairs()
    P = len(pairs)
    Q = (P + 1) * 16 ** level
    ranks = list(range(1, P + 1))
    random.Random(level).shuffle(ranks)
    util = {p: market.utility(*p) * Q + r for p, r in zip(pairs, ranks)}
    buyers = [Buyer(b.id, b.budget, b.disagreement * Q) for b in market.buyers]
    return MarketInstance(buyers, list(market.goods), util)


def _exceeds(x, frac: Fraction) -> bool:
    if isinstance(x, (int, Fraction)):
        return x > frac
    with mpmath.workdps(max(mpmath.mp.dps, 30 + len(str(frac.denominator)))):
        return mpmath.mpf(x) * frac.denominator > frac.numerator


def recover_exact_adnb(market: MarketInstance, approx: SolverReport | None = None, eps=None,
                       T=None, *, max_attempts: int = 4) -> Equilibrium | Infeasible:
    """Exact rational equilibrium of a linear bargaining (or Fisher) market.

    ``approx`` may be a report for ``build_adnb(market)`` computed with the
    given ``eps``; otherwise the approximation is computed here with
    eps = 1/(2 K^n T) and T = U*.
    """
    if market.discrimination:
        raise MarketError("exact recovery needs linear integer utilities")
    K, n = market.K, market.n
    attempts = []
    current = market
    for level in range(max_attempts):
        graph = build_adnb(current)
        T_used = graph.instance.ustar if (T is None or level) else T
        eps_used = Fraction(1, 2 * current.K ** n) / Fraction(T_used) if (eps is None or level) else eps
        if level == 0 and approx is not None:
            rep = approx
        else:
            rep = solve_market(graph, eps_used, dps=required_dps(graph, float(eps_used)))
        if isinstance(rep, Infeasible):
            s = feasibility_lp(market)
            rep.extra["feasibility_lp"] = s
            rep.extra["lp_agrees"] = s <= 0
            return rep
        mu_max = max(rep.labels)
        if mu_max > T_used * (1 + 1e-9):
            raise RecoveryError(f"label {float(mu_max):.6g} exceeds T = {float(T_used):.6g}")
        thresh = Fraction(T_used) * Fraction(eps_used)
        support = [p for p, k in graph.pair_arc.items() if _exceeds(rep.flows[k], thresh)]
        note = {"level": level, "support": support}
        attempts.append(note)
        if not is_forest(support, len(market.goods), len(market.buyers)):
            note["result"] = "support has a cycle"
            current = perturb(market, level + 1)
            continue
        sol = solve_support_system(market, support)
        if sol is None:
            note["result"] = "singular system"
            current = perturb(market, level + 1)
            continue
        alloc, prices = sol
        res = kkt_residuals(market, prices, alloc)
        if res["max"] != 0 or res["surplus"] <= 0:
            note["result"] = "kkt check failed"
            current = perturb(market, level + 1)
            continue
        note["result"] = "ok"
        alloc = {p: x for p, x in alloc.items() if x != 0}
        z = utilities_of(market, alloc)
        denom = 1
        for x in alloc.values():
            denom = math.lcm(denom, x.denominator)
        extra = {"K": K, "n": n, "T": T_used, "eps": eps_used, "common_denominator": denom,
                 "denominator_bound": K ** n, "attempts": attempts,
                 "spent": [sum(prices[j] * x for (ii, j), x in alloc.items() if ii == i)
                           for i in range(len(market.buyers))]}
        return Equilibrium(prices, alloc, z, True, res, [], extra)
    s = feasibility_lp(market)
    if s <= 0:
        return Infeasible("no equilibrium certified and the feasibility LP is nonpositive",
                          extra={"feasibility_lp": s, "lp_agrees": True, "attempts": attempts})
    raise RecoveryError(f"no certified solution after {max_attempts} attempts: {attempts}")


def random_adnb(seed: int, max_buyers: int = 4, max_goods: int = 4, max_u: int = 5,
                max_budget: int = 3, infeasible: bool = False) -> MarketInstance:
    """Seeded integer bargaining market; ``infeasible`` pushes some c_i out of reach."""
    rng = random.Random(seed)
    nb = rng.randint(1, max_buyers)
    ng = rng.randint(1, max_goods)
    util = {}
    for i in range(nb):
        for j in range(ng):
            if rng.random() < 0.6:
                util[(i, j)] = rng.randint(1, max_u)
    for i in range(nb):
        if not any(k[0] == i for k in util):
            util[(i, rng.randrange(ng))] = rng.randint(1, max_u)
    for j in range(ng):
        if not any(k[1] == j for k in util):
            util[(rng.randrange(nb), j)] = rng.randint(1, max_u)
    buyers = []
    for i in range(nb):
        best = sum(u for (ii, _), u in util.items() if ii == i)
        if infeasible and i == 0:
            c = best + rng.randint(0, 2)
        else:
            c = rng.randint(0, max(0, best // (2 * nb)))
        buyers.append(Buyer(f"b{i}", rng.randint(1, max_budget), c))
    return MarketInstance(buyers, [f"g{j}" for j in range(ng)], util)
