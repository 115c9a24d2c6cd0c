"""Shared machinery of the scaling fat-path solvers.

The engine owns a pseudoflow and a labeling ``mu`` on a normalized network and
implements the label tightening (a multiplicative Dijkstra), augmentation on
tight paths, both inter-phase repair rules and the instrumentation used by the
tests.  Numbers are gmpy2 rationals in exact mode, ``float`` or ``mpmath.mpf``
otherwise; comparisons of float quantities use the tolerances of ``Arith``.
"""

from __future__ import annotations

import heapq
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath
from gmpy2 import mpq

from .network import Network, Pseudoflow


class InvariantError(RuntimeError):
    """An internal invariant of a solver was violated."""


@dataclass(frozen=True)
class Arith:
    """Number system and tolerances used by an engine."""

    kind: str  # "exact" (gmpy2 rationals), "float" or "mp"
    tau_theta: float = 0.0
    band_factor: float = 0.0

    @property
    def exact(self) -> bool:
        return self.kind == "exact"

    def eps(self):
        if self.kind == "exact":
            return 0
        if self.kind == "mp":
            return mpmath.eps
        return sys.float_info.epsilon

    def convert(self, x):
        if self.kind == "exact":
            return mpq(x)
        if self.kind == "mp":
            return mpmath.mpf(x.numerator) / x.denominator if isinstance(x, Fraction) else mpmath.mpf(x)
        return float(x)


EXACT = Arith("exact")
FLOAT = Arith("float", tau_theta=1e-10, band_factor=64.0)


def mp_arith(dps: int) -> Arith:
    return Arith("mp", tau_theta=10.0 ** (-(dps - 12)), band_factor=64.0)


@dataclass
class PhaseRecord:
    """Counters and measurements for one scaling phase."""

    delta: object
    ex_start: object = None
    iterations: int = 0
    tighten_calls: int = 0
    adjust_ex_before: object = None
    adjust_ex_after: object = None
    adjust_max_tail_change: object = 0
    adjust_max_head_change: object = 0
    adjust_arcs_changed: int = 0
    kappa_end: object = None
    psi_start: int | None = None


@dataclass
class TightenResult:
    parent: dict
    multiplier: object
    joined_by_reserve: list = field(default_factory=list)


class FatPathEngine:
    def __init__(self, network: Network, flow, mu, arith: Arith):
        self.net = network
        self.arith = arith
        self.pf = Pseudoflow(network, flow)
        self.mu = list(mu)
        self.deg = network.degree
        self.active = [d > 0 for d in network.degree]
        self.M = network.M
        self._zero = arith.convert(0)

    # basic quantities ---------------------------------------------------

    @property
    def f(self):
        return self.pf.f

    @property
    def e(self):
        return self.pf.e

    def relabeled_excess(self, i):
        return self.pf.e[i] / self.mu[i]

    def magnitudes(self) -> list:
        """Per-node sum of absolute excess terms (for rounding bands)."""
        mag = [abs(bi) for bi in self.net.b]
        for a, x in zip(self.net.arcs, self.pf.f):
            mag[a.tail] += abs(x)
            g = a.gain.value(x)
            mag[a.head] += abs(g) if g != -float("inf") else 0
        return mag

    def bands(self, delta) -> list:
        if self.arith.exact:
            return [0] * self.net.n
        c = self.arith.band_factor * self.arith.eps()
        mag = self.magnitudes()
        return [c * (d * delta + mg / mu) for d, mg, mu in zip(self.deg, mag, self.mu)]

    def node_class(self, i, delta, band=0) -> int:
        v = self.pf.e[i] / self.mu[i]
        r = self.deg[i] * delta
        if v < r - band:
            return -1
        if v > r + band:
            return 1
        return 0

    def ex_delta(self, delta):
        """Modified relabeled excess over non-isolated nodes."""
        total = self._zero
        for i in range(self.net.n):
            if self.active[i]:
                v = self.pf.e[i] / self.mu[i] - self.deg[i] * delta
                if v > 0:
                    total += v
        return total

    def psi(self, delta) -> int:
        total = 0
        for i in range(self.net.n):
            if self.active[i]:
                v = self.pf.e[i] / self.mu[i] - (self.deg[i] + 1) * delta
                if v > 0:
                    q = v / delta
                    total += int(mpmath.floor(q)) if isinstance(q, mpmath.mpf) else math.floor(q)
        return total

    def kappa(self):
        return self.pf.kappa()

    # arc primitives -----------------------------------------------------

    def forward_room(self, k):
        """Gain(u) - Gain(f) on arc k."""
        a = self.net.arcs[k]
        f = self.pf.f[k]
        return a.gain.increment(f, a.upper - f)

    def forward_fat(self, k, delta) -> bool:
        a = self.net.arcs[k]
        if self.pf.f[k] >= a.upper:
            return False
        return self.forward_room(k) >= delta * self.mu[a.head]

    def backward_fat(self, k, delta) -> bool:
        a = self.net.arcs[k]
        f = self.pf.f[k]
        return f > 0 and f >= delta * self.mu[a.tail]

    def theta(self, k, forward: bool, delta):
        """Secant ratio of the forward or backward residual copy of arc k."""
        a = self.net.arcs[k]
        f = self.pf.f[k]
        if forward:
            if not self.forward_fat(k, delta):
                raise InvariantError(f"arc {k} is not fat for delta={delta}")
            return delta * self.mu[a.tail] / a.gain.increment_inverse(f, delta * self.mu[a.head])
        if not self.backward_fat(k, delta):
            raise InvariantError(f"reverse of arc {k} is not fat for delta={delta}")
        return delta * self.mu[a.head] / a.gain.decrement(f, delta * self.mu[a.tail])

    def fat_arcs(self, delta):
        """Yield (k, forward) for every delta-fat residual arc."""
        for k in range(self.net.m):
            if self.forward_fat(k, delta):
                yield k, True
            if self.backward_fat(k, delta):
                yield k, False

    def is_tight(self, theta) -> bool:
        if self.arith.exact:
            return theta == 1
        return abs(theta - 1) <= self.arith.tau_theta

    # label tightening ------------------------------------------------------

    def tighten_label(self, delta) -> TightenResult:
        """Raise labels until every node has a tight fat path to a reserve node.

        Nodes outside S are scaled by a common multiplier A; a node's key is
        the value of A at which it joins S, either because an arc into S turns
        tight or because its relabeled excess reaches the reserve d_i * delta.
        """
        n = self.net.n
        mu0 = list(self.mu)
        bands = self.bands(delta)
        in_s = [False] * n
        key: list = [None] * n
        parent: dict = {}
        heap: list = []
        one = self.arith.convert(1)
        by_reserve = []

        for i in range(n):
            if not self.active[i]:
                in_s[i] = True
                continue
            if self.node_class(i, delta, bands[i]) <= 0:
                key[i] = one
                parent[i] = None
                heap.append((one, 0, i, None))
            else:
                k_i = self.pf.e[i] / (mu0[i] * self.deg[i] * delta)
                key[i] = k_i
                heap.append((k_i, 1, i, None))
        heapq.heapify(heap)

        A = one
        arcs = self.net.arcs
        f = self.pf.f
        while heap:
            kx, _, x, via = heapq.heappop(heap)
            if in_s[x] or kx != key[x]:
                continue
            if kx > A:
                A = kx
            in_s[x] = True
            parent[x] = via
            if via is None and kx != one:
                by_reserve.append(x)
            if A != one:
                self.mu[x] = mu0[x] * A
            mux = self.mu[x]
            dmx = delta * mux
            # forward residual arcs y -> x
            for k in self.net.in_arcs[x]:
                a = arcs[k]
                y = a.tail
                if in_s[y] or f[k] >= a.upper:
                    continue
                if self.forward_room(k) < dmx:
                    continue
                cand = a.gain.increment_inverse(f[k], dmx) / (delta * mu0[y])
                if cand < A:
                    cand = A
                if cand < key[y]:
                    key[y] = cand
                    heapq.heappush(heap, (cand, 2, y, (k, True, x)))
            # backward residual arcs y -> x over arcs x -> y
            for k in self.net.out_arcs[x]:
                a = arcs[k]
                y = a.head
                if in_s[y] or not (f[k] > 0 and f[k] >= dmx):
                    continue
                cand = a.gain.decrement(f[k], dmx) / (delta * mu0[y])
                if cand < A:
                    cand = A
                if cand < key[y]:
                    key[y] = cand
                    heapq.heappush(heap, (cand, 2, y, (k, False, x)))
        return TightenResult(parent, A, by_reserve)

    def tighten_label_zero(self):
        """Exact linear variant for delta = 0: labels of nodes that cannot
        reach a deficit node become infinite, the rest are made tight."""
        n = self.net.n
        inf = float("inf")
        arcs = self.net.arcs
        f = self.pf.f
        neg = [i for i in range(n) if self.pf.e[i] < 0]
        # reverse reachability in the residual graph
        reach = [False] * n
        stack = list(neg)
        for i in neg:
            reach[i] = True
        while stack:
            x = stack.pop()
            for k in self.net.in_arcs[x]:
                if f[k] < arcs[k].upper and not reach[arcs[k].tail]:
                    reach[arcs[k].tail] = True
                    stack.append(arcs[k].tail)
            for k in self.net.out_arcs[x]:
                if f[k] > 0 and not reach[arcs[k].head]:
                    reach[arcs[k].head] = True
                    stack.append(arcs[k].head)
        mu0 = list(self.mu)
        for i in range(n):
            if not reach[i]:
                self.mu[i] = inf
        one = self.arith.convert(1)
        in_s = [not reach[i] for i in range(n)]
        key: list = [None] * n
        heap = []
        for i in neg:
            key[i] = one
            heap.append((one, i, None))
        heapq.heapify(heap)
        parent = {}
        A = one
        while heap:
            kx, x, via = heapq.heappop(heap)
            if in_s[x] or kx != key[x]:
                continue
            A = max(A, kx)
            in_s[x] = True
            parent[x] = via
            self.mu[x] = mu0[x] * A
            for k in self.net.in_arcs[x]:
                a = arcs[k]
                y = a.tail
                if in_s[y] or f[k] >= a.upper:
                    continue
                cand = max(A, self.mu[x] / (a.gain.gamma * mu0[y]))
                if key[y] is None or cand < key[y]:
                    key[y] = cand
                    heapq.heappush(heap, (cand, y, (k, True, x)))
            for k in self.net.out_arcs[x]:
                a = arcs[k]
                y = a.head
                if in_s[y] or not f[k] > 0:
                    continue
                cand = max(A, self.mu[x] * a.gain.gamma / mu0[y])
                if key[y] is None or cand < key[y]:
                    key[y] = cand
                    heapq.heappush(heap, (cand, y, (k, False, x)))
        return parent

    # augmentation -------------------------------------------------------

    def path_from(self, parent: dict, s: int) -> list:
        path = []
        x = s
        for _ in range(self.net.n + 1):
            via = parent.get(x)
            if via is None:
                return path
            path.append(via)
            x = via[2]
        raise InvariantError("parent pointers contain a cycle")

    def send(self, path: list, delta) -> None:
        """Move delta relabeled units along a tight path."""
        arcs = self.net.arcs
        pf = self.pf
        for k, forward, _ in path:
            a = arcs[k]
            f = pf.f[k]
            if forward:
                dt = delta * self.mu[a.tail]
                if f + dt > a.upper:
                    if self.arith.exact:
                        raise InvariantError(f"augmentation exceeds capacity on arc {k}")
                    dt = a.upper - f
                pf.push(k, dt, a.gain.increment(f, dt))
            else:
                dh = delta * self.mu[a.tail]
                if dh > f:
                    if self.arith.exact:
                        raise InvariantError(f"augmentation exceeds flow on arc {k}")
                    dh = f
                loss = a.gain.decrement(f, dh)
                pf.f[k] = f - dh
                pf.e[a.tail] += dh
                pf.e[a.head] -= loss

    # phase repair ---------------------------------------------------------

    def adjust_linear(self, delta, new_delta, rec: PhaseRecord | None = None) -> None:
        """Repair rule for linear gains moving from delta to new_delta."""
        before = self.ex_delta(delta) if rec is not None else None
        step = delta - new_delta
        arcs = self.net.arcs
        max_t = max_h = 0
        changed = 0
        for k, a in enumerate(arcs):
            f = self.pf.f[k]
            g = a.gain.gamma
            mi, mj = self.mu[a.tail], self.mu[a.head]
            if f < a.upper and g * mi > mj and g * (a.upper - f) >= new_delta * mj:
                dt = min(a.upper - f, step * mj / g)
                self.pf.push(k, dt, g * dt)
                max_t, max_h = max(max_t, dt / mi), max(max_h, g * dt / mj)
                changed += 1
            elif f > 0 and mj > g * mi and f >= new_delta * mi:
                dt = min(f, step * mi)
                self.pf.push(k, -dt, -g * dt)
                max_t, max_h = max(max_t, g * dt / mj), max(max_h, dt / mi)
                changed += 1
        if rec is not None:
            rec.adjust_ex_before = before
            rec.adjust_ex_after = self.ex_delta(new_delta)
            rec.adjust_max_tail_change = max_t
            rec.adjust_max_head_change = max_h
            rec.adjust_arcs_changed = changed

    def adjust_concave(self, delta, rec: PhaseRecord | None = None) -> None:
        """Repair rule for concave gains moving from delta to delta/2."""
        before = self.ex_delta(delta) if rec is not None else None
        h = delta / 2
        tol = 1 + self.arith.tau_theta
        arcs = self.net.arcs
        max_t = max_h = self._zero
        changed = 0
        for k, a in enumerate(arcs):
            f = self.pf.f[k]
            mi, mj = self.mu[a.tail], self.mu[a.head]
            if f < a.upper and self.forward_room(k) >= h * mj:
                x = a.gain.increment_inverse(f, h * mj)
                if h * mi > tol * x:
                    if f + x > a.upper:
                        x = a.upper - f
                    self.pf.push(k, x, h * mj)
                    max_t, max_h = max(max_t, x / mi), max(max_h, h)
                    changed += 1
                    continue
            if f > 0 and f >= h * mi:
                y = a.gain.decrement(f, h * mi)
                if h * mj > tol * y:
                    self.pf.f[k] = f - h * mi
                    self.pf.e[a.tail] += h * mi
                    self.pf.e[a.head] -= y
                    max_t, max_h = max(max_t, y / mj), max(max_h, h)
                    changed += 1
        if rec is not None:
            rec.adjust_ex_before = before
            rec.adjust_ex_after = self.ex_delta(h)
            rec.adjust_max_tail_change = max_t
            rec.adjust_max_head_change = max_h
            rec.adjust_arcs_changed = changed

    # one phase --------------------------------------------------------------

    def run_phase(self, delta, rec: PhaseRecord, max_iterations: int,
                  on_step: Callable | None = None) -> None:
        """Augment until no node has relabeled excess above (d_i + 1) * delta."""
        while True:
            tl = self.tighten_label(delta)
            rec.tighten_calls += 1
            bands = self.bands(delta)
            s = None
            for i in range(self.net.n):
                if not self.active[i]:
                    continue
                if self.pf.e[i] / self.mu[i] > (self.deg[i] + 1) * delta + bands[i]:
                    s = i
                    break
            if s is None:
                return
            path = self.path_from(tl.parent, s)
            if not path:
                raise InvariantError(f"node {s} has excess but no tight path")
            self.send(path, delta)
            rec.iterations += 1
            if on_step is not None:
                on_step(self, delta, path)
            if rec.iterations > max_iterations:
                raise InvariantError(
                    f"phase delta={delta} exceeded {max_iterations} augmentations")

    # diagnostics ------------------------------------------------------------

    def conservativity_violations(self, delta) -> list[str]:
        """Violated delta-conservativity conditions (empty if none)."""
        out = []
        tol = self.arith.tau_theta
        for k, fw in self.fat_arcs(delta):
            th = self.theta(k, fw, delta)
            if th > 1 + tol:
                out.append(f"arc {k}{'' if fw else ' (reverse)'}: theta={th}")
        bands = self.bands(delta)
        for i in range(self.net.n):
            lo = self.arith.convert(1) / self.M[i]
            slack = 0 if self.arith.exact else lo * 1e-9
            if self.mu[i] < lo - slack:
                out.append(f"node {i}: label below 1/M")
            if self.active[i] and self.node_class(i, delta, bands[i]) < 0 and self.mu[i] > lo + slack:
                out.append(f"node {i}: negative node with raised label")
        return out
