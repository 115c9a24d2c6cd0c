"""Seeded random instances for the test corpus and the ``gen`` command."""

from __future__ import annotations

import random
from fractions import Fraction

from .gains import LinearGain, LogGain, PiecewiseLinearGain, PowerGain
from .network import Arc, Network


def _pairs(rng: random.Random, n: int, m: int):
    out = []
    for _ in range(m):
        t = rng.randrange(n)
        h = rng.randrange(n - 1)
        if h >= t:
            h += 1
        out.append((t, h))
    return out


def random_linear(seed: int, max_n: int = 8, max_m: int = 20, max_int: int = 8,
                  lower_prob: float = 0.2) -> Network:
    """Integer data in [1, max_int], rational gains p/q with p, q <= max_int."""
    rng = random.Random(seed)
    n = rng.randint(2, max_n)
    m = rng.randint(1, max_m)
    b = [rng.randint(-max_int, max_int) for _ in range(n)]
    M = [rng.randint(1, max_int) for _ in range(n)]
    arcs = []
    for t, h in _pairs(rng, n, m):
        u = rng.randint(1, max_int)
        lo = rng.randint(0, u) if rng.random() < lower_prob else 0
        g = Fraction(rng.randint(1, max_int), rng.randint(1, max_int))
        arcs.append(Arc(t, h, lo, u, LinearGain(g)))
    return Network(tuple(b), tuple(M), tuple(arcs))


def _random_concave_gain(rng: random.Random, allow_immense: bool):
    kind = rng.choice(["lin", "pow", "pwl", "log"] if allow_immense else ["lin", "pow", "pwl"])
    if kind == "lin":
        return LinearGain(round(rng.uniform(0.25, 4.0), 3))
    if kind == "pow":
        return PowerGain(round(rng.uniform(0.5, 4.0), 3), rng.choice([0.25, 0.5, 0.75]))
    if kind == "log":
        return LogGain(round(rng.uniform(0.5, 3.0), 3))
    k = rng.randint(2, 4)
    xs = sorted({0.0} | {round(rng.uniform(0.5, 8.0), 2) for _ in range(k)})
    slopes = sorted((round(rng.uniform(0.2, 3.0), 3) for _ in range(len(xs) - 1)), reverse=True)
    pts = [(xs[0], 0.0)]
    for s, (x0, x1) in zip(slopes, zip(xs, xs[1:])):
        pts.append((x1, pts[-1][1] + s * (x1 - x0)))
    return PiecewiseLinearGain(pts)


def random_concave(seed: int, max_n: int = 6, max_m: int = 12, max_int: int = 6,
                   allow_immense: bool = True) -> Network:
    """Mixed concave gains (lin, pow, pwl and optionally log) with float data."""
    rng = random.Random(seed)
    n = rng.randint(2, max_n)
    m = rng.randint(1, max_m)
    b = [float(rng.randint(-max_int, max_int)) for _ in range(n)]
    M = [rng.randint(1, max_int) for _ in range(n)]
    arcs = []
    for t, h in _pairs(rng, n, m):
        g = _random_concave_gain(rng, allow_immense)
        if isinstance(g, PiecewiseLinearGain):
            u = g.points[-1][0]
        elif isinstance(g, LogGain):
            u = float(rng.randint(2, max_int))
        else:
            u = float(rng.randint(1, max_int))
        arcs.append(Arc(t, h, 0.0, u, g))
    return Network(tuple(b), tuple(M), tuple(arcs))


def linear_corpus(count: int = 200, base_seed: int = 1000, **kw) -> list[Network]:
    return [random_linear(base_seed + s, **kw) for s in range(count)]


def concave_corpus(count: int = 50, base_seed: int = 5000, **kw) -> list[Network]:
    return [random_concave(base_seed + s, **kw) for s in range(count)]
