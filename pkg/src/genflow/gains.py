"""Concave increasing gain functions behind value / inverse-value oracles.

Every gain exposes ``value`` and ``inverse``; solvers use nothing else except
the three difference helpers (``increment``, ``increment_inverse``,
``decrement``), whose defaults are built from the two oracles.  Built-in
families override the helpers with cancellation-free formulas so that the
scaling algorithms keep full relative accuracy when the scaling parameter is
many orders of magnitude below the flow values.

Values may be ``Fraction`` (exact; linear and piecewise-linear gains only),
``float`` or ``mpmath.mpf``.  The transcendental families pick ``math`` or
``mpmath`` from the argument type.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Callable, Sequence

import mpmath

NEG_INF = float("-inf")


class GainError(ValueError):
    """Raised on oracle domain/range violations and invalid gain data."""


class GainValidationError(GainError):
    """A user-supplied gain failed the randomized registration checks."""


def _lib(x):
    return mpmath if isinstance(x, mpmath.mpf) else math


def _slack(alpha, bound):
    eps = mpmath.eps if isinstance(alpha, mpmath.mpf) else 2.220446049250313e-16
    return 64 * eps * max(1, abs(bound), abs(alpha))


def _neg_inf_like(x):
    return mpmath.mpf("-inf") if isinstance(x, mpmath.mpf) else NEG_INF


def parse_number(text: str):
    """Parse ``p/q`` or an integer as ``Fraction``; anything else as float."""
    text = text.strip()
    try:
        return Fraction(text) if ("/" in text or _is_int(text)) else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise GainError(f"bad number {text!r}") from exc


def _is_int(text: str) -> bool:
    return text.lstrip("+-").isdigit()


def format_number(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, mpmath.mp.dps)
    return repr(float(x))


class GainFunction:
    """Base class.  Subclasses implement ``value`` and ``inverse``."""

    #: Gain equals -inf at the lower end of its domain.
    immense = False
    #: Natural domain of the oracle (arcs must lie inside it).
    domain: tuple = (NEG_INF, math.inf)

    def value(self, alpha):
        raise NotImplementedError

    def inverse(self, beta):
        raise NotImplementedError

    def right_derivative(self, alpha):
        return None

    def left_derivative(self, alpha):
        return None

    @property
    def has_derivative(self) -> bool:
        return False

    # difference helpers -------------------------------------------------

    def increment(self, f, d):
        """Gain(f + d) - Gain(f)."""
        return self.value(f + d) - self.value(f)

    def increment_inverse(self, f, delta):
        """Flow increase needed at the tail to add ``delta`` at the head."""
        return self.inverse(self.value(f) + delta) - f

    def decrement(self, f, d):
        """Gain(f) - Gain(f - d)."""
        return self.value(f) - self.value(f - d)

    # transforms ---------------------------------------------------------

    def shifted(self, lower, offset):
        """Gain alpha -> value(alpha + lower) - offset."""
        return ShiftedGain(self, lower, offset)

    def backward(self) -> "GainFunction":
        return BackwardGain(self)

    def flat_start(self, upper):
        """inf{p <= upper : value(p) == value(upper)} (strictly increasing: upper)."""
        return upper

    def cast(self, convert) -> "GainFunction":
        """Same gain with numeric parameters converted by ``convert``."""
        return self

    def spec(self) -> str:
        raise GainError(f"{type(self).__name__} has no file representation")

    def check_domain(self, alpha):
        """Return ``alpha``, snapped onto the domain if it overshoots by rounding."""
        lo, hi = self.domain
        if alpha < lo:
            if isinstance(alpha, (float, mpmath.mpf)) and lo - alpha <= _slack(alpha, lo):
                return alpha - alpha + lo
            raise GainError(f"{self!r}: argument {alpha} outside domain [{lo}, {hi}]")
        if alpha > hi:
            if isinstance(alpha, (float, mpmath.mpf)) and alpha - hi <= _slack(alpha, hi):
                return alpha - alpha + hi
            raise GainError(f"{self!r}: argument {alpha} outside domain [{lo}, {hi}]")
        return alpha


class LinearGain(GainFunction):
    """alpha -> gamma * alpha."""

    def __init__(self, gamma):
        if gamma <= 0:
            raise GainError("linear gain factor must be positive")
        self.gamma = gamma

    def __repr__(self):
        return f"LinearGain({self.gamma})"

    def __eq__(self, other):
        return isinstance(other, LinearGain) and other.gamma == self.gamma

    def __hash__(self):
        return hash(("lin", self.gamma))

    def value(self, alpha):
        return self.gamma * alpha

    def inverse(self, beta):
        return beta / self.gamma

    def right_derivative(self, alpha):
        return self.gamma

    left_derivative = right_derivative

    @property
    def has_derivative(self):
        return True

    def increment(self, f, d):
        return self.gamma * d

    def increment_inverse(self, f, delta):
        return delta / self.gamma

    def decrement(self, f, d):
        return self.gamma * d

    def shifted(self, lower, offset):
        if offset != self.gamma * lower:
            return ShiftedGain(self, lower, offset)
        return self

    def backward(self):
        return LinearGain(1 / self.gamma)

    def cast(self, convert):
        return LinearGain(convert(self.gamma))

    def spec(self):
        return f"lin {format_number(self.gamma)}"


class PiecewiseLinearGain(GainFunction):
    """Concave piecewise-linear interpolation of breakpoints ``(x_k, y_k)``."""

    def __init__(self, points: Sequence[tuple]):
        pts = [(x, y) for x, y in points]
        if len(pts) < 2:
            raise GainError("pwl gain needs at least two breakpoints")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise GainError("pwl breakpoints must be strictly increasing in x")
        slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(pts, pts[1:])]
        if any(s < 0 for s in slopes):
            raise GainError("pwl gain must be nondecreasing")
        if any(b > a for a, b in zip(slopes, slopes[1:])):
            raise GainError("pwl gain must be concave (slopes nonincreasing)")
        first_flat = next((k for k, s in enumerate(slopes) if s == 0), len(slopes))
        if any(s != 0 for s in slopes[first_flat:]):
            raise GainError("pwl gain has an interior flat segment")
        self.points = tuple(pts)
        self.slopes = tuple(slopes)
        self.domain = (xs[0], xs[-1])

    def __repr__(self):
        return f"PiecewiseLinearGain({list(self.points)})"

    def _segment(self, alpha, right=True):
        xs = [p[0] for p in self.points]
        k = 0
        last = len(self.slopes) - 1
        while k < last and (alpha >= xs[k + 1] if right else alpha > xs[k + 1]):
            k += 1
        return k

    def value(self, alpha):
        alpha = self.check_domain(alpha)
        k = self._segment(alpha)
        x0, y0 = self.points[k]
        return y0 + self.slopes[k] * (alpha - x0)

    def inverse(self, beta):
        ys = [p[1] for p in self.points]
        if beta < ys[0] or beta > ys[-1]:
            raise GainError(f"pwl inverse: {beta} outside range [{ys[0]}, {ys[-1]}]")
        for k, s in enumerate(self.slopes):
            if s > 0 and beta <= self.points[k + 1][1]:
                x0, y0 = self.points[k]
                return x0 + (beta - y0) / s
        return self.flat_start(self.points[-1][0])

    def right_derivative(self, alpha):
        return self.slopes[self._segment(alpha, right=True)]

    def left_derivative(self, alpha):
        return self.slopes[self._segment(alpha, right=False)]

    @property
    def has_derivative(self):
        return True

    def increment_inverse(self, f, delta):
        # walk right from f consuming delta of output
        k = self._segment(f)
        pos, need = f, delta
        zero = delta - delta
        while True:
            s = self.slopes[k]
            x1, _ = self.points[k + 1]
            room = (x1 - pos) * s
            if need <= room or k == len(self.slopes) - 1:
                if s == 0:
                    if need > zero:
                        raise GainError("pwl inverse on flat segment")
                    return pos - f
                return (pos - f) + need / s
            need -= room
            pos = x1
            k += 1

    def decrement(self, f, d):
        # walk left from f consuming d of input
        k = self._segment(f, right=False)
        pos, left = f, d
        out = d - d
        while True:
            x0, _ = self.points[k]
            span = pos - x0
            if left <= span or k == 0:
                return out + left * self.slopes[k]
            out += span * self.slopes[k]
            left -= span
            pos = x0
            k -= 1

    def shifted(self, lower, offset):
        pts = [(x - lower, y - offset) for x, y in self.points]
        return PiecewiseLinearGain(pts)

    def flat_start(self, upper):
        y_up = self.value(upper)
        for (x0, y0), s in zip(self.points, self.slopes):
            if s == 0 and y0 == y_up and x0 <= upper:
                return x0
        return upper

    def cast(self, convert):
        return PiecewiseLinearGain([(convert(x), convert(y)) for x, y in self.points])

    def spec(self):
        body = " ".join(f"{format_number(x)} {format_number(y)}" for x, y in self.points)
        return f"pwl {len(self.points)} {body}"


class LogGain(GainFunction):
    """alpha -> c * ln(alpha); immense at 0."""

    immense = True
    domain = (0, math.inf)

    def __init__(self, c):
        if c <= 0:
            raise GainError("log gain coefficient must be positive")
        self.c = c

    def __repr__(self):
        return f"LogGain({self.c})"

    def value(self, alpha):
        alpha = self.check_domain(alpha)
        if alpha == 0:
            return _neg_inf_like(alpha)
        return self.c * _lib(alpha).log(alpha)

    def inverse(self, beta):
        if beta == -math.inf:
            return beta - beta if isinstance(beta, mpmath.mpf) else 0.0
        return _lib(beta).exp(beta / self.c)

    def right_derivative(self, alpha):
        return math.inf if alpha == 0 else self.c / alpha

    left_derivative = right_derivative

    @property
    def has_derivative(self):
        return True

    def increment(self, f, d):
        if f == 0:
            return math.inf
        return self.c * _lib(f).log1p(d / f)

    def increment_inverse(self, f, delta):
        return f * _lib(f).expm1(delta / self.c)

    def decrement(self, f, d):
        if d >= f:
            return math.inf
        return -self.c * _lib(f).log1p(-d / f)

    def cast(self, convert):
        return LogGain(convert(self.c))

    def spec(self):
        return f"log {format_number(self.c)}"


class PowerGain(GainFunction):
    """alpha -> c * alpha**p with 0 < p < 1."""

    domain = (0, math.inf)

    def __init__(self, c, p):
        if c <= 0:
            raise GainError("power gain coefficient must be positive")
        if not 0 < p < 1:
            raise GainError("power gain exponent must lie in (0, 1)")
        self.c = c
        self.p = p

    def __repr__(self):
        return f"PowerGain({self.c}, {self.p})"

    def value(self, alpha):
        alpha = self.check_domain(alpha)
        if alpha == 0:
            return alpha - alpha
        return self.c * _lib(alpha).power(alpha, self.p) if isinstance(alpha, mpmath.mpf) \
            else self.c * float(alpha) ** float(self.p)

    def inverse(self, beta):
        if beta < 0:
            raise GainError(f"power inverse: {beta} below range")
        if isinstance(beta, mpmath.mpf):
            return mpmath.power(beta / self.c, 1 / self.p)
        return (float(beta) / float(self.c)) ** (1.0 / float(self.p))

    def right_derivative(self, alpha):
        return math.inf if alpha == 0 else self.c * self.p * alpha ** (self.p - 1)

    left_derivative = right_derivative

    @property
    def has_derivative(self):
        return True

    def increment_inverse(self, f, delta):
        if f == 0:
            return self.inverse(delta)
        lib = _lib(f)
        ratio = delta / (self.c * lib.power(f, self.p)) if lib is mpmath \
            else float(delta) / (float(self.c) * float(f) ** float(self.p))
        return f * lib.expm1(lib.log1p(ratio) / self.p)

    def decrement(self, f, d):
        if d >= f:
            return self.value(f)
        lib = _lib(f)
        base = self.value(f)
        return -base * lib.expm1(self.p * lib.log1p(-d / f))

    def cast(self, convert):
        return PowerGain(convert(self.c), convert(self.p))

    def spec(self):
        return f"pow {format_number(self.c)} {format_number(self.p)}"


class ShiftedGain(GainFunction):
    """alpha -> base(alpha + lower) - offset (lower-bound normalization)."""

    def __init__(self, base: GainFunction, lower, offset):
        self.base = base
        self.lower = lower
        self.offset = offset
        self.immense = base.immense and lower == base.domain[0]
        lo, hi = base.domain
        self.domain = (lo - lower, hi - lower)

    def __repr__(self):
        return f"ShiftedGain({self.base!r}, {self.lower}, {self.offset})"

    def value(self, alpha):
        return self.base.value(alpha + self.lower) - self.offset

    def inverse(self, beta):
        return self.base.inverse(beta + self.offset) - self.lower

    def right_derivative(self, alpha):
        return self.base.right_derivative(alpha + self.lower)

    def left_derivative(self, alpha):
        return self.base.left_derivative(alpha + self.lower)

    @property
    def has_derivative(self):
        return self.base.has_derivative

    def increment(self, f, d):
        return self.base.increment(f + self.lower, d)

    def increment_inverse(self, f, delta):
        return self.base.increment_inverse(f + self.lower, delta)

    def decrement(self, f, d):
        return self.base.decrement(f + self.lower, d)

    def flat_start(self, upper):
        return self.base.flat_start(upper + self.lower) - self.lower

    def cast(self, convert):
        return ShiftedGain(self.base.cast(convert), convert(self.lower), convert(self.offset))


class BackwardGain(GainFunction):
    """Reverse-arc gain alpha -> -g^{-1}(-alpha)."""

    def __init__(self, forward: GainFunction):
        self.forward = forward

    def __repr__(self):
        return f"BackwardGain({self.forward!r})"

    def value(self, alpha):
        return -self.forward.inverse(-alpha)

    def inverse(self, beta):
        return -self.forward.value(-beta)

    def right_derivative(self, alpha):
        d = self.forward.left_derivative(self.forward.inverse(-alpha))
        return None if d is None else 1 / d

    def left_derivative(self, alpha):
        d = self.forward.right_derivative(self.forward.inverse(-alpha))
        return None if d is None else 1 / d

    @property
    def has_derivative(self):
        return self.forward.has_derivative

    def backward(self):
        return self.forward

    def cast(self, convert):
        return BackwardGain(self.forward.cast(convert))


class CustomGain(GainFunction):
    """User oracle pair; float arithmetic only."""

    def __init__(self, value: Callable, inverse: Callable, domain=(0.0, math.inf),
                 right_derivative: Callable | None = None,
                 left_derivative: Callable | None = None,
                 immense: bool = False, name: str = "custom"):
        self._value = value
        self._inverse = inverse
        self._rd = right_derivative
        self._ld = left_derivative or right_derivative
        self.domain = tuple(domain)
        self.immense = immense
        self.name = name

    def __repr__(self):
        return f"CustomGain({self.name})"

    def value(self, alpha):
        alpha = self.check_domain(alpha)
        return self._value(float(alpha))

    def inverse(self, beta):
        return self._inverse(float(beta))

    def right_derivative(self, alpha):
        return None if self._rd is None else self._rd(float(alpha))

    def left_derivative(self, alpha):
        return None if self._ld is None else self._ld(float(alpha))

    @property
    def has_derivative(self):
        return self._rd is not None


# validation -------------------------------------------------------------

def validate_gain(gain: GainFunction, lo, hi, samples: int = 1000, tol: float = 1e-9,
                  seed: int = 0) -> list[str]:
    """Sampled monotonicity, concavity, round-trip and derivative-order checks.

    Returns a list of failure descriptions (empty when the gain passes).
    """
    rng = random.Random(seed)
    lo_f, hi_f = float(lo), float(hi)
    if gain.immense:
        lo_f = lo_f + 1e-6 * max(1.0, hi_f - lo_f)
    failures: list[str] = []

    def val(a):
        return float(gain.value(a))

    for _ in range(samples):
        a, b = sorted(rng.uniform(lo_f, hi_f) for _ in range(2))
        va, vb = val(a), val(b)
        scale = max(1.0, abs(va), abs(vb))
        if va > vb + tol * scale:
            failures.append(f"not monotone on [{a}, {b}]")
        mid = val((a + b) / 2)
        if mid < (va + vb) / 2 - tol * scale:
            failures.append(f"not concave on [{a}, {b}]")
        beta = rng.uniform(val(lo_f), val(hi_f))
        back = float(gain.inverse(beta))
        if not lo_f - tol <= back <= hi_f + tol or abs(val(min(max(back, lo_f), hi_f)) - beta) > tol * max(1.0, abs(beta)):
            failures.append(f"inverse round trip fails at {beta}")
        if gain.has_derivative and a < b:
            ra, la = gain.right_derivative(a), gain.left_derivative(a)
            rb, lb = gain.right_derivative(b), gain.left_derivative(b)
            if a > lo_f and not (rb <= lb * (1 + tol) + tol and lb <= ra * (1 + tol) + tol
                                 and ra <= la * (1 + tol) + tol):
                failures.append(f"derivative ordering fails on [{a}, {b}]")
        if len(failures) > 10:
            break
    return failures


_FAMILIES: dict[str, tuple[int | None, Callable]] = {}


def register_gain_family(name: str, arity: int | None, factory: Callable,
                         validate_on: tuple | None = (0.0, 10.0)) -> None:
    """Make ``name p1 p2 ...`` usable as a gain-spec in instance files.

    ``factory(*params)`` must return a GainFunction.  Custom families are
    validated on ``validate_on`` each time a gain is created.
    """
    if name in ("lin", "pwl", "log", "pow"):
        raise GainError(f"cannot redefine built-in family {name!r}")

    def checked(*params):
        g = factory(*params)
        if validate_on is not None:
            problems = validate_gain(g, *validate_on)
            if problems:
                raise GainValidationError(f"{name}: {problems[0]}")
        return g

    _FAMILIES[name] = (arity, checked)


def custom_gain(value: Callable, inverse: Callable, domain=(0.0, 1.0), **kwargs) -> CustomGain:
    """Build and validate a user gain from a value/inverse oracle pair."""
    g = CustomGain(value, inverse, domain=domain, **kwargs)
    problems = validate_gain(g, *domain)
    if problems:
        raise GainValidationError(problems[0])
    return g


def parse_gain(tokens: Sequence[str]) -> GainFunction:
    """Parse a gain-spec token list: ``lin g``, ``pwl k x1 y1 ...``, ``log c``, ``pow c p``."""
    if not tokens:
        raise GainError("missing gain spec")
    kind, args = tokens[0], list(tokens[1:])
    nums = [parse_number(a) for a in args]
    if kind == "lin":
        _arity(kind, nums, 1)
        return LinearGain(nums[0])
    if kind == "log":
        _arity(kind, nums, 1)
        return LogGain(nums[0])
    if kind == "pow":
        _arity(kind, nums, 2)
        return PowerGain(nums[0], nums[1])
    if kind == "pwl":
        if not nums:
            raise GainError("pwl needs a breakpoint count")
        k = int(nums[0])
        if len(nums) != 1 + 2 * k:
            raise GainError(f"pwl with {k} breakpoints needs {2 * k} coordinates")
        return PiecewiseLinearGain(list(zip(nums[1::2], nums[2::2])))
    if kind in _FAMILIES:
        arity, factory = _FAMILIES[kind]
        if arity is not None:
            _arity(kind, nums, arity)
        return factory(*nums)
    raise GainError(f"unknown gain family {kind!r}")


def _arity(kind, nums, k):
    if len(nums) != k:
        raise GainError(f"{kind} gain takes {k} parameter(s), got {len(nums)}")
