"""Reader and writer for the ``cgf`` text instance format.

::

    c comment
    p cgf <n> <m>
    n <id> <b> <M>            (ids are 1-based; unlisted nodes get b=0, M=1)
    a <tail> <head> <l> <u> <gain-spec>

Numbers are integers, ``p/q`` rationals or decimals (decimals become floats).
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

from .gains import GainError, format_number, parse_gain, parse_number
from .network import Arc, Network, NetworkError


class InstanceFormatError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def parse_instance(lines: Iterable[str]) -> Network:
    n = m = None
    b: list = []
    M: list = []
    arcs: list[Arc] = []
    seen_nodes: set[int] = set()
    for lineno, raw in enumerate(lines, 1):
        tok = raw.split()
        if not tok or tok[0] == "c":
            continue
        kind = tok[0]
        try:
            if kind == "p":
                if n is not None:
                    raise InstanceFormatError("duplicate problem line", lineno)
                if len(tok) != 4 or tok[1] != "cgf":
                    raise InstanceFormatError("expected 'p cgf <n> <m>'", lineno)
                n, m = int(tok[2]), int(tok[3])
                if n < 0 or m < 0:
                    raise InstanceFormatError("negative size", lineno)
                b = [0] * n
                M = [1] * n
            elif n is None:
                raise InstanceFormatError("problem line must come first", lineno)
            elif kind == "n":
                if len(tok) != 4:
                    raise InstanceFormatError("expected 'n <id> <b> <M>'", lineno)
                i = _node(tok[1], n, lineno)
                if i in seen_nodes:
                    raise InstanceFormatError(f"node {i + 1} listed twice", lineno)
                seen_nodes.add(i)
                b[i] = parse_number(tok[2])
                Mi = parse_number(tok[3])
                if Mi != int(Mi) or Mi < 1:
                    raise InstanceFormatError("penalty M must be a positive integer", lineno)
                M[i] = int(Mi)
            elif kind == "a":
                if len(tok) < 7:
                    raise InstanceFormatError("expected 'a <tail> <head> <l> <u> <gain>'", lineno)
                t, h = _node(tok[1], n, lineno), _node(tok[2], n, lineno)
                if t == h:
                    raise InstanceFormatError("self-loop", lineno)
                lo, up = parse_number(tok[3]), parse_number(tok[4])
                if up < lo:
                    raise InstanceFormatError("upper capacity below lower capacity", lineno)
                gain = parse_gain(tok[5:])
                arcs.append(Arc(t, h, lo, up, gain))
            else:
                raise InstanceFormatError(f"unknown line type {kind!r}", lineno)
        except (GainError, ValueError) as exc:
            if isinstance(exc, InstanceFormatError):
                raise
            raise InstanceFormatError(str(exc), lineno) from exc
    if n is None:
        raise InstanceFormatError("missing problem line")
    if len(arcs) != m:
        raise InstanceFormatError(f"header promises {m} arcs, found {len(arcs)}")
    try:
        return Network(tuple(b), tuple(M), tuple(arcs))
    except NetworkError as exc:
        raise InstanceFormatError(str(exc)) from exc


def _node(text: str, n: int, lineno: int) -> int:
    try:
        i = int(text)
    except ValueError:
        raise InstanceFormatError(f"bad node id {text!r}", lineno) from None
    if not 1 <= i <= n:
        raise InstanceFormatError(f"node id {i} out of range 1..{n}", lineno)
    return i - 1


def read_instance(path: str | Path) -> Network:
    with open(path) as fh:
        return parse_instance(fh)


def format_instance(network: Network, comment: str | None = None) -> str:
    out = []
    if comment:
        out.extend(f"c {line}" for line in comment.splitlines())
    out.append(f"p cgf {network.n} {network.m}")
    for i, (bi, Mi) in enumerate(zip(network.b, network.M)):
        out.append(f"n {i + 1} {format_number(bi)} {Mi}")
    for a in network.arcs:
        out.append(f"a {a.tail + 1} {a.head + 1} {format_number(a.lower)} "
                   f"{format_number(a.upper)} {a.gain.spec()}")
    return "\n".join(out) + "\n"


def write_instance(network: Network, path: str | Path, comment: str | None = None) -> None:
    Path(path).write_text(format_instance(network, comment))
