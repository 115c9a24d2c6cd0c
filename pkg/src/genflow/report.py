"""Solver reports and their lossless JSON form.

Rationals serialize as ``"p/q"`` strings (integers as ``"p"``), floats as JSON
numbers, infinities as ``"inf"``/``"-inf"``.  Wall time is kept out of the
comparable section unless explicitly requested.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import mpmath

SCHEMA = 1


def encode_number(x):
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, int):
        return str(x)
    if type(x).__name__ in ("mpz", "mpq"):
        return encode_number(Fraction(int(x.numerator), int(x.denominator)))
    if isinstance(x, mpmath.mpf):
        x = float(x)
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    return x


def decode_number(x):
    if isinstance(x, str):
        if x in ("inf", "-inf", "nan"):
            return float(x)
        try:
            return Fraction(x)
        except ValueError:
            return x
    return x


def _encode(obj):
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, str):
        return obj
    return encode_number(obj)


def _decode(obj):
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return decode_number(obj)


@dataclass
class SolverReport:
    solver: str
    status: str
    flows: list
    labels: list
    excesses: list
    kappa: Any
    phases: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    certificate: dict | None = None
    extra: dict = field(default_factory=dict)
    wall_time: float | None = None

    @property
    def phase_count(self) -> int:
        return len(self.phases)

    @property
    def iterations(self) -> list[int]:
        return [p["iterations"] for p in self.phases]

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "schema": SCHEMA,
            "solver": self.solver,
            "status": self.status,
            "kappa": self.kappa,
            "flows": self.flows,
            "labels": self.labels,
            "excesses": self.excesses,
            "phase_count": self.phase_count,
            "iterations": self.iterations,
            "phases": self.phases,
            "params": self.params,
            "tolerances": self.tolerances,
            "certificate": self.certificate,
            "extra": self.extra,
        }
        if timing:
            d["wall_time"] = self.wall_time
        d = _encode(d)
        # plain counters stay JSON integers; exact numbers are strings
        d["schema"] = SCHEMA
        d["phase_count"] = self.phase_count
        d["iterations"] = [int(k) for k in self.iterations]
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverReport":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        dd = {k: v for k, v in d.items() if k not in ("schema", "phase_count", "iterations")}
        strings = {"solver", "status"}
        out = {}
        for k, v in dd.items():
            if k in strings:
                out[k] = v
            elif k == "wall_time":
                out[k] = v
            else:
                out[k] = _decode(v)
        return cls(**out)

    @classmethod
    def from_json(cls, text: str) -> "SolverReport":
        return cls.from_dict(json.loads(text))


def phase_dict(rec) -> dict:
    return dataclasses.asdict(rec)
