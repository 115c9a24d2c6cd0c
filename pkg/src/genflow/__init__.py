"""Scaling fat-path solvers for linear and concave generalized flows."""

__version__ = "0.1.0"

from .concave import solve_symmetric_concave
from .instance_io import read_instance, write_instance
from .linear import solve_symmetric_linear
from .network import Arc, Network
from .sink import Infeasible, SinkInstance, solve_sink
