"""Exact cutting-plane solver for the Team Orienteering Problem."""

from .engine import Engine, EngineConfig, EngineResult, solve
from .instance import Instance, load_instance, parse_chao
from .primal import Solution, validate_solution

__all__ = ["Engine", "EngineConfig", "EngineResult", "Instance", "Solution", "load_instance",
           "parse_chao", "solve", "validate_solution"]
__version__ = "0.1.0"
