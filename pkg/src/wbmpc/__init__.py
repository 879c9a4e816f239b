"""Collision-aware whole-body MPC planning."""

__version__ = "0.1.0"

from wbmpc.backend import COMPILED, name as backend_name  # noqa: F401
