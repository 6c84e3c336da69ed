"""Simulation and verification of the W4 quantum resetting protocol."""

from .noise import NoiseModel
from .protocol import ProtocolConfig, ResetFailed, RunResult, run_protocol

__all__ = ["NoiseModel", "ProtocolConfig", "ResetFailed", "RunResult", "run_protocol"]
__version__ = "0.1.0"
