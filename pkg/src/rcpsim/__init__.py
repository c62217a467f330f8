"""Simulation and moment estimation for random-coefficient pure states."""

from rcpsim.distributions import (
    Constant,
    Discrete,
    TruncatedGaussian,
    TruncatedLaplace,
    Uniform,
)
from rcpsim.quantum_core import DensityMatrix, Observable, StateVector
from rcpsim.rcps import RealRemainder, TwoLevelPolar, WriterReaderSource

__all__ = [
    "Constant",
    "DensityMatrix",
    "Discrete",
    "Observable",
    "RealRemainder",
    "StateVector",
    "TruncatedGaussian",
    "TruncatedLaplace",
    "TwoLevelPolar",
    "Uniform",
    "WriterReaderSource",
]

__version__ = "0.1.0"
