"""Unitary evolution under time-independent Hamiltonians (hbar = 1).

Hamiltonian entries are angular frequencies and times are in inverse
angular-frequency units. Propagators come from a Hermitian
eigendecomposition, so evolution is exact up to rounding.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from rcpsim.distributions import UnsupportedOperation
from rcpsim.quantum_core import (
    SX,
    SY,
    SZ,
    DensityMatrix,
    StateVector,
    ValidationError,
    array_from_json,
    array_to_json,
)
from rcpsim.rcps import analytic_density, empirical_density, monte_carlo_density, sample_realizations

HAMILTONIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    matrix: np.ndarray

    def __post_init__(self):
        data = np.array(self.matrix, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValidationError("Hamiltonian must be square")
        if not np.all(np.isfinite(data)):
            raise ValidationError("Hamiltonian entries must be finite")
        if np.max(np.abs(data - data.conj().T)) > HAMILTONIAN_TOL:
            raise ValidationError("Hamiltonian must be Hermitian")
        data.setflags(write=False)
        object.__setattr__(self, "matrix", data)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_json(self) -> list:
        return array_to_json(self.matrix)

    @classmethod
    def from_json(cls, data) -> HamiltonianSpec:
        return cls(array_from_json(data))


def zeeman(gb0: float, theta: float, phi: float) -> HamiltonianSpec:
    """``gb0`` times the spin-1/2 component along the direction ``(theta, phi)``."""
    n = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    mat = n[0] * SX.matrix + n[1] * SY.matrix + n[2] * SZ.matrix
    mat = 0.5 * (mat + mat.conj().T)
    return HamiltonianSpec(gb0 * mat)


def propagator(H: HamiltonianSpec, t: float) -> np.ndarray:
    """``exp(-i H t)``."""
    evals, evecs = np.linalg.eigh(H.matrix)
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def _check(dim: int, H: HamiltonianSpec) -> None:
    if dim != H.dim:
        raise ValidationError(f"dimension mismatch: {dim} vs Hamiltonian {H.dim}")


def evolve_state(psi: StateVector, H: HamiltonianSpec, t: float) -> StateVector:
    _check(psi.dim, H)
    return StateVector(propagator(H, t) @ psi.amplitudes)


def _conjugate(U: np.ndarray, rho: np.ndarray) -> np.ndarray:
    out = U @ rho @ U.conj().T
    return 0.5 * (out + out.conj().T)


def evolve_density(rho: DensityMatrix, H: HamiltonianSpec, t: float) -> DensityMatrix:
    """``U rho U^dagger`` with ``U = exp(-i H t)``."""
    _check(rho.dim, H)
    return DensityMatrix(_conjugate(propagator(H, t), rho.matrix))


def lvn_residual(
    H: HamiltonianSpec,
    rho_fn: Callable[[float], DensityMatrix | np.ndarray],
    t: float,
    dt: float,
) -> float:
    """Max-entry norm of ``i d(rho)/dt - [H, rho]`` with a central difference."""
    if not dt > 0:
        raise ValueError("dt must be positive")

    def mat(x):
        r = rho_fn(x)
        return r.matrix if isinstance(r, DensityMatrix) else np.asarray(r, dtype=complex)

    deriv = (mat(t + dt) - mat(t - dt)) / (2 * dt)
    rho = mat(t)
    comm = H.matrix @ rho - rho @ H.matrix
    return float(np.max(np.abs(1j * deriv - comm)))


def ensemble_consistency(spec, H: HamiltonianSpec, t: float, n_samples: int, rng: np.random.Generator) -> float:
    """Frobenius distance between "evolve then average" and "average then evolve".

    The first path evolves each sampled realization and averages the
    projectors; the second evolves the density operator of ``spec`` (analytic when
    available, otherwise an independent Monte Carlo estimate).
    """
    _check(spec.dim, H)
    U = propagator(H, t)
    amps = sample_realizations(spec, n_samples, rng).amplitudes
    evolved = amps @ U.T
    per_realization = empirical_density(evolved)
    try:
        rho = analytic_density(spec)
    except UnsupportedOperation:
        rho = monte_carlo_density(spec, n_samples, rng)
    reference = _conjugate(U, rho.matrix)
    return float(np.linalg.norm(per_realization - reference))
