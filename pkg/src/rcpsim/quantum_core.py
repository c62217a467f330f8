"""Finite-dimensional state vectors, density matrices and observables.

All containers hold read-only complex numpy arrays and validate eagerly on
construction. Bipartite spaces use the row-major Kronecker convention: the
composite index of ``|i>|j>`` is ``i * d2 + j``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
EIG_TOL = 1e-9
OBSERVABLE_TOL = 1e-12
REAL_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when a state, density matrix or observable breaks an invariant."""


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=complex)
    if not np.all(np.isfinite(out)):
        raise ValidationError("entries must be finite (no NaN/Inf)")
    out.setflags(write=False)
    return out


def _square(data: np.ndarray, what: str) -> None:
    if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] < 1:
        raise ValidationError(f"{what} must be a non-empty square matrix, got shape {data.shape}")


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes of a ket in a fixed orthonormal basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        data = _frozen(self.amplitudes)
        if data.ndim != 1 or data.size < 1:
            raise ValidationError(f"amplitudes must be a non-empty 1-D sequence, got shape {data.shape}")
        object.__setattr__(self, "amplitudes", data)

    @classmethod
    def normalized(cls, amplitudes) -> StateVector:
        """Build a state after rescaling ``amplitudes`` to unit norm."""
        vec = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValidationError("cannot normalize the zero vector")
        return cls(vec / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def is_normalized(self) -> bool:
        return abs(float(np.sum(np.abs(self.amplitudes) ** 2)) - 1.0) <= NORM_TOL

    def require_normalized(self) -> StateVector:
        if not self.is_normalized:
            raise ValidationError(f"state is not normalized (norm {self.norm!r})")
        return self

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return np.array_equal(self.amplitudes, other.amplitudes)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive, unit-trace operator.

    Checked on construction: Hermitian residue, trace, smallest eigenvalue
    and purity, each within 1e-9.
    """

    matrix: np.ndarray

    def __post_init__(self):
        data = _frozen(self.matrix)
        _square(data, "density matrix")
        herm = np.max(np.abs(data - data.conj().T))
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"density matrix is not Hermitian (max deviation {herm:.3g})")
        tr = np.trace(data)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace is {tr.real:.12g}, expected 1")
        # symmetrize before eigvalsh so sub-tolerance skew does not leak in
        evals = np.linalg.eigvalsh(0.5 * (data + data.conj().T))
        if evals[0] < -EIG_TOL:
            raise ValidationError(f"density matrix is not positive (min eigenvalue {evals[0]:.3g})")
        pur = float(np.real(np.sum(data * data.T)))
        if pur > 1.0 + TRACE_TOL:
            raise ValidationError(f"purity {pur!r} exceeds 1")
        object.__setattr__(self, "matrix", data)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def __eq__(self, other):
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian operator (within 1e-12)."""

    matrix: np.ndarray

    def __post_init__(self):
        data = _frozen(self.matrix)
        _square(data, "observable")
        herm = np.max(np.abs(data - data.conj().T))
        if herm > OBSERVABLE_TOL:
            raise ValidationError(f"observable is not Hermitian (max deviation {herm:.3g})")
        object.__setattr__(self, "matrix", data)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    __hash__ = None


SZ = Observable(np.diag([0.5, -0.5]))
SX = Observable(np.array([[0.0, 0.5], [0.5, 0.0]]))
SY = Observable(np.array([[0.0, -0.5j], [0.5j, 0.0]]))


def identity_density(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim) / dim)


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise ValidationError(f"dimension mismatch: {a} vs {b}")


def _real(value: complex, what: str) -> float:
    if abs(value.imag) > REAL_TOL:
        raise ValidationError(f"{what} has imaginary residue {value.imag:.3g}")
    return float(value.real)


def projector(psi: StateVector) -> DensityMatrix:
    """Return ``|psi><psi|``."""
    psi.require_normalized()
    amp = psi.amplitudes
    return DensityMatrix(np.outer(amp, amp.conj()))


def expectation_pure(psi: StateVector, obs: Observable) -> float:
    """Return ``<psi|O|psi>``."""
    psi.require_normalized()
    _check_dims(psi.dim, obs.dim)
    amp = psi.amplitudes
    return _real(complex(amp.conj() @ obs.matrix @ amp), "<psi|O|psi>")


def expectation_mixed(rho: DensityMatrix, obs: Observable) -> float:
    """Return ``Tr(rho O) = sum_{k,l} rho_lk O_kl``."""
    _check_dims(rho.dim, obs.dim)
    return _real(complex(np.sum(rho.matrix * obs.matrix.T)), "Tr(rho O)")


def purity(rho: DensityMatrix) -> float:
    """Return ``Tr(rho^2)``; equals 1 exactly for projectors."""
    return float(np.real(np.sum(rho.matrix * rho.matrix.T)))


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product ``a (x) b`` with composite index ``i * d2 + j``."""
    a.require_normalized()
    b.require_normalized()
    return StateVector(np.kron(a.amplitudes, b.amplitudes))


def partial_trace(rho: DensityMatrix, dims: tuple[int, int], keep: int) -> DensityMatrix:
    """Reduced density matrix of one factor of a bipartite system.

    Args:
        rho: density matrix on the composite space.
        dims: ``(d1, d2)``, with ``d1 * d2 == rho.dim``.
        keep: ``1`` keeps the first factor (traces out the second),
            ``2`` keeps the second.
    """
    d1, d2 = (int(d) for d in dims)
    if d1 < 1 or d2 < 1 or d1 * d2 != rho.dim:
        raise ValidationError(f"dimension {rho.dim} does not factor as {d1} x {d2}")
    blocks = rho.matrix.reshape(d1, d2, d1, d2)
    if keep == 1:
        reduced = np.einsum("ijkj->ik", blocks)
    elif keep == 2:
        reduced = np.einsum("ijil->jl", blocks)
    else:
        raise ValueError(f"keep must be 1 or 2, got {keep!r}")
    return DensityMatrix(reduced)


def born_probabilities(psi: StateVector) -> np.ndarray:
    """Outcome probabilities ``|c_k|^2`` for a measurement in the working basis."""
    psi.require_normalized()
    probs = np.abs(psi.amplitudes) ** 2
    return probs / probs.sum()


def lift(obs: Observable, dims: tuple[int, int], on: int = 1) -> Observable:
    """Embed a single-factor observable as ``O (x) I`` (``on=1``) or ``I (x) O``."""
    d1, d2 = dims
    if on == 1:
        _check_dims(obs.dim, d1)
        return Observable(np.kron(obs.matrix, np.eye(d2)))
    _check_dims(obs.dim, d2)
    return Observable(np.kron(np.eye(d1), obs.matrix))


def random_state(dim: int, rng: np.random.Generator) -> StateVector:
    """Haar-distributed pure state."""
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector.normalized(vec)


def random_observable(dim: int, rng: np.random.Generator) -> Observable:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return Observable(0.5 * (a + a.conj().T))


# JSON wire format: nested arrays of [re, im] pairs


def array_to_json(array: np.ndarray) -> list:
    array = np.asarray(array, dtype=complex)
    if array.ndim == 0:
        return [float(array.real), float(array.imag)]
    return [array_to_json(row) for row in array]


def array_from_json(data: Sequence) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValidationError("expected nested arrays of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def state_to_json(psi: StateVector) -> list:
    return array_to_json(psi.amplitudes)


def state_from_json(data: Sequence) -> StateVector:
    return StateVector(array_from_json(data))


def density_to_json(rho: DensityMatrix) -> list:
    return array_to_json(rho.matrix)


def density_from_json(data: Sequence) -> DensityMatrix:
    return DensityMatrix(array_from_json(data))


def observable_to_json(obs: Observable) -> list:
    return array_to_json(obs.matrix)


def observable_from_json(data: Sequence) -> Observable:
    return Observable(array_from_json(data))
