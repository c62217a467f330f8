"""Random-coefficient pure states: specs, sampling and associated densities.

Two spec families are supported:

* ``TwoLevelPolar`` -- ``alpha |+> + sqrt(1 - alpha**2) exp(i phi) |->`` with
  independent ``alpha`` (on ``[0, 1]``) and ``phi`` (on ``[-pi, pi]``).
* ``RealRemainder`` -- real ``c_1 .. c_{d-1}`` drawn independently and a last
  coordinate ``delta * sqrt(1 - sum c_i**2)`` with a fair random sign.

The density operator associated with a spec has entries
``r[l, k] = E{c_k^* c_l}``. Basis index 0 is ``|+>`` for two-level specs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np

from rcpsim import distributions as dist
from rcpsim.distributions import ScalarLaw, UnsupportedOperation
from rcpsim.quantum_core import DensityMatrix, StateVector

logger = logging.getLogger(__name__)

REJECTION_WINDOW = 10_000
MIN_ACCEPTANCE = 0.01
EQUAL_TOL = 1e-9


class SamplingError(RuntimeError):
    pass


def _within(law: ScalarLaw, lo: float, hi: float, what: str, slack: float = 1e-12) -> None:
    a, b = dist.support(law)
    if a < lo - slack or b > hi + slack:
        raise ValueError(f"{what} support [{a}, {b}] must lie in [{lo}, {hi}]")


@dataclass(frozen=True)
class TwoLevelPolar:
    alpha_law: ScalarLaw
    phase_law: ScalarLaw

    def __post_init__(self):
        _within(self.alpha_law, 0.0, 1.0, "alpha law")
        _within(self.phase_law, -math.pi, math.pi, "phase law")

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class RealRemainder:
    """Real coefficients with a signed remainder coordinate.

    ``order[i]`` is the basis index that receives the ``i``-th constructed
    coefficient; the remainder is constructed last. The identity order puts
    the remainder on the last basis vector.
    """

    laws: tuple[ScalarLaw, ...]
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        laws = tuple(self.laws)
        if len(laws) < 1:
            raise ValueError("RealRemainder needs d >= 2 (at least one free coefficient)")
        for i, law in enumerate(laws):
            _within(law, -1.0, 1.0, f"coefficient law {i}")
        d = len(laws) + 1
        order = tuple(range(d)) if self.order is None else tuple(int(i) for i in self.order)
        if sorted(order) != list(range(d)):
            raise ValueError(f"order must be a permutation of 0..{d - 1}")
        object.__setattr__(self, "laws", laws)
        object.__setattr__(self, "order", order)

    @property
    def dim(self) -> int:
        return len(self.laws) + 1


@dataclass(frozen=True)
class WriterReaderSource:
    """Spin prepared along a random field direction, read out along z.

    Not a law on ``alpha`` itself: realizations are produced by drawing the
    Euler angles and mapping ``alpha = cos(theta / 2)``, ``phi = phi_E``.
    """

    theta_law: ScalarLaw
    phi_law: ScalarLaw

    def __post_init__(self):
        _within(self.theta_law, 0.0, math.pi, "theta law")
        _within(self.phi_law, -math.pi, math.pi, "phi law")

    @property
    def dim(self) -> int:
        return 2


RcpsSpec = Union[TwoLevelPolar, RealRemainder]


@dataclass(frozen=True)
class SpecComparison:
    orders: tuple[int, ...]
    moments_a: tuple[float, ...]
    moments_b: tuple[float, ...]
    equal_flags: tuple[bool, ...]

    def as_dict(self) -> dict:
        return {
            "orders": list(self.orders),
            "moments_a": list(self.moments_a),
            "moments_b": list(self.moments_b),
            "equal": list(self.equal_flags),
        }


# --- sampling ------------------------------------------------------------------


@dataclass
class Realizations:
    """A batch of sampled amplitude vectors, one per row."""

    amplitudes: np.ndarray
    rejected: int = 0
    attempts: int = 0

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.attempts if self.attempts else 0.0


def _polar_rows(alpha: np.ndarray, phi: np.ndarray) -> np.ndarray:
    alpha = np.clip(alpha, 0.0, 1.0)
    out = np.empty((alpha.size, 2), dtype=complex)
    out[:, 0] = alpha
    out[:, 1] = np.sqrt(1.0 - alpha * alpha) * np.exp(1j * phi)
    return out


def _remainder_rows(spec: RealRemainder, n: int, rng: np.random.Generator) -> Realizations:
    d = spec.dim
    free = d - 1
    rows: list[np.ndarray] = []
    have = 0
    rejected = 0
    attempts = 0
    window_attempts = 0
    window_accepted = 0
    while have < n:
        batch = max(n - have, 64) if free == 1 else max(2 * (n - have), 1024)
        coeffs = np.column_stack([dist.sample(law, rng, batch) for law in spec.laws])
        sq = np.sum(coeffs * coeffs, axis=1)
        ok = sq <= 1.0
        attempts += batch
        window_attempts += batch
        window_accepted += int(ok.sum())
        rejected += int((~ok).sum())
        if window_attempts >= REJECTION_WINDOW:
            if window_accepted < MIN_ACCEPTANCE * window_attempts:
                raise SamplingError(
                    f"rejection rate {1 - window_accepted / window_attempts:.4f} over "
                    f"{window_attempts} attempts: coefficient laws too wide for sum(c_i^2) <= 1"
                )
            window_attempts = window_accepted = 0
        coeffs, sq = coeffs[ok], sq[ok]
        sign = np.where(rng.random(coeffs.shape[0]) < 0.5, -1.0, 1.0)
        last = sign * np.sqrt(np.clip(1.0 - sq, 0.0, None))
        rows.append(np.column_stack([coeffs, last]))
        have += coeffs.shape[0]
    built = np.concatenate(rows)[:n]
    out = np.empty((n, d), dtype=complex)
    out[:, list(spec.order)] = built
    if rejected:
        logger.debug("rejected %d of %d coefficient draws", rejected, attempts)
    return Realizations(out, rejected, attempts)


def sample_realizations(spec, n: int, rng: np.random.Generator) -> Realizations:
    """Draw ``n`` normalized amplitude vectors from ``spec``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if isinstance(spec, TwoLevelPolar):
        alpha = np.asarray(dist.sample(spec.alpha_law, rng, n), dtype=float)
        phi = np.asarray(dist.sample(spec.phase_law, rng, n), dtype=float)
        return Realizations(_polar_rows(alpha, phi), 0, n)
    if isinstance(spec, WriterReaderSource):
        theta = np.asarray(dist.sample(spec.theta_law, rng, n), dtype=float)
        phi = np.asarray(dist.sample(spec.phi_law, rng, n), dtype=float)
        return Realizations(_polar_rows(np.cos(theta / 2.0), phi), 0, n)
    if isinstance(spec, RealRemainder):
        return _remainder_rows(spec, n, rng)
    raise TypeError(f"not an RCPS spec: {type(spec).__name__}")


def sample_realization(spec, rng: np.random.Generator) -> StateVector:
    return StateVector(sample_realizations(spec, 1, rng).amplitudes[0]).require_normalized()


# --- densities -----------------------------------------------------------------


def analytic_density(spec: RcpsSpec) -> DensityMatrix:
    """Exact ``r[l, k] = E{c_k^* c_l}`` from the coefficient laws.

    Raises:
        UnsupportedOperation: for ``RealRemainder`` with ``d >= 3``, where the
            norm constraint conditions the marginals; use
            :func:`monte_carlo_density` there.
    """
    if isinstance(spec, TwoLevelPolar):
        pp = dist.raw_moment(spec.alpha_law, 2)
        cross = dist.expectation(spec.alpha_law, lambda a: a * np.sqrt(np.clip(1.0 - a * a, 0.0, None)))
        cm = dist.circular_mean(spec.phase_law)
        coh = cross * cm if cm != 0 else 0j
        r = np.array([[pp, np.conj(coh)], [coh, 1.0 - pp]], dtype=complex)
        return DensityMatrix(r)
    if isinstance(spec, RealRemainder):
        if spec.dim != 2:
            raise UnsupportedOperation(
                "analytic density is only available for RealRemainder with d = 2: for d >= 3 "
                "rejection of draws with sum(c_i^2) > 1 changes the coefficient marginals; "
                "use monte_carlo_density instead"
            )
        p1 = dist.raw_moment(spec.laws[0], 2)
        diag = np.empty(2)
        diag[list(spec.order)] = [p1, 1.0 - p1]
        return DensityMatrix(np.diag(diag).astype(complex))
    raise UnsupportedOperation(f"no analytic density for {type(spec).__name__}")


def empirical_density(amplitudes: np.ndarray) -> np.ndarray:
    """Average of ``|c><c|`` over rows, i.e. ``r[l, k] = mean(c_l c_k^*)``."""
    amps = np.asarray(amplitudes)
    r = amps.T @ amps.conj() / amps.shape[0]
    # exact Hermiticity and unit trace by construction
    r = 0.5 * (r + r.conj().T)
    return r / np.trace(r).real


def empirical_density_se(amplitudes: np.ndarray) -> np.ndarray:
    """Entrywise standard error (real and imaginary parts combined) of the MC mean."""
    amps = np.asarray(amplitudes)
    n = amps.shape[0]
    outer = amps[:, :, None] * amps.conj()[:, None, :]
    var = outer.real.var(axis=0, ddof=1) + outer.imag.var(axis=0, ddof=1) if n > 1 else np.zeros(outer.shape[1:])
    return np.sqrt(var / n)


def monte_carlo_density(spec, n_samples: int, rng: np.random.Generator) -> DensityMatrix:
    """Average of projectors over ``n_samples`` sampled realizations."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    draws = sample_realizations(spec, n_samples, rng)
    return DensityMatrix(empirical_density(draws.amplitudes))


# --- moments and comparisons ------------------------------------------------


def outcome_probability_moment(spec: RcpsSpec, k: int) -> float:
    """``E{p_+**k}`` where ``p_+ = alpha**2`` is the random ``|+>`` probability."""
    if not isinstance(spec, TwoLevelPolar):
        raise UnsupportedOperation("outcome-probability moments need a TwoLevelPolar spec")
    return dist.raw_moment(spec.alpha_law, 2 * k)


def compare_specs(a: RcpsSpec, b: RcpsSpec, max_order: int) -> SpecComparison:
    orders = tuple(range(1, max_order + 1))
    ma = tuple(outcome_probability_moment(a, k) for k in orders)
    mb = tuple(outcome_probability_moment(b, k) for k in orders)
    flags = tuple(abs(x - y) <= EQUAL_TOL for x, y in zip(ma, mb))
    return SpecComparison(orders, ma, mb, flags)


# --- rho -> RCPS ---------------------------------------------------------------


def rcps_from_density(eigenvalues: Sequence[float], family: str) -> RcpsSpec:
    """Build an RCPS whose density operator is ``diag(eigenvalues)``.

    ``gaussian`` / ``laplace`` return a ``RealRemainder`` with centered
    truncated laws on ``[-1, 1]``; eigenvalues are processed in ascending
    order so the largest one lands on the remainder coordinate, and the
    spec's ``order`` maps each constructed coefficient back to its basis
    index. ``generic`` (``d = 2`` only) returns
    ``TwoLevelPolar(Constant(sqrt(p_0)), Uniform(-pi, pi))``.

    Raises:
        InfeasibleTarget: a non-remainder eigenvalue is ``>= 1/3``.
    """
    p = np.asarray(eigenvalues, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("need at least two eigenvalues")
    if np.any(p < 0) or abs(math.fsum(p) - 1.0) > 1e-12:
        raise ValueError("eigenvalues must be non-negative and sum to 1")
    if family == "generic":
        if p.size != 2:
            raise UnsupportedOperation("generic construction is only implemented for d = 2")
        return TwoLevelPolar(dist.Constant(math.sqrt(p[0])), dist.Uniform(-math.pi, math.pi))
    if family not in ("gaussian", "laplace"):
        raise ValueError(f"unknown family {family!r}")
    order = tuple(int(i) for i in np.argsort(p, kind="stable"))
    laws = []
    for idx in order[:-1]:
        if p[idx] == 0:
            laws.append(dist.Constant(0.0))
        else:
            laws.append(dist.solve_scale_for_target_second_moment(family, float(p[idx])))
    return RealRemainder(tuple(laws), order)


# --- JSON ----------------------------------------------------------------------


def spec_to_dict(spec) -> dict:
    if isinstance(spec, TwoLevelPolar):
        return {
            "type": "two_level_polar",
            "alpha_law": dist.law_to_dict(spec.alpha_law),
            "phase_law": dist.law_to_dict(spec.phase_law),
        }
    if isinstance(spec, RealRemainder):
        return {
            "type": "real_remainder",
            "laws": [dist.law_to_dict(law) for law in spec.laws],
            "order": list(spec.order),
        }
    if isinstance(spec, WriterReaderSource):
        return {
            "type": "writer_reader",
            "theta_law": dist.law_to_dict(spec.theta_law),
            "phi_law": dist.law_to_dict(spec.phi_law),
        }
    raise TypeError(f"not an RCPS spec: {type(spec).__name__}")


def spec_from_dict(data: dict):
    kind = data.get("type")
    if kind == "two_level_polar":
        return TwoLevelPolar(dist.law_from_dict(data["alpha_law"]), dist.law_from_dict(data["phase_law"]))
    if kind == "real_remainder":
        laws = tuple(dist.law_from_dict(x) for x in data["laws"])
        return RealRemainder(laws, tuple(data["order"]) if data.get("order") is not None else None)
    if kind == "writer_reader":
        return WriterReaderSource(dist.law_from_dict(data["theta_law"]), dist.law_from_dict(data["phi_law"]))
    raise ValueError(f"unknown spec type {kind!r}")


def spec_digest(spec) -> str:
    """SHA-256 of the canonical JSON form of ``spec``."""
    text = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# --- the degenerate pair ------------------------------------------------------


def degenerate_pair() -> tuple[TwoLevelPolar, TwoLevelPolar]:
    """Two uniform-phase spin states sharing ``E{alpha^2} = 0.2525``.

    A: ``alpha`` in {0.45, 0.55} with equal weights.
    B: ``alpha`` = 0.9 w.p. 97/320, 0.1 w.p. 223/320.
    """
    phase = dist.Uniform(-math.pi, math.pi)
    a = TwoLevelPolar(dist.Discrete(((0.45, 0.5), (0.55, 0.5))), phase)
    b = TwoLevelPolar(dist.Discrete(((0.9, 97 / 320), (0.1, 223 / 320))), phase)
    return a, b
