"""Recover truncated-Gaussian parameters from outcome-probability moments.

The amplitude ``alpha`` follows a Gaussian with parent location ``eta`` and
scale ``sigma`` truncated to ``[0, 1]``. Measuring ``s_z`` only pins down
``E{p_+} = E{alpha^2}``, a single equation in two unknowns; adding the
second moment ``E{p_+^2} = E{alpha^4}`` closes the system. Solving it is a
bounded grid search followed by Nelder-Mead refinement from the best cells.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from rcpsim.distributions import TruncatedGaussian, raw_moments

FD_STEP = 1e-5


class FeasibilityViolation(enum.Enum):
    M1_RANGE = "m1 outside [0, 1]"
    JENSEN = "Jensen bound violated: m2 < m1^2"
    SUPPORT = "support bound violated: m2 > m1"


class InfeasibleMoments(ValueError):
    def __init__(self, violation: FeasibilityViolation, m1: float, m2: float):
        super().__init__(f"{violation.value} (m1={m1!r}, m2={m2!r})")
        self.violation = violation


def forward_moments(eta: float, sigma: float) -> tuple[float, float]:
    """``(E{alpha^2}, E{alpha^4})`` for the Gaussian ``(eta, sigma)`` truncated to ``[0, 1]``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    m2, m4 = raw_moments(TruncatedGaussian(eta, sigma, 0.0, 1.0), [2, 4])
    # alpha^4 <= alpha^2 pointwise on [0, 1]; clip quadrature residue
    return float(m2), float(min(m4, m2))


def feasibility_check(m1: float, m2: float) -> FeasibilityViolation | None:
    """Return the first violated moment inequality, or ``None`` when feasible."""
    if not (0.0 <= m1 <= 1.0) or not math.isfinite(m1):
        return FeasibilityViolation.M1_RANGE
    if m2 < m1 * m1:
        return FeasibilityViolation.JENSEN
    if m2 > m1:
        return FeasibilityViolation.SUPPORT
    return None


@dataclass(frozen=True)
class FitProblem:
    m1: float
    m2: float
    eta_bounds: tuple[float, float] = (-0.5, 1.5)
    sigma_bounds: tuple[float, float] = (1e-3, 2.0)
    grid_resolution: tuple[int, int] = (40, 40)
    tolerance: float = 1e-10
    max_iterations: int = 500
    n_starts: int = 5

    def __post_init__(self):
        if not self.eta_bounds[0] < self.eta_bounds[1]:
            raise ValueError("eta bounds must be ordered")
        if not 0 < self.sigma_bounds[0] < self.sigma_bounds[1]:
            raise ValueError("sigma bounds must be ordered and positive")


@dataclass(frozen=True)
class Candidate:
    eta: float
    sigma: float
    residual: float


@dataclass(frozen=True)
class FitResult:
    eta_hat: float
    sigma_hat: float
    residual_norm: float
    converged: bool
    at_boundary: bool
    candidates: tuple[Candidate, ...]
    sensitivity: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "eta_hat": self.eta_hat,
            "sigma_hat": self.sigma_hat,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "at_boundary": self.at_boundary,
            "candidates": [{"eta": c.eta, "sigma": c.sigma, "residual": c.residual} for c in self.candidates],
            "sensitivity": np.asarray(self.sensitivity).tolist(),
        }


def _scales(m1: float, m2: float) -> tuple[float, float]:
    # relative residuals; guard exact zeros
    return max(abs(m1), 1e-300), max(abs(m2), 1e-300)


def residual_vector(eta: float, sigma: float, m1: float, m2: float) -> np.ndarray:
    f1, f2 = forward_moments(eta, sigma)
    s1, s2 = _scales(m1, m2)
    return np.array([(f1 - m1) / s1, (f2 - m2) / s2])


def sensitivity_matrix(eta: float, sigma: float, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian ``d(E{alpha^2}, E{alpha^4}) / d(eta, sigma)``."""
    jac = np.empty((2, 2))
    h_s = min(step, 0.5 * sigma)
    for col, (de, ds) in enumerate(((step, 0.0), (0.0, h_s))):
        hi = np.array(forward_moments(eta + de, sigma + ds))
        lo = np.array(forward_moments(eta - de, sigma - ds))
        jac[:, col] = (hi - lo) / (2 * (de + ds))
    return jac


def _grid(problem: FitProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_eta, n_sigma = problem.grid_resolution
    etas = np.linspace(*problem.eta_bounds, n_eta)
    sigmas = np.geomspace(*problem.sigma_bounds, n_sigma)
    obj = np.empty((n_eta, n_sigma))
    for i, e in enumerate(etas):
        for j, s in enumerate(sigmas):
            obj[i, j] = float(np.sum(residual_vector(e, s, problem.m1, problem.m2) ** 2))
    return etas, sigmas, obj


def _refine(problem: FitProblem, eta0: float, sigma0: float) -> Candidate:
    lo_e, hi_e = problem.eta_bounds
    lo_s, hi_s = (math.log(s) for s in problem.sigma_bounds)

    def objective(x):
        return float(np.sum(residual_vector(x[0], math.exp(x[1]), problem.m1, problem.m2) ** 2))

    x = np.array([eta0, math.log(sigma0)])
    best = objective(x)
    budget = problem.max_iterations
    # restarts rebuild the simplex, which stalls near the optimum otherwise
    while budget > 0:
        res = optimize.minimize(
            objective,
            x,
            method="Nelder-Mead",
            bounds=[(lo_e, hi_e), (lo_s, hi_s)],
            options={
                "maxiter": budget,
                "xatol": 1e-13,
                "fatol": 1e-28,
                "initial_simplex": _simplex(x, (hi_e - lo_e) * 1e-2, 0.05),
            },
        )
        budget -= max(res.nit, 1)
        improved = res.fun < best * (1 - 1e-6)
        if res.fun <= best:
            x, best = res.x, res.fun
        if math.sqrt(best) <= problem.tolerance or not improved:
            break
    return Candidate(float(x[0]), float(math.exp(x[1])), math.sqrt(best))


def _simplex(x: np.ndarray, d_eta: float, d_log_sigma: float) -> np.ndarray:
    return np.array([x, x + [d_eta, 0.0], x + [0.0, d_log_sigma]])


def _on_boundary(problem: FitProblem, c: Candidate) -> bool:
    rel = 1e-6
    (e0, e1), (s0, s1) = problem.eta_bounds, problem.sigma_bounds
    return (
        abs(c.eta - e0) <= rel * (e1 - e0)
        or abs(c.eta - e1) <= rel * (e1 - e0)
        or abs(math.log(c.sigma / s0)) <= rel
        or abs(math.log(c.sigma / s1)) <= rel
    )


def _stationary(problem: FitProblem, c: Candidate) -> bool:
    jac = sensitivity_matrix(c.eta, c.sigma)
    s1, s2 = _scales(problem.m1, problem.m2)
    r = residual_vector(c.eta, c.sigma, problem.m1, problem.m2)
    grad = 2 * (jac / np.array([[s1], [s2]])).T @ r
    return bool(np.max(np.abs(grad)) <= 1e-12)


def fit_truncated_gaussian(problem: FitProblem) -> FitResult:
    """Solve the two moment equations for ``(eta, sigma)``.

    Raises:
        InfeasibleMoments: ``(m1, m2)`` violates a moment inequality.
    """
    violation = feasibility_check(problem.m1, problem.m2)
    if violation is not None:
        raise InfeasibleMoments(violation, problem.m1, problem.m2)

    etas, sigmas, obj = _grid(problem)
    flat = np.argsort(obj, axis=None, kind="stable")[: problem.n_starts]
    starts = [(etas[i], sigmas[j]) for i, j in zip(*np.unravel_index(flat, obj.shape))]

    found: list[Candidate] = []
    for e0, s0 in starts:
        c = _refine(problem, float(e0), float(s0))
        if not any(abs(c.eta - o.eta) < 1e-6 and abs(c.sigma - o.sigma) < 1e-6 for o in found):
            found.append(c)

    tol = problem.tolerance
    # residuals under the tolerance tie; then smaller sigma, then smaller eta
    found.sort(key=lambda c: (max(c.residual, tol), c.sigma, c.eta))
    best = found[0]
    boundary = _on_boundary(problem, best)
    converged = best.residual <= tol or (not boundary and _stationary(problem, best))
    return FitResult(
        eta_hat=best.eta,
        sigma_hat=best.sigma,
        residual_norm=best.residual,
        converged=converged,
        at_boundary=boundary,
        candidates=tuple(found),
        sensitivity=sensitivity_matrix(best.eta, best.sigma),
    )


# --- equal-first-moment families ----------------------------------------------


@dataclass(frozen=True)
class DegeneratePair:
    first: tuple[float, float]
    second: tuple[float, float]
    moments_first: tuple[float, float]
    moments_second: tuple[float, float]

    @property
    def delta_m1(self) -> float:
        return abs(self.moments_first[0] - self.moments_second[0])

    @property
    def delta_m2(self) -> float:
        return abs(self.moments_first[1] - self.moments_second[1])


def eta_for_first_moment(m1: float, sigma: float, eta_bounds=(-0.5, 1.5), n_scan: int = 41) -> list[float]:
    """All ``eta`` in range with ``E{alpha^2}(eta, sigma) == m1``, by scan and bracketing."""
    etas = np.linspace(*eta_bounds, n_scan)
    vals = np.array([forward_moments(e, sigma)[0] - m1 for e in etas])
    roots = []
    for a, b, fa, fb in zip(etas[:-1], etas[1:], vals[:-1], vals[1:]):
        if fa == 0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(optimize.brentq(lambda e: forward_moments(e, sigma)[0] - m1, a, b, xtol=1e-15, rtol=1e-15))
    return roots


def scan_degenerate_pairs(eta: float, sigma: float, sigmas=None, eta_bounds=(-0.5, 1.5)) -> list[DegeneratePair]:
    """Parameter pairs sharing ``E{alpha^2}`` with ``(eta, sigma)``, sorted by ``E{alpha^4}`` gap.

    Every returned partner gives the same density operator, hence the same
    ``E{s_z}``, while its second outcome-probability moment differs.
    """
    ref = forward_moments(eta, sigma)
    if sigmas is None:
        sigmas = np.geomspace(0.01, 1.0, 25)
    pairs = []
    for s in sigmas:
        if math.isclose(s, sigma):
            continue
        for e in eta_for_first_moment(ref[0], float(s), eta_bounds):
            pairs.append(DegeneratePair((eta, sigma), (e, float(s)), ref, forward_moments(e, float(s))))
    pairs.sort(key=lambda p: -p.delta_m2)
    return pairs
