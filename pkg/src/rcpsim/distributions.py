"""Probability laws for random state coefficients and phases.

Five law types share a small functional API (``pdf``, ``raw_moment``,
``expectation``, ``sample``, ``circular_mean``). Truncated laws are
parametrized by the *parent* location and scale: a ``TruncatedGaussian``
with ``loc=0.6, scale=0.15`` on ``[0, 1]`` has density proportional to
``exp(-(x - 0.6)**2 / (2 * 0.15**2))`` on the support, and its mean and
standard deviation are not 0.6 and 0.15.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from rcpsim.quadrature import integrate

WEIGHT_TOL = 1e-12


class UnsupportedOperation(TypeError):
    pass


class InfeasibleTarget(ValueError):
    """A requested moment cannot be reached by the law family on its support."""

    def __init__(self, message: str, supremum: float):
        super().__init__(message)
        self.supremum = supremum


def _check_interval(lo: float, hi: float) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("support bounds must be finite")
    if not lo < hi:
        raise ValueError(f"support must satisfy lo < hi, got [{lo}, {hi}]")


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("constant must be finite")


@dataclass(frozen=True)
class Discrete:
    """Finitely many ``(value, weight)`` atoms; weights sum to 1."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(v), float(w)) for v, w in self.points)
        if not pts:
            raise ValueError("discrete law needs at least one point")
        if any(w < 0 or not math.isfinite(w) or not math.isfinite(v) for v, w in pts):
            raise ValueError("discrete weights must be finite and non-negative")
        total = math.fsum(w for _, w in pts)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"discrete weights sum to {total!r}, expected 1")
        object.__setattr__(self, "points", pts)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.points])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.points])


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


@dataclass(frozen=True)
class TruncatedGaussian:
    loc: float
    scale: float
    lo: float
    hi: float

    def __post_init__(self):
        _check_interval(self.lo, self.hi)
        if not (self.scale > 0 and math.isfinite(self.scale) and math.isfinite(self.loc)):
            raise ValueError("scale must be positive and finite")


@dataclass(frozen=True)
class TruncatedLaplace:
    loc: float
    scale: float
    lo: float
    hi: float

    def __post_init__(self):
        _check_interval(self.lo, self.hi)
        if not (self.scale > 0 and math.isfinite(self.scale) and math.isfinite(self.loc)):
            raise ValueError("scale must be positive and finite")


ScalarLaw = Union[Constant, Discrete, Uniform, TruncatedGaussian, TruncatedLaplace]
Continuous = (Uniform, TruncatedGaussian, TruncatedLaplace)
_TRUNCATED = (TruncatedGaussian, TruncatedLaplace)


def support(law: ScalarLaw) -> tuple[float, float]:
    if isinstance(law, Constant):
        return law.value, law.value
    if isinstance(law, Discrete):
        vals = law.values
        return float(vals.min()), float(vals.max())
    return law.lo, law.hi


# --- unnormalized densities ------------------------------------------------
#
# Truncated kernels are shifted so their maximum over the support is 1.
# This keeps far-truncated laws (location well outside the support, tiny
# scale) from underflowing to 0/0.


def _nearest(law, x0: float) -> float:
    return min(max(x0, law.lo), law.hi)


def _kernel(law) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(law, Uniform):
        return lambda x: np.ones_like(x)
    near = _nearest(law, law.loc)
    if isinstance(law, TruncatedGaussian):
        floor = (near - law.loc) ** 2
        two_var = 2.0 * law.scale**2
        return lambda x: np.exp(-((x - law.loc) ** 2 - floor) / two_var)
    floor = abs(near - law.loc)
    return lambda x: np.exp(-(np.abs(x - law.loc) - floor) / law.scale)


def _breakpoints(law) -> list[float]:
    if isinstance(law, Uniform):
        return []
    mu, s = law.loc, law.scale
    near = _nearest(law, mu)
    # decay length of the kernel at its peak inside the support
    gap = abs(near - mu)
    length = s if isinstance(law, TruncatedLaplace) or gap <= s else s * s / gap
    pts = [mu]
    for k in (0.5, 1, 2, 4, 8, 16, 32, 64):
        pts += [mu - k * s, mu + k * s, near - k * length, near + k * length]
    return pts


def _normalized_integrals(law, funcs: Sequence[Callable[[np.ndarray], np.ndarray]]) -> np.ndarray:
    """``E{f(X)}`` for each ``f`` as ratios of integrals sharing one node set."""
    kern = _kernel(law)

    def stacked(x):
        w = kern(x)
        return np.stack([w] + [w * f(x) for f in funcs], axis=-1)

    vals = integrate(stacked, law.lo, law.hi, breakpoints=_breakpoints(law), tol=1e-13)
    return vals[1:] / vals[0]


def _mass(law) -> float:
    """Integral of the shifted kernel over the support."""
    return float(integrate(_kernel(law), law.lo, law.hi, breakpoints=_breakpoints(law), tol=1e-13))


def pdf(law: ScalarLaw, x) -> np.ndarray | float:
    """Normalized density of a continuous law; zero outside the support."""
    if not isinstance(law, Continuous):
        raise UnsupportedOperation(f"{type(law).__name__} has no density")
    xs = np.asarray(x, dtype=float)
    inside = (xs >= law.lo) & (xs <= law.hi)
    if isinstance(law, Uniform):
        out = np.where(inside, 1.0 / (law.hi - law.lo), 0.0)
    else:
        out = np.where(inside, _kernel(law)(np.clip(xs, law.lo, law.hi)) / _mass(law), 0.0)
    return float(out) if out.ndim == 0 else out


def expectation(law: ScalarLaw, func: Callable[[np.ndarray], np.ndarray]) -> float:
    """``E{func(X)}``; exact sums for atomic laws, quadrature otherwise."""
    if isinstance(law, Constant):
        return float(func(np.array([law.value]))[0])
    if isinstance(law, Discrete):
        return math.fsum(w * float(f) for w, f in zip(law.weights, func(law.values)))
    return float(_normalized_integrals(law, [func])[0])


def raw_moment(law: ScalarLaw, k: int) -> float:
    """``E{X**k}`` for integer ``k >= 1``."""
    if k < 1 or int(k) != k:
        raise ValueError(f"moment order must be a positive integer, got {k!r}")
    k = int(k)
    if isinstance(law, Constant):
        return law.value**k
    if isinstance(law, Discrete):
        return math.fsum(w * v**k for v, w in law.points)
    if isinstance(law, Uniform):
        return (law.hi ** (k + 1) - law.lo ** (k + 1)) / ((k + 1) * (law.hi - law.lo))
    return float(_normalized_integrals(law, [lambda x: x**k])[0])


def raw_moments(law: ScalarLaw, orders: Sequence[int]) -> np.ndarray:
    """Several raw moments at once; continuous truncated laws share quadrature nodes."""
    if isinstance(law, _TRUNCATED):
        return _normalized_integrals(law, [lambda x, k=k: x**k for k in orders])
    return np.array([raw_moment(law, k) for k in orders])


def truncated_gaussian_moments_closed_form(law: TruncatedGaussian, kmax: int) -> np.ndarray:
    """Raw moments ``1..kmax`` from the erf-based recurrence.

    ``m_k = loc * m_{k-1} + (k-1) * scale**2 * m_{k-2}
            - scale * (hi**(k-1) * phi(b) - lo**(k-1) * phi(a)) / Z``
    with standardized bounds ``a, b``, standard normal density ``phi`` and
    truncation mass ``Z = Phi(b) - Phi(a)``. Loses accuracy when ``Z`` is
    tiny; intended as an independent check on moderate parameters.
    """
    mu, s = law.loc, law.scale
    a, b = (law.lo - mu) / s, (law.hi - mu) / s
    # erfc-based mass is accurate in either tail
    if a >= 0:
        z = 0.5 * (special.erfc(a / math.sqrt(2)) - special.erfc(b / math.sqrt(2)))
    else:
        z = 0.5 * (special.erfc(-b / math.sqrt(2)) - special.erfc(-a / math.sqrt(2)))
    phi_a = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
    phi_b = math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi)
    moments = [1.0]
    prev2 = 0.0
    for k in range(1, kmax + 1):
        boundary = s * (law.hi ** (k - 1) * phi_b - law.lo ** (k - 1) * phi_a) / z
        m = mu * moments[-1] + (k - 1) * s * s * prev2 - boundary
        prev2 = moments[-1]
        moments.append(m)
    return np.array(moments[1:])


# --- sampling ----------------------------------------------------------------


def _gaussian_ppf(law: TruncatedGaussian, u: np.ndarray) -> np.ndarray:
    mu, s = law.loc, law.scale
    a, b = (law.lo - mu) / s, (law.hi - mu) / s
    flip = a > 0
    if flip:
        # work in the lower tail, where log_ndtr keeps precision
        a, b = -b, -a
    log_fa = special.log_ndtr(a)
    log_fb = special.log_ndtr(b)
    # log(F(a) + u (F(b) - F(a))) = log F(b) + log(u + (1-u) F(a)/F(b))
    log_target = log_fb + np.log(u + (1.0 - u) * np.exp(log_fa - log_fb))
    z = special.ndtri_exp(log_target)
    z = np.clip(z, a, b)
    if flip:
        z = -z
    return np.clip(mu + s * z, law.lo, law.hi)


def _laplace_ppf(law: TruncatedLaplace, u: np.ndarray) -> np.ndarray:
    mu, s = law.loc, law.scale

    # CDF of the parent Laplace, split by side to avoid cancellation
    def cdf(x):
        return 0.5 * math.exp((x - mu) / s) if x < mu else 1.0 - 0.5 * math.exp(-(x - mu) / s)

    def sf(x):
        return 1.0 - 0.5 * math.exp((x - mu) / s) if x < mu else 0.5 * math.exp(-(x - mu) / s)

    if law.lo >= mu:
        # entirely right of the mode: invert the survival function
        s_lo, s_hi = sf(law.lo), sf(law.hi)
        target = s_lo - u * (s_lo - s_hi)
        x = mu - s * np.log(2.0 * target)
    elif law.hi <= mu:
        c_lo, c_hi = cdf(law.lo), cdf(law.hi)
        target = c_lo + u * (c_hi - c_lo)
        x = mu + s * np.log(2.0 * target)
    else:
        c_lo, c_hi = cdf(law.lo), cdf(law.hi)
        target = c_lo + u * (c_hi - c_lo)
        left = target < 0.5
        x = np.where(
            left,
            mu + s * np.log(2.0 * np.where(left, target, 0.25)),
            mu - s * np.log(2.0 * np.where(left, 0.25, 1.0 - target)),
        )
    return np.clip(x, law.lo, law.hi)


def sample(law: ScalarLaw, rng: np.random.Generator, size=None):
    """Draw from ``law``; truncated laws use inverse-CDF on the truncated mass."""
    if isinstance(law, Constant):
        return law.value if size is None else np.full(size, law.value, dtype=float)
    if isinstance(law, Discrete):
        return rng.choice(law.values, size=size, p=law.weights)
    if isinstance(law, Uniform):
        return rng.uniform(law.lo, law.hi, size=size)
    u = rng.random(size=size)
    if isinstance(law, TruncatedGaussian):
        out = _gaussian_ppf(law, np.asarray(u))
    else:
        out = _laplace_ppf(law, np.asarray(u))
    return float(out) if size is None else out


def circular_mean(phase_law: ScalarLaw) -> complex:
    """``E{exp(i phi)}`` for a phase law supported in ``[-pi, pi]``."""
    lo, hi = support(phase_law)
    if lo < -math.pi - 1e-12 or hi > math.pi + 1e-12:
        raise ValueError(f"phase support [{lo}, {hi}] exceeds [-pi, pi]")
    if isinstance(phase_law, Uniform):
        width = phase_law.hi - phase_law.lo
        if math.isclose(width, 2 * math.pi, rel_tol=0, abs_tol=1e-12):
            return 0j
        re = (math.sin(phase_law.hi) - math.sin(phase_law.lo)) / width
        im = (math.cos(phase_law.lo) - math.cos(phase_law.hi)) / width
        return complex(re, im)
    if isinstance(phase_law, Constant):
        return complex(math.cos(phase_law.value), math.sin(phase_law.value))
    return complex(expectation(phase_law, np.cos), expectation(phase_law, np.sin))


# --- inverse problem on the scale ------------------------------------------

SCALE_BRACKET = (1e-6, 1e3)


def solve_scale_for_target_second_moment(
    family: str, target: float, support: tuple[float, float] = (-1.0, 1.0)
) -> TruncatedGaussian | TruncatedLaplace:
    """Centered truncated law on a symmetric support with ``E{X**2} == target``.

    The second moment grows monotonically with the scale and tends to that
    of the uniform law, ``a**2 / 3`` on ``[-a, a]``, which is never attained.

    Raises:
        InfeasibleTarget: ``target`` at or above what the largest scale reaches.
    """
    lo, hi = support
    if not math.isclose(lo, -hi) or hi <= 0:
        raise ValueError("support must be symmetric about zero")
    if not target > 0:
        raise ValueError("target second moment must be positive")
    if family == "gaussian":
        make = lambda s: TruncatedGaussian(0.0, s, lo, hi)
    elif family == "laplace":
        make = lambda s: TruncatedLaplace(0.0, s, lo, hi)
    else:
        raise ValueError(f"unknown family {family!r}")

    supremum = hi * hi / 3.0
    if target >= supremum:
        raise InfeasibleTarget(
            f"{family} second moment {target} unreachable on [{lo}, {hi}] (supremum {supremum:.6g})",
            supremum,
        )
    log_lo, log_hi = (math.log(s) for s in SCALE_BRACKET)
    m_hi = raw_moment(make(SCALE_BRACKET[1]), 2)
    if target > m_hi:
        raise InfeasibleTarget(
            f"{family} second moment {target} exceeds {m_hi:.12g} reached at scale {SCALE_BRACKET[1]}",
            supremum,
        )
    law = make(SCALE_BRACKET[1])
    for _ in range(200):
        mid = 0.5 * (log_lo + log_hi)
        law = make(math.exp(mid))
        resid = raw_moment(law, 2) - target
        if abs(resid) <= 1e-12:
            break
        if resid > 0:
            log_hi = mid
        else:
            log_lo = mid
    return law


# --- JSON ----------------------------------------------------------------------


def law_to_dict(law: ScalarLaw) -> dict:
    if isinstance(law, Constant):
        return {"type": "constant", "value": law.value}
    if isinstance(law, Discrete):
        return {"type": "discrete", "points": [[v, w] for v, w in law.points]}
    if isinstance(law, Uniform):
        return {"type": "uniform", "lo": law.lo, "hi": law.hi}
    kind = "truncated_gaussian" if isinstance(law, TruncatedGaussian) else "truncated_laplace"
    return {"type": kind, "loc": law.loc, "scale": law.scale, "lo": law.lo, "hi": law.hi}


def law_from_dict(data: dict) -> ScalarLaw:
    kind = data.get("type")
    if kind == "constant":
        return Constant(float(data["value"]))
    if kind == "discrete":
        return Discrete(tuple((float(v), float(w)) for v, w in data["points"]))
    if kind == "uniform":
        return Uniform(float(data["lo"]), float(data["hi"]))
    if kind in ("truncated_gaussian", "truncated_laplace"):
        cls = TruncatedGaussian if kind == "truncated_gaussian" else TruncatedLaplace
        return cls(float(data["loc"]), float(data["scale"]), float(data["lo"]), float(data["hi"]))
    raise ValueError(f"unknown law type {kind!r}")
