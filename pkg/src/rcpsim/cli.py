"""Command-line driver: ``rcpsim <command> [options]``.

Commands read RCPS specs as JSON and write JSON reports (and CSV records)
into ``--out``. A ``--config`` JSON file may supply any option; explicit
flags take precedence.

Spec JSON::

    {"type": "two_level_polar",
     "alpha_law": {"type": "discrete", "points": [[0.45, 0.5], [0.55, 0.5]]},
     "phase_law": {"type": "uniform", "lo": -3.141592653589793, "hi": 3.141592653589793}}

    {"type": "real_remainder", "laws": [<law>, ...], "order": [0, 1, ...]}

Law JSON: ``{"type": "constant", "value": v}``,
``{"type": "discrete", "points": [[value, weight], ...]}``,
``{"type": "uniform", "lo": a, "hi": b}``,
``{"type": "truncated_gaussian" | "truncated_laplace", "loc": m, "scale": s, "lo": a, "hi": b}``.

Exit codes: 0 success, 2 validation or infeasibility, 3 non-convergence,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from rcpsim import distributions as dist
from rcpsim.distributions import InfeasibleTarget, UnsupportedOperation
from rcpsim.dynamics import ensemble_consistency, evolve_density, lvn_residual, zeeman
from rcpsim.estimation import FitProblem, InfeasibleMoments, fit_truncated_gaussian
from rcpsim.measurement import (
    ExperimentDesign,
    estimate_probability_moments,
    mean_sz_estimate,
    read_record,
    run_experiment,
    write_record,
)
from rcpsim.quantum_core import SZ, DensityMatrix, ValidationError, density_to_json, expectation_mixed, purity
from rcpsim.rcps import (
    RealRemainder,
    SamplingError,
    TwoLevelPolar,
    WriterReaderSource,
    analytic_density,
    compare_specs,
    degenerate_pair,
    empirical_density,
    empirical_density_se,
    monte_carlo_density,
    rcps_from_density,
    sample_realizations,
    spec_from_dict,
    spec_to_dict,
)

logger = logging.getLogger("rcpsim")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4

DEFAULTS = {
    "seed": 0,
    "realizations": 10_000,
    "shots": 50,
    "out": ".",
    "orders": "1,2",
    "gb0": 1.0,
    "theta": 0.0,
    "phi": 0.0,
    "time": 1.0,
    "dt": 1e-4,
    "family": "gaussian",
    "workers": 1,
    "bins": 20,
    "eta": 0.6,
    "sigma": 0.15,
}

REFERENCE_ORDER1 = 0.2525
REFERENCE_ORDER2 = (0.06625625, 0.19895)
REFERENCE_DENSITY = np.diag([0.2525, 0.7475])
REFERENCE_TOL = 1e-12


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}", EXIT_INVALID) from exc


def _law_arg(text: str | None, default):
    """A law given inline as JSON or as a path to a JSON file."""
    if text is None:
        return default
    text = text.strip()
    data = json.loads(text) if text.startswith("{") else _load_json(text)
    return dist.law_from_dict(data)


def _orders(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text, count: int | None = None) -> list[float]:
    if isinstance(text, (list, tuple)):
        values = [float(x) for x in text]
    else:
        values = [float(x) for x in str(text).split(",") if x.strip()]
    if count is not None and len(values) != count:
        raise CliError(f"expected {count} comma-separated numbers, got {text!r}", EXIT_INVALID)
    return values


def _estimates_dict(record, orders) -> list[dict]:
    return [e.as_dict() for e in estimate_probability_moments(record, orders)]


# --- demos ---------------------------------------------------------------------


def demo_degenerate_pair(out: str | Path, seed: int = 0, realizations: int = 100_000, shots: int = 50) -> dict:
    """Two spin states with one density operator but different fourth moments.

    Writes ``degenerate_pair.json`` into ``out``; ``shots == 0`` skips the
    simulated experiment.
    """
    spec_a, spec_b = degenerate_pair()
    rho_a, rho_b = analytic_density(spec_a), analytic_density(spec_b)
    cmp = compare_specs(spec_a, spec_b, 2)
    report = {
        "specs": {"a": spec_to_dict(spec_a), "b": spec_to_dict(spec_b)},
        "analytic": {
            "density_a": density_to_json(rho_a),
            "density_b": density_to_json(rho_b),
            "order1": [cmp.moments_a[0], cmp.moments_b[0]],
            "order2": [cmp.moments_a[1], cmp.moments_b[1]],
            "equal": list(cmp.equal_flags),
            "mean_sz": [expectation_mixed(rho_a, SZ), expectation_mixed(rho_b, SZ)],
        },
        "empirical": None,
    }
    if shots > 0:
        emp = {}
        for key, spec, s in (("a", spec_a, seed), ("b", spec_b, (seed + 1) % 2**64)):
            design = ExperimentDesign(realizations, shots, s)
            record = run_experiment(spec, design)
            emp[key] = {
                "seed": s,
                "estimates": _estimates_dict(record, [1, 2]),
                "mean_sz": mean_sz_estimate(record),
            }
        report["empirical"] = emp
    matches = (
        all(abs(x - REFERENCE_ORDER1) <= REFERENCE_TOL for x in report["analytic"]["order1"])
        and all(abs(x - y) <= REFERENCE_TOL for x, y in zip(report["analytic"]["order2"], REFERENCE_ORDER2))
        and np.max(np.abs(rho_a.matrix - REFERENCE_DENSITY)) <= REFERENCE_TOL
        and np.max(np.abs(rho_b.matrix - REFERENCE_DENSITY)) <= REFERENCE_TOL
    )
    report["matches_reference"] = bool(matches)
    _write_json(Path(out) / "degenerate_pair.json", report)
    return report


def demo_writer_reader(
    theta_law: dist.ScalarLaw,
    phi_law: dist.ScalarLaw,
    design: ExperimentDesign,
    out: str | Path,
    bins: int = 20,
) -> dict:
    """Spin written along a random field direction, read along ``z``.

    Writes ``writer_reader_hist.csv`` (per-realization ``k/n`` histogram) and
    ``writer_reader.json`` (moment estimates and a Monte Carlo density).
    """
    source = WriterReaderSource(theta_law, phi_law)
    record = run_experiment(source, design)
    freq = record.counts / record.shots
    hist, edges = np.histogram(freq, bins=bins, range=(0.0, 1.0))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "writer_reader_hist.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], hist):
            writer.writerow([f"{lo:.6g}", f"{hi:.6g}", int(c)])
    est = estimate_probability_moments(record, [1, 2])
    rng = np.random.Generator(np.random.Philox(key=[design.master_seed, 1]))
    rho = monte_carlo_density(source, design.realizations, rng)
    report = {
        "source": spec_to_dict(source),
        "design": {"m": design.realizations, "n": design.shots_per_realization, "seed": design.master_seed},
        "estimates": [e.as_dict() for e in est],
        "mean_frequency": float(freq.mean()),
        "mean_sz": mean_sz_estimate(record),
        "monte_carlo_density": density_to_json(rho),
    }
    _write_json(out / "writer_reader.json", report)
    return report


def fit_command(
    record=None,
    *,
    simulate: dict | None = None,
    moments: tuple[float, float] | None = None,
    out: str | Path = ".",
) -> tuple[dict, int]:
    """Estimate ``E{p}``, ``E{p^2}`` from a record and fit ``(eta, sigma)``.

    Exactly one input is used, checked in this order: ``moments`` (raw
    ``(m1, m2)``), ``record`` (a :class:`MeasurementRecord` or a CSV path), or
    ``simulate`` (keys ``eta, sigma, realizations, shots, seed``).
    Returns the report and the exit code.
    """
    if moments is not None:
        m1, m2 = (float(x) for x in moments)
        report = {"moments": [{"order": 1, "value": m1}, {"order": 2, "value": m2}], "simulated_from": None}
        return _fit_and_report(m1, m2, report, Path(out))
    if record is None:
        if simulate is None:
            raise ValueError("need a record or simulation parameters")
        law = dist.TruncatedGaussian(simulate["eta"], simulate["sigma"], 0.0, 1.0)
        spec = TwoLevelPolar(law, dist.Uniform(-math.pi, math.pi))
        design = ExperimentDesign(simulate["realizations"], simulate["shots"], simulate["seed"])
        record = run_experiment(spec, design)
    elif not hasattr(record, "counts"):
        record = read_record(record)
    m1, m2 = estimate_probability_moments(record, [1, 2])
    report = {"moments": [m1.as_dict(), m2.as_dict()], "simulated_from": simulate}
    return _fit_and_report(m1.value, m2.value, report, Path(out))


def _fit_and_report(m1: float, m2: float, report: dict, out: Path) -> tuple[dict, int]:
    try:
        result = fit_truncated_gaussian(FitProblem(m1, m2))
    except InfeasibleMoments as exc:
        report["error"] = str(exc)
        _write_json(out / "fit.json", report)
        return report, EXIT_INVALID
    report["fit"] = result.as_dict()
    _write_json(out / "fit.json", report)
    return report, EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# --- argument handling --------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcpsim", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="JSON file with option values (flags win)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True, design=True):
        if spec:
            p.add_argument("--spec", help="RCPS spec JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if design:
            p.add_argument("--realizations", type=int, help="number of realizations m")
            p.add_argument("--shots", type=int, help="shots per realization n")
            p.add_argument("--workers", type=int)

    p = sub.add_parser("sample", help="draw realizations of a spec")
    common(p, design=False)
    p.add_argument("--realizations", type=int)

    p = sub.add_parser("density", help="analytic and/or Monte Carlo density operator")
    common(p, design=False)
    p.add_argument("--realizations", type=int)
    p.add_argument("--analytic-only", action="store_true", default=None)

    p = sub.add_parser("experiment", help="simulate m x n measurements and write a record")
    common(p)
    p.add_argument("--orders")

    p = sub.add_parser("fit", help="fit (eta, sigma) from a record or a simulation")
    common(p, spec=False)
    p.add_argument("--record", help="record CSV (with JSON sidecar)")
    p.add_argument("--moments", help="raw estimates m1,m2 instead of a record")
    p.add_argument("--eta", type=float)
    p.add_argument("--sigma", type=float)

    p = sub.add_parser("evolve", help="unitary evolution and Liouville-von Neumann checks")
    common(p, design=False)
    p.add_argument("--realizations", type=int)
    p.add_argument("--gb0", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--time", type=float)
    p.add_argument("--dt", type=float)

    p = sub.add_parser("demo-degenerate-pair", help="same density, different fourth moments")
    common(p, spec=False)
    p.add_argument("--analytic-only", action="store_true", default=None)

    p = sub.add_parser("demo-writer-reader", help="spin written along a random field direction")
    common(p, spec=False)
    p.add_argument("--theta-law", help="law of theta_E (inline JSON or file)")
    p.add_argument("--phi-law", help="law of phi_E (inline JSON or file)")
    p.add_argument("--bins", type=int)

    p = sub.add_parser("from-rho", help="build an RCPS for diag(eigenvalues)")
    p.add_argument("--eigenvalues", help="comma-separated probabilities")
    p.add_argument("--family", choices=["gaussian", "laplace", "generic"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--realizations", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    config = _load_json(args.config) if args.config else {}
    for key, value in vars(args).items():
        if value is None:
            if key in config:
                setattr(args, key, config[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    if getattr(args, "analytic_only", None) is None and hasattr(args, "analytic_only"):
        args.analytic_only = False
    return args


def _spec(args):
    if not args.spec:
        raise CliError("--spec is required for this command", EXIT_INVALID)
    return spec_from_dict(_load_json(args.spec))


def _dispatch(args) -> tuple[dict, int]:
    out = Path(args.out)
    cmd = args.command
    if cmd == "sample":
        spec = _spec(args)
        draws = sample_realizations(spec, args.realizations, np.random.default_rng(args.seed))
        report = {
            "spec": spec_to_dict(spec),
            "seed": args.seed,
            "rejected": draws.rejected,
            "amplitudes": [[[z.real, z.imag] for z in row] for row in draws.amplitudes],
        }
        _write_json(out / "samples.json", report)
        return {"n": len(draws.amplitudes), "rejected": draws.rejected}, EXIT_OK

    if cmd == "density":
        spec = _spec(args)
        report = {"spec": spec_to_dict(spec)}
        try:
            rho = analytic_density(spec)
            report["analytic"] = density_to_json(rho)
            report["analytic_purity"] = purity(rho)
        except UnsupportedOperation as exc:
            if args.analytic_only:
                raise CliError(str(exc), EXIT_INVALID) from exc
            report["analytic"] = None
            report["analytic_note"] = str(exc)
        if not args.analytic_only:
            draws = sample_realizations(spec, args.realizations, np.random.default_rng(args.seed))
            report["monte_carlo"] = density_to_json(DensityMatrix(empirical_density(draws.amplitudes)))
            report["monte_carlo_se"] = empirical_density_se(draws.amplitudes).tolist()
            report["n_samples"] = args.realizations
            report["rejected"] = draws.rejected
        _write_json(out / "density.json", report)
        return report, EXIT_OK

    if cmd == "experiment":
        spec = _spec(args)
        design = ExperimentDesign(args.realizations, args.shots, args.seed)
        record = run_experiment(spec, design, workers=args.workers)
        out.mkdir(parents=True, exist_ok=True)
        write_record(record, out / "record.csv")
        report = {"record": str(out / "record.csv"), "estimates": _estimates_dict(record, _orders(args.orders))}
        _write_json(out / "moments.json", report)
        return report, EXIT_OK

    if cmd == "fit":
        if args.moments:
            return fit_command(moments=_floats(args.moments, 2), out=out)
        if args.record:
            return fit_command(args.record, out=out)
        sim = {
            "eta": args.eta,
            "sigma": args.sigma,
            "realizations": args.realizations,
            "shots": args.shots,
            "seed": args.seed,
        }
        return fit_command(simulate=sim, out=out)

    if cmd == "evolve":
        spec = _spec(args)
        H = zeeman(args.gb0, args.theta, args.phi)
        try:
            rho = analytic_density(spec)
        except UnsupportedOperation:
            rho = monte_carlo_density(spec, args.realizations, np.random.default_rng(args.seed))
        evolved = evolve_density(rho, H, args.time)
        residual = lvn_residual(H, lambda s: evolve_density(rho, H, s), args.time, args.dt)
        distance = ensemble_consistency(spec, H, args.time, args.realizations, np.random.default_rng(args.seed))
        report = {
            "hamiltonian": H.to_json(),
            "time": args.time,
            "initial": density_to_json(rho),
            "evolved": density_to_json(evolved),
            "lvn_residual": residual,
            "dt": args.dt,
            "ensemble_distance": distance,
            "n_samples": args.realizations,
        }
        _write_json(out / "evolve.json", report)
        return report, EXIT_OK

    if cmd == "demo-degenerate-pair":
        shots = 0 if args.analytic_only else args.shots
        report = demo_degenerate_pair(out, args.seed, args.realizations, shots)
        return report, EXIT_OK if report["matches_reference"] else EXIT_INVALID

    if cmd == "demo-writer-reader":
        theta = _law_arg(args.theta_law, dist.Constant(math.pi / 3))
        phi = _law_arg(args.phi_law, dist.Uniform(-math.pi, math.pi))
        design = ExperimentDesign(args.realizations, args.shots, args.seed)
        return demo_writer_reader(theta, phi, design, out, bins=args.bins), EXIT_OK

    if cmd == "from-rho":
        if not args.eigenvalues:
            raise CliError("--eigenvalues is required", EXIT_INVALID)
        p = _floats(args.eigenvalues)
        spec = rcps_from_density(p, args.family)
        report = {"eigenvalues": p, "family": args.family, "spec": spec_to_dict(spec)}
        if isinstance(spec, RealRemainder) and spec.dim > 2:
            rho = monte_carlo_density(spec, args.realizations, np.random.default_rng(args.seed))
            report["density"] = density_to_json(rho)
            report["density_kind"] = "monte_carlo"
        else:
            report["density"] = density_to_json(analytic_density(spec))
            report["density_kind"] = "analytic"
        _write_json(out / "spec.json", spec_to_dict(spec))
        _write_json(out / "from_rho.json", report)
        return report, EXIT_OK

    raise CliError(f"unknown command {cmd!r}", EXIT_INVALID)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = _resolve(args)
        report, code = _dispatch(args)
    except CliError as exc:
        logger.error("%s", exc)
        return exc.code
    except InfeasibleMoments as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except (ValidationError, InfeasibleTarget, UnsupportedOperation, SamplingError, ValueError, KeyError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO
    if code != EXIT_OK and "error" in report:
        logger.error("%s", report["error"])
    summary = {k: v for k, v in report.items() if k not in ("amplitudes",)}
    print(json.dumps(summary, indent=2, default=str))
    return code


if __name__ == "__main__":
    sys.exit(main())
