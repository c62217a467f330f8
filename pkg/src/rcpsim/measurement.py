"""Two-level measurement experiments and outcome-probability moment estimators.

An experiment draws ``m`` independent realizations of a random-coefficient
state and measures each one ``n`` times in the working basis. Within one
realization the success count is ``Binomial(n, p)`` with ``p`` the Born
probability of the tracked outcome, so falling-factorial moments of the
counts give unbiased estimates of ``E{p**r}`` for ``r <= n``.

This batching (shots share a coefficient draw) is an assumption: with one
fresh realization per shot, only ``E{p}`` would be identifiable from binary
outcomes.

Randomness is split by realization block: block ``b`` uses a Philox stream
keyed by the master seed with ``b`` placed in the counter's third word.
Records are therefore identical for any number of workers.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rcpsim.rcps import sample_realizations, spec_digest

BLOCK_SIZE = 4096
_STREAM_TAG = 0x52435053  # second Philox key word, fixed per application
_SEED_MASK = (1 << 64) - 1


class EstimatorUndefined(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentDesign:
    realizations: int
    shots_per_realization: int
    master_seed: int
    outcome_index: int = 0

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        if self.shots_per_realization < 1:
            raise ValueError("need at least one shot per realization")
        if not 0 <= self.master_seed <= _SEED_MASK:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.outcome_index < 0:
            raise ValueError("outcome_index must be non-negative")


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    counts: np.ndarray
    shots: int
    spec_digest: str
    seed: int
    outcome_index: int = 0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1-D sequence")
        if np.any(counts < 0) or np.any(counts > self.shots):
            raise ValueError(f"counts must lie in [0, {self.shots}]")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def realizations(self) -> int:
        return int(self.counts.size)

    def __eq__(self, other):
        if not isinstance(other, MeasurementRecord):
            return NotImplemented
        return np.array_equal(self.counts, other.counts) and (
            self.shots,
            self.spec_digest,
            self.seed,
            self.outcome_index,
        ) == (other.shots, other.spec_digest, other.seed, other.outcome_index)


@dataclass(frozen=True)
class ProbabilityMomentEstimate:
    order: int
    value: float
    standard_error: float
    realizations: int
    shots: int

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "value": self.value,
            "standard_error": self.standard_error,
            "m": self.realizations,
            "n": self.shots,
        }


def block_stream(master_seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of realizations."""
    bitgen = np.random.Philox(key=[master_seed & _SEED_MASK, _STREAM_TAG], counter=[0, 0, block, 0])
    return np.random.Generator(bitgen)


def _run_block(spec, design: ExperimentDesign, block: int) -> np.ndarray:
    start = block * BLOCK_SIZE
    size = min(BLOCK_SIZE, design.realizations - start)
    rng = block_stream(design.master_seed, block)
    amps = sample_realizations(spec, size, rng).amplitudes
    if design.outcome_index >= amps.shape[1]:
        raise ValueError(f"outcome_index {design.outcome_index} out of range for d={amps.shape[1]}")
    p = np.clip(np.abs(amps[:, design.outcome_index]) ** 2, 0.0, 1.0)
    return rng.binomial(design.shots_per_realization, p)


def run_experiment(spec, design: ExperimentDesign, workers: int = 1) -> MeasurementRecord:
    """Simulate ``m`` realizations x ``n`` shots and return per-realization counts."""
    n_blocks = math.ceil(design.realizations / BLOCK_SIZE)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _run_block(spec, design, b), range(n_blocks)))
    else:
        parts = [_run_block(spec, design, b) for b in range(n_blocks)]
    return MeasurementRecord(
        counts=np.concatenate(parts),
        shots=design.shots_per_realization,
        spec_digest=spec_digest(spec),
        seed=design.master_seed,
        outcome_index=design.outcome_index,
    )


def falling_factorial_ratio(counts: np.ndarray, shots: int, order: int) -> np.ndarray:
    """``k (k-1) ... (k-r+1) / (n (n-1) ... (n-r+1))`` per count."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > shots:
        raise EstimatorUndefined(f"order {order} estimator needs at least {order} shots, got {shots}")
    k = np.asarray(counts, dtype=float)
    out = np.ones_like(k)
    for i in range(order):
        out *= (k - i) / (shots - i)
    return out


def _summarize(stat: np.ndarray) -> tuple[float, float]:
    m = stat.size
    value = float(np.mean(stat))
    se = float(np.std(stat, ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return value, se


def estimate_probability_moments(record: MeasurementRecord, orders: Sequence[int]) -> list[ProbabilityMomentEstimate]:
    """Unbiased estimates of ``E{p**r}`` for each requested order.

    The standard error is the sample standard deviation of the
    per-realization statistic over ``sqrt(m)`` (NaN when ``m == 1``).
    """
    out = []
    for r in orders:
        value, se = _summarize(falling_factorial_ratio(record.counts, record.shots, int(r)))
        out.append(ProbabilityMomentEstimate(int(r), value, se, record.realizations, record.shots))
    return out


def naive_probability_moment(record: MeasurementRecord, order: int) -> ProbabilityMomentEstimate:
    """Plug-in ``mean((k/n)**r)``; biased upward for ``r >= 2``."""
    stat = (record.counts / record.shots) ** order
    value, se = _summarize(stat)
    return ProbabilityMomentEstimate(order, value, se, record.realizations, record.shots)


def mean_sz_estimate(record: MeasurementRecord) -> float:
    """``E{s_z} = E{p_+} - 1/2`` for a record tracking the ``|+>`` outcome."""
    if record.outcome_index != 0:
        raise ValueError("mean s_z needs a record tracking the |+> outcome (index 0)")
    return estimate_probability_moments(record, [1])[0].value - 0.5


# --- record files ----------------------------------------------------------


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_record(record: MeasurementRecord, csv_path: str | Path) -> None:
    """Write ``realization,k,n`` rows plus a JSON sidecar next to the CSV."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["realization", "k", "n"])
        for j, k in enumerate(record.counts):
            writer.writerow([j, int(k), record.shots])
    meta = {
        "spec_digest": record.spec_digest,
        "master_seed": record.seed,
        "m": record.realizations,
        "n": record.shots,
        "outcome_index": record.outcome_index,
    }
    sidecar_path(csv_path).write_text(json.dumps(meta, indent=2) + "\n")


def read_record(csv_path: str | Path) -> MeasurementRecord:
    csv_path = Path(csv_path)
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["realization", "k", "n"]:
            raise ValueError(f"{csv_path}: expected header realization,k,n")
        rows = [(int(r["realization"]), int(r["k"]), int(r["n"])) for r in reader]
    if not rows:
        raise ValueError(f"{csv_path}: no rows")
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{csv_path}: realization indices must be 0..m-1")
    shots = {r[2] for r in rows}
    if len(shots) != 1:
        raise ValueError(f"{csv_path}: mixed shot counts {sorted(shots)}")
    side = sidecar_path(csv_path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    n = shots.pop()
    if meta and (meta.get("m") != len(rows) or meta.get("n") != n):
        raise ValueError(f"{side}: m/n disagree with {csv_path}")
    return MeasurementRecord(
        counts=np.array([r[1] for r in rows]),
        shots=n,
        spec_digest=meta.get("spec_digest", ""),
        seed=int(meta.get("master_seed", 0)),
        outcome_index=int(meta.get("outcome_index", 0)),
    )
