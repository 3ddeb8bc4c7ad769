"""Monte-Carlo error-probability sweeps over sample sizes.

For a fixed (test, reference) pair the harness picks band half-widths that
realize the requested violation fractions, replays the subsampled membership
test many times per (fraction, sample size) cell, and tabulates the empirical
rate of one-sided errors next to the exact hypergeometric rate.  A
record-subsampling Wasserstein decision protocol provides the comparison
baseline curve.

Trials within a cell are embarrassingly parallel: every trial seed is derived
from the master seed by counter-based mixing, so results are independent of
scheduling and bit-identical across reruns.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (AlignmentError, BudgetError, EmptyInputError,
                     ParameterError, SchemaError)
from .histogram import (BinningScheme, ProbabilityHistogram, bin_record,
                        format_histogram)
from .pac import analytic_false_positive
from .query import (ReferenceBand, sample_flat_indices, support_differences,
                    violation_report)
from .transport import wasserstein_1d, wasserstein_nd

CSV_HEADER = "eps,delta,s,empirical_error,analytic_error,stderr,trials"

# Seed stream tags keep the sup-norm cells and the baseline cells disjoint.
_SUPNORM_STREAM = 0
_BASELINE_STREAM = 1


def trial_seed(master_seed: int, *path: int) -> int:
    """Stable per-trial seed derived from (master, *path) by counter mixing.

    Trials can be replayed individually and in any order.
    """
    seq = np.random.SeedSequence((master_seed, *path))
    return int(seq.generate_state(1, np.uint64)[0])


class DeltaForTarget(NamedTuple):
    delta: float
    eps_actual: float


def eps_to_delta(test: ProbabilityHistogram, reference: ProbabilityHistogram,
                 eps_target: float) -> DeltaForTarget:
    """Smallest band half-width whose violation fraction is within the target.

    Sorts the per-bin absolute differences and steps just above the relevant
    order statistic (a bin whose difference equals the half-width still counts
    as a violation), then reports the violation fraction actually achieved —
    exact targets are generally unattainable on a discrete grid.
    """
    if not 0.0 < eps_target < 1.0:
        raise ParameterError("eps_target must lie strictly inside (0, 1)")
    if test.scheme != reference.scheme:
        raise AlignmentError("histograms use different binning schemes")
    n_total = test.scheme.total_bins
    diffs = np.sort(np.asarray(list(support_differences(test, reference).values())))[::-1]
    allowed = int(math.floor(eps_target * n_total))
    pivot = float(diffs[allowed]) if allowed < diffs.size else 0.0
    delta = math.nextafter(pivot, math.inf)
    violations = int((diffs >= delta).sum())
    return DeltaForTarget(delta=delta, eps_actual=violations / n_total)


@dataclass(frozen=True)
class WassersteinBaseline:
    """Decision protocol for the record-subsampled transport comparison.

    The full-data distance between subgroup and reference, scaled by
    `threshold_factor`, fixes the decision threshold; a measure is declared
    inside when its distance stays strictly below it.
    """

    p: float = 2.0
    threshold_factor: float = 1.0
    method: str = "exact"
    trials: int | None = None  # None: reuse the sweep-wide trial count

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError("baseline p must be at least 1")
        if not self.threshold_factor > 0:
            raise ParameterError("threshold_factor must be positive")
        if self.method not in ("exact", "entropic"):
            raise ParameterError(f"unknown baseline method {self.method!r}")
        if self.trials is not None and self.trials < 1:
            raise ParameterError("baseline trials must be at least 1")


@dataclass(frozen=True)
class SweepConfig:
    """Grid description for one sweep run."""

    scheme: BinningScheme
    protected_column: str
    subgroup_value: str
    sample_sizes: tuple[int, ...]
    trials: int
    seed: int
    eps_grid: tuple[float, ...] = ()
    delta_grid: tuple[float, ...] = ()
    baseline: WassersteinBaseline | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(s) for s in self.sample_sizes))
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        if self.trials < 1:
            raise ParameterError("trials must be at least 1")
        if not self.sample_sizes or any(s < 1 for s in self.sample_sizes):
            raise ParameterError("sample_sizes must be non-empty and at least 1")
        if bool(self.eps_grid) == bool(self.delta_grid):
            raise ParameterError("give either eps targets or explicit deltas, not both")
        if any(not 0.0 < e < 1.0 for e in self.eps_grid):
            raise ParameterError("eps grid values must lie strictly inside (0, 1)")
        if any(d < 0 for d in self.delta_grid):
            raise ParameterError("delta grid values must be non-negative")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        if self.threads < 1:
            raise ParameterError("threads must be at least 1")


@dataclass(frozen=True)
class SweepRow:
    """One grid cell: achieved fraction, half-width, empirical vs analytic rates.

    `empirical_error` and `analytic_error` are nan when the exact verdict is
    already inside, so no one-sided error is possible.  `stderr` is the
    binomial standard error at the analytic rate (at the empirical rate for
    baseline rows, which have no analytic law).
    """

    eps: float
    delta: float
    samples: int
    empirical_error: float
    analytic_error: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    metadata: dict

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(",".join([
                _num(r.eps), _num(r.delta), str(r.samples),
                _num(r.empirical_error), _num(r.analytic_error),
                _num(r.stderr), str(r.trials),
            ]))
        return "\n".join(lines) + "\n"


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def _fingerprint(measure: ProbabilityHistogram) -> str:
    digest = hashlib.sha256(format_histogram(measure).encode()).hexdigest()
    return f"sha256:{digest}"


def violation_mask(test: ProbabilityHistogram, band: ReferenceBand) -> np.ndarray:
    """Dense indicator over flat bin ids of "difference >= delta"."""
    scheme = test.scheme
    if band.delta == 0:
        # every bin violates: untouched bins differ by exactly zero
        return np.ones(scheme.total_bins, dtype=bool)
    mask = np.zeros(scheme.total_bins, dtype=bool)
    for idx, diff in support_differences(test, band.base).items():
        if diff >= band.delta:
            mask[scheme.flatten(idx)] = True
    return mask


def _empirical_rate(mask: np.ndarray, n_total: int, size: int, trials: int,
                    master_seed: int, cell_path: tuple[int, ...]) -> float:
    false_positives = 0
    for trial in range(trials):
        rng = np.random.default_rng(trial_seed(master_seed, *cell_path, trial))
        flats = sample_flat_indices(n_total, size, rng)
        if not bool(mask[flats].any()):
            false_positives += 1
    return false_positives / trials


def estimate_false_positive_rate(test: ProbabilityHistogram, band: ReferenceBand,
                                 size: int, trials: int, master_seed: int,
                                 cell: tuple[int, ...] = ()) -> float:
    """Empirical share of subsampled runs answering inside when the exact
    verdict is outside.

    Each trial replays subsampled_query with the seed
    trial_seed(master_seed, *cell, trial); a dense violation mask makes the
    per-trial check vectorizable without changing which sets get sampled.
    """
    report = violation_report(test, band)
    if report.count_k == 0:
        raise ParameterError("exact verdict is inside; no one-sided error is possible")
    mask = violation_mask(test, band)
    return _empirical_rate(mask, test.scheme.total_bins, size, trials, master_seed, cell)


def run_supnorm_sweep(config: SweepConfig, test: ProbabilityHistogram,
                      reference: ProbabilityHistogram) -> SweepResult:
    """Empirical vs analytic one-sided error of the subsampled test over the grid.

    Cells whose exact verdict is already inside admit no one-sided error and
    are recorded with nan rates rather than failing the run.  Deterministic
    given config.seed regardless of thread count.
    """
    if test.scheme != reference.scheme:
        raise AlignmentError("histograms use different binning schemes")
    n_total = test.scheme.total_bins
    for s in config.sample_sizes:
        if s > n_total:
            raise ParameterError(f"sample size {s} exceeds the {n_total}-bin grid")

    if config.eps_grid:
        picks = [eps_to_delta(test, reference, target) for target in config.eps_grid]
        deltas = [pick.delta for pick in picks]
    else:
        deltas = list(config.delta_grid)

    def run_cell(item: tuple[int, float]) -> list[SweepRow]:
        cell_idx, delta = item
        band = ReferenceBand(base=reference, delta=delta)
        report = violation_report(test, band)
        k = report.count_k
        rows: list[SweepRow] = []
        mask = violation_mask(test, band) if k > 0 else None
        for s_idx, size in enumerate(config.sample_sizes):
            if k == 0:
                rows.append(SweepRow(eps=0.0, delta=delta, samples=size,
                                     empirical_error=math.nan, analytic_error=math.nan,
                                     stderr=math.nan, trials=config.trials))
                continue
            analytic = analytic_false_positive(n_total, k, size)
            empirical = _empirical_rate(mask, n_total, size, config.trials,
                                        config.seed, (_SUPNORM_STREAM, cell_idx, s_idx))
            stderr = math.sqrt(analytic * (1.0 - analytic) / config.trials)
            rows.append(SweepRow(eps=report.fraction, delta=delta, samples=size,
                                 empirical_error=empirical, analytic_error=analytic,
                                 stderr=stderr, trials=config.trials))
        return rows

    items = list(enumerate(deltas))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(run_cell, items))
    else:
        chunks = [run_cell(item) for item in items]

    rows = tuple(row for chunk in chunks for row in chunk)
    metadata = {
        "kind": "supnorm",
        "seed": config.seed,
        "total_bins": n_total,
        "trials": config.trials,
        "eps_targets": list(config.eps_grid),
        "deltas": deltas,
        "sample_sizes": list(config.sample_sizes),
        "test_fingerprint": _fingerprint(test),
        "reference_fingerprint": _fingerprint(reference),
    }
    return SweepResult(rows=rows, metadata=metadata)


def subgroup_split(records: Iterable[Mapping[str, str]], protected_column: str,
                   subgroup_value: str) -> tuple[list, list]:
    """(matching records, all records).

    The subgroup is audited against the whole population, not against its
    complement; pass the complement yourself if that comparison is wanted.
    """
    rows = list(records)
    if not rows:
        raise EmptyInputError("no records to split")
    if protected_column not in rows[0]:
        raise SchemaError(f"column {protected_column!r} not present in records")
    matching = [r for r in rows if r.get(protected_column) == subgroup_value]
    if not matching:
        raise EmptyInputError(f"no records match {protected_column}={subgroup_value}")
    return matching, rows


def flat_bin_ids(records: Iterable[Mapping[str, str]],
                 scheme: BinningScheme) -> tuple[np.ndarray, int]:
    """Flat joint-bin id per record, and how many records were dropped."""
    flats: list[int] = []
    dropped = 0
    for row in records:
        idx = bin_record(row, scheme)
        if idx is None:
            dropped += 1
            continue
        flats.append(scheme.flatten(idx))
    return np.asarray(flats, dtype=np.int64), dropped


def measure_from_flats(flats: np.ndarray, scheme: BinningScheme) -> ProbabilityHistogram:
    """Normalized histogram of a vector of flat bin ids."""
    if flats.size == 0:
        raise EmptyInputError("no binned records to build a measure from")
    counts = np.bincount(flats, minlength=scheme.total_bins)
    total = float(flats.size)
    masses = {scheme.unflatten(int(f)): counts[f] / total for f in np.flatnonzero(counts)}
    return ProbabilityHistogram(scheme=scheme, masses=masses)


def measure_from_records(records: Iterable[Mapping[str, str]],
                         scheme: BinningScheme) -> tuple[ProbabilityHistogram, int]:
    """Normalized histogram of raw records, plus the dropped-record count."""
    flats, dropped = flat_bin_ids(records, scheme)
    return measure_from_flats(flats, scheme), dropped


def run_wasserstein_sweep(config: SweepConfig,
                          test_records: Sequence[Mapping[str, str]],
                          reference_records: Sequence[Mapping[str, str]]) -> SweepResult:
    """Record-subsampled transport decision errors across sample sizes.

    Protocol: the full-data distance between subgroup and reference fixes a
    threshold (scaled by the baseline's factor); each trial redraws `s`
    records from the subgroup without replacement, re-bins them, and decides
    inside iff the subsample's distance stays below the threshold.  An error
    is any disagreement with the full-data decision.  Per-trial decisions are
    Bernoulli, so the stderr column doubles as the standard-deviation band.
    """
    baseline = config.baseline or WassersteinBaseline()
    scheme = config.scheme
    test_flats, dropped_test = flat_bin_ids(test_records, scheme)
    ref_flats, dropped_ref = flat_bin_ids(reference_records, scheme)
    if test_flats.size == 0 or ref_flats.size == 0:
        raise EmptyInputError("need binnable records in both groups")
    group = int(test_flats.size)
    for s in config.sample_sizes:
        if s > group:
            raise BudgetError(f"sample size {s} exceeds the subgroup size {group}")

    reference = measure_from_flats(ref_flats, scheme)
    full_test = measure_from_flats(test_flats, scheme)
    distance = _distance_fn(scheme, baseline)
    w_full = distance(full_test, reference)
    threshold = baseline.threshold_factor * w_full
    full_inside = w_full < threshold
    trials = baseline.trials if baseline.trials is not None else config.trials

    rows: list[SweepRow] = []
    for s_idx, size in enumerate(config.sample_sizes):
        errors = 0
        for trial in range(trials):
            rng = np.random.default_rng(
                trial_seed(config.seed, _BASELINE_STREAM, s_idx, trial))
            pick = sample_flat_indices(group, size, rng)
            sub = measure_from_flats(test_flats[pick], scheme)
            inside = distance(sub, reference) < threshold
            errors += inside != full_inside
        rate = errors / trials
        stderr = math.sqrt(rate * (1.0 - rate) / trials)
        rows.append(SweepRow(eps=math.nan, delta=math.nan, samples=size,
                             empirical_error=rate, analytic_error=math.nan,
                             stderr=stderr, trials=trials))

    metadata = {
        "kind": "wasserstein",
        "seed": config.seed,
        "p": baseline.p,
        "method": baseline.method,
        "threshold_factor": baseline.threshold_factor,
        "full_distance": w_full,
        "threshold": threshold,
        "full_inside": full_inside,
        "subgroup_size": group,
        "dropped_test": dropped_test,
        "dropped_reference": dropped_ref,
        "sample_sizes": list(config.sample_sizes),
        "trials": trials,
        "test_fingerprint": _fingerprint(full_test),
        "reference_fingerprint": _fingerprint(reference),
    }
    return SweepResult(rows=tuple(rows), metadata=metadata)


def _distance_fn(scheme: BinningScheme, baseline: WassersteinBaseline):
    if scheme.n_features == 1 and baseline.method == "exact":
        return lambda x, y: wasserstein_1d(x, y, baseline.p)
    return lambda x, y: wasserstein_nd(x, y, baseline.p, method=baseline.method)
