"""Command-line surface for reproducible audit runs.

Exit codes: 0 success (and "inside" for query), 1 query verdict "outside",
2 parameter/schema/input problems, 3 incompatible binning schemes.  Every
run that writes files also writes a `<out>.manifest.json` sidecar with the
seed, config echo, and input fingerprints; outputs are written atomically
and are byte-identical across reruns with the same inputs and seed.
"""

from __future__ import annotations

import json
import math
import os
import sys
from datetime import datetime, timezone

import click

from . import __version__
from .config import load_config, scheme_from_config, sweep_config_from
from .datasets import read_csv_records, write_synthetic_csv
from .errors import AlignmentError, AuditError
from .fileio import atomic_write_text, sha256_file
from .histogram import (JointHistogram, ProbabilityHistogram, RecordFilter,
                        ingest_csv, normalize, read_histogram, write_histogram)
from .pac import SampleBudget, analytic_false_positive
from .query import (ReferenceBand, exact_query, subsampled_query,
                    verdict_record, violation_report)
from .sweep import (measure_from_records, run_supnorm_sweep,
                    run_wasserstein_sweep, subgroup_split)
from .transport import wasserstein_nd

_EXIT_OUTSIDE = 1
_EXIT_USAGE = 2
_EXIT_ALIGNMENT = 3


def _fail(exc: AuditError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(_EXIT_ALIGNMENT if isinstance(exc, AlignmentError) else _EXIT_USAGE)


@click.group()
@click.version_option(__version__)
def main():
    """Audit subgroup histograms against reference bands on a shared bin grid."""


def _write_manifest(out_path: str, command: str, params: dict,
                    seed: int | None, inputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": params,
        "seed": seed,
        "inputs": {os.path.basename(p): sha256_file(p) for p in inputs},
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    atomic_write_text(out_path + ".manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_filter(spec: str | None) -> RecordFilter | None:
    if spec is None:
        return None
    if "!=" in spec:
        column, _, value = spec.partition("!=")
        return RecordFilter(column=column.strip(), value=value.strip(), negate=True)
    column, sep, value = spec.partition("=")
    if not sep:
        raise AuditError(f"filter must look like COL=VAL or COL!=VAL, got {spec!r}")
    return RecordFilter(column=column.strip(), value=value.strip())


def _as_measure(hist: JointHistogram | ProbabilityHistogram) -> ProbabilityHistogram:
    return normalize(hist) if isinstance(hist, JointHistogram) else hist


@main.command("bin")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV table to discretize.")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Key=value file declaring the feature.* scheme.")
@click.option("--filter", "filter_spec", default=None,
              help="COL=VAL keeps matching rows; COL!=VAL keeps the rest.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Histogram file to write.")
def cmd_bin(data, config_path, filter_spec, out):
    """Discretize a CSV into a joint histogram file."""
    try:
        cfg = load_config(config_path)
        scheme = scheme_from_config(cfg)
        record_filter = _parse_filter(filter_spec)
        hist = ingest_csv(data, scheme, record_filter)
        write_histogram(hist, out)
        _write_manifest(out, "bin",
                        {"data": os.path.basename(data), "filter": filter_spec,
                         "features": [f.name for f in scheme.features]},
                        seed=None, inputs=[data, config_path])
    except AuditError as exc:
        _fail(exc)
    click.echo(f"wrote {out}: total={hist.total} skipped={hist.skipped} "
               f"occupied_bins={len(hist.counts)}")


@main.command("query")
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Reference histogram file (counts are normalized on load).")
@click.option("--test", "test_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Test histogram file.")
@click.option("--delta", required=True, type=float, help="Band half-width.")
@click.option("--samples", type=int, default=None,
              help="Bin sample budget; omit for the exact full scan.")
@click.option("--seed", type=int, default=None,
              help="RNG seed for the subsampled mode; generated and printed when absent.")
def cmd_query(reference, test_path, delta, samples, seed):
    """Band membership verdict; exit 0 inside, 1 outside.

    Prints one line: verdict,delta,s,seed,witness,eps_hat,sup_norm.  For
    subsampled runs eps_hat and sup_norm describe the sampled bins only.
    """
    try:
        base = _as_measure(read_histogram(reference))
        test = _as_measure(read_histogram(test_path))
        band = ReferenceBand(base=base, delta=delta)
        if delta == 0:
            click.echo("warning: delta = 0 is degenerate (every bin counts as a violation)",
                       err=True)
        if samples is None:
            outcome = exact_query(test, band)
            report = violation_report(test, band)
            line = verdict_record(outcome, delta, report.fraction, report.sup_norm)
        else:
            if seed is None:
                seed = int.from_bytes(os.urandom(8), "big")
                click.echo(f"generated seed: {seed}", err=True)
            outcome = subsampled_query(test, band, samples, seed)
            diffs = [abs(test.mass(idx) - base.mass(idx)) for idx in outcome.sampled_bins]
            eps_hat = sum(d >= delta for d in diffs) / len(diffs)
            line = verdict_record(outcome, delta, eps_hat, max(diffs))
    except AuditError as exc:
        _fail(exc)
    click.echo(line)
    sys.exit(0 if outcome.inside else _EXIT_OUTSIDE)


@main.command("sample-size")
@click.option("--eps", required=True, type=float,
              help="Violation fraction the sample must detect.")
@click.option("--delta", "delta_prob", required=True, type=float,
              help="Acceptable failure probability of the guarantee.")
@click.option("--n-features", required=True, type=int)
@click.option("--total-bins", type=int, default=None,
              help="Grid size; adds the analytic false-positive rate to the row.")
@click.option("--union-constant", type=float, default=2.0, show_default=True,
              help="Constant in the O(n log n) dimension bound.")
def cmd_sample_size(eps, delta_prob, n_features, total_bins, union_constant):
    """Print d,s(,analytic_rate,capped?) as a single CSV row."""
    try:
        budget = SampleBudget.plan(eps, delta_prob, n_features,
                                   union_constant=union_constant)
        fields = [str(budget.vc_dim), str(budget.samples)]
        if total_bins is not None:
            violating = min(math.ceil(eps * total_bins), total_bins)
            effective = min(budget.samples, total_bins)
            rate = analytic_false_positive(total_bins, violating, effective)
            fields = [str(budget.vc_dim), str(effective), repr(rate)]
            if budget.samples > total_bins:
                fields.append("capped")
    except AuditError as exc:
        _fail(exc)
    click.echo(",".join(fields))


@main.command("sweep")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Result CSV; a baseline run adds <out>.wasserstein.csv.")
@click.option("--seed", type=int, default=None, help="Overrides the config master seed.")
@click.option("--threads", type=int, default=None, envvar="SUBSPACE_AUDIT_THREADS",
              help="Worker cap for grid cells (env: SUBSPACE_AUDIT_THREADS).")
@click.option("--baseline", type=click.Choice(["none", "wasserstein"]), default=None,
              help="Overrides the config baseline choice.")
def cmd_sweep(config_path, data, out, seed, threads, baseline):
    """Run the error-rate sweep and write CSV result(s) plus a manifest."""
    try:
        cfg = load_config(config_path)
        scheme = scheme_from_config(cfg)
        if seed is None and "seed" not in cfg:
            seed = int.from_bytes(os.urandom(8), "big")
            click.echo(f"generated seed: {seed}", err=True)
        sweep_cfg = sweep_config_from(cfg, scheme, seed=seed, threads=threads,
                                      baseline=baseline)
        records = read_csv_records(data)
        test_rows, reference_rows = subgroup_split(
            records, sweep_cfg.protected_column, sweep_cfg.subgroup_value)
        test_measure, _ = measure_from_records(test_rows, scheme)
        reference_measure, _ = measure_from_records(reference_rows, scheme)
        result = run_supnorm_sweep(sweep_cfg, test_measure, reference_measure)
        atomic_write_text(out, result.to_csv())
        outputs = {"supnorm": os.path.basename(out)}
        if sweep_cfg.baseline is not None:
            baseline_result = run_wasserstein_sweep(sweep_cfg, test_rows, reference_rows)
            baseline_out = out + ".wasserstein.csv"
            atomic_write_text(baseline_out, baseline_result.to_csv())
            outputs["wasserstein"] = os.path.basename(baseline_out)
        _write_manifest(out, "sweep",
                        {"config_echo": cfg, "overrides": {
                            "seed": seed, "threads": threads, "baseline": baseline},
                         "outputs": outputs},
                        seed=sweep_cfg.seed, inputs=[data, config_path])
    except AuditError as exc:
        _fail(exc)
    click.echo(f"wrote {out} ({len(result.rows)} rows)")


@main.command("distance")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True, dir_okay=False),
              help="First histogram file (counts are normalized on load).")
@click.option("--b", "path_b", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Second histogram file.")
@click.option("--p", type=float, default=2.0, show_default=True, help="Distance order.")
@click.option("--method", type=click.Choice(["exact", "entropic"]), default="exact",
              show_default=True)
@click.option("--reg", type=float, default=0.01, show_default=True,
              help="Entropic regularization, relative to the largest ground cost.")
def cmd_distance(path_a, path_b, p, method, reg):
    """Transport distance between two histograms; prints distance,residual."""
    try:
        first = _as_measure(read_histogram(path_a))
        second = _as_measure(read_histogram(path_b))
        value, plan = wasserstein_nd(first, second, p, method=method,
                                     reg_factor=reg, with_plan=True)
    except AuditError as exc:
        _fail(exc)
    click.echo(f"{value!r},{plan.marginal_residual!r}")


@main.command("synth")
@click.option("--rows", type=int, default=120_000, show_default=True)
@click.option("--seed", type=int, default=987_654_321, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_synth(rows, seed, out):
    """Write the bundled synthetic two-group CSV (deterministic in rows/seed)."""
    try:
        write_synthetic_csv(out, n_rows=rows, seed=seed)
    except AuditError as exc:
        _fail(exc)
    click.echo(f"wrote {out}: {rows} rows")


if __name__ == "__main__":
    main()
