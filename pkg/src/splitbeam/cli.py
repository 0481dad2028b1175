"""Command line front end.

Runs come from an ExperimentSpec assembled in three layers: built-in
defaults, an optional JSON config file, then explicit flags. Every run
writes records.csv (deterministic) and manifest.json (includes wall
times) into the output directory.
"""

import json
import os

import click
import numpy as np

from .experiments import (
    SCHEMES,
    ExperimentSpec,
    run_dof_report,
    run_maxmin_sweep,
    run_qos_study,
    run_timing,
    write_manifest,
    write_records_csv,
)
from .selfcheck import run_all

__all__ = ["main"]


def _parse_grid(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


def _spec_options(fn):
    opts = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON file with spec fields; flags override it."),
        click.option("--seed", type=int, default=None, help="Base RNG seed."),
        click.option("--trials", type=int, default=None, help="Monte-Carlo trials."),
        click.option("--snr", type=str, default=None, help="Comma-separated SNR grid in dB."),
        click.option("--delta", type=float, default=None,
                     help="Uncertainty radius at the 20 dB reference power."),
        click.option("--alpha", type=str, default=None,
                     help="Comma-separated per-user scaling exponents."),
        click.option("--scheme", "schemes", multiple=True, type=click.Choice(SCHEMES),
                     help="Scheme to run (repeatable; default all four)."),
        click.option("--out", type=click.Path(file_okay=False), default="results",
                     help="Output directory."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_spec(mode, config, seed, trials, snr, delta, alpha, schemes, **extra):
    cfg = {}
    if config is not None:
        with open(config) as fh:
            cfg = json.load(fh)
    if seed is not None:
        cfg["seed"] = seed
    if trials is not None:
        cfg["trials"] = trials
    if snr is not None:
        cfg["snr_grid_db"] = _parse_grid(snr)
    if delta is not None:
        cfg["delta"] = delta
    if alpha is not None:
        cfg["alpha"] = _parse_grid(alpha)
    if schemes:
        cfg["schemes"] = tuple(schemes)
    for key, val in extra.items():
        if val is not None:
            cfg[key] = val
    cfg["mode"] = mode
    K = int(cfg.get("K", 3))
    cfg.setdefault("K", K)
    if "alpha" in cfg and len(cfg["alpha"]) != K:
        raise click.BadParameter(f"--alpha needs {K} entries")
    if "beta" not in cfg:
        # radius delta at the 20 dB reference: beta_k = delta^2 * 100^alpha_k
        radius = float(cfg.pop("delta", 0.15))
        alphas = tuple(cfg.get("alpha", (0.0,) * K))
        cfg["beta"] = tuple(radius**2 * 100.0**a for a in alphas)
        cfg["alpha"] = alphas
    else:
        cfg.pop("delta", None)
    try:
        return ExperimentSpec(**cfg)
    except (TypeError, ValueError) as exc:
        raise click.BadParameter(str(exc))


def _write(spec, records, extras, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "records.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_records_csv(records, csv_path)
    write_manifest(spec, records, extras, manifest_path)
    click.echo(f"wrote {csv_path} and {manifest_path}")


@click.group()
def main():
    """Robust rate-splitting precoder design for the multi-antenna downlink."""


@main.command()
@_spec_options
def maxmin(config, seed, trials, snr, delta, alpha, schemes, out):
    """Worst-case max-min rate sweep over an SNR grid."""
    spec = _build_spec("maxmin", config, seed, trials, snr, delta, alpha, schemes)
    records = run_maxmin_sweep(spec)
    for scheme in spec.schemes:
        for snr_db in spec.snr_grid_db:
            vals = [r.value for r in records
                    if r.scheme == scheme and r.snr_db == snr_db and r.certified]
            mean = float(np.mean(vals)) if vals else float("nan")
            click.echo(f"{scheme:>9s}  {snr_db:5.1f} dB  mean rate {mean:.4f}  ({len(vals)} certified)")
    _write(spec, records, {}, out)


@main.command()
@_spec_options
@click.option("--target", type=float, default=None, help="Per-user rate target in bits.")
@click.option("--p-max", type=float, default=None, help="Feasibility search power cap.")
def qos(config, seed, trials, snr, delta, alpha, schemes, out, target, p_max):
    """Transmit power minimization under per-user rate targets."""
    spec = _build_spec("qos", config, seed, trials, snr, delta, alpha, schemes,
                       qos_target=target, p_max=p_max)
    records, counts, mean_power = run_qos_study(spec)
    for scheme in spec.schemes:
        power = mean_power[scheme]
        shown = f"{power:.4f}" if np.isfinite(power) else "n/a"
        click.echo(f"{scheme:>9s}  feasible {counts[scheme]}/{spec.trials}  mean power {shown}")
    _write(spec, records, {"feasible_counts": counts, "mean_power_intersection": mean_power}, out)


@main.command()
@_spec_options
def dof(config, seed, trials, snr, delta, alpha, schemes, out):
    """Empirical rate slopes against the theoretical degrees of freedom."""
    spec = _build_spec("dof", config, seed, trials, snr, delta, alpha, schemes)
    records, report = run_dof_report(spec)
    for row in report:
        click.echo(f"{row['scheme']:>9s}  theory {row['theoretical_dof']:.4f}  empirical {row['empirical_slope']:.4f}")
    _write(spec, records, {"dof_report": report}, out)


@main.command()
@_spec_options
def timing(config, seed, trials, snr, delta, alpha, schemes, out):
    """Mean wall-clock time per scheme."""
    spec = _build_spec("timing", config, seed, trials, snr, delta, alpha, schemes)
    records, means = run_timing(spec)
    for scheme, mean in means.items():
        click.echo(f"{scheme:>9s}  {mean:.3f} s per solve")
    _write(spec, records, {"volatile": {"mean_wall_time_s": means}}, out)


@main.command()
@click.option("--seed", type=int, default=0)
def selftest(seed):
    """Quick oracle-backed sanity checks."""
    results = run_all(seed)
    failed = 0
    for res in results:
        mark = "ok  " if res.ok else "FAIL"
        suffix = f"  ({res.detail})" if res.detail else ""
        click.echo(f"{mark}  {res.name}{suffix}")
        failed += not res.ok
    if failed:
        raise SystemExit(1)
    click.echo(f"{len(results)} checks passed")
