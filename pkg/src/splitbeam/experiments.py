r"""Monte-Carlo harness: SNR sweeps, QoS studies, timing, DoF reports.

Each trial draws a true channel and an estimation error uniformly in
the per-user ball (the estimate is the difference), then runs every
requested scheme. Trials are keyed by (seed, trial) so any subset can
be reproduced independently; the same draw serves every SNR point, with
the error direction scaled to the radius the power level implies, so
sweeps differ only through the radius law. CSV output holds only
deterministic columns; wall times go to the JSON manifest, which makes
re-runs byte-identical.
"""

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .channel import ChannelEstimate, CsitScalingModel, radius_at, sample_channel, sample_error_in_ball
from .conservative import solve_conservative_nors, solve_conservative_rs
from .cutting_set import solve_max_min_nors, solve_max_min_rs
from .defaults import DEFAULT_TOLERANCES, Tolerances
from .dof import DofProfile, empirical_dof, max_min_dof_nors, max_min_dof_rs
from .qos import QosSpec, rate_target_from_sinr, solve_qos, solve_qos_conservative

__all__ = [
    "SCHEMES",
    "ExperimentSpec",
    "TrialRecord",
    "spec_from_delta",
    "draw_estimates",
    "run_maxmin_sweep",
    "run_qos_study",
    "run_timing",
    "run_dof_report",
    "write_records_csv",
    "write_manifest",
]

SCHEMES = ("NoRS-con", "NoRS-cs", "RS-con", "RS-cs")

MODES = ("maxmin", "qos", "dof", "timing")

DEFAULT_QOS_TARGET = rate_target_from_sinr(9.0)  # 3.3219 bits


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    schemes: tuple = SCHEMES
    K: int = 3
    n_t: int = 3
    snr_grid_db: tuple = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    beta: tuple = (0.0225, 0.0225, 0.0225)
    alpha: tuple = (0.0, 0.0, 0.0)
    trials: int = 20
    seed: int = 0
    noise_var: float = 1.0
    qos_target: float = DEFAULT_QOS_TARGET
    p_max: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "beta", tuple(float(v) for v in self.beta))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if not self.schemes:
            raise ValueError("at least one scheme required")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if len(self.beta) != self.K or len(self.alpha) != self.K:
            raise ValueError("beta and alpha must have one entry per user")
        if not self.snr_grid_db or any(np.diff(self.snr_grid_db) <= 0):
            raise ValueError("SNR grid must be non-empty and increasing")
        if self.mode == "qos" and any(a != 0.0 for a in self.alpha):
            raise ValueError("power minimization assumes non-scaling CSIT (alpha = 0)")

    @property
    def csit(self) -> CsitScalingModel:
        return CsitScalingModel(beta=np.array(self.beta), alpha=np.array(self.alpha))


def spec_from_delta(mode: str, delta: float, alpha=None, **kwargs) -> ExperimentSpec:
    """Build a spec from an uncertainty radius at the 20 dB reference
    power: beta_k = delta^2 * 100^alpha_k keeps radius(100) = delta for
    every scaling exponent."""
    K = kwargs.get("K", 3)
    if alpha is None:
        alpha = (0.0,) * K
    alpha = tuple(float(a) for a in alpha)
    if len(alpha) != K:
        raise ValueError("alpha must have one entry per user")
    beta = tuple(delta**2 * 100.0**a for a in alpha)
    return ExperimentSpec(mode=mode, beta=beta, alpha=alpha, **kwargs)


@dataclass(frozen=True)
class TrialRecord:
    mode: str
    scheme: str
    snr_db: float
    trial: int
    value: float
    status: str
    iterations: int
    certified: bool
    wall_time: float

    def sort_key(self):
        return (self.mode, self.scheme, self.snr_db, self.trial)


def snr_to_power(snr_db: float, noise_var: float = 1.0) -> float:
    return float(noise_var * 10.0 ** (snr_db / 10.0))


def _draw_trial(spec: ExperimentSpec, trial: int):
    """True channels plus unit-ball error draws for one trial; shared by
    every SNR point so the sweep varies only the error radius."""
    rng = np.random.default_rng((spec.seed, trial))
    truths, unit_errors = [], []
    for _ in range(spec.K):
        truths.append(sample_channel(rng, spec.n_t))
        unit_errors.append(sample_error_in_ball(rng, 1.0, spec.n_t))
    return truths, unit_errors


def draw_estimates(spec: ExperimentSpec, trial: int, p_t: float) -> list:
    """Channel estimates for one trial at one power level: the estimate
    is the true channel minus an error uniform in the radius-delta ball."""
    truths, unit_errors = _draw_trial(spec, trial)
    csit = spec.csit
    ests = []
    for k in range(spec.K):
        delta = radius_at(csit, p_t, k)
        ests.append(ChannelEstimate(nominal=truths[k] - delta * unit_errors[k], radius=delta))
    return ests


def _solve_maxmin(scheme: str, ests, p_t, noise_var, tols):
    if scheme == "RS-cs":
        r = solve_max_min_rs(ests, p_t, noise_var, tols)
        return r.alloc.max_min_rate, "ok", len(r.trace), r.certified
    if scheme == "NoRS-cs":
        r = solve_max_min_nors(ests, p_t, noise_var, tols)
        return r.alloc.max_min_rate, "ok", len(r.trace), r.certified
    if scheme == "RS-con":
        r = solve_conservative_rs(ests, p_t, noise_var, tols)
        return r.alloc.max_min_rate, "ok", r.iterations, r.converged
    if scheme == "NoRS-con":
        r = solve_conservative_nors(ests, p_t, noise_var, tols)
        return r.alloc.max_min_rate, "ok", r.iterations, r.converged
    raise ValueError(f"unknown scheme {scheme!r}")


def _solve_qos(scheme: str, ests, spec: ExperimentSpec, tols):
    qspec = QosSpec(
        rate_target=spec.qos_target,
        p_max=spec.p_max,
        scheme="RS" if scheme.startswith("RS") else "NoRS",
    )
    if scheme.endswith("-cs"):
        r = solve_qos(qspec, ests, spec.noise_var, tols)
    else:
        r = solve_qos_conservative(qspec, ests, spec.noise_var, tols)
    iterations = len(r.trace)
    return r.power, r.status, iterations, r.status == "feasible"


def _record(spec, scheme, snr_db, trial, solve):
    start = time.perf_counter()
    try:
        value, status, iterations, certified = solve()
    except RuntimeError as exc:
        value, status, iterations, certified = float("nan"), f"error: {exc}", 0, False
    wall = time.perf_counter() - start
    return TrialRecord(
        mode=spec.mode,
        scheme=scheme,
        snr_db=snr_db,
        trial=trial,
        value=value,
        status=status,
        iterations=iterations,
        certified=certified,
        wall_time=wall,
    )


def run_maxmin_sweep(spec: ExperimentSpec, tols: Tolerances = DEFAULT_TOLERANCES) -> list:
    """Certified worst-case max-min rates for every requested scheme over
    the SNR grid; one record per (scheme, snr, trial)."""
    records = []
    for trial in range(spec.trials):
        for snr_db in spec.snr_grid_db:
            p_t = snr_to_power(snr_db, spec.noise_var)
            ests = draw_estimates(spec, trial, p_t)
            for scheme in spec.schemes:
                records.append(
                    _record(
                        spec, scheme, snr_db, trial,
                        lambda s=scheme: _solve_maxmin(s, ests, p_t, spec.noise_var, tols),
                    )
                )
    records.sort(key=TrialRecord.sort_key)
    return records


def run_qos_study(spec: ExperimentSpec, tols: Tolerances = DEFAULT_TOLERANCES):
    """Power minimization per trial and scheme; returns the records plus
    per-scheme feasibility counts and mean power over the intersection of
    trials feasible for every requested scheme."""
    records = []
    for trial in range(spec.trials):
        ests = draw_estimates(spec, trial, p_t=1.0)
        for scheme in spec.schemes:
            records.append(
                _record(
                    spec, scheme, float("nan"), trial,
                    lambda s=scheme: _solve_qos(s, ests, spec, tols),
                )
            )
    records.sort(key=TrialRecord.sort_key)
    by_scheme = {s: [r for r in records if r.scheme == s] for s in spec.schemes}
    counts = {s: sum(r.status == "feasible" for r in rows) for s, rows in by_scheme.items()}
    feasible_trials = None
    for s, rows in by_scheme.items():
        ok = {r.trial for r in rows if r.status == "feasible"}
        feasible_trials = ok if feasible_trials is None else feasible_trials & ok
    mean_power = {}
    for s, rows in by_scheme.items():
        vals = [r.value for r in rows if r.trial in feasible_trials]
        mean_power[s] = float(np.mean(vals)) if vals else float("nan")
    return records, counts, mean_power


def run_timing(spec: ExperimentSpec, tols: Tolerances = DEFAULT_TOLERANCES):
    """Mean wall-clock seconds per scheme over max-min solves."""
    records = run_maxmin_sweep(spec, tols)
    means = {}
    for scheme in spec.schemes:
        times = [r.wall_time for r in records if r.scheme == scheme]
        means[scheme] = float(np.mean(times))
    return records, means


def run_dof_report(spec: ExperimentSpec, tols: Tolerances = DEFAULT_TOLERANCES):
    """Empirical rate slope over the top 20 dB of the grid next to the
    theoretical DoF for each scheme."""
    if spec.snr_grid_db[-1] - spec.snr_grid_db[0] < 20.0:
        raise ValueError("DoF estimation needs the grid to span at least 20 dB")
    records = run_maxmin_sweep(spec, tols)
    top = spec.snr_grid_db[-1] - 20.0
    window = [s for s in spec.snr_grid_db if s >= top]
    profile = DofProfile(alphas=np.array(spec.alpha))
    theory_nors = max_min_dof_nors(profile)
    theory_rs, _ = max_min_dof_rs(profile)
    report = []
    for scheme in spec.schemes:
        mean_rates = []
        for snr in window:
            vals = [
                r.value
                for r in records
                if r.scheme == scheme and r.snr_db == snr and r.certified
            ]
            mean_rates.append(float(np.mean(vals)) if vals else float("nan"))
        slope = empirical_dof(np.array(window), np.array(mean_rates))
        theory = theory_rs if scheme.startswith("RS") else theory_nors
        report.append({"scheme": scheme, "theoretical_dof": theory, "empirical_slope": slope})
    return records, report


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


CSV_COLUMNS = ("mode", "scheme", "snr_db", "trial", "value", "status", "iterations", "certified")


def write_records_csv(records: list, path) -> None:
    """Deterministic columns only; wall times deliberately left out so
    identical runs produce identical bytes."""
    lines = [",".join(CSV_COLUMNS)]
    for r in sorted(records, key=TrialRecord.sort_key):
        row = asdict(r)
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(spec: ExperimentSpec, records: list, extras: dict, path) -> None:
    """Run metadata: spec echo, per-scheme aggregates over certified rows,
    and a volatile section (wall times) excluded from determinism claims."""
    grouped = {}
    for r in records:
        key = "nan" if np.isnan(r.snr_db) else _fmt(r.snr_db)
        grouped.setdefault(r.scheme, {}).setdefault(key, []).append(r)
    aggregates = {}
    for scheme, per_snr in grouped.items():
        aggregates[scheme] = {}
        for key, rows in per_snr.items():
            certified = [r.value for r in rows if r.certified]
            aggregates[scheme][key] = {
                "n": len(rows),
                "n_certified": len(certified),
                "mean_value_certified": float(np.mean(certified)) if certified else None,
            }
    manifest = {
        "version": __version__,
        "spec": asdict(spec),
        "aggregates": aggregates,
        "extras": {k: v for k, v in extras.items() if k != "volatile"},
        "volatile": {
            "total_wall_time_s": float(sum(r.wall_time for r in records)),
            **extras.get("volatile", {}),
        },
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
