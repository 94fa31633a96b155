"""Declarative Monte-Carlo experiments and their persisted results.

An :class:`ExperimentSpec` fully determines the output: run ``r`` draws
everything (initial state and chain) from ``derive_rng(seed, r)``, and rows
are always folded in run-index order, so worker count and batching never
change a result.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from jante import __version__, continuous, discrete, kernels
from jante.checks import CheckReport, _jsonable
from jante.errors import DistributionError, InsufficientDataError, SpecError
from jante.process import (
    DistributionSpec,
    StopRule,
    as_configuration,
    derive_rng,
    initial_configuration,
    run,
    run_batch,
)
from jante.topology import Topology, from_descriptor

KINDS = ("absorb_hist", "rate_estimate", "verify_suite", "single_run")
FORMATS = ("csv", "jsonl")
UNHASHED = ("output", "format", "workers")
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce an experiment.

    ``steps`` is a stop rule string (``"1000"``, ``"until-absorbed"``,
    ``"d-below=1e-9"``). ``init`` is ``"iid"`` or an explicit configuration.
    ``burn_in`` is the discarded fraction of embedded points and
    ``embedded_steps`` the number of embedded steps per rate run.
    """

    kind: str
    topology: dict = field(default_factory=lambda: {"cycle": 5})
    distribution: dict = field(default_factory=lambda: {"variant": "uniform01"})
    runs: int = 1
    steps: str = "1000"
    mode: str = "raw"
    seed: int = 0
    init: str | list = "iid"
    burn_in: float = 0.1
    embedded_steps: int = 2000
    samples: int = 100_000
    output: str | None = None
    format: str = "csv"
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown experiment kind {self.kind!r}")
        if self.runs < 1:
            raise SpecError("runs must be at least 1")
        if self.mode not in ("raw", "frozen"):
            raise SpecError(f"mode must be raw or frozen, got {self.mode!r}")
        if not 0.0 <= self.burn_in < 1.0:
            raise SpecError("burn_in is a fraction in [0, 1)")
        if self.embedded_steps < 1 or self.samples < 1 or self.workers < 1:
            raise SpecError("embedded_steps, samples and workers must be positive")
        if self.format not in FORMATS + ("json",):
            raise SpecError(f"unknown output format {self.format!r}")
        if self.seed < 0:
            raise SpecError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentSpec:
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise SpecError(f"unknown spec fields: {sorted(extra)}")
        data = dict(data)
        if "steps" in data:
            data["steps"] = str(data["steps"])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentSpec:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise SpecError(f"{path}: {exc}") from None

    def spec_hash(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k not in UNHASHED}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def build_topology(self) -> Topology:
        return from_descriptor(self.topology)

    def build_distribution(self) -> DistributionSpec:
        return DistributionSpec.from_dict(self.distribution)

    def stop_rule(self) -> StopRule:
        return StopRule.parse(self.steps)


@dataclass
class RunReport:
    kind: str
    columns: list[str]
    rows: list[dict]
    aggregate: dict
    provenance: dict

    @property
    def passed(self) -> bool:
        return bool(self.aggregate.get("passed", True))


def _provenance(spec: ExperimentSpec, started: float) -> dict:
    return {"seed": spec.seed, "spec_hash": spec.spec_hash(), "wall_time": time.perf_counter() - started,
            "backend": kernels.BACKEND, "version": __version__}


def _blocks(runs: int, workers: int):
    size = math.ceil(runs / workers)
    return [range(lo, min(lo + size, runs)) for lo in range(0, runs, size)]


def _fan_out(fn, runs: int, workers: int) -> list:
    """Apply ``fn`` to contiguous blocks of run indices; concatenate in index order."""
    blocks = _blocks(runs, workers)
    if workers == 1 or len(blocks) == 1:
        parts = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, blocks))
    return [row for part in parts for row in part]


def _initial(spec: ExperimentSpec, t: Topology, dist: DistributionSpec, rng):
    if spec.init == "iid":
        return initial_configuration(t, dist, rng)
    return as_configuration(spec.init, t, dist)


# Absorbing-value histograms.

def histogram_shape(counts) -> dict:
    """Shape summary of a histogram over ``{1..M}`` (``counts[k]`` for value ``k + 1``).

    The mode must be strictly interior. Tails are checked for monotone decay
    away from the mode twice: literally, and allowing rises that are within
    three Poisson standard deviations (``c_far - c_near <= 3 sqrt(c_far + c_near)``).
    """
    c = np.asarray(counts, dtype=np.int64)
    M = len(c)
    mode = int(np.argmax(c))
    interior = 0 < mode < M - 1
    pairs = [(c[k], c[k + 1]) for k in range(mode, M - 1)] + [(c[k], c[k - 1]) for k in range(mode, 0, -1)]
    rises = [(int(near), int(far)) for near, far in pairs if far > near]
    significant = [(n, f) for n, f in rises if f - n > 3.0 * math.sqrt(f + n)]
    return {
        "mode_value": mode + 1,
        "mode_interior": bool(interior),
        "tails_monotone_literal": not rises,
        "tails_monotone": not significant,
        "rises": rises,
        "unimodal": bool(interior and not significant),
    }


def run_absorb_hist(spec: ExperimentSpec) -> RunReport:
    started = time.perf_counter()
    t, dist = spec.build_topology(), spec.build_distribution()
    if dist.is_continuous:
        raise SpecError("absorbing-value histograms need a discrete distribution")
    if not dist.is_equally_spaced:
        raise DistributionError("absorption is only guaranteed for equally spaced support")
    if spec.mode != "frozen":
        raise SpecError("absorbing-value histograms run the frozen process")
    stop = spec.stop_rule()
    if stop.kind == "max_steps":
        stop = StopRule("until_absorbed", None, int(stop.value))

    def block(idx):
        rngs = [derive_rng(spec.seed, r) for r in idx]
        X0 = np.stack([_initial(spec, t, dist, g) for g in rngs])
        final, steps, stopped = run_batch(X0, t, dist, rngs, stop, mode="frozen")
        rows = []
        for k, r in enumerate(idx):
            absorbed = bool(stopped[k]) and bool(np.all(final[k] == final[k][0]))
            rows.append({"run_index": r, "absorb_value": int(final[k][0]) if absorbed else None,
                         "absorb_time": int(steps[k])})
        return rows

    rows = _fan_out(block, spec.runs, spec.workers)
    return RunReport("absorb_hist", ["run_index", "absorb_value", "absorb_time"], rows,
                     aggregate_absorb(rows, dist), _provenance(spec, started))


def aggregate_absorb(rows, dist: DistributionSpec) -> dict:
    values = [r["absorb_value"] for r in rows if r["absorb_value"] is not None]
    times = np.array([r["absorb_time"] for r in rows if r["absorb_value"] is not None], dtype=float)
    counts = [values.count(v) for v in dist.values]
    agg = {
        "runs": len(rows),
        "absorbed": len(values),
        "histogram": dict(zip(dist.values, counts)),
        "passed": len(values) == len(rows),
    }
    if values:
        agg["mean_value"] = float(np.mean(values))
        agg["mean_time"] = float(times.mean())
        agg["time_quantiles"] = {str(q): float(np.quantile(times, q)) for q in (0.1, 0.5, 0.9)}
        agg["shape"] = histogram_shape(counts)
    return agg


# Convergence rates.

def _require_rate_setup(spec: ExperimentSpec):
    t, dist = spec.build_topology(), spec.build_distribution()
    if not dist.is_continuous:
        raise SpecError("rate estimation needs the uniform [0, 1] law")
    if not t.is_cycle or t.node_count < 5:
        raise SpecError("rate estimation needs a cycle with N >= 5")
    return t, dist


def run_rate_estimate(spec: ExperimentSpec) -> RunReport:
    """Per-run decay rate ``rho_hat = -slope`` of ``ln xi(s)`` against embedded index ``s``."""
    started = time.perf_counter()
    t, dist = _require_rate_setup(spec)

    def block(idx):
        rngs = [derive_rng(spec.seed, r) for r in idx]
        X0 = np.stack([_initial(spec, t, dist, g) for g in rngs])
        embs = continuous.simulate_embedded_batch(X0, spec.embedded_steps, rngs)
        rows = []
        for r, e in zip(idx, embs):
            slope, npts, r2 = continuous.decay_slope(e, spec.burn_in, LOG_FLOOR)
            if npts < 10:
                raise InsufficientDataError(
                    f"run {r}: {npts} embedded points after burn-in, need at least 10")
            rows.append({"run_index": r, "rho_hat": -slope, "n_embedded": npts, "r_squared": r2})
        return rows

    rows = _fan_out(block, spec.runs, spec.workers)
    rho = np.array([r["rho_hat"] for r in rows])
    agg = {
        "N": t.node_count,
        "runs": len(rows),
        "median_rho": float(np.median(rho)),
        "mean_rho": float(rho.mean()),
        "rho_quantiles": {str(q): float(np.quantile(rho, q)) for q in (0.05, 0.25, 0.5, 0.75, 0.95)},
        "all_slopes_negative": bool(np.all(rho > 0)),
        "passed": bool(np.all(rho > 0)),
    }
    return RunReport("rate_estimate", ["run_index", "rho_hat", "n_embedded", "r_squared"], rows, agg,
                     _provenance(spec, started))


def loglog_slope(sizes, mean_rates) -> float:
    """Least-squares slope of ``ln rate`` against ``ln N``."""
    return float(np.polyfit(np.log(sizes), np.log(mean_rates), 1)[0])


# Verification suite.

def suite_sizes(samples: int) -> dict:
    """Sample counts per check, scaled from the headline ``samples``."""
    return {
        "f_decrease": samples,
        "absorbing_path": max(100, min(samples // 100, 10_000)),
        "counterexample_steps": 10_000,
        "drift": samples,
        "drift_boundary": max(samples // 10, 100),
        "drift_oracle_windows": min(1000, samples),
        "drift_oracle_mc": 10_000,
        "reflection": max(samples // 10, 100),
        "metric": samples,
        "decrease_window": samples,
        "rejection": samples,
        "embedded_steps": max(samples // 10, 10_000),
    }


def verification_checks(samples: int, seed: int, drift=continuous.drift_batch) -> list[CheckReport]:
    """Run every property check; check ``k`` draws from ``derive_rng(seed, k)``."""
    n = suite_sizes(samples)

    def rng(k):
        return derive_rng(seed, k)

    reports = [
        discrete.check_f_zero_iff_absorbed(),
        discrete.sweep_f_decrease(n["f_decrease"], rng(1)),
        discrete.sweep_absorbing_paths(n["absorbing_path"], rng(2)),
        discrete.run_stable_family(n["counterexample_steps"], rng(3))[0].check_report(),
        discrete.run_counterexample_graph(n["counterexample_steps"], rng(4))[0].check_report(),
        continuous.verify_drift_nonpositive(n["drift"], rng(5), drift=drift,
                                            boundary_samples=n["drift_boundary"]),
        continuous.check_drift_oracle(n["drift_oracle_windows"], n["drift_oracle_mc"], rng(6), drift=drift),
        continuous.check_reflection_invariance(n["reflection"], rng(7)),
        continuous.sweep_metric_bounds(n["metric"], rng(8)),
        continuous.sweep_decrease_window(n["decrease_window"], rng(9)),
        continuous.sweep_rejection_region(n["rejection"], rng(10)),
    ]
    reports += embedded_step_checks(n["embedded_steps"], seed)
    return reports


def embedded_step_checks(total_steps: int, seed: int, sizes=(5, 8, 12)) -> list[CheckReport]:
    """Hard step bounds over ``total_steps`` embedded steps split across ``sizes``,
    and the guaranteed-decrease frequency at the smallest size."""
    per = total_steps // len(sizes)
    worst_ratio, worst_jump, transitions = 0.0, -math.inf, 0
    ok = True
    freq = None
    for k, N in enumerate(sizes):
        g = derive_rng(seed, 100 + k)
        e = continuous.simulate_embedded(g.random(N), per, g)
        rep = continuous.check_step_bounds(e, N, raise_on_violation=False)
        ok &= rep["step_bound_ok"] and rep["jump_bound_ok"]
        worst_ratio = max(worst_ratio, rep["max_step_ratio"])
        worst_jump = max(worst_jump, rep["max_log_xi_jump"])
        transitions += rep["transitions"]
        if k == 0:
            freq = rep
    excess = max(worst_ratio - 4.0, worst_jump - continuous.LOG_R)
    bounds = CheckReport("embedded_step_bounds", transitions, excess, bool(ok),
                         details={"max_step_ratio": worst_ratio, "max_log_xi_jump": worst_jump})
    lb = freq["decrease_lower_bound"]
    decrease = CheckReport(f"decrease_probability_N{sizes[0]}", freq["transitions"], 1.0 / 48.0 - lb,
                           bool(freq["decrease_consistent"]),
                           details={"frequency": freq["decrease_frequency"], "lower_bound_99": lb})
    return [bounds, decrease]


def run_verify_suite(spec: ExperimentSpec, drift=continuous.drift_batch) -> RunReport:
    """``drift`` can be swapped for a corrupted formula to exercise the failure path."""
    started = time.perf_counter()
    reports = verification_checks(spec.samples, spec.seed, drift=drift)
    rows = [{"name": r.name, "samples": r.samples, "max_violation": r.max_violation, "passed": r.passed}
            for r in reports]
    agg = {
        "passed": all(r.passed for r in reports),
        "checks": [r.to_dict() for r in reports],
        "failures": [r.to_dict() for r in reports if not r.passed],
    }
    return RunReport("verify_suite", ["name", "samples", "max_violation", "passed"], rows, agg,
                     _provenance(spec, started))


# Single runs.

def _plain(v):
    return v.item() if hasattr(v, "item") else v


def run_single(spec: ExperimentSpec) -> RunReport:
    """Full step log of ``spec.runs`` independent chains."""
    started = time.perf_counter()
    t, dist = spec.build_topology(), spec.build_distribution()
    stop = spec.stop_rule()

    def block(idx):
        rows = []
        for r in idx:
            g = derive_rng(spec.seed, r)
            tr = run(_initial(spec, t, dist, g), t, dist, g, stop, mode=spec.mode, seed=spec.seed)
            d = tr.d_before_raw / tr.d_scale
            for k in range(len(tr)):
                rows.append({"run_index": r, "t": k, "node": int(tr.nodes[k]) + 1,
                             "old_value": _plain(tr.old_values[k]), "new_value": _plain(tr.new_values[k]),
                             "d_before": float(d[k])})
            final_d = tr.final_d
            rows.append({"run_index": r, "t": len(tr), "node": None, "old_value": None, "new_value": None,
                         "d_before": float(final_d)})
        return rows

    rows = _fan_out(block, spec.runs, spec.workers)
    ends = [r for r in rows if r["node"] is None]
    agg = {"runs": spec.runs, "steps": [e["t"] for e in ends], "final_d": [e["d_before"] for e in ends]}
    return RunReport("single_run", ["run_index", "t", "node", "old_value", "new_value", "d_before"], rows,
                     agg, _provenance(spec, started))


RUNNERS = {
    "absorb_hist": run_absorb_hist,
    "rate_estimate": run_rate_estimate,
    "verify_suite": run_verify_suite,
    "single_run": run_single,
}


def run_experiment(spec: ExperimentSpec) -> RunReport:
    return RUNNERS[spec.kind](spec)


# Persistence.

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump(report: RunReport, fh, fmt: str = "csv", spec: ExperimentSpec | None = None) -> None:
    """Write per-run rows, in run order, under a header carrying spec hash and seed.

    Wall time is deliberately left out so identical specs give identical output.
    """
    header = {"kind": report.kind, "spec_hash": report.provenance["spec_hash"],
              "seed": report.provenance["seed"]}
    if fmt == "csv":
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report.columns)
        for row in report.rows:
            w.writerow([_cell(row[c]) for c in report.columns])
    elif fmt == "jsonl":
        head = {**header, "aggregate": _jsonable(report.aggregate)}
        if spec is not None:
            head["spec"] = {k: v for k, v in spec.to_dict().items() if k not in UNHASHED}
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for row in report.rows:
            fh.write(json.dumps(_jsonable({c: row[c] for c in report.columns})) + "\n")
    elif fmt == "json":
        doc = {**header, "passed": report.passed, "aggregate": _jsonable(report.aggregate),
               "rows": _jsonable(report.rows)}
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        raise SpecError(f"unknown output format {fmt!r}")


def persist(report: RunReport, path, fmt: str = "csv", spec: ExperimentSpec | None = None) -> None:
    if fmt not in FORMATS + ("json",):
        raise SpecError(f"unknown output format {fmt!r}")
    try:
        with open(path, "w", newline="") as fh:
            dump(report, fh, fmt, spec)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results to {path}: {exc.strerror}") from exc


def with_overrides(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in changes.items() if v is not None})
