"""Replicated experiment harness and its file formats.

A JSON config describes the simulator, the target, the methods to compare and
the budgets.  Each replication draws one initial design that every method
shares, so method comparisons start from identical information.  Outputs land
in ``<out>/<method>/<seed>/`` as ``trace.csv`` (one row per evaluation) and
``summary.json``; ``emit_comparison`` flattens all traces into one long CSV.
Floats are written with 17 significant digits so files round-trip exactly.

Config schema (JSON object; unknown keys are rejected)::

    {
      "simulator": "test1" | {"path": "...", "d": 2, "L": 101,
                               "timeout_seconds": 60.0},
      "grid": {"start": 0.5, "step": 0.02, "count": 101},   # optional
      "target": {"x0": [0.5]} | {"path": "target.csv"},
      "methods": ["gp_on_w", "bart_on_logw"],
      "n0": 5, "n_new": 15,
      "seed": 0, "replications": 10,          # seeds are seed, seed+1, ...
      "seeds": [3, 17, 40],                   # optional explicit override
      "candidate_count": null,                 # null -> 1000 * d
      "multistart_count": 10,
      "design_variant": "maximin",
      "surrogate_params": {"bart_on_logw": {"n_iter": 2000}},  # optional
      "out": "results"                         # optional, CLI --out wins
    }
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import latin_hypercube
from .sequential import (
    SURROGATES,
    RunTrace,
    SequentialConfig,
    SimulationFailed,
    run_sequential,
)
from .simulators import (
    DEFAULT_GRID,
    BUILTIN_SIMULATORS,
    ExternalSimulator,
    Simulator,
    TargetSeries,
    TimeGrid,
    TimeSeries,
    get_simulator,
    make_target,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "build_simulator",
    "build_target",
    "run_experiment",
    "load_target",
    "save_target",
    "write_trace",
    "read_trace",
    "emit_comparison",
    "FLOAT_FORMAT",
]

FLOAT_FORMAT = "%.17g"

_TOP_KEYS = {
    "simulator",
    "grid",
    "target",
    "methods",
    "n0",
    "n_new",
    "seed",
    "replications",
    "seeds",
    "candidate_count",
    "multistart_count",
    "design_variant",
    "surrogate_params",
    "out",
}


class ConfigError(ValueError):
    """The experiment description cannot be used as given."""


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


@dataclass
class ExperimentConfig:
    simulator: str | dict
    target: dict
    methods: list[str]
    n0: int
    n_new: int
    grid: TimeGrid = DEFAULT_GRID
    seed: int = 0
    replications: int = 1
    seeds: list[int] | None = None
    candidate_count: int | None = None
    multistart_count: int = 10
    design_variant: str = "maximin"
    surrogate_params: dict = field(default_factory=dict)
    out: str | None = None

    def replication_seeds(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.seed + r for r in range(self.replications)]


def _require_int(doc, key, minimum=None):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key!r} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key!r} must be >= {minimum}, got {value}")
    return value


def parse_config(source) -> ExperimentConfig:
    """Parse a config from a JSON file path or an already-loaded dict."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"simulator", "target", "methods", "n0", "n_new"} - set(doc)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")

    grid = DEFAULT_GRID
    if "grid" in doc:
        gd = doc["grid"]
        if not isinstance(gd, dict) or set(gd) - {"start", "step", "count"}:
            raise ConfigError(f"grid must be an object with start/step/count, got {gd!r}")
        try:
            grid = TimeGrid(
                start=float(gd.get("start", DEFAULT_GRID.start)),
                step=float(gd.get("step", DEFAULT_GRID.step)),
                count=int(gd.get("count", DEFAULT_GRID.count)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid: {exc}") from exc

    sim = doc["simulator"]
    if isinstance(sim, str):
        if sim not in BUILTIN_SIMULATORS:
            raise ConfigError(
                f"unknown simulator {sim!r}; built-ins are {sorted(BUILTIN_SIMULATORS)}"
            )
    elif isinstance(sim, dict):
        extra = set(sim) - {"path", "d", "L", "timeout_seconds"}
        if extra:
            raise ConfigError(f"unknown external-simulator keys: {sorted(extra)}")
        if "path" not in sim or "d" not in sim:
            raise ConfigError("external simulator needs at least 'path' and 'd'")
        if not isinstance(sim["d"], int) or sim["d"] < 1:
            raise ConfigError(f"external simulator 'd' must be a positive integer, got {sim['d']!r}")
        if "L" in sim:
            if not isinstance(sim["L"], int) or sim["L"] < 1:
                raise ConfigError(f"external simulator 'L' must be a positive integer, got {sim['L']!r}")
            if sim["L"] != grid.count:
                raise ConfigError(
                    f"external simulator declares L={sim['L']} but the grid has {grid.count} points"
                )
        if "timeout_seconds" in sim and not (
            isinstance(sim["timeout_seconds"], (int, float)) and sim["timeout_seconds"] > 0
        ):
            raise ConfigError("external simulator 'timeout_seconds' must be a positive number")
    else:
        raise ConfigError(f"simulator must be a builtin id or an object, got {sim!r}")

    target = doc["target"]
    if not isinstance(target, dict) or len(set(target) & {"x0", "path"}) != 1 or set(target) - {"x0", "path"}:
        raise ConfigError("target must be an object with exactly one of 'x0' or 'path'")
    if "x0" in target:
        x0 = target["x0"]
        if not isinstance(x0, list) or not x0 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in x0
        ):
            raise ConfigError(f"target x0 must be a non-empty list of numbers, got {x0!r}")
        if any(not 0.0 <= float(v) <= 1.0 for v in x0):
            raise ConfigError(f"target x0 must lie in [0, 1]^d, got {x0}")

    methods = doc["methods"]
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a non-empty list")
    bad = [mth for mth in methods if mth not in SURROGATES]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {list(SURROGATES)}")
    if len(set(methods)) != len(methods):
        raise ConfigError(f"duplicate methods in {methods}")

    n0 = _require_int(doc, "n0", minimum=1)
    n_new = _require_int(doc, "n_new", minimum=0)
    seed = _require_int(doc, "seed") if "seed" in doc else 0
    replications = _require_int(doc, "replications", minimum=1) if "replications" in doc else 1
    seeds = None
    if doc.get("seeds") is not None:
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in seeds
        ):
            raise ConfigError(f"seeds must be a list of integers, got {seeds!r}")
        if len(seeds) != replications:
            raise ConfigError(
                f"got {len(seeds)} seeds for {replications} replications"
            )
    candidate_count = None
    if doc.get("candidate_count") is not None:
        candidate_count = _require_int(doc, "candidate_count", minimum=1)
    multistart_count = (
        _require_int(doc, "multistart_count", minimum=0) if "multistart_count" in doc else 10
    )
    design_variant = doc.get("design_variant", "maximin")
    if design_variant not in ("random", "maximin"):
        raise ConfigError(f"design_variant must be 'random' or 'maximin', got {design_variant!r}")
    surrogate_params = doc.get("surrogate_params", {})
    if not isinstance(surrogate_params, dict) or any(
        key not in SURROGATES or not isinstance(val, dict)
        for key, val in surrogate_params.items()
    ):
        raise ConfigError(
            "surrogate_params must map method ids to parameter objects"
        )
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"out must be a string path, got {out!r}")

    return ExperimentConfig(
        simulator=sim,
        target=target,
        methods=list(methods),
        n0=n0,
        n_new=n_new,
        grid=grid,
        seed=seed,
        replications=replications,
        seeds=seeds,
        candidate_count=candidate_count,
        multistart_count=multistart_count,
        design_variant=design_variant,
        surrogate_params=dict(surrogate_params),
        out=out,
    )


def build_simulator(config: ExperimentConfig) -> Simulator:
    if isinstance(config.simulator, str):
        return get_simulator(config.simulator, config.grid)
    block = config.simulator
    return ExternalSimulator(
        path=block["path"],
        d=block["d"],
        grid=config.grid,
        timeout_seconds=float(block.get("timeout_seconds", 60.0)),
    )


def build_target(config: ExperimentConfig, simulator: Simulator) -> TargetSeries:
    if "x0" in config.target:
        x0 = [float(v) for v in config.target["x0"]]
        if len(x0) != simulator.d:
            raise ConfigError(
                f"target x0 has {len(x0)} entries but the simulator takes {simulator.d}"
            )
        return make_target(simulator, x0)
    target = load_target(config.target["path"])
    if not target.series.grid.matches(simulator.grid):
        raise ConfigError(
            f"target grid {target.series.grid} does not match the simulator grid {simulator.grid}"
        )
    return target


def save_target(path, series: TimeSeries) -> None:
    """Write a series as a two-column CSV (t, value) with a header."""
    times = series.grid.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in zip(times, series.values):
            writer.writerow([_fmt(t), _fmt(v)])


def load_target(path) -> TargetSeries:
    """Read a target series from a two-column CSV (t, value) with a header.

    The time column must be strictly increasing with uniform spacing; all
    values must be finite.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read target {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"target {path} is empty")
    header = rows[0]
    if len(header) != 2:
        raise ConfigError(f"target {path} must have two columns, got {len(header)}")
    try:
        float(header[0])
        float(header[1])
    except ValueError:
        pass  # non-numeric first row: the expected header
    else:
        raise ConfigError(f"target {path} is missing its header row")
    body = rows[1:]
    if len(body) < 2:
        raise ConfigError(f"target {path} needs at least two data rows")
    t = np.empty(len(body))
    values = np.empty(len(body))
    for i, row in enumerate(body):
        if len(row) != 2:
            raise ConfigError(f"target {path} row {i + 2} has {len(row)} columns")
        try:
            t[i] = float(row[0])
            values[i] = float(row[1])
        except ValueError as exc:
            raise ConfigError(f"target {path} row {i + 2} is not numeric: {exc}") from None
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(values))):
        raise ConfigError(f"target {path} contains non-finite entries")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise ConfigError(f"target {path} time column must be strictly increasing")
    step = float((t[-1] - t[0]) / (len(t) - 1))
    if np.any(np.abs(steps - step) > 1e-6 * max(abs(step), 1e-30)):
        raise ConfigError(f"target {path} time column must be uniformly spaced")
    grid = TimeGrid(start=float(t[0]), step=step, count=len(t))
    return TargetSeries(
        series=TimeSeries(grid, values), kind="file", source=str(path)
    )


def write_trace(path, trace: RunTrace) -> None:
    """One CSV row per evaluation: iter, x_1..x_d, w, y, running_min_w,
    ei_at_chosen, floats at 17 significant digits."""
    d = trace.X.shape[1] if trace.X.ndim == 2 else 0
    running = trace.running_min_w
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iter"] + [f"x_{k + 1}" for k in range(d)] + ["w", "y", "running_min_w", "ei_at_chosen"]
        )
        for i in range(len(trace)):
            writer.writerow(
                [str(i)]
                + [_fmt(v) for v in trace.X[i]]
                + [_fmt(trace.w[i]), _fmt(trace.y[i]), _fmt(running[i]), _fmt(trace.ei[i])]
            )


def read_trace(path) -> dict:
    """Read a trace CSV back into arrays keyed by column name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"trace {path} is empty")
    header = rows[0]
    data = np.array([[float(cell) for cell in row] for row in rows[1:]], dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return {name: data[:, idx] for idx, name in enumerate(header)}


def _summary(method, seed, trace: RunTrace, wall: float, failed=False, error=None) -> dict:
    doc = {
        "method": method,
        "seed": seed,
        "x_opt": [float(v) for v in trace.x_opt] if len(trace) else None,
        "w_opt": trace.w_opt if len(trace) else None,
        "n_evaluations": len(trace),
        "wall_time_seconds": wall,
        "failed": failed,
    }
    if error is not None:
        doc["error"] = error
    return doc


def _persist(out_dir: Path, method: str, seed: int, trace: RunTrace, summary: dict) -> None:
    run_dir = out_dir / method / str(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trace(run_dir / "trace.csv", trace)
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)


def run_experiment(config: ExperimentConfig, out_dir=None, base_seed=None) -> list[dict]:
    """Run every (replication, method) cell and persist traces and summaries.

    Replications share one initial design per seed across methods.  A
    simulator failure persists the partial trace for the failing run, then
    re-raises so callers can report it (CLI exit code 3).
    """
    out = Path(out_dir if out_dir is not None else (config.out or "results"))
    simulator = build_simulator(config)
    target = build_target(config, simulator)
    if base_seed is None:
        seeds = config.replication_seeds()
    else:
        seeds = (
            config.seeds
            if config.seeds is not None
            else [base_seed + r for r in range(config.replications)]
        )
    summaries = []
    for seed in seeds:
        design_rng = np.random.default_rng(seed)
        design = latin_hypercube(
            config.n0, simulator.d, rng=design_rng, variant=config.design_variant
        )
        for method in config.methods:
            run_config = SequentialConfig(
                n0=config.n0,
                n_new=config.n_new,
                surrogate=method,
                candidate_count=config.candidate_count,
                multistart_count=config.multistart_count,
                seed=seed,
                design_variant=config.design_variant,
                surrogate_params=config.surrogate_params.get(method, {}),
            )
            start = time.perf_counter()
            try:
                trace = run_sequential(simulator, target, run_config, initial_design=design)
            except SimulationFailed as exc:
                wall = time.perf_counter() - start
                _persist(
                    out, method, seed, exc.trace,
                    _summary(method, seed, exc.trace, wall, failed=True, error=str(exc)),
                )
                raise
            wall = time.perf_counter() - start
            summary = _summary(method, seed, trace, wall)
            _persist(out, method, seed, trace, summary)
            summaries.append(summary)
    return summaries


def emit_comparison(out_dir, dest=None) -> Path:
    """Flatten every trace under ``out_dir`` into one long CSV.

    Columns: method, seed, iter, running_min_w; rows sorted by (method, seed,
    iter) so files diff cleanly.
    """
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise ConfigError(f"{out_dir} is not a directory")
    records = []
    for trace_path in sorted(out_dir.glob("*/*/trace.csv")):
        method = trace_path.parent.parent.name
        try:
            seed = int(trace_path.parent.name)
        except ValueError:
            continue
        cols = read_trace(trace_path)
        for it, rmw in zip(cols["iter"], cols["running_min_w"]):
            records.append((method, seed, int(it), rmw))
    records.sort(key=lambda rec: (rec[0], rec[1], rec[2]))
    dest = Path(dest) if dest is not None else out_dir / "comparison.csv"
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "iter", "running_min_w"])
        for method, seed, it, rmw in records:
            writer.writerow([method, str(seed), str(it), _fmt(rmw)])
    return dest
