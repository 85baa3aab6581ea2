"""Deterministic time-series simulators and target construction.

A simulator maps an input vector x in [0, 1]^d to a series of responses on a
fixed, uniformly spaced time grid.  Three closed-form benchmarks with one, two
and three inputs are provided for testing and calibration, together with a
wrapper that drives an external executable over a line-based stdin/stdout
protocol.
"""

from __future__ import annotations

import subprocess
import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "TargetSeries",
    "DEFAULT_GRID",
    "Simulator",
    "Benchmark1",
    "Benchmark2",
    "Benchmark3",
    "BUILTIN_SIMULATORS",
    "get_simulator",
    "make_target",
    "ExternalSimulator",
    "SimulatorError",
    "SimulatorProcessError",
    "SimulatorOutputError",
    "SimulatorTimeoutError",
]


class SimulatorError(RuntimeError):
    """An evaluation failed while running a simulator."""


class SimulatorProcessError(SimulatorError):
    """The external process could not be started or exited with an error."""


class SimulatorOutputError(SimulatorError):
    """The external process produced output that does not parse as a series."""


class SimulatorTimeoutError(SimulatorError):
    """The external process exceeded its time budget."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_i = start + i * step for i = 0 .. count - 1."""

    start: float = 0.5
    step: float = 0.02
    count: int = 101

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"grid needs at least one point, got count={self.count}")
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count, dtype=float)

    def matches(self, other: "TimeGrid", rtol: float = 1e-9) -> bool:
        return (
            self.count == other.count
            and np.isclose(self.start, other.start, rtol=rtol, atol=1e-12)
            and np.isclose(self.step, other.step, rtol=rtol, atol=1e-12)
        )


DEFAULT_GRID = TimeGrid()


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Response values on a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != self.grid.count:
            raise ValueError(
                f"expected {self.grid.count} values, got array of shape {values.shape}"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class TargetSeries:
    """A target response g0, either synthetic (from a known x0) or file-loaded."""

    series: TimeSeries
    kind: str = "synthetic"
    x0: np.ndarray | None = None
    source: str | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "file"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))


class Simulator:
    """Base class: a deterministic map from [0, 1]^d to a time series."""

    d: int
    grid: TimeGrid

    def __call__(self, x) -> TimeSeries:
        raise NotImplementedError

    def _validate_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.ndim != 1 or x.shape[0] != self.d:
            raise ValueError(f"expected input of length {self.d}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"input contains non-finite entries: {x}")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError(f"input outside the unit cube [0, 1]^{self.d}: {x}")
        return x


class _AnalyticSimulator(Simulator):
    """Closed-form simulator on a positive time grid."""

    def __init__(self, grid: TimeGrid = DEFAULT_GRID):
        if grid.start <= 0:
            raise ValueError(f"time grid must be strictly positive, starts at {grid.start}")
        self.grid = grid

    def __call__(self, x) -> TimeSeries:
        x = self._validate_input(x)
        t = self.grid.times()
        return TimeSeries(self.grid, self._formula(x, t))

    def _formula(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Benchmark1(_AnalyticSimulator):
    """g(x, t) = sin(10 pi t) / (2 t) + |t - 1|^(2 + 4 x), one input."""

    d = 1

    def _formula(self, x, t):
        return np.sin(10.0 * np.pi * t) / (2.0 * t) + np.abs(t - 1.0) ** (2.0 + 4.0 * x[0])


class Benchmark2(_AnalyticSimulator):
    """g(x, t) = sin(10 pi t) / ((1 + 2 x1) t) + |t - 1|^(2 + 4 x2), two inputs."""

    d = 2

    def _formula(self, x, t):
        return np.sin(10.0 * np.pi * t) / ((1.0 + 2.0 * x[0]) * t) + np.abs(t - 1.0) ** (
            2.0 + 4.0 * x[1]
        )


class Benchmark3(_AnalyticSimulator):
    """g(x, t) = sin(10 pi t^(2 x3)) / ((1 + 2 x2) t) + |t - 1|^(2 + 4 x3).

    Three inputs as declared, but the response depends only on x2 and x3; the
    first coordinate is inert by construction and inverse methods are expected
    to be unable to recover it.
    """

    d = 3

    def _formula(self, x, t):
        return np.sin(10.0 * np.pi * t ** (2.0 * x[2])) / ((1.0 + 2.0 * x[1]) * t) + np.abs(
            t - 1.0
        ) ** (2.0 + 4.0 * x[2])


BUILTIN_SIMULATORS = {
    "test1": Benchmark1,
    "test2": Benchmark2,
    "test3": Benchmark3,
}


def get_simulator(name: str, grid: TimeGrid = DEFAULT_GRID) -> Simulator:
    """Instantiate a built-in simulator by id ("test1", "test2", "test3")."""
    try:
        cls = BUILTIN_SIMULATORS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_SIMULATORS))
        raise ValueError(f"unknown simulator {name!r}; built-ins are: {known}") from None
    return cls(grid)


def make_target(simulator: Simulator, x0) -> TargetSeries:
    """Build a synthetic target by running the simulator at a known input x0."""
    series = simulator(x0)
    return TargetSeries(series=series, kind="synthetic", x0=np.asarray(x0, dtype=float))


class ExternalSimulator(Simulator):
    """Drive an external executable, one process invocation per evaluation.

    Protocol: the input vector is written to the child's stdin as one line of
    d space-separated decimal reals followed by a newline; the child must print
    exactly ``grid.count`` whitespace-separated reals on stdout and exit 0.

    Evaluations are serialized through a lock by default so a shared instance
    is safe to call from multiple threads; pass ``reentrant=True`` if the
    executable is known to tolerate concurrent invocations.
    """

    def __init__(
        self,
        path: str,
        d: int,
        grid: TimeGrid = DEFAULT_GRID,
        timeout_seconds: float = 60.0,
        reentrant: bool = False,
    ):
        if d < 1:
            raise ValueError(f"input dimension must be >= 1, got {d}")
        if not timeout_seconds > 0:
            raise ValueError(f"timeout must be positive, got {timeout_seconds}")
        self.path = str(path)
        self.d = int(d)
        self.grid = grid
        self.timeout_seconds = float(timeout_seconds)
        self._lock = None if reentrant else threading.Lock()

    @property
    def L(self) -> int:
        return self.grid.count

    def __call__(self, x) -> TimeSeries:
        x = self._validate_input(x)
        line = " ".join(f"{v:.17g}" for v in x) + "\n"
        if self._lock is not None:
            with self._lock:
                out = self._run_process(line)
        else:
            out = self._run_process(line)
        return TimeSeries(self.grid, self._parse_output(out))

    def _run_process(self, line: str) -> str:
        try:
            proc = subprocess.run(
                [self.path],
                input=line,
                capture_output=True,
                text=True,
                timeout=self.timeout_seconds,
            )
        except subprocess.TimeoutExpired:
            raise SimulatorTimeoutError(
                f"{self.path} exceeded the {self.timeout_seconds} s budget"
            ) from None
        except OSError as exc:
            raise SimulatorProcessError(f"could not run {self.path}: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1] if proc.stderr.strip() else ""
            raise SimulatorProcessError(
                f"{self.path} exited with status {proc.returncode}"
                + (f": {tail}" if tail else "")
            )
        return proc.stdout

    def _parse_output(self, out: str) -> np.ndarray:
        tokens = out.split()
        if len(tokens) != self.L:
            raise SimulatorOutputError(
                f"{self.path} produced {len(tokens)} values, expected {self.L}"
            )
        try:
            values = np.array([float(tok) for tok in tokens], dtype=float)
        except ValueError as exc:
            raise SimulatorOutputError(f"{self.path} produced a non-numeric token: {exc}") from None
        if not np.all(np.isfinite(values)):
            raise SimulatorOutputError(f"{self.path} produced non-finite values")
        return values
