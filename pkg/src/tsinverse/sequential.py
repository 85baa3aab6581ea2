"""Expected-improvement sequential design for the scalarized inverse problem.

Starting from a Latin hypercube design, the loop alternates fitting a
surrogate to the observed discrepancies, maximizing expected improvement, and
running the simulator at the chosen input, for exactly n0 + n_new simulator
calls.  Three surrogate strategies are supported:

* ``gp_on_w``: GP on the RMS discrepancy w
* ``gp_on_logw``: GP on log w
* ``bart_on_logw``: sum-of-trees model on log w, EI averaged over draws

The running minimum is always reported in w units regardless of the modeling
scale.  Given a seed the whole run is reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import maximize_expected_improvement
from .bart import BartRegressor
from .design import latin_hypercube
from .gp import GaussianProcessSurrogate
from .objective import log_objective, rms_distance
from .simulators import SimulatorError

__all__ = ["SURROGATES", "SequentialConfig", "RunTrace", "SimulationFailed", "run_sequential"]

SURROGATES = ("gp_on_w", "bart_on_logw", "gp_on_logw")


@dataclass
class SequentialConfig:
    """Knobs of one sequential run."""

    n0: int
    n_new: int
    surrogate: str = "gp_on_w"
    candidate_count: int | None = None  # None -> 1000 * d
    multistart_count: int = 10
    seed: int | None = 0
    design_variant: str = "maximin"
    surrogate_params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n0 < 1:
            raise ValueError(f"n0 must be >= 1, got {self.n0}")
        if self.n_new < 0:
            raise ValueError(f"n_new must be >= 0, got {self.n_new}")
        if self.surrogate not in SURROGATES:
            raise ValueError(
                f"unknown surrogate {self.surrogate!r}; choose from {SURROGATES}"
            )
        if self.candidate_count is not None and self.candidate_count < 1:
            raise ValueError(f"candidate_count must be >= 1, got {self.candidate_count}")
        if self.multistart_count < 0:
            raise ValueError(f"multistart_count must be >= 0, got {self.multistart_count}")


@dataclass
class RunTrace:
    """Everything observed during one run, in evaluation order."""

    X: np.ndarray
    w: np.ndarray
    y: np.ndarray
    ei: np.ndarray  # EI at the chosen point; NaN for the initial design
    n0: int
    surrogate: str
    seed: int | None = None

    def __len__(self) -> int:
        return self.w.shape[0]

    @property
    def running_min_w(self) -> np.ndarray:
        return np.minimum.accumulate(self.w)

    @property
    def x_opt(self) -> np.ndarray:
        return self.X[int(np.argmin(self.w))]

    @property
    def w_opt(self) -> float:
        return float(self.w.min())


class SimulationFailed(RuntimeError):
    """A simulator call failed mid-run; the partial trace is attached."""

    def __init__(self, message: str, trace: RunTrace, cause: Exception | None = None):
        super().__init__(message)
        self.trace = trace
        self.cause = cause


def _trace_so_far(X, w, y, ei, config, d: int) -> RunTrace:
    k = len(w)
    return RunTrace(
        X=np.asarray(X[:k], dtype=float).reshape(k, d),
        w=np.asarray(w, dtype=float),
        y=np.asarray(y, dtype=float),
        ei=np.asarray(ei, dtype=float),
        n0=min(config.n0, k),
        surrogate=config.surrogate,
        seed=config.seed,
    )


def run_sequential(simulator, target, config: SequentialConfig, initial_design=None) -> RunTrace:
    """Run the sequential design loop against a simulator and target.

    ``initial_design`` lets a caller share one design across methods; when
    omitted an LHD is drawn from the run's own seed.  Simulator failures abort
    the run with the partial trace attached to the raised
    :class:`SimulationFailed`.
    """
    config.validate()
    d = simulator.d
    rng = np.random.default_rng(config.seed)

    if initial_design is None:
        design = latin_hypercube(config.n0, d, rng=rng, variant=config.design_variant)
    else:
        design = np.asarray(initial_design, dtype=float)
        if design.shape != (config.n0, d):
            raise ValueError(
                f"initial design must have shape ({config.n0}, {d}), got {design.shape}"
            )
        if design.min() < 0.0 or design.max() > 1.0:
            raise ValueError("initial design must lie in the unit cube")

    X: list[np.ndarray] = []
    w: list[float] = []
    y: list[float] = []
    ei: list[float] = []

    def evaluate(x, ei_value):
        try:
            series = simulator(x)
        except SimulatorError as exc:
            raise SimulationFailed(
                f"simulator failed at x={np.asarray(x)}: {exc}",
                _trace_so_far(X, w, y, ei, config, d),
                cause=exc,
            ) from exc
        X.append(np.asarray(x, dtype=float))
        wx = rms_distance(series, target)
        w.append(wx)
        y.append(log_objective(wx))
        ei.append(ei_value)

    for row in design:
        evaluate(row, np.nan)

    n_candidates = config.candidate_count if config.candidate_count is not None else 1000 * d
    for _ in range(config.n_new):
        X_arr = np.asarray(X, dtype=float)
        objective = np.asarray(w if config.surrogate == "gp_on_w" else y, dtype=float)
        best = float(objective.min())
        if config.surrogate == "bart_on_logw":
            candidates = latin_hypercube(n_candidates, d, rng=rng, variant="random")
            model = BartRegressor(
                store_ensembles=False, random_state=rng, **config.surrogate_params
            )
            model.fit(X_arr, objective, eval_X=candidates)
            chosen = maximize_expected_improvement(
                model,
                best,
                d,
                candidates=candidates,
                candidate_draws=model.eval_draws_,
                avoid=X_arr,
            )
        else:
            model = GaussianProcessSurrogate(random_state=rng, **config.surrogate_params)
            model.fit(X_arr, objective)
            chosen = maximize_expected_improvement(
                model,
                best,
                d,
                n_candidates=n_candidates,
                n_multistart=config.multistart_count,
                rng=rng,
                avoid=X_arr,
            )
        evaluate(chosen.x, chosen.ei)

    return RunTrace(
        X=np.asarray(X, dtype=float),
        w=np.asarray(w, dtype=float),
        y=np.asarray(y, dtype=float),
        ei=np.asarray(ei, dtype=float),
        n0=config.n0,
        surrogate=config.surrogate,
        seed=config.seed,
    )
