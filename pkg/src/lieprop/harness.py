"""Experiment driver: Monte-Carlo ground truth vs. propagated moments."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from lieprop.rigidbody import METHODS, canonical_method, propagate_rigidbody
from lieprop.sim import DEFAULT_INERTIA, RigidBodyModel, SimulationGrid, read_dump, sample_ensemble
from lieprop.stats import EnsembleStats, error_metrics, stats_from_checkpoints

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "e_R", "e_l", "e_Sigma")
SVG_SALT = "lieprop"


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    trajectory: int = 1
    inertia_diag: tuple = DEFAULT_INERTIA
    c: float = 1.0
    b: float = 1.0
    T: float = 1.0
    dt: float = 1e-3
    n_samples: int = 100_000
    base_seed: int = 0
    methods: tuple = METHODS
    checkpoint_stride: int = 10
    output_dir: str = "results"

    def __post_init__(self) -> None:
        self.inertia_diag = tuple(float(v) for v in self.inertia_diag)
        if isinstance(self.methods, str):
            self.methods = tuple(m for m in self.methods.split(",") if m.strip())
        self.methods = tuple(canonical_method(m) for m in self.methods)
        self.validate()

    def validate(self) -> None:
        if self.trajectory not in (1, 2):
            raise ValueError(f"trajectory must be 1 or 2, got {self.trajectory}")
        if len(self.inertia_diag) != 3:
            raise ValueError("inertia_diag needs three entries")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")

    @property
    def grid(self) -> SimulationGrid:
        return SimulationGrid(self.dt, self.T, self.checkpoint_stride)

    @property
    def model(self) -> RigidBodyModel:
        return RigidBodyModel(self.inertia_diag, self.c, self.b, self.trajectory).with_torque(self.grid)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inertia_diag"] = list(self.inertia_diag)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MethodResult:
    times: np.ndarray
    e_R: np.ndarray
    e_l: np.ndarray
    e_Sigma: np.ndarray
    seconds: float
    states: list = field(default_factory=list, repr=False)


@dataclass
class ResultTable:
    config: ExperimentConfig
    reference: EnsembleStats
    methods: dict = field(default_factory=dict)

    def timings(self) -> dict:
        return {name: r.seconds for name, r in self.methods.items()}


def run_ground_truth(config: ExperimentConfig, dump_path: str | Path | None = None) -> EnsembleStats:
    log.info("simulating %d trajectories (trajectory %d)", config.n_samples, config.trajectory)
    return sample_ensemble(config.model, config.grid, config.n_samples, config.base_seed, dump_path)


def reference_from_dump(config: ExperimentConfig, path: str | Path) -> EnsembleStats:
    R, l = read_dump(path)
    times = config.grid.checkpoint_times
    if R.shape[0] != len(times):
        raise ExperimentError(f"dump has {R.shape[0]} checkpoints, config expects {len(times)}")
    return stats_from_checkpoints(times, R, l, "left")


def evaluate_method(config: ExperimentConfig, reference: EnsembleStats, method: str) -> MethodResult:
    model, grid = config.model, config.grid
    t0 = time.perf_counter()
    try:
        prop = propagate_rigidbody(model, grid, method)
    except Exception as exc:  # surfaced with context
        raise ExperimentError(f"{method}: propagation failed: {exc}") from exc
    seconds = time.perf_counter() - t0
    errs = np.empty((len(prop.states), 3))
    for k, state in enumerate(prop.states):
        try:
            errs[k] = error_metrics(reference.at(k), state)
        except Exception as exc:
            raise ExperimentError(f"{method}: metrics failed at checkpoint t={prop.times[k]}: {exc}") from exc
    return MethodResult(prop.times, errs[:, 0], errs[:, 1], errs[:, 2], seconds, prop.states)


def run_methods(config: ExperimentConfig, reference: EnsembleStats) -> ResultTable:
    table = ResultTable(config, reference)
    for method in config.methods:
        table.methods[method] = evaluate_method(config, reference, method)
        log.info("%s: %.3f s", method, table.methods[method].seconds)
    return table


def run_experiment(config: ExperimentConfig, dump_path: str | Path | None = None) -> ResultTable:
    """Ground truth once, then every configured method against it."""
    return run_methods(config, run_ground_truth(config, dump_path))


def time_methods(config: ExperimentConfig, repeats: int = 5) -> dict:
    """Wall-clock seconds per method: minimum over interleaved repetitions.

    Methods are run round-robin so that slow drifts in machine load affect all
    of them alike; the minimum is the least noisy estimate of the cost.
    """
    model, grid = config.model, config.grid
    best = {m: float("inf") for m in config.methods}
    for _ in range(repeats):
        for m in config.methods:
            t0 = time.perf_counter()
            propagate_rigidbody(model, grid, m)
            best[m] = min(best[m], time.perf_counter() - t0)
    return best


# --- output ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_errors_csv(path: str | Path, result: MethodResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for row in zip(result.times, result.e_R, result.e_l, result.e_Sigma):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_errors_csv(path: str | Path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        cols = list(zip(*[[float(v) for v in row] for row in reader]))
    return {name: np.array(col) for name, col in zip(CSV_HEADER, cols)}


def write_timings_csv(path: str | Path, timings: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("method,seconds\n")
        for name, sec in timings.items():
            fh.write(f"{name},{_fmt(sec)}\n")


def write_config(path: str | Path, config: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_errors(table: ResultTable, output_dir: Path) -> list:
    """One SVG per metric with a line per method; output is byte-stable."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        for key, label in (("e_R", "e_R"), ("e_l", "e_l"), ("e_Sigma", "e_Sigma")):
            fig, ax = plt.subplots(figsize=(6, 4))
            for name, res in table.methods.items():
                ax.plot(res.times, getattr(res, key), label=name)
            ax.set_xlabel("t [s]")
            ax.set_ylabel(label)
            ax.set_title(f"{label}, trajectory {table.config.trajectory}")
            ax.legend()
            fig.tight_layout()
            path = output_dir / f"{key}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths


def emit_results(table: ResultTable, output_dir: str | Path, plots: bool = True) -> list:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, res in table.methods.items():
        path = out / f"errors_{name}.csv"
        write_errors_csv(path, res)
        written.append(path)
    write_timings_csv(out / "timings.csv", table.timings())
    write_config(out / "config.json", table.config)
    written += [out / "timings.csv", out / "config.json"]
    if plots and table.methods:
        written += plot_errors(table, out)
    return written
