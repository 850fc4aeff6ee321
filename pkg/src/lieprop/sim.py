"""Monte-Carlo simulation of the stochastic rigid body.

Momentum obeys the Stratonovich SDE

    dl = (l x I^-1 l - C I^-1 l + N*(t)) dt + B dW

and attitude follows dR = R (I^-1 l)^ dt. The torque N* is chosen so that the
noiseless system tracks a reference momentum l*(t).

Each trajectory draws its Wiener increments from its own counter-based
stream (Philox keyed by ``(base_seed, index)``), so results do not depend on
how trajectories are batched.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from lieprop.lie import so3
from lieprop.stats import EnsembleStats, stats_from_checkpoints

DEFAULT_INERTIA = (2.070, 1.532, 1.236)
DUMP_MAGIC = b"LPENS001"
DEFAULT_CHUNK = 4096


def reference_momentum(traj_id: int, t) -> np.ndarray:
    """Reference angular momentum l*(t); vectorized over t (result (..., 3))."""
    t = np.asarray(t, dtype=float)
    if traj_id == 1:
        return np.stack([np.zeros_like(t), t + 1.0, 2.0 * t + 1.0], axis=-1)
    if traj_id == 2:
        z = np.zeros_like(t)
        return np.stack([1.0 + 0.5 * np.sin(2.0 * np.pi * t), z, z], axis=-1)
    raise ValueError(f"unknown reference trajectory {traj_id!r}; expected 1 or 2")


@dataclass(frozen=True)
class SimulationGrid:
    dt: float = 1e-3
    T: float = 1.0
    checkpoint_stride: int = 10

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint stride must be >= 1")
        if abs(self.n_steps * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def checkpoints(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.checkpoint_stride)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx

    @property
    def checkpoint_times(self) -> np.ndarray:
        return self.checkpoints * self.dt


class TorqueTable:
    """Tabulated torque N*(t) on a uniform grid with linear interpolation."""

    def __init__(self, times: np.ndarray, values: np.ndarray) -> None:
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (len(self.times), 3):
            raise ValueError("torque values must have shape (len(times), 3)")
        self._t0 = float(self.times[0])
        self._step = float(self.times[1] - self.times[0]) if len(self.times) > 1 else 1.0

    def __call__(self, t: float) -> np.ndarray:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside the torque table [{self.times[0]}, {self.times[-1]}]")
        # uniform grid: locate the interval directly instead of searching
        s = (t - self._t0) / self._step
        k = min(max(int(s), 0), len(self.times) - 2) if len(self.times) > 1 else 0
        frac = min(max(s - k, 0.0), 1.0)
        if frac < 1e-9:
            return self.values[k].copy()
        if frac > 1.0 - 1e-9:
            return self.values[k + 1].copy()
        return (1.0 - frac) * self.values[k] + frac * self.values[k + 1]

    def at_step(self, k: int) -> np.ndarray:
        return self.values[k]


@dataclass(frozen=True)
class RigidBodyModel:
    inertia_diag: tuple = DEFAULT_INERTIA
    c: float = 1.0
    b: float = 1.0
    trajectory: int = 1
    torque: TorqueTable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.inertia_diag) <= 0):
            raise ValueError("inertia entries must be positive")
        if self.c < 0 or self.b < 0:
            raise ValueError("c and b must be non-negative")

    @property
    def I(self) -> np.ndarray:
        return np.diag(np.asarray(self.inertia_diag, dtype=float))

    @property
    def I_inv(self) -> np.ndarray:
        return np.diag(1.0 / np.asarray(self.inertia_diag, dtype=float))

    @property
    def C(self) -> np.ndarray:
        return self.c * np.eye(3)

    @property
    def B(self) -> np.ndarray:
        return self.b * np.eye(3)

    def with_torque(self, grid: SimulationGrid) -> "RigidBodyModel":
        return RigidBodyModel(self.inertia_diag, self.c, self.b, self.trajectory, deterministic_torque(self, grid))

    def momentum_drift(self, l: np.ndarray, torque: np.ndarray) -> np.ndarray:
        """l x I^-1 l - C I^-1 l + N*, batched over leading axes of ``l``."""
        w = l / np.asarray(self.inertia_diag, dtype=float)
        return so3.cross(l, w) - self.c * w + torque


def deterministic_torque(model: RigidBodyModel, grid: SimulationGrid) -> TorqueTable:
    """N* = dl*/dt + C I^-1 l* + (I^-1 l*) x l* on the simulation grid.

    The derivative uses central differences inside and one-sided differences
    at the two ends.
    """
    t = grid.times
    ref = reference_momentum(model.trajectory, t)
    dref = np.gradient(ref, grid.dt, axis=0)
    w = ref / np.asarray(model.inertia_diag, dtype=float)
    return TorqueTable(t, dref + model.c * w + so3.cross(w, ref))


class TrajectorySample(NamedTuple):
    """Checkpoint states of a single trajectory."""

    times: np.ndarray
    R: np.ndarray  # (K, 3, 3)
    l: np.ndarray  # (K, 3)


def _increments(base_seed: int, indices: np.ndarray, n_steps: int, dt: float) -> np.ndarray:
    """Wiener increments, shape (n_steps, n, 3), one Philox stream per trajectory."""
    out = np.empty((n_steps, len(indices), 3))
    scale = np.sqrt(dt)
    for j, idx in enumerate(indices):
        rng = np.random.Generator(np.random.Philox(key=[int(base_seed), int(idx)]))
        out[:, j, :] = rng.standard_normal((n_steps, 3)) * scale
    return out


def _simulate_batch(model: RigidBodyModel, grid: SimulationGrid, base_seed: int, indices: np.ndarray):
    """Lock-step Heun integration of a batch; returns checkpoint arrays (K, n, ...)."""
    torque = model.torque if model.torque is not None else deterministic_torque(model, grid)
    n = len(indices)
    n_steps, dt = grid.n_steps, grid.dt
    inv_I = 1.0 / np.asarray(model.inertia_diag, dtype=float)
    dW = _increments(base_seed, indices, n_steps, dt) if model.b > 0 else None

    checkpoints = grid.checkpoints
    R_out = np.empty((len(checkpoints), n, 3, 3))
    l_out = np.empty((len(checkpoints), n, 3))

    R = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    l = np.broadcast_to(reference_momentum(model.trajectory, 0.0), (n, 3)).copy()
    c_idx = 0
    if checkpoints[0] == 0:
        R_out[0], l_out[0] = R, l
        c_idx = 1
    for k in range(n_steps):
        f0 = model.momentum_drift(l, torque.at_step(k))
        noise = model.b * dW[k] if dW is not None else 0.0
        pred = l + f0 * dt + noise
        f1 = model.momentum_drift(pred, torque.at_step(k + 1))
        l_new = l + 0.5 * (f0 + f1) * dt + noise
        R = R @ so3.exp(0.5 * dt * (l + l_new) * inv_I)
        l = l_new
        if c_idx < len(checkpoints) and checkpoints[c_idx] == k + 1:
            R_out[c_idx], l_out[c_idx] = R, l
            c_idx += 1
    return R_out, l_out


def simulate_trajectory(model: RigidBodyModel, grid: SimulationGrid, base_seed: int, index: int = 0) -> TrajectorySample:
    """Simulate trajectory number ``index`` of the stream family ``base_seed``."""
    R, l = _simulate_batch(model, grid, base_seed, np.array([index]))
    return TrajectorySample(grid.checkpoint_times, R[:, 0], l[:, 0])


def iter_ensemble(
    model: RigidBodyModel, grid: SimulationGrid, n_samples: int, base_seed: int, chunk: int = DEFAULT_CHUNK
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (indices, R, l) per batch of trajectories; R is (K, n_chunk, 3, 3)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if model.torque is None:
        model = model.with_torque(grid)
    for start in range(0, n_samples, chunk):
        idx = np.arange(start, min(start + chunk, n_samples))
        R, l = _simulate_batch(model, grid, base_seed, idx)
        yield idx, R, l


def simulate_ensemble(
    model: RigidBodyModel, grid: SimulationGrid, n_samples: int, base_seed: int, chunk: int = DEFAULT_CHUNK
) -> tuple[np.ndarray, np.ndarray]:
    """All checkpoint states, checkpoint-major: R (K, n, 3, 3), l (K, n, 3)."""
    K = len(grid.checkpoints)
    R = np.empty((K, n_samples, 3, 3))
    l = np.empty((K, n_samples, 3))
    for idx, Rc, lc in iter_ensemble(model, grid, n_samples, base_seed, chunk):
        R[:, idx], l[:, idx] = Rc, lc
    return R, l


def sample_ensemble(
    model: RigidBodyModel,
    grid: SimulationGrid,
    n_samples: int,
    base_seed: int,
    dump_path: str | Path | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> EnsembleStats:
    """Simulate ``n_samples`` trajectories and reduce them to left statistics."""
    R, l = simulate_ensemble(model, grid, n_samples, base_seed, chunk)
    if dump_path is not None:
        write_dump(dump_path, R, l)
    return stats_from_checkpoints(grid.checkpoint_times, R, l, "left")


# --- binary dump -----------------------------------------------------------

_HEADER = struct.Struct("<8sQQ")


def write_dump(path: str | Path, R: np.ndarray, l: np.ndarray) -> None:
    """Checkpoint-major float64 records of 12 values (R row-major, then l)."""
    K, n = R.shape[:2]
    rec = np.concatenate([R.reshape(K, n, 9), l], axis=-1).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, n, K))
        fh.write(rec.tobytes())


def read_dump(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic, n, K = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != DUMP_MAGIC:
            raise ValueError(f"{path}: not an ensemble dump (bad magic {magic!r})")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * K * 12:
        raise ValueError(f"{path}: truncated dump ({data.size} values, expected {n * K * 12})")
    data = data.reshape(K, n, 12)
    return data[..., :9].reshape(K, n, 3, 3).copy(), data[..., 9:].copy()
