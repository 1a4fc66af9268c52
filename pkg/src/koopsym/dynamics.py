"""Benchmark vector fields, fixed-step RK4 integration and equivariance checks.

Vector fields act on the last axis of an array, so a stack of initial
conditions of shape ``(m, n)`` integrates in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from koopsym.errors import DimensionError, IntegrationDivergedError

VectorField = Callable[[np.ndarray], np.ndarray]

# internal RK4 step shared by every simulation in the package
DT_INTERNAL = 0.005
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class DuffingParams:
    delta: float = 0.5
    beta: float = -1.0
    alpha: float = 1.0


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled state sequence.

    ``states`` has shape ``(length, dim)``; row ``i`` is the state at
    ``t0 + i * dt``.
    """

    states: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        states = np.array(self.states, dtype=float, ndmin=2)
        if states.ndim != 2 or states.shape[0] < 1:
            raise DimensionError("trajectory states must be a non-empty (length, dim) array")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite states")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))


def _check_dim(x: np.ndarray, n: int) -> None:
    if x.shape[-1] != n:
        raise DimensionError(f"expected state dimension {n}, got {x.shape[-1]}")


def duffing_rhs(x, p: DuffingParams = DuffingParams()) -> np.ndarray:
    """Unforced Duffing vector field ``(x2, -delta x2 - x1 (beta + alpha x1^2))``."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, 2)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2, -p.delta * x2 - x1 * (p.beta + p.alpha * x1 * x1)], axis=-1)


def lorenz_rhs(x, p: LorenzParams = LorenzParams()) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_dim(x, 3)
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        [p.sigma * (b - a), a * (p.rho - c) - b, a * b - p.beta * c], axis=-1
    )


def system_rhs(name: str, params=None) -> VectorField:
    """Look up a benchmark vector field by name (``duffing`` or ``lorenz``)."""
    if name == "duffing":
        return partial(duffing_rhs, p=params or DuffingParams())
    if name == "lorenz":
        return partial(lorenz_rhs, p=params or LorenzParams())
    raise ValueError(f"unknown system {name!r}")


def _rk4_run(rhs, x, dt, n_steps, record_every=1, step_offset=0):
    """Advance ``x`` by ``n_steps`` RK4 steps, keeping every ``record_every``-th state.

    Returns an array of shape ``(n_steps // record_every + 1, *x.shape)``.
    """
    out = [x]
    half = 0.5 * dt
    for i in range(1, n_steps + 1):
        k1 = rhs(x)
        k2 = rhs(x + half * k1)
        k3 = rhs(x + half * k2)
        k4 = rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise IntegrationDivergedError(step_offset + i, x)
        if i % record_every == 0:
            out.append(x)
    return np.stack(out)


def integrate(rhs: VectorField, x0, dt: float, n_steps: int, t0: float = 0.0) -> Trajectory:
    """Classical fixed-step RK4; returns ``n_steps + 1`` states starting at ``x0``.

    Raises
    ------
    IntegrationDivergedError
        A coordinate became non-finite or exceeded 1e6 in magnitude.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise ValueError(f"n_steps must be non-negative, got {n_steps}")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise DimensionError("integrate takes a single state; use integrate_many for batches")
    return Trajectory(_rk4_run(rhs, x0, dt, int(n_steps)), dt=dt, t0=t0)


def _stride_for(dt_out: float, dt_int: float) -> int:
    stride = int(round(dt_out / dt_int))
    if stride < 1 or not np.isclose(stride * dt_int, dt_out, rtol=1e-9, atol=0.0):
        raise ValueError(f"output interval {dt_out} is not a multiple of step {dt_int}")
    return stride


def integrate_many(
    rhs: VectorField,
    x0s,
    dt_out: float,
    n_out: int,
    dt_int: float = DT_INTERNAL,
) -> np.ndarray:
    """Integrate a stack of initial conditions together.

    Returns shape ``(n_out + 1, m, n)``: samples at multiples of ``dt_out``
    taken from an RK4 run with internal step ``dt_int``.
    """
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    stride = _stride_for(dt_out, dt_int)
    return _rk4_run(rhs, x0s, dt_int, n_out * stride, record_every=stride)


def simulate(
    rhs: VectorField,
    x0,
    dt_out: float,
    n_out: int,
    dt_int: float = DT_INTERNAL,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate with step ``dt_int`` and emit ``n_out + 1`` states spaced ``dt_out``."""
    states = integrate_many(rhs, np.asarray(x0, dtype=float)[None, :], dt_out, n_out, dt_int)
    return Trajectory(states[:, 0, :], dt=dt_out, t0=t0)


def subsample(traj: Trajectory, stride: int) -> Trajectory:
    """Keep states ``0, stride, 2*stride, ...``; the sampling interval scales by ``stride``."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return Trajectory(traj.states[::stride], dt=traj.dt * stride, t0=traj.t0)


def _action_matrix(gamma) -> np.ndarray:
    return np.asarray(getattr(gamma, "matrix", gamma), dtype=float)


def check_equivariance(
    rhs: VectorField, gamma, samples, tol: float = 1e-12
) -> tuple[bool, float]:
    """Test ``F(gamma x) == gamma F(x)`` on sample states.

    Returns ``(passed, max_residual)`` where the residual is the largest
    infinity-norm discrepancy over the samples.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0 or samples.size == 0:
        raise ValueError("check_equivariance needs at least one sample state")
    g = _action_matrix(gamma)
    if g.shape != (samples.shape[1], samples.shape[1]):
        raise DimensionError(
            f"action of shape {g.shape} does not match state dimension {samples.shape[1]}"
        )
    lhs = rhs(samples @ g.T)
    rhs_val = rhs(samples) @ g.T
    residual = float(np.max(np.abs(lhs - rhs_val)))
    return residual <= tol, residual


@dataclass(frozen=True)
class DuffingGrid:
    """Initial-condition layout for the 49-trajectory Duffing training set.

    ``n_top`` values of x1 evenly spaced on ``[-box, box]`` pair with
    ``x2 = +box``; ``n_bottom`` pair with ``x2 = -box``. The 3rd to 5th x1
    values of ``refine_row`` are replaced by ``refine_values``.
    """

    n_top: int = 25
    n_bottom: int = 24
    box: float = 2.0
    refine_row: str = "top"
    refine_values: tuple[float, ...] = (-0.085, -0.08, -0.075)
    refine_start: int = 2

    def initial_conditions(self) -> np.ndarray:
        rows = {}
        for name, count, x2 in (("top", self.n_top, self.box), ("bottom", self.n_bottom, -self.box)):
            x1 = np.linspace(-self.box, self.box, count)
            if name == self.refine_row:
                stop = self.refine_start + len(self.refine_values)
                x1[self.refine_start:stop] = self.refine_values
            rows[name] = np.column_stack([x1, np.full(count, x2)])
        if self.refine_row not in rows:
            raise ValueError(f"refine_row must be 'top' or 'bottom', got {self.refine_row!r}")
        return np.vstack([rows["top"], rows["bottom"]])


def generate_duffing_training_set(
    p: DuffingParams = DuffingParams(),
    grid: DuffingGrid = DuffingGrid(),
    t_final: float = 10.0,
    dt_out: float = 0.2,
) -> list[Trajectory]:
    """Duffing training trajectories, each integrated to ``t_final`` and sampled every ``dt_out``."""
    ics = grid.initial_conditions()
    n_out = int(round(t_final / dt_out))
    states = integrate_many(partial(duffing_rhs, p=p), ics, dt_out, n_out)
    return [Trajectory(states[:, i, :], dt=dt_out) for i in range(ics.shape[0])]


def trajectories_from_array(states: np.ndarray, dt: float, t0: float = 0.0) -> list[Trajectory]:
    """Split an ``integrate_many`` result of shape ``(T, m, n)`` into m trajectories."""
    return [Trajectory(states[:, i, :], dt=dt, t0=t0) for i in range(states.shape[1])]


def stack_states(trajs: Sequence[Trajectory]) -> np.ndarray:
    return np.vstack([t.states for t in trajs])
