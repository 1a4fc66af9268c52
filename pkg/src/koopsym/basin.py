"""Basin-of-attraction labels and a nearest-neighbour indicator.

Labels are integers ``1..J``. For the Duffing oscillator label 1 is the basin
of the positive fixed point ``(1, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from koopsym.dynamics import DT_INTERNAL, Trajectory, VectorField, _rk4_run
from koopsym.errors import DimensionError, UnresolvedBasinError

DUFFING_TARGETS = np.array([[1.0, 0.0], [-1.0, 0.0]])


def _nearest_target(endpoints, targets):
    d = cdist(np.atleast_2d(endpoints), targets)
    idx = np.argmin(d, axis=1)
    return idx + 1, d[np.arange(d.shape[0]), idx]


def label_many(
    x0s,
    system: VectorField,
    attractor_targets=DUFFING_TARGETS,
    t_final: float = 50.0,
    tol: float = 0.05,
    dt: float = DT_INTERNAL,
) -> np.ndarray:
    """Vectorised integration oracle.

    Returns one label per row of ``x0s``; 0 marks endpoints farther than
    ``tol`` from every target.
    """
    targets = np.atleast_2d(np.asarray(attractor_targets, dtype=float))
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    n_steps = int(round(t_final / dt))
    end = _rk4_run(system, x0s, dt, n_steps, record_every=max(n_steps, 1))[-1]
    labels, dist = _nearest_target(end, targets)
    labels[dist > tol] = 0
    return labels


def label_by_integration(
    x0,
    system: VectorField,
    attractor_targets=DUFFING_TARGETS,
    t_final: float = 50.0,
    tol: float = 0.05,
) -> int:
    """Ground-truth basin label: integrate to ``t_final``, pick the nearby target.

    Raises
    ------
    UnresolvedBasinError
        The endpoint is not within ``tol`` of any target.
    """
    if not t_final > 0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    targets = np.atleast_2d(np.asarray(attractor_targets, dtype=float))
    if len({tuple(t) for t in targets.tolist()}) != targets.shape[0]:
        raise ValueError("attractor targets must be distinct")
    x0 = np.asarray(x0, dtype=float)
    n_steps = int(round(t_final / DT_INTERNAL))
    end = _rk4_run(system, x0, DT_INTERNAL, n_steps, record_every=max(n_steps, 1))[-1]
    label, dist = _nearest_target(end, targets)
    if dist[0] > tol:
        raise UnresolvedBasinError(end, t_final)
    return int(label[0])


def label_trajectories(
    trajs: Sequence[Trajectory],
    system: VectorField,
    attractor_targets=DUFFING_TARGETS,
    tol: float = 0.05,
    t_extend: float = 50.0,
) -> np.ndarray:
    """Label trajectories by where they end up.

    The recorded endpoint is used when it already sits within ``tol`` of a
    target; otherwise integration continues from it until total time
    ``t_extend``.
    """
    targets = np.atleast_2d(np.asarray(attractor_targets, dtype=float))
    ends = np.array([t.states[-1] for t in trajs])
    labels, dist = _nearest_target(ends, targets)
    todo = np.flatnonzero(dist > tol)
    if todo.size:
        elapsed = (len(trajs[0]) - 1) * trajs[0].dt
        more = label_many(ends[todo], system, targets, t_final=max(t_extend - elapsed, DT_INTERNAL), tol=tol)
        if np.any(more == 0):
            bad = todo[more == 0][0]
            raise UnresolvedBasinError(ends[bad], t_extend)
        labels[todo] = more
    return labels


@dataclass(frozen=True, eq=False)
class BasinIndicator:
    """k-nearest-neighbour approximation of the invariant-set indicator."""

    points: np.ndarray
    labels: np.ndarray
    k: int = 5

    @property
    def n_labels(self) -> int:
        return int(self.labels.max())

    def __call__(self, x):
        return classify(self, x)


def train(points, labels, k: int = 5) -> BasinIndicator:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels, dtype=int).ravel()
    if points.shape[0] != labels.shape[0]:
        raise ValueError(f"{points.shape[0]} points but {labels.shape[0]} labels")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be a positive odd integer, got {k}")
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds the {points.shape[0]} training points")
    if np.any(labels < 1):
        raise ValueError("labels must be positive integers")
    if np.unique(labels).size < 2:
        raise ValueError("training set has a single class; the indicator would be constant")
    points = points.copy()
    points.setflags(write=False)
    labels.setflags(write=False)
    return BasinIndicator(points, labels, int(k))


def classify(ind: BasinIndicator, x, chunk: int = 4096):
    """Majority label among the ``k`` nearest training points.

    Distance ties resolve to the lower training index and vote ties resolve
    to the smallest label, i.e. toward label 1. Returns an ``int`` for a
    single state and an integer array for a batch.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != ind.points.shape[1]:
        raise DimensionError(
            f"indicator trained on dimension {ind.points.shape[1]}, got {x.shape[-1]}"
        )
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    n_lab = ind.n_labels
    out = np.empty(xb.shape[0], dtype=int)
    for start in range(0, xb.shape[0], chunk):
        block = xb[start : start + chunk]
        d = cdist(block, ind.points, "sqeuclidean")
        kth = np.partition(d, ind.k - 1, axis=1)[:, ind.k - 1 : ind.k]
        less = d < kth
        # fill the remaining slots with the lowest-index points at the k-th distance
        ties = d == kth
        room = ind.k - less.sum(axis=1, keepdims=True)
        selected = less | (ties & (np.cumsum(ties, axis=1) <= room))
        votes = np.stack(
            [(selected & (ind.labels == j)).sum(axis=1) for j in range(1, n_lab + 1)], axis=1
        )
        # argmax returns the first maximum, which is the smallest label
        out[start : start + chunk] = np.argmax(votes, axis=1) + 1
    return int(out[0]) if single else out


def near_boundary(ind: BasinIndicator, x, margin: float = 0.05, n_dirs: int = 16, n_rings: int = 2):
    """Flag states whose classifier label changes somewhere within ``margin``.

    Probes rings of radius ``margin * r / n_rings`` for ``r = 1..n_rings``
    with ``n_dirs`` directions each (2D states only).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != 2:
        raise DimensionError("boundary-band probing is implemented for 2D states")
    base = classify(ind, x)
    ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    flag = np.zeros(x.shape[0], dtype=bool)
    for r in range(1, n_rings + 1):
        radius = margin * r / n_rings
        for d in dirs:
            flag |= classify(ind, x + radius * d) != base
    return flag
