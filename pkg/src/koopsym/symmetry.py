"""Discrete symmetries: group actions, data augmentation and global prediction.

A :class:`SymmetryModel` couples a Koopman model fitted on one invariant set
``M1`` with group actions ``gamma_j`` mapping ``M1`` onto the other sets and
an indicator that tells which set a state lies in. A state in set ``j`` is
pulled back into ``M1`` with ``gamma_j^{-1}``, advanced there, and pushed
forward with ``gamma_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from koopsym.basin import BasinIndicator, classify
from koopsym.dynamics import Trajectory
from koopsym.edmd import KoopmanModel, predict, predict_lifted, rollout_lifted
from koopsym.errors import DimensionError
from koopsym.observables import Dictionary

ORDER_SEARCH_LIMIT = 24


class GroupAction:
    """Invertible linear action ``x -> matrix @ x`` of a discrete group element."""

    def __init__(self, matrix, name: str | None = None):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"group action must be a square matrix, got shape {m.shape}")
        n = m.shape[0]
        # signed permutations and other orthogonal actions invert by transpose exactly
        if np.array_equal(m @ m.T, np.eye(n)):
            inv = m.T.copy()
        else:
            inv = np.linalg.inv(m)
        if not np.allclose(m @ inv, np.eye(n), rtol=0.0, atol=1e-12):
            raise ValueError("group action matrix is not invertible to 1e-12")
        m.setflags(write=False)
        inv.setflags(write=False)
        self.matrix = m
        self.inverse = inv
        self.name = name
        self.order = self._order()

    @classmethod
    def identity(cls, n: int) -> "GroupAction":
        return cls(np.eye(n), name="identity")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(self.dim)))

    @property
    def scalar(self) -> float | None:
        """``c`` if the action is ``c * I``, else ``None``."""
        c = self.matrix[0, 0]
        return float(c) if np.array_equal(self.matrix, c * np.eye(self.dim)) else None

    def _order(self) -> int | None:
        eye = np.eye(self.dim)
        power = self.matrix.copy()
        for m in range(1, ORDER_SEARCH_LIMIT + 1):
            if np.allclose(power, eye, rtol=0.0, atol=1e-12):
                return m
            power = power @ self.matrix
        return None

    def apply(self, x) -> np.ndarray:
        """Act on a state ``(n,)`` or a batch ``(m, n)``."""
        return np.asarray(x, dtype=float) @ self.matrix.T

    def apply_inverse(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.inverse.T

    def to_list(self) -> list:
        return self.matrix.tolist()

    def __repr__(self):
        return f"GroupAction({self.matrix.tolist()}, order={self.order})"


def as_action(gamma) -> GroupAction:
    return gamma if isinstance(gamma, GroupAction) else GroupAction(gamma)


@dataclass(frozen=True, eq=False)
class SymmetryModel:
    """Base model on ``M1`` plus actions ``[I, gamma_2, ..., gamma_J]`` and an indicator.

    ``indicator`` is a :class:`BasinIndicator` or any callable returning
    labels ``1..J``.
    """

    base: KoopmanModel
    actions: Sequence[GroupAction]
    indicator: BasinIndicator | Callable

    def __post_init__(self):
        actions = tuple(as_action(a) for a in self.actions)
        if not actions or not actions[0].is_identity:
            raise ValueError("the first action must be the identity")
        n = self.base.state_dim
        for a in actions:
            if a.dim != n:
                raise DimensionError(f"action of dimension {a.dim} for a {n}-dimensional model")
        object.__setattr__(self, "actions", actions)

    @property
    def n_sets(self) -> int:
        return len(self.actions)

    def label(self, x):
        if isinstance(self.indicator, BasinIndicator):
            return classify(self.indicator, x)
        return self.indicator(x)


def augment(trajs: Sequence[Trajectory], gamma) -> list[Trajectory]:
    """Input trajectories followed by their images under ``gamma``."""
    g = as_action(gamma)
    for t in trajs:
        if t.dim != g.dim:
            raise DimensionError(f"action of dimension {g.dim} for {t.dim}-dimensional data")
    images = [Trajectory(g.apply(t.states), dt=t.dt, t0=t.t0) for t in trajs]
    return list(trajs) + images


def canonicalize(model: SymmetryModel, x) -> tuple[np.ndarray, int]:
    """Pull ``x`` back into ``M1``: returns ``(gamma_j^{-1} x, j)`` with ``j`` from the indicator."""
    x = np.asarray(x, dtype=float)
    j = int(model.label(x))
    if not 1 <= j <= model.n_sets:
        raise ValueError(f"indicator returned label {j}, expected 1..{model.n_sets}")
    if j == 1:
        return x, 1
    return model.actions[j - 1].apply_inverse(x), j


def symmetry_predict(model: SymmetryModel, x0, steps: int) -> np.ndarray:
    """Global ``steps``-ahead prediction from a model trained on ``M1`` only.

    Evaluates ``sum_j chi_M1(gamma_j^{-1} x0) gamma_j C K^l Phi(gamma_j^{-1} x0)``:
    exactly one term is active, selected once at the initial state.
    """
    xc, j = canonicalize(model, x0)
    y = predict(model.base, xc, steps)
    return y if j == 1 else model.actions[j - 1].apply(y)


def symmetry_rollout(model: SymmetryModel, x0, l_max: int) -> np.ndarray:
    """``symmetry_predict`` for ``l = 0..l_max`` with a single lift; shape ``(l_max + 1, n)``."""
    xc, j = canonicalize(model, x0)
    states = rollout_lifted(model.base, model.base.dictionary.evaluate(xc), l_max)
    return states if j == 1 else model.actions[j - 1].apply(states)


def _duffing_sign(model: SymmetryModel, x) -> float:
    if model.base.state_dim != 2 or model.n_sets != 2:
        raise ValueError("compact lift needs a 2D model with exactly two invariant sets")
    if model.actions[1].scalar != -1.0:
        raise ValueError("compact lift needs the second action to be -I")
    return 1.0 if int(model.label(x)) == 1 else -1.0


def compact_duffing_lift(model: SymmetryModel, x) -> np.ndarray:
    """Lift ``s * Phi(s * x)`` with ``s = +1`` on ``M1`` and ``-1`` on ``M2``.

    With this lift the global predictor is a single linear map,
    ``C K^l compact_duffing_lift(x)``, over ``D`` rather than ``2D`` observables.
    """
    x = np.asarray(x, dtype=float)
    s = _duffing_sign(model, x)
    return s * model.base.dictionary.evaluate(s * x)


def compact_duffing_predict(model: SymmetryModel, x0, steps: int) -> np.ndarray:
    v = compact_duffing_lift(model, x0)
    return model.base.C @ predict_lifted(model.base, v, steps)


class StitchedDictionary:
    """Block observable vector ``[chi_M1 Phi_1, ..., chi_MJ Phi_J]``.

    Exactly one block is nonzero for any state: the one selected by the
    indicator.
    """

    kind = "stitched"

    def __init__(self, dicts: Sequence[Dictionary], indicator):
        if not dicts:
            raise ValueError("need at least one dictionary")
        dims = {d.state_dim for d in dicts}
        if len(dims) != 1:
            raise DimensionError(f"dictionaries disagree on state dimension: {sorted(dims)}")
        self.dicts = list(dicts)
        self.indicator = indicator
        self.state_dim = dims.pop()
        self.block_sizes = [d.dimension for d in dicts]
        self.offsets = np.concatenate([[0], np.cumsum(self.block_sizes)])

    @property
    def dimension(self) -> int:
        return int(self.offsets[-1])

    def _labels(self, x):
        if isinstance(self.indicator, BasinIndicator):
            return classify(self.indicator, x)
        return self.indicator(x)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.state_dim:
            raise DimensionError(f"expected dimension {self.state_dim}, got {x.shape[-1]}")
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        labels = np.atleast_1d(self._labels(xb))
        out = np.zeros((xb.shape[0], self.dimension))
        for j, d in enumerate(self.dicts, start=1):
            rows = labels == j
            if np.any(rows):
                out[rows, self.offsets[j - 1] : self.offsets[j]] = d.evaluate(xb[rows])
        return out[0] if single else out

    __call__ = evaluate

    def feature_names(self) -> list[str]:
        return [f"M{j}:{name}" for j, d in enumerate(self.dicts, start=1) for name in d.feature_names()]

    def to_spec(self) -> dict:
        return {"kind": self.kind, "blocks": [d.to_spec() for d in self.dicts]}


def stitched_dictionary(dicts: Sequence[Dictionary], indicator) -> StitchedDictionary:
    return StitchedDictionary(dicts, indicator)


def check_commutation(
    gamma, model: KoopmanModel, steps: int, samples, tol: float = 1e-10
) -> tuple[bool, float]:
    """Test whether ``gamma`` commutes with ``C K^l`` on sample states.

    For each sample ``x`` with lift ``v = Phi(x)`` compares ``gamma C K^l v``
    against ``C K^l w``. When ``gamma = c I`` the lifted image is ``w = c v``
    (the odd-symmetric convention used by the compact Duffing lift); for any
    other action it is the lift of the transformed state, ``w = Phi(gamma x)``.
    Returns ``(passed, max_residual)``.
    """
    g = as_action(gamma)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    V = model.dictionary.evaluate(samples).T
    c = g.scalar
    W = c * V if c is not None else model.dictionary.evaluate(g.apply(samples)).T
    left = g.matrix @ (model.C @ predict_lifted(model, V, steps))
    right = model.C @ predict_lifted(model, W, steps)
    residual = float(np.max(np.abs(left - right)))
    return residual <= tol, residual
