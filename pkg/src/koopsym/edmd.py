"""Extended dynamic mode decomposition.

Lifted data are stored with observables as rows and snapshots as columns,
and ``K`` acts on column vectors: ``Phi(x_{n+1}) ~= K Phi(x_n)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from koopsym.dynamics import Trajectory
from koopsym.errors import (
    DegenerateDictionaryError,
    DimensionError,
    IllConditionedEigenError,
)
from koopsym.observables import Dictionary

log = logging.getLogger(__name__)

EIGVEC_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SnapshotPairs:
    X: np.ndarray
    Y: np.ndarray
    dt: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape != Y.shape or X.shape[0] < 1:
            raise DimensionError(f"X {X.shape} and Y {Y.shape} must match and be non-empty")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self):
        return self.X.shape[0]


def build_snapshot_pairs(trajs: Sequence[Trajectory], rtol: float = 1e-9) -> SnapshotPairs:
    """Concatenate consecutive ``(x_i, x_{i+1})`` pairs across trajectories."""
    if not trajs:
        raise ValueError("no trajectories given")
    dt = trajs[0].dt
    for t in trajs:
        if len(t) < 2:
            raise ValueError("every trajectory needs at least two states")
        if not np.isclose(t.dt, dt, rtol=rtol, atol=0.0):
            raise ValueError(f"mixed sampling intervals {dt} and {t.dt}")
        if t.dim != trajs[0].dim:
            raise DimensionError("trajectories have different state dimensions")
    X = np.vstack([t.states[:-1] for t in trajs])
    Y = np.vstack([t.states[1:] for t in trajs])
    return SnapshotPairs(X, Y, dt)


def _pinv_solve(A: np.ndarray, B: np.ndarray, svd_rtol: float, ridge: float = 0.0):
    """Minimum-norm solution ``M`` of ``min |B - M A|_F`` via a truncated SVD of ``A``.

    ``A`` is ``(D, m)``, ``B`` is ``(r, m)``. With ``ridge > 0`` the kept
    singular values are Tikhonov-filtered, ``s / (s^2 + ridge)``.
    Returns ``(M, singular_values, rank)``.
    """
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or not np.isfinite(s[0]) or s[0] == 0.0:
        raise DegenerateDictionaryError("lifted data matrix has no nonzero singular value")
    keep = s > svd_rtol * s[0]
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        raise DegenerateDictionaryError("all singular values truncated")
    U, sk, Vt = U[:, keep], s[keep], Vt[keep]
    inv = sk / (sk**2 + ridge) if ridge > 0 else 1.0 / sk
    M = ((B @ Vt.T) * inv) @ U.T
    return M, s, rank


def _sorted_eig(K: np.ndarray):
    lam, P = np.linalg.eig(K)
    # descending modulus, then by angle so conjugate pairs are adjacent and ordered
    order = np.lexsort((-lam.imag, -np.round(np.abs(lam), 12)))
    return lam[order], P[:, order]


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Fitted finite-dimensional Koopman representation.

    ``K`` is ``D x D``, ``C`` is ``n x D``. ``eigenvalues`` and ``eigvecs``
    satisfy ``K P = P diag(eigenvalues)``.
    """

    K: np.ndarray
    C: np.ndarray
    dictionary: Dictionary
    eigenvalues: np.ndarray
    eigvecs: np.ndarray
    fit_residual: float = 0.0
    reconstruction_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_matrices(cls, K, C, dictionary: Dictionary, **kwargs) -> "KoopmanModel":
        K = np.array(K, dtype=float)
        C = np.array(C, dtype=float)
        D = dictionary.dimension
        if K.shape != (D, D) or C.shape != (dictionary.state_dim, D):
            raise DimensionError(
                f"K {K.shape} / C {C.shape} do not match dictionary dimension {D}"
            )
        lam, P = _sorted_eig(K)
        for a in (K, C):
            a.setflags(write=False)
        return cls(K, C, dictionary, lam, P, **kwargs)

    @property
    def state_dim(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def eigvec_condition(self) -> float:
        return float(np.linalg.cond(self.eigvecs))


def fit(
    pairs: SnapshotPairs,
    dictionary: Dictionary,
    svd_rtol: float = 1e-10,
    ridge: float = 0.0,
) -> KoopmanModel:
    """Least-squares EDMD fit of ``K`` and the measurement matrix ``C``.

    Both solves use the pseudoinverse of the lifted data ``Phi(X)`` with
    singular values below ``svd_rtol * s_max`` discarded, which gives the
    minimum-norm minimiser when the lifted data are rank deficient.

    Raises
    ------
    DegenerateDictionaryError
        No singular value of ``Phi(X)`` survives truncation.
    """
    if not 0 < svd_rtol < 1:
        raise ValueError(f"svd_rtol must lie in (0, 1), got {svd_rtol}")
    if pairs.X.shape[1] != dictionary.state_dim:
        raise DimensionError("pairs and dictionary have different state dimensions")
    PX = dictionary.evaluate(pairs.X).T
    PY = dictionary.evaluate(pairs.Y).T
    K, s, rank = _pinv_solve(PX, PY, svd_rtol, ridge)
    C, _, _ = _pinv_solve(PX, pairs.X.T, svd_rtol, ridge)

    fit_res = float(np.sqrt(np.mean(np.sum((PY - K @ PX) ** 2, axis=0))))
    rec_res = float(np.sqrt(np.mean(np.sum((pairs.X.T - C @ PX) ** 2, axis=0))))
    meta = {
        "n_pairs": len(pairs),
        "dt": pairs.dt,
        "rank": rank,
        "svd_rtol": svd_rtol,
        "ridge": ridge,
        "lifted_condition": float(s[0] / s[rank - 1]),
    }
    model = KoopmanModel.from_matrices(
        K, C, dictionary, fit_residual=fit_res, reconstruction_residual=rec_res, meta=meta
    )
    meta["eigvec_condition"] = model.eigvec_condition
    meta["spectral_radius"] = model.spectral_radius
    log.debug("edmd fit: D=%d pairs=%d rank=%d residual=%.3e", dictionary.dimension, len(pairs), rank, fit_res)
    return model


def _eigvec_inverse(model: KoopmanModel) -> np.ndarray:
    cond = model.eigvec_condition
    log.debug("eigenvector matrix condition number %.3e", cond)
    if not np.isfinite(cond) or cond > EIGVEC_COND_LIMIT:
        raise IllConditionedEigenError(f"eigenvector matrix condition number {cond:.3e}")
    return np.linalg.inv(model.eigvecs)


def eigenfunctions(model: KoopmanModel, x) -> np.ndarray:
    """Koopman eigenfunctions ``Psi(x) = P^{-1} Phi(x)``; batches give shape ``(m, D)``."""
    Pinv = _eigvec_inverse(model)
    phi = model.dictionary.evaluate(x)
    return phi @ Pinv.T


def koopman_modes(model: KoopmanModel) -> np.ndarray:
    """Modes ``B = C P`` so that ``x = B Psi(x)``."""
    _eigvec_inverse(model)
    return model.C @ model.eigvecs


def predict_lifted(model: KoopmanModel, v: np.ndarray, steps: int) -> np.ndarray:
    """Apply ``K`` to a lifted vector ``steps`` times by repeated multiplication."""
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    for _ in range(steps):
        v = model.K @ v
    return v


def predict(model: KoopmanModel, x0, steps: int) -> np.ndarray:
    """``C K^l Phi(x0)`` with ``K^l`` built by iterated multiplication."""
    v = model.dictionary.evaluate(np.asarray(x0, dtype=float))
    return model.C @ predict_lifted(model, v, steps)


def rollout_lifted(model: KoopmanModel, v: np.ndarray, l_max: int) -> np.ndarray:
    """States ``C K^l v`` for ``l = 0..l_max``; shape ``(l_max + 1, n)``.

    ``v`` may also be ``(D, m)``, giving ``(l_max + 1, n, m)``.
    """
    out = [model.C @ v]
    for _ in range(l_max):
        v = model.K @ v
        out.append(model.C @ v)
    return np.stack(out)


def predict_trajectory(model: KoopmanModel, x0, l_max: int) -> Trajectory:
    """Lift once, then step in lifted space; entry ``l`` equals ``predict(model, x0, l)``."""
    if l_max < 0:
        raise ValueError(f"l_max must be non-negative, got {l_max}")
    v = model.dictionary.evaluate(np.asarray(x0, dtype=float))
    states = rollout_lifted(model, v, l_max)
    dt = model.meta.get("dt", 1.0)
    return _unchecked_trajectory(states, dt)


def _unchecked_trajectory(states, dt):
    # predictions may legitimately diverge; bypass the finiteness check
    traj = object.__new__(Trajectory)
    states = np.asarray(states, dtype=float)
    states.setflags(write=False)
    object.__setattr__(traj, "states", states)
    object.__setattr__(traj, "dt", float(dt))
    object.__setattr__(traj, "t0", 0.0)
    return traj
