"""Observable dictionaries used to lift states.

Every dictionary starts with the constant observable followed by the
identity coordinates, so the lifted vector has layout::

    [1, x1, ..., xn, <family-specific observables>]

and the state can always be read back by a linear measurement.
"""

from __future__ import annotations

import itertools
from math import comb

import numpy as np
from scipy.spatial.distance import cdist, pdist

from koopsym.errors import DimensionError


class Dictionary:
    """Base class for a fixed, finite family of observables."""

    kind = "base"

    def __init__(self, state_dim: int):
        if state_dim < 1:
            raise ValueError(f"state_dim must be positive, got {state_dim}")
        self.state_dim = int(state_dim)

    @property
    def dimension(self) -> int:
        return 1 + self.state_dim + self._n_extra()

    def evaluate(self, x) -> np.ndarray:
        """Lift one state ``(n,)`` to ``(D,)`` or a batch ``(m, n)`` to ``(m, D)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.state_dim:
            raise DimensionError(
                f"{self.kind} dictionary expects dimension {self.state_dim}, got {x.shape[-1]}"
            )
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        out = np.empty((xb.shape[0], self.dimension))
        out[:, 0] = 1.0
        out[:, 1 : 1 + self.state_dim] = xb
        self._fill_extra(xb, out[:, 1 + self.state_dim :])
        return out[0] if single else out

    __call__ = evaluate

    def feature_names(self) -> list[str]:
        return ["1"] + [f"x{i + 1}" for i in range(self.state_dim)] + self._extra_names()

    def to_spec(self) -> dict:
        raise NotImplementedError

    def _n_extra(self) -> int:
        raise NotImplementedError

    def _fill_extra(self, x, out) -> None:
        raise NotImplementedError

    def _extra_names(self) -> list[str]:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_spec()})"


class PolynomialDictionary(Dictionary):
    """All monomials up to total degree ``max_order``, graded lexicographic.

    Within one degree the monomials follow
    ``itertools.combinations_with_replacement`` order over coordinate
    indices, e.g. ``x1^2, x1 x2, x2^2`` in 2D.
    """

    kind = "polynomial"

    def __init__(self, state_dim: int, max_order: int):
        super().__init__(state_dim)
        if max_order < 1:
            raise ValueError(f"max_order must be >= 1, got {max_order}")
        self.max_order = int(max_order)
        self._terms = [
            combo
            for degree in range(2, self.max_order + 1)
            for combo in itertools.combinations_with_replacement(range(state_dim), degree)
        ]

    def _n_extra(self):
        return len(self._terms)

    @property
    def degrees(self) -> np.ndarray:
        """Total degree of every entry of the lifted vector."""
        return np.array([0] + [1] * self.state_dim + [len(t) for t in self._terms])

    def _fill_extra(self, x, out):
        for j, combo in enumerate(self._terms):
            col = x[:, combo[0]].copy()
            for i in combo[1:]:
                col *= x[:, i]
            out[:, j] = col

    def _extra_names(self):
        names = []
        for combo in self._terms:
            counts = {i: combo.count(i) for i in sorted(set(combo))}
            names.append("*".join(f"x{i + 1}" if c == 1 else f"x{i + 1}^{c}" for i, c in counts.items()))
        return names

    def to_spec(self):
        return {"kind": self.kind, "max_order": self.max_order}


class RBFDictionary(Dictionary):
    """Isotropic Gaussians ``exp(-|x - c_k|^2 / (2 width^2))``, one per center."""

    kind = "rbf"

    def __init__(self, centers, width: float):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        super().__init__(centers.shape[1])
        if not width > 0:
            raise ValueError(f"rbf width must be positive, got {width}")
        self.centers = centers
        self.centers.setflags(write=False)
        self.width = float(width)

    def _n_extra(self):
        return self.centers.shape[0]

    def _fill_extra(self, x, out):
        sq = cdist(x, self.centers, "sqeuclidean")
        np.exp(-sq / (2.0 * self.width**2), out=out)

    def _extra_names(self):
        return [f"rbf{k}" for k in range(self.centers.shape[0])]

    def to_spec(self):
        return {
            "kind": self.kind,
            "n_centers": int(self.centers.shape[0]),
            "width": self.width,
            "centers": self.centers.tolist(),
        }


class FourierDictionary(Dictionary):
    """Per-coordinate sine/cosine pairs ``sin(k pi x_i / L), cos(k pi x_i / L)``.

    Ordered by coordinate, then frequency ``k = 1..n_pairs``.
    """

    kind = "fourier"

    def __init__(self, state_dim: int, n_pairs: int, L: float = 2.0):
        super().__init__(state_dim)
        if n_pairs < 1:
            raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
        if not L > 0:
            raise ValueError(f"box half-width L must be positive, got {L}")
        self.n_pairs = int(n_pairs)
        self.L = float(L)

    def _n_extra(self):
        return 2 * self.state_dim * self.n_pairs

    def _fill_extra(self, x, out):
        j = 0
        for i in range(self.state_dim):
            for k in range(1, self.n_pairs + 1):
                arg = (k * np.pi / self.L) * x[:, i]
                out[:, j] = np.sin(arg)
                out[:, j + 1] = np.cos(arg)
                j += 2

    def _extra_names(self):
        return [
            f"{fn}({k}pi*x{i + 1}/L)"
            for i in range(self.state_dim)
            for k in range(1, self.n_pairs + 1)
            for fn in ("sin", "cos")
        ]

    def to_spec(self):
        return {"kind": self.kind, "n_pairs": self.n_pairs, "L": self.L}


def dimension(d: Dictionary) -> int:
    return d.dimension


def polynomial_dimension(state_dim: int, max_order: int) -> int:
    return comb(state_dim + max_order, max_order)


def place_rbf_centers(data, n_centers: int) -> np.ndarray:
    """Deterministic farthest-point sampling of ``n_centers`` rows of ``data``.

    The first center is the data point closest to the centroid. Each next one
    maximises the distance to its nearest already-chosen center. Ties go to
    the lowest index.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] == 0:
        raise ValueError("cannot place centers on empty data")
    if not 1 <= n_centers <= data.shape[0]:
        raise ValueError(f"n_centers must be in [1, {data.shape[0]}], got {n_centers}")
    centroid = data.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(data - centroid, axis=1)))
    chosen = [first]
    min_dist = np.linalg.norm(data - data[first], axis=1)
    min_dist[first] = -np.inf
    for _ in range(n_centers - 1):
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(data - data[nxt], axis=1))
        min_dist[chosen] = -np.inf
    return data[chosen].copy()


def default_rbf_width(centers) -> float:
    """Median pairwise distance between centers."""
    centers = np.asarray(centers, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    if centers.shape[0] < 2:
        raise ValueError("need at least two centers to set a default width")
    return float(np.median(pdist(centers)))


def dictionary_from_spec(spec: dict, state_dim: int | None = None, data=None) -> Dictionary:
    """Build a dictionary from its JSON form.

    ``{"kind": "rbf", "n_centers": 10}`` places centers on ``data`` by
    farthest-point sampling; a spec that already carries ``centers`` (as
    written by :meth:`Dictionary.to_spec`) is rebuilt verbatim.
    """
    kind = spec.get("kind")
    if data is not None:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        state_dim = state_dim or data.shape[1]
    if kind == "polynomial":
        return PolynomialDictionary(_need_dim(state_dim), int(spec["max_order"]))
    if kind == "fourier":
        return FourierDictionary(_need_dim(state_dim), int(spec["n_pairs"]), float(spec.get("L", 2.0)))
    if kind == "rbf":
        if "centers" in spec:
            centers = np.asarray(spec["centers"], dtype=float)
        else:
            if data is None:
                raise ValueError("rbf spec without centers needs data to place them")
            centers = place_rbf_centers(data, int(spec["n_centers"]))
        width = spec.get("width")
        if width is None:
            width = default_rbf_width(centers)
        return RBFDictionary(centers, float(width))
    raise ValueError(f"unknown dictionary kind {kind!r}")


def _need_dim(state_dim):
    if state_dim is None:
        raise ValueError("state_dim is required for this dictionary kind")
    return int(state_dim)
