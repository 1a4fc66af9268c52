"""CSV trajectories and JSON model files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from koopsym.dynamics import Trajectory
from koopsym.edmd import KoopmanModel
from koopsym.observables import dictionary_from_spec

MODEL_FORMAT = "koopsym-model/1"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectories(trajs: Sequence[Trajectory], path, with_id: bool | None = None) -> None:
    """Write ``t, x1, ..., xn`` rows; a leading ``traj`` column is added for several trajectories."""
    trajs = list(trajs)
    with_id = len(trajs) > 1 if with_id is None else with_id
    n = trajs[0].dim
    header = (["traj"] if with_id else []) + ["t"] + [f"x{i + 1}" for i in range(n)]
    lines = [",".join(header)]
    for k, traj in enumerate(trajs):
        for t, x in zip(traj.times, traj.states):
            row = ([str(k)] if with_id else []) + [fmt(t)] + [fmt(v) for v in x]
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def _uniform_dt(times: np.ndarray, rtol: float = 1e-6) -> float:
    if times.size < 2:
        return 1.0
    steps = np.diff(times)
    dt = float(np.mean(steps))
    if not dt > 0 or not np.allclose(steps, dt, rtol=rtol, atol=1e-12):
        raise ValueError("sample times are not uniformly spaced")
    return dt


def read_trajectories(path) -> list[Trajectory]:
    """Inverse of :func:`write_trajectories`; rows sharing a ``traj`` id form one trajectory."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    if "t" not in header:
        raise ValueError(f"{path}: missing 't' column")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise ValueError(f"{path}: no state columns")
    data = np.array([[float(r[i]) for i in range(len(header))] for r in rows])
    ti = header.index("t")
    if "traj" in header:
        ids = data[:, header.index("traj")].astype(int)
        groups = [np.flatnonzero(ids == k) for k in dict.fromkeys(ids.tolist())]
    else:
        groups = [np.arange(data.shape[0])]
    out = []
    for g in groups:
        times = data[g, ti]
        out.append(Trajectory(data[np.ix_(g, xcols)], dt=_uniform_dt(times), t0=float(times[0])))
    return out


def model_to_dict(model: KoopmanModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "K": model.K.tolist(),
        "C": model.C.tolist(),
        "eigenvalues": [[float(z.real), float(z.imag)] for z in model.eigenvalues],
        "dictionary": model.dictionary.to_spec(),
        "state_dim": model.state_dim,
        "fit_residual": model.fit_residual,
        "reconstruction_residual": model.reconstruction_residual,
        "meta": model.meta,
    }


def save_model(model: KoopmanModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def model_from_dict(d: dict) -> KoopmanModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    dictionary = dictionary_from_spec(d["dictionary"], state_dim=d["state_dim"])
    return KoopmanModel.from_matrices(
        d["K"],
        d["C"],
        dictionary,
        fit_residual=float(d["fit_residual"]),
        reconstruction_residual=float(d["reconstruction_residual"]),
        meta=dict(d.get("meta", {})),
    )


def load_model(path) -> KoopmanModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def read_actions(path) -> list[np.ndarray]:
    """Group actions from JSON: ``{"actions": [...]}``, ``{"matrix": ...}`` or a bare matrix."""
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        if "actions" in raw:
            return [np.asarray(a, dtype=float) for a in raw["actions"]]
        if "matrix" in raw:
            return [np.asarray(raw["matrix"], dtype=float)]
        raise ValueError(f"{path}: expected an 'actions' or 'matrix' entry")
    return [np.asarray(raw, dtype=float)]
