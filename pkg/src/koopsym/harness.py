"""End-to-end Duffing and Lorenz benchmarks.

Duffing: vanilla EDMD on all training pairs against symmetry-constrained
EDMD fitted on the ``M1`` trajectories only, swept over three dictionary
families. Lorenz: vanilla EDMD on raw, symmetry-augmented and
half-then-augmented data, scored by horizon-conditioned MSE.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from koopsym.basin import BasinIndicator, label_trajectories, train
from koopsym.dynamics import (
    DuffingGrid,
    DuffingParams,
    LorenzParams,
    Trajectory,
    duffing_rhs,
    generate_duffing_training_set,
    integrate,
    integrate_many,
    lorenz_rhs,
    stack_states,
    subsample,
)
from koopsym.edmd import KoopmanModel, build_snapshot_pairs, fit, rollout_lifted
from koopsym.errors import DegenerateDictionaryError, IllConditionedEigenError
from koopsym.observables import dictionary_from_spec
from koopsym.symmetry import GroupAction, SymmetryModel, augment, symmetry_rollout

log = logging.getLogger(__name__)

HYPERPARAM = {"rbf": "n_centers", "fourier": "n_pairs", "polynomial": "max_order"}

DEFAULT_DUFFING_SWEEP = {
    "rbf": [10, 25, 50, 100, 200],
    "fourier": [1, 2, 3, 4, 5, 6],
    "polynomial": [1, 2, 3, 4, 5, 6, 7],
}
DEFAULT_LORENZ_SWEEP = {"rbf": [50, 100, 200]}

DUFFING_ACTIONS = [[[1.0, 0.0], [0.0, 1.0]], [[-1.0, 0.0], [0.0, -1.0]]]
LORENZ_ACTION = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Benchmark configuration; every field has a default matching the reference runs.

    ``sweep`` maps a dictionary kind to the hyperparameter values to try
    (centers for rbf, frequency pairs for fourier, max order for polynomial).
    """

    system: str = "duffing"
    sweep: dict = field(default_factory=dict)
    seed: int = 20240101
    n_test: int = 100
    domain: tuple[float, float] = (-2.0, 2.0)
    horizon: int = 50
    k: int = 5
    fourier_L: float = 2.0
    svd_rtol: float = 1e-10
    n_jobs: int = 1
    grid: dict = field(default_factory=dict)
    # lorenz only
    dictionary: dict = field(default_factory=lambda: {"kind": "rbf", "n_centers": 100})
    lorenz_x0: tuple[float, float, float] = (1.0, 0.0, 0.0)
    lorenz_dt: float = 0.005
    lorenz_steps: int = 2000
    lorenz_stride: int = 4
    lorenz_test_steps: int = 1000
    out: str | None = None

    def __post_init__(self):
        if self.system not in ("duffing", "lorenz"):
            raise ConfigError(f"unknown system {self.system!r}")
        if not self.sweep:
            self.sweep = dict(DEFAULT_DUFFING_SWEEP if self.system == "duffing" else DEFAULT_LORENZ_SWEEP)
        for kind, values in self.sweep.items():
            if kind not in HYPERPARAM:
                raise ConfigError(f"unknown dictionary kind {kind!r} in sweep")
            if not values or any(int(v) != v or v < 1 for v in values):
                raise ConfigError(f"sweep values for {kind} must be positive integers")
        if self.n_test < 1 or self.horizon < 1 or self.k < 1 or self.k % 2 == 0:
            raise ConfigError("n_test and horizon must be positive; k must be a positive odd integer")
        lo, hi = self.domain
        if not lo < hi:
            raise ConfigError(f"empty domain {self.domain}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.dictionary.get("kind") not in HYPERPARAM:
            raise ConfigError(f"bad lorenz dictionary {self.dictionary}")
        try:
            DuffingGrid(**self.grid)
        except TypeError as exc:
            raise ConfigError(f"bad grid entry: {exc}") from None

    @property
    def duffing_grid(self) -> DuffingGrid:
        g = dict(self.grid)
        if "refine_values" in g:
            g["refine_values"] = tuple(g["refine_values"])
        return DuffingGrid(**g)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a JSON config; unknown keys are a :class:`ConfigError`."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = ExperimentConfig.__dataclass_fields__
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    for key in ("domain", "lorenz_x0"):
        if key in raw:
            raw[key] = tuple(raw[key])
    try:
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class BenchmarkRow:
    method: str
    dict_kind: str
    hyperparam: int
    mse: float
    n_train_pairs: int
    diverged: bool = False


@dataclass
class MSEStats:
    per_horizon: np.ndarray
    aggregate: float


def mse(predicted, truth, l_range: Sequence[int] | None = None) -> MSEStats:
    """Squared Euclidean error per horizon and averaged over ``l_range``.

    ``predicted`` and ``truth`` are trajectories (or arrays) aligned so that
    index ``l`` is the state ``l`` steps ahead. Extra leading axes beyond
    ``(length, n)`` (e.g. ``(length, m, n)`` for ``m`` test runs) are
    averaged into each horizon.
    """
    p = predicted.states if isinstance(predicted, Trajectory) else np.asarray(predicted, dtype=float)
    t = truth.states if isinstance(truth, Trajectory) else np.asarray(truth, dtype=float)
    if isinstance(predicted, Trajectory) and isinstance(truth, Trajectory):
        if not np.isclose(predicted.dt, truth.dt):
            raise ValueError(f"sampling intervals differ: {predicted.dt} vs {truth.dt}")
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: predicted {p.shape} vs truth {t.shape}")
    if l_range is None:
        l_range = range(1, p.shape[0])
    idx = np.asarray(list(l_range), dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.sum((p[idx] - t[idx]) ** 2, axis=-1)
        per_l = sq.reshape(idx.size, -1).mean(axis=1)
    return MSEStats(per_l, float(per_l.mean()))


# ---------------------------------------------------------------------------
# Duffing
# ---------------------------------------------------------------------------


@dataclass
class DuffingSetup:
    train: list[Trajectory]
    labels: np.ndarray
    indicator: BasinIndicator
    test_x0: np.ndarray
    test_truth: np.ndarray  # (horizon + 1, n_test, 2)
    dt: float = 0.2

    @property
    def m1_train(self) -> list[Trajectory]:
        return [t for t, lab in zip(self.train, self.labels) if lab == 1]


def test_initial_conditions(seed: int, n_test: int, domain) -> np.ndarray:
    """Seeded uniform test states on ``domain^2``.

    The stream is ``np.random.default_rng(SeedSequence(seed).spawn(1)[0])``;
    sweep cells draw nothing, so serial and parallel runs coincide.
    """
    child = np.random.SeedSequence(int(seed)).spawn(1)[0]
    rng = np.random.default_rng(child)
    lo, hi = domain
    return rng.uniform(lo, hi, size=(n_test, 2))


def duffing_setup(cfg: ExperimentConfig, params: DuffingParams = DuffingParams()) -> DuffingSetup:
    rhs = partial(duffing_rhs, p=params)
    trajs = generate_duffing_training_set(params, cfg.duffing_grid)
    labels = label_trajectories(trajs, rhs)
    states = stack_states(trajs)
    state_labels = np.repeat(labels, [len(t) for t in trajs])
    indicator = train(states, state_labels, cfg.k)
    x0 = test_initial_conditions(cfg.seed, cfg.n_test, cfg.domain)
    truth = integrate_many(rhs, x0, trajs[0].dt, cfg.horizon)
    log.info("duffing setup: %d trajectories, %d in M1", len(trajs), int(np.sum(labels == 1)))
    return DuffingSetup(trajs, labels, indicator, x0, truth, trajs[0].dt)


def _fit_arm(trajs, spec, cfg) -> KoopmanModel:
    dictionary = dictionary_from_spec(spec, state_dim=trajs[0].dim, data=stack_states(trajs))
    return fit(build_snapshot_pairs(trajs), dictionary, svd_rtol=cfg.svd_rtol)


def _dict_spec(kind: str, value: int, cfg: ExperimentConfig) -> dict:
    spec = {"kind": kind, HYPERPARAM[kind]: int(value)}
    if kind == "fourier":
        spec["L"] = cfg.fourier_L
    return spec


def _duffing_cell(setup: DuffingSetup, cfg: ExperimentConfig, method: str, kind: str, value: int) -> BenchmarkRow:
    spec = _dict_spec(kind, value, cfg)
    trajs = setup.train if method == "vanilla" else setup.m1_train
    n_pairs = sum(len(t) - 1 for t in trajs)
    try:
        model = _fit_arm(trajs, spec, cfg)
    except (DegenerateDictionaryError, IllConditionedEigenError, np.linalg.LinAlgError) as exc:
        log.warning("%s %s=%s failed to fit: %s", method, kind, value, exc)
        return BenchmarkRow(method, kind, int(value), float("inf"), n_pairs, True)
    with np.errstate(over="ignore", invalid="ignore"):
        if method == "vanilla":
            lifted = model.dictionary.evaluate(setup.test_x0).T
            pred = np.moveaxis(rollout_lifted(model, lifted, cfg.horizon), 2, 1)
        else:
            sym = SymmetryModel(model, [GroupAction(a) for a in DUFFING_ACTIONS], setup.indicator)
            pred = np.stack([symmetry_rollout(sym, x, cfg.horizon) for x in setup.test_x0], axis=1)
    stats = mse(pred, setup.test_truth, range(1, cfg.horizon + 1))
    diverged = not np.isfinite(stats.aggregate)
    value_mse = float("inf") if diverged else stats.aggregate
    return BenchmarkRow(method, kind, int(value), value_mse, n_pairs, diverged)


def _cells(cfg: ExperimentConfig):
    for kind, values in cfg.sweep.items():
        for value in values:
            for method in ("vanilla", "symmetry-constrained"):
                yield method, kind, int(value)


def run_duffing_benchmark(cfg: ExperimentConfig, setup: DuffingSetup | None = None) -> list[BenchmarkRow]:
    """One row per (method, dictionary kind, hyperparameter value), in sweep order."""
    setup = setup or duffing_setup(cfg)
    cells = list(_cells(cfg))
    run = lambda cell: _duffing_cell(setup, cfg, *cell)  # noqa: E731
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def duffing_ordinal_summary(rows: Sequence[BenchmarkRow]) -> dict:
    """Per dictionary kind: how many sweep values the symmetry arm wins."""
    by_key = {(r.method, r.dict_kind, r.hyperparam): r for r in rows}
    summary = {}
    for kind in dict.fromkeys(r.dict_kind for r in rows):
        values = sorted({r.hyperparam for r in rows if r.dict_kind == kind})
        wins = [v for v in values if by_key[("symmetry-constrained", kind, v)].mse < by_key[("vanilla", kind, v)].mse]
        summary[kind] = {
            "n_configs": len(values),
            "symmetry_wins": len(wins),
            "passed": 2 * len(wins) > len(values),
        }
    return summary


# ---------------------------------------------------------------------------
# Lorenz
# ---------------------------------------------------------------------------


@dataclass
class LorenzData:
    raw: Trajectory
    test: Trajectory
    datasets: dict[str, list[Trajectory]]

    def counts(self) -> dict[str, int]:
        return {name: sum(len(t) for t in trajs) for name, trajs in self.datasets.items()}


@dataclass
class LorenzResult:
    horizons: np.ndarray
    mse: dict[str, np.ndarray]
    counts: dict[str, int]
    fit_residuals: dict[str, float]
    dictionary: dict

    def upper_half_means(self) -> dict[str, float]:
        upper = self.horizons > self.horizons.max() / 2
        return {k: float(np.mean(v[upper])) for k, v in self.mse.items()}

    def ordinal_checks(self) -> dict[str, bool]:
        m = self.upper_half_means()
        return {
            "half_aug_le_raw": m["half_aug"] <= m["raw"],
            "aug_le_raw": m["aug"] <= m["raw"],
        }


def lorenz_data(cfg: ExperimentConfig, params: LorenzParams = LorenzParams()) -> LorenzData:
    """Raw trajectory, unseen continuation and the three training sets.

    ``half_aug`` keeps the first ``ceil(len(raw) / 2)`` raw states before
    augmenting.
    """
    rhs = partial(lorenz_rhs, p=params)
    fine = integrate(rhs, np.asarray(cfg.lorenz_x0, dtype=float), cfg.lorenz_dt, cfg.lorenz_steps)
    raw = subsample(fine, cfg.lorenz_stride)
    t_end = cfg.lorenz_steps * cfg.lorenz_dt
    cont = integrate(rhs, fine.states[-1], cfg.lorenz_dt, cfg.lorenz_test_steps, t0=t_end)
    cont = subsample(cont, cfg.lorenz_stride)
    test = Trajectory(cont.states[1:], dt=cont.dt, t0=t_end + cont.dt)
    gamma = GroupAction(LORENZ_ACTION)
    half = Trajectory(raw.states[: (len(raw) + 1) // 2], dt=raw.dt)
    datasets = {
        "raw": [raw],
        "aug": augment([raw], gamma),
        "half_aug": augment([half], gamma),
    }
    return LorenzData(raw, test, datasets)


def horizon_mse(model: KoopmanModel, test: Trajectory, horizon: int) -> np.ndarray:
    """``MSE(l)`` for ``l = 1..horizon`` over every admissible start index of ``test``."""
    states = test.states
    n_start = len(test) - 1
    if horizon > n_start:
        raise ValueError(f"horizon {horizon} exceeds the {len(test)}-state test trajectory")
    lifted = model.dictionary.evaluate(states[:n_start]).T
    out = np.empty(horizon)
    v = lifted
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(1, horizon + 1):
            v = model.K @ v
            starts = len(test) - l
            pred = (model.C @ v[:, :starts]).T
            out[l - 1] = np.mean(np.sum((pred - states[l : l + starts]) ** 2, axis=1))
    return out


def run_lorenz_benchmark(cfg: ExperimentConfig, data: LorenzData | None = None, dictionary: dict | None = None) -> LorenzResult:
    data = data or lorenz_data(cfg)
    spec = dict(dictionary or cfg.dictionary)
    mses, residuals = {}, {}
    for name, trajs in data.datasets.items():
        try:
            model = _fit_arm(trajs, spec, cfg)
            curve = horizon_mse(model, data.test, cfg.horizon)
            residuals[name] = model.fit_residual
        except (DegenerateDictionaryError, np.linalg.LinAlgError) as exc:
            log.warning("lorenz %s fit failed: %s", name, exc)
            curve = np.full(cfg.horizon, np.inf)
            residuals[name] = float("inf")
        mses[name] = np.where(np.isfinite(curve), curve, np.inf)
    horizons = np.arange(1, cfg.horizon + 1)
    return LorenzResult(horizons, mses, data.counts(), residuals, spec)


def run_lorenz_sweep(cfg: ExperimentConfig, data: LorenzData | None = None) -> list[LorenzResult]:
    data = data or lorenz_data(cfg)
    return [
        run_lorenz_benchmark(cfg, data, _dict_spec(kind, v, cfg))
        for kind, values in cfg.sweep.items()
        for v in values
    ]


def lorenz_ordinal_summary(results: Sequence[LorenzResult]) -> dict:
    """Majority vote of the upper-half-horizon checks over a dictionary sweep.

    Cells that violate a check are listed as reproduction deviations.
    """
    deviations = []
    votes = {"half_aug_le_raw": 0, "aug_le_raw": 0}
    for res in results:
        checks = res.ordinal_checks()
        for key, ok in checks.items():
            votes[key] += ok
        if not all(checks.values()):
            deviations.append({"dictionary": res.dictionary, "checks": checks, "upper_half_mse": res.upper_half_means()})
    n = len(results)
    return {
        "n_configs": n,
        "votes": votes,
        "passed": all(2 * v > n for v in votes.values()),
        "deviations": deviations,
    }


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def fmt(x: float) -> str:
    """17 significant digits; infinities spelled ``inf``."""
    return "inf" if np.isinf(x) else format(float(x), ".17g")


def write_duffing_csv(rows: Sequence[BenchmarkRow], path: str | Path) -> None:
    lines = ["method,dict_kind,hyperparam,mse,n_train_pairs,diverged"]
    for r in rows:
        lines.append(f"{r.method},{r.dict_kind},{r.hyperparam},{fmt(r.mse)},{r.n_train_pairs},{int(r.diverged)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_lorenz_csv(result: LorenzResult, path: str | Path) -> None:
    lines = ["horizon,mse_raw,mse_aug,mse_half_aug"]
    for i, l in enumerate(result.horizons):
        vals = (result.mse[k][i] for k in ("raw", "aug", "half_aug"))
        lines.append(f"{int(l)}," + ",".join(fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def write_meta(meta: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
