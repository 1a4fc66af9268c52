"""Command-line interface: ``koopsym <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from koopsym import basin, harness
from koopsym.dynamics import integrate, system_rhs
from koopsym.edmd import build_snapshot_pairs, fit, predict_trajectory
from koopsym.io import load_model, read_actions, read_trajectories, save_model, write_trajectories
from koopsym.observables import dictionary_from_spec
from koopsym.symmetry import GroupAction, augment

EXIT_CONFIG = 2
EXIT_CHECK = 3


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_simulate(args) -> int:
    rhs = system_rhs(args.system)
    traj = integrate(rhs, np.array(args.x0), args.dt, args.steps)
    write_trajectories([traj], args.out)
    return 0


def cmd_fit(args) -> int:
    trajs = read_trajectories(args.data)
    spec = json.loads(args.dict)
    states = np.vstack([t.states for t in trajs])
    dictionary = dictionary_from_spec(spec, state_dim=states.shape[1], data=states)
    pairs = build_snapshot_pairs(trajs)
    model = fit(pairs, dictionary, svd_rtol=args.svd_rtol, ridge=args.ridge)
    model.meta.update(
        {"n_trajectories": len(trajs), "n_states": int(states.shape[0]), "seed": None, "data": str(args.data)}
    )
    save_model(model, args.out)
    logging.info("fit residual %.3e, reconstruction residual %.3e", model.fit_residual, model.reconstruction_residual)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    traj = predict_trajectory(model, np.array(args.x0), args.steps)
    if not np.all(np.isfinite(traj.states)):
        logging.warning("prediction diverged to non-finite values")
    write_trajectories([traj], args.out)
    return 0


def cmd_basin(args) -> int:
    lo, hi = args.domain
    axis = np.linspace(lo, hi, args.grid)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([x1.ravel(), x2.ravel()])
    rhs = system_rhs("duffing")
    if args.method == "oracle":
        labels = basin.label_many(pts, rhs, t_final=args.t_final, tol=args.tol)
    else:
        cfg = harness.ExperimentConfig(k=args.k)
        labels = basin.classify(harness.duffing_setup(cfg).indicator, pts)
    lines = ["x1,x2,label"] + [f"{harness.fmt(a)},{harness.fmt(b)},{int(c)}" for (a, b), c in zip(pts, labels)]
    Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def cmd_augment(args) -> int:
    trajs = read_trajectories(args.data)
    out = list(trajs)
    for matrix in read_actions(args.action):
        g = GroupAction(matrix)
        if g.is_identity:
            continue
        out += augment(trajs, g)[len(trajs):]
    write_trajectories(out, args.out, with_id=True)
    return 0


def cmd_bench(args) -> int:
    try:
        cfg = harness.load_config(args.config, system=args.system, seed=args.seed, n_jobs=args.jobs)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    meta_path = out.with_suffix(".meta.json")
    meta = {"config": harness.config_dict(cfg)}
    if cfg.system == "duffing":
        rows = harness.run_duffing_benchmark(cfg)
        harness.write_duffing_csv(rows, out)
        summary = harness.duffing_ordinal_summary(rows)
        meta["ordinal"] = summary
        passed = all(s["passed"] for s in summary.values())
    else:
        data = harness.lorenz_data(cfg)
        result = harness.run_lorenz_benchmark(cfg, data)
        harness.write_lorenz_csv(result, out)
        sweep = harness.run_lorenz_sweep(cfg, data)
        summary = harness.lorenz_ordinal_summary(sweep)
        meta.update(
            {
                "point_counts": result.counts,
                "pair_counts": {k: v - len(data.datasets[k]) for k, v in result.counts.items()},
                "test_points": len(data.test),
                "fit_residuals": result.fit_residuals,
                "upper_half_mse": result.upper_half_means(),
                "ordinal": summary,
            }
        )
        for dev in summary["deviations"]:
            logging.warning("reproduction deviation: %s", dev["dictionary"])
        passed = summary["passed"]
    harness.write_meta(meta, meta_path)
    if args.check and not passed:
        print("ordinal acceptance check failed; see " + str(meta_path), file=sys.stderr)
        return EXIT_CHECK
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="koopsym", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate a benchmark system with RK4")
    s.add_argument("--system", choices=["duffing", "lorenz"], required=True)
    s.add_argument("--x0", type=_floats, required=True)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit an EDMD model to trajectory CSV data")
    s.add_argument("--data", required=True)
    s.add_argument("--dict", required=True, help='JSON dictionary spec, e.g. \'{"kind":"rbf","n_centers":10}\'')
    s.add_argument("--out", required=True)
    s.add_argument("--svd-rtol", type=float, default=1e-10)
    s.add_argument("--ridge", type=float, default=0.0)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="roll a fitted model forward from x0")
    s.add_argument("--model", required=True)
    s.add_argument("--x0", type=_floats, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("basin", help="label a Duffing state grid by basin")
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--domain", type=_floats, default=[-2.0, 2.0])
    s.add_argument("--method", choices=["oracle", "classifier"], default="oracle")
    s.add_argument("--t-final", type=float, default=50.0)
    s.add_argument("--tol", type=float, default=0.05)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_basin)

    s = sub.add_parser("augment", help="append group-action images of trajectories")
    s.add_argument("--data", required=True)
    s.add_argument("--action", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("bench", help="run the Duffing or Lorenz benchmark")
    s.add_argument("system", choices=["duffing", "lorenz"])
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--check", action="store_true", help="exit 3 if an ordinal acceptance check fails")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
