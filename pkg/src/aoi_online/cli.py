"""Command-line entry point.

    aoi-online oracle --model uniform:0,1 [--fmax 1]
    aoi-online simulate config.json --out runs/one
    aoi-online ensemble config.json --runs 100 --out runs/many
    aoi-online scenario lognormal-unconstrained --out report/
    aoi-online acceptance [--filter oracle]

Exit codes: 0 success, 1 validation error, 2 runtime error or infeasibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, aoi_core, oracle, scenarios
from .delay_models import ModelError, model_from_dict, parse_model_spec
from .online_sampler import policy_from_dict
from .simulator import RunConfig, default_checkpoints, ensemble, run

log = logging.getLogger("aoi_online")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _parse_fmax(text) -> float:
    if text is None:
        return math.inf
    if isinstance(text, str) and text.lower() in ("inf", "none", "infinity"):
        return math.inf
    value = float(text)
    if not value > 0:
        raise ValueError(f"--fmax must be > 0, got {text}")
    return value


def _parse_policy(text: str):
    text = text.strip()
    if text.startswith("{"):
        return policy_from_dict(json.loads(text))
    return policy_from_dict(text)


def load_config(path: str | None, args) -> tuple[RunConfig, dict]:
    """Merge a JSON config file with command-line overrides."""
    raw = {}
    if path:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
    if getattr(args, "model", None):
        model = parse_model_spec(args.model)
    elif "model" in raw:
        m = raw["model"]
        model = parse_model_spec(m) if isinstance(m, str) else model_from_dict(m)
    else:
        raise ValueError("no delay model given (config 'model' or --model)")
    if getattr(args, "policy", None):
        policy = _parse_policy(args.policy)
    else:
        policy = policy_from_dict(raw.get("policy", "online"))

    K = args.cycles if getattr(args, "cycles", None) is not None else raw.get("K", raw.get("cycles"))
    if K is None:
        raise ValueError("number of cycles missing (config 'K' or --cycles)")
    if isinstance(K, float) and K.is_integer():
        K = int(K)
    if not isinstance(K, int) or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")

    if getattr(args, "fmax", None) is not None:
        f_max = _parse_fmax(args.fmax)
    elif "inv_f_max" in raw:
        f_max = math.inf if not raw["inv_f_max"] else 1.0 / float(raw["inv_f_max"])
    else:
        f_max = _parse_fmax(raw.get("f_max"))

    bounds = raw.get("bounds_mode", "exact")
    warmup = raw.get("warmup_n", 100)
    if isinstance(bounds, dict):
        (bounds, opts), = bounds.items()
        warmup = (opts or {}).get("warmup_n", warmup)
    seed = args.seed if getattr(args, "seed", None) is not None else raw.get("seed", 0)
    cfg = RunConfig(model, policy, K, 0.0 if math.isinf(f_max) else 1.0 / f_max, int(seed),
                    bounds, int(warmup), int(raw.get("record_every", 1)))
    return cfg, raw


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _final_state_dict(state):
    if state is None:
        return None
    if isinstance(state, dict):
        return state
    return {"k": state.k, "gamma": state.gamma, "U": state.U}


def write_ensemble_csv(summary, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["checkpoint", "metric", "mean", "ci_half_width"])
        for cp, name, mean, ci in summary.rows():
            w.writerow([cp, name, repr(float(mean)), repr(float(ci))])


def write_run_records(summary, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    rec, ks = summary.records, summary.record_k
    cols = aoi_core.TRAJECTORY_COLUMNS[1:]
    for r in range(summary.runs):
        with open(directory / f"run_{r:03d}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(aoi_core.TRAJECTORY_COLUMNS)
            for i, k in enumerate(ks):
                vals = [rec[c][i, r] for c in cols]
                w.writerow([int(k)] + ["" if np.isnan(v) else repr(float(v)) for v in vals])


def _reference(cfg: RunConfig):
    try:
        return oracle.solve_constrained(cfg.model, cfg.f_max)
    except oracle.OracleError:
        return None


# -- subcommands ------------------------------------------------------------

def cmd_oracle(args) -> int:
    model = parse_model_spec(args.model)
    f_max = _parse_fmax(args.fmax)
    sol = oracle.solve_constrained(model, f_max, args.tol)
    b = oracle.exact_gamma_bounds(model, f_max)
    out = {"version": __version__, "model": model.to_dict(), **sol.to_dict(),
           "gamma_bounds": {"gamma_lb": b.gamma_lb, "gamma_ub": b.gamma_ub}}
    if args.grid_out:
        hi = args.grid_max if args.grid_max is not None else 3 * sol.beta
        betas = np.linspace(0.0, hi, args.grid_n)
        with open(args.grid_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "aoi"])
            for bval, a in zip(betas, oracle.aoi_curve(model, betas)):
                w.writerow([repr(float(bval)), repr(float(a))])
        out["grid_csv"] = str(args.grid_out)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, _ = load_config(args.config, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj, state = run(cfg)
    traj.write_csv(out / "trajectory.csv", cfg.record_every)
    ref = _reference(cfg)
    summary = {
        "version": __version__,
        "config": cfg.to_dict(),
        "cycles": len(traj),
        "aoi_ratio": aoi_core.aoi_ratio(traj),
        "time_average_aoi": aoi_core.time_average_aoi(traj, traj.horizon),
        "mean_interval": traj.horizon / len(traj),
        "final_state": _final_state_dict(state),
        "oracle": None if ref is None else ref.to_dict(),
    }
    if ref is not None:
        summary["theta"] = aoi_core.theta_diagnostic(traj, ref.gamma_star, cfg.model.moments().mean)
    _write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("cycles", "aoi_ratio", "mean_interval")}))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg, raw = load_config(args.config, args)
    runs = args.runs if args.runs is not None else raw.get("runs", 100)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record_every = max(cfg.record_every, 1) if args.per_run else None
    s = ensemble(cfg, int(runs), default_checkpoints(cfg.K), workers=args.workers,
                 record_every=record_every)
    write_ensemble_csv(s, out / "ensemble.csv")
    if record_every is not None:
        write_run_records(s, out / "runs")
    final = {name: {"mean": float(s.mean(name)[-1]), "ci_half_width": float(s.ci_half_width(name)[-1])}
             for name in ("aoi_ratio", "interval", "gamma", "U", "theta")
             if not np.all(np.isnan(s.per_run[name]))}
    _write_json(out / "summary.json", {"version": __version__, **s.meta, "final": final})
    print(json.dumps({"runs": s.runs, "K": cfg.K, "final": final}))
    return EXIT_OK


def cmd_scenario(args) -> int:
    sc = scenarios.get(args.name)
    K = args.cycles or sc.K
    runs = args.runs or sc.runs
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    refs = sc.references()
    summaries, paths, finals = {}, {}, {}
    for label, policy in sc.policies.items():
        cfg = RunConfig(sc.model, policy, K, sc.inv_f_max, args.seed, sc.bounds_mode)
        log.info("scenario %s: %s (%d runs x %d cycles)", sc.name, label, runs, K)
        s = ensemble(cfg, runs, default_checkpoints(K), workers=args.workers)
        summaries[label] = s
        write_ensemble_csv(s, out / f"ensemble_{label}.csv")
        traj, _ = run(cfg, index=0)
        traj.write_csv(out / f"path_{label}.csv", max(1, K // 2000))
        paths[label] = traj
        finals[label] = {"aoi_ratio": float(s.mean("aoi_ratio")[-1]),
                         "aoi_ratio_ci": float(s.ci_half_width("aoi_ratio")[-1]),
                         "interval": float(s.mean("interval")[-1])}
    meta = {"version": __version__, "scenario": sc.name, "description": sc.description,
            "model": sc.model.to_dict(), "inv_f_max": sc.inv_f_max, "bounds_mode": sc.bounds_mode,
            "K": K, "runs": runs, "seed": args.seed, "scenario_meta": sc.meta,
            "policies": {k: p.to_dict() for k, p in sc.policies.items()},
            "references": refs, "final": finals}
    if not args.no_plot:
        from . import plotting
        star = refs["optimum"]["aoi_star"]
        figs = [
            plotting.plot_metric(summaries, "aoi_ratio", out / "fig_aoi_ratio.png",
                                 ylabel="AoI ratio", reference=star),
            plotting.plot_metric(summaries, "time_avg_aoi", out / "fig_time_avg_aoi.png",
                                 ylabel="time-average AoI", reference=star, xlabel="time t"),
            plotting.plot_metric(summaries, "gamma", out / "fig_gamma.png",
                                 ylabel="threshold estimate", reference=refs["optimum"]["gamma_star"],
                                 ref_label="gamma*"),
            plotting.plot_single_path(paths, out / "fig_single_path.png", reference=star),
        ]
        if sc.inv_f_max > 0:
            figs.append(plotting.plot_metric(summaries, "interval", out / "fig_interval.png",
                                             ylabel="mean sampling interval",
                                             reference=sc.inv_f_max, ref_label="1/f_max"))
        meta["figures"] = [p.name for p in figs]
    _write_json(out / "summary.json", meta)
    print(json.dumps({"scenario": sc.name, "final": finals, "aoi_star": refs["optimum"]["aoi_star"]}))
    return EXIT_OK


def cmd_acceptance(args) -> int:
    results = acceptance.run_all(args.filter)
    if not results:
        print(f"no criteria match filter {args.filter!r}")
        return EXIT_VALIDATION
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aoi-online", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="solve the known-distribution optimum")
    o.add_argument("--model", required=True, help="e.g. uniform:0,1, lognormal:1,1.3, JSON")
    o.add_argument("--fmax", default=None, help="maximum sampling frequency (default: none)")
    o.add_argument("--tol", type=float, default=oracle.DEFAULT_TOL)
    o.add_argument("--grid-out", default=None, help="write (beta, AoI) CSV here")
    o.add_argument("--grid-n", type=int, default=200)
    o.add_argument("--grid-max", type=float, default=None)
    o.set_defaults(func=cmd_oracle)

    def run_flags(sp):
        sp.add_argument("config", nargs="?", default=None, help="JSON run config")
        sp.add_argument("--model")
        sp.add_argument("--policy", help="policy name or JSON object")
        sp.add_argument("--cycles", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--fmax")
        sp.add_argument("--out", default="out")

    s = sub.add_parser("simulate", help="simulate one run")
    run_flags(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("ensemble", help="simulate independent runs and aggregate")
    run_flags(e)
    e.add_argument("--runs", type=int)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--no-per-run", dest="per_run", action="store_false",
                   help="skip the per-run trajectory CSVs")
    e.set_defaults(func=cmd_ensemble)

    c = sub.add_parser("scenario", help="run a named experiment and render figures")
    c.add_argument("name", choices=sorted(scenarios.SCENARIOS))
    c.add_argument("--out", default="report")
    c.add_argument("--cycles", type=int)
    c.add_argument("--runs", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--no-plot", action="store_true")
    c.set_defaults(func=cmd_scenario)

    a = sub.add_parser("acceptance", help="run the acceptance criteria")
    a.add_argument("--filter", default=None, help="criterion number, name or tag")
    a.set_defaults(func=cmd_acceptance)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ModelError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (oracle.OracleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
