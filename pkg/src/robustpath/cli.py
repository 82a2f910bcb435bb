"""robustpath command line.

Every command reads JSON inputs, writes JSON/CSV outputs into --out-dir and stamps
reports with a hash of the configuration. Validation failures print a JSON error
object on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path as FsPath

import numpy as np

from . import benchmarks, optimizer, scenario_io, synthetic
from .gradient import linearize
from .model import DemandMatrix, PathShares, ValidationError
from .simulator import compile_network, simulate
from .uncertainty import (RHO_GRID, UncertaintyModel, fit, generate_synthetic_samples,
                          mardia_statistics)

log = logging.getLogger("robustpath")

EXIT_INVALID = 2


def _parse_rho_grid(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"bad --rho-grid {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise ValidationError("--rho-grid needs nonnegative values")
    return vals


def config_hash(args: argparse.Namespace, files: list) -> str:
    """sha256 over the file contents and the command's parameters."""
    h = hashlib.sha256()
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out_dir", "verbose")}
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    for f in files:
        if f is None:
            continue
        p = FsPath(f)
        paths = sorted(p.glob("*.json")) if p.is_dir() else [p]
        for q in paths:
            h.update(q.name.encode())
            h.update(q.read_bytes())
    return h.hexdigest()


def _out(args) -> FsPath:
    d = FsPath(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_text(path: FsPath, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load(args, need_incident=True):
    if not args.scenario:
        raise ValidationError("--scenario is required")
    scenario = scenario_io.load_scenario(args.scenario)
    incident, durations = (None, {})
    if getattr(args, "incident", None):
        incident, durations = scenario_io.load_incident(args.incident, scenario)
    elif need_incident:
        raise ValidationError("--incident is required")
    return scenario, incident, durations


def _demand(args, scenario, key: str | None = None) -> DemandMatrix:
    if not args.demand:
        raise ValidationError("--demand is required")
    df = scenario_io.load_demand(args.demand, scenario)
    key = key or args.demand_key
    if key == "actual":
        if df.actual is None:
            raise ValidationError("demand file has no 'actual' matrix")
        return df.actual
    if key == "nominal":
        if df.nominal is not None:
            return df.nominal
        src = df.samples or df.baseline_days
        if not src:
            raise ValidationError("demand file has neither 'nominal' nor samples")
        return DemandMatrix(np.mean([m.values for m in src], axis=0))
    raise ValidationError(f"unknown demand key {key!r}")


def _shares(path, index) -> PathShares:
    return PathShares.from_json(scenario_io.read_json(path), index)


# -- commands ------------------------------------------------------------------------

def cmd_simulate(args) -> dict:
    scenario, incident, _ = _load(args, need_incident=False)
    index = scenario.index
    d = _demand(args, scenario)
    p = _shares(args.shares, index) if args.shares else benchmarks.uniform_shares(index)
    net = compile_network(scenario, incident)
    rec = simulate(net, d, p, args.seed)
    out = _out(args)
    report = {"command": "simulate", "config_hash": config_hash(args, [args.scenario, args.incident,
                                                                      args.demand, args.shares]),
              "seed": args.seed, **rec.summary()}
    scenario_io.write_json(out / "summary.json", report)
    _write_text(out / "trajectories.csv", rec.trajectory_csv())
    if args.beta:
        _write_text(out / "beta.csv", linearize(rec).to_csv(index))
    return report


def _samples(args, scenario):
    df = scenario_io.load_demand(args.demand, scenario)
    if df.samples:
        return df.samples, "file"
    if not df.baseline_days:
        raise ValidationError("demand file needs 'samples' or 'baseline_days'")
    return generate_synthetic_samples(df.baseline_days, args.leave_lo, args.leave_hi, args.seed), "generated"


def cmd_fit_uncertainty(args) -> dict:
    scenario, _, _ = _load(args, need_incident=False)
    if not args.demand:
        raise ValidationError("--demand is required")
    samples, source = _samples(args, scenario)
    model = fit(samples, rho=args.rho, Gamma=args.gamma)
    mardia = mardia_statistics(samples)
    out = _out(args)
    scenario_io.write_json(out / "uncertainty.json", model.to_json())
    report = {"command": "fit-uncertainty",
              "config_hash": config_hash(args, [args.scenario, args.demand]),
              "samples": len(samples), "sample_source": source, "dimension": model.dim,
              "ridge": model.ridge, "Gamma": model.Gamma, "rho": model.rho,
              "mardia": mardia.to_json()}
    scenario_io.write_json(out / "fit_report.json", report)
    return report


def _model(args, scenario) -> UncertaintyModel:
    if not args.uncertainty:
        raise ValidationError("--uncertainty is required")
    model = UncertaintyModel.from_json(scenario_io.read_json(args.uncertainty))
    model.check_index(scenario.index)
    if args.gamma is not None:
        model = model.with_gamma(args.gamma)
    return model


def _rho_tag(rho: float) -> str:
    return f"{rho:g}".replace(".", "p")


def cmd_optimize(args) -> dict:
    scenario, incident, durations = _load(args)
    index = scenario.index
    model = _model(args, scenario)
    grid = _parse_rho_grid(args.rho_grid)
    out = _out(args)
    if args.expected_durations and durations:
        inc = {k: v[0] for k, v in durations.items()}
        probs = {k: v[1] for k, v in durations.items()}
    else:
        inc, probs = incident, None
    runs = []
    for rho in grid:
        cfg = optimizer.MSAConfig(T_cvg=args.tcvg, epsilon=args.epsilon, max_iters=args.max_iters,
                                  seed=args.seed)
        res = optimizer.msa_run(scenario, inc, model.with_rho(rho), cfg, probs)
        tag = _rho_tag(rho)
        scenario_io.write_json(out / f"shares_rho{tag}.json",
                               {"rho": rho, "converged": res.converged, **res.shares.to_json(index)})
        _write_text(out / f"trace_rho{tag}.csv", res.trace_csv())
        runs.append({"rho": rho, "converged": res.converged, "iterations": res.iterations,
                     "t_star": res.t_star, "epsilon": res.epsilon,
                     "Z_t_star": res.Z_history[res.t_star],
                     "shares_file": f"shares_rho{tag}.json", "trace_file": f"trace_rho{tag}.csv"})
        if not res.converged:
            log.warning("rho=%g did not converge within %d iterations", rho, args.max_iters)
    report = {"command": "optimize",
              "config_hash": config_hash(args, [args.scenario, args.incident, args.uncertainty]),
              "seed": args.seed, "runs": runs,
              "all_converged": all(r["converged"] for r in runs)}
    scenario_io.write_json(out / "optimize_report.json", report)
    return report


def cmd_benchmark_shares(args) -> dict:
    scenario, incident, _ = _load(args)
    index = scenario.index
    df = scenario_io.load_demand(args.demand, scenario)
    base = _demand(args, scenario, "nominal")
    out = _out(args)
    fallback = []
    made = {"uniform": benchmarks.uniform_shares(index),
            "capacity": benchmarks.capacity_shares(scenario, incident, index, base, args.seed, fallback)}
    if df.wait_curve is not None and df.observed_increases is not None:
        made["status_quo"] = benchmarks.status_quo_shares(
            index, df.wait_curve, df.observed_increases, incident.end,
            benchmarks.waiting_paths(index, incident))
    for name, p in made.items():
        scenario_io.write_json(out / f"{name}.json", p.to_json(index))
    report = {"command": "benchmark-shares",
              "config_hash": config_hash(args, [args.scenario, args.incident, args.demand]),
              "written": sorted(f"{n}.json" for n in made),
              "capacity_uniform_fallback": [{"h": h, "k": k} for h, k in fallback]}
    scenario_io.write_json(out / "benchmark_report.json", report)
    return report


def _evaluate_one(net, d, p, seed):
    rec = simulate(net, d, p, seed)
    return rec, rec.wait_time()


def cmd_evaluate(args) -> dict:
    scenario, incident, _ = _load(args)
    index = scenario.index
    d = _demand(args, scenario)
    if not args.shares:
        raise ValidationError("evaluate needs at least one --shares file")
    names = [FsPath(s).stem for s in args.shares]
    if len(set(names)) != len(names):
        raise ValidationError("shares files must have distinct names")
    shares = [_shares(s, index) for s in args.shares]
    baseline = args.baseline or names[0]
    if baseline not in names:
        raise ValidationError(f"baseline {baseline!r} is not among the shares files")
    net = compile_network(scenario, incident)
    with ThreadPoolExecutor(max_workers=max(1, min(len(shares), os.cpu_count() or 1))) as ex:
        results = list(ex.map(lambda p: _evaluate_one(net, d, p, args.seed), shares))
    b = names.index(baseline)
    brec = results[b][0]
    rec_mask = brec.passengers.triple >= 0
    base_all = float(brec.travel_time.mean()) if len(brec.travel_time) else 0.0
    base_inc = float(brec.travel_time[rec_mask].mean()) if rec_mask.any() else 0.0

    def pct(x, ref):
        return 100.0 * (x - ref) / ref if ref else 0.0

    table, path_rows, change_rows, summary = [], [], [], []
    edges = np.arange(-60, 61, 5) * 60.0
    for name, (rec, wait) in zip(names, results):
        if len(rec.passengers) != len(brec.passengers):
            raise ValidationError("passenger sets differ between evaluations")
        m = rec.passengers.triple >= 0
        all_mean = float(rec.travel_time.mean()) if len(rec.travel_time) else 0.0
        inc_mean = float(rec.travel_time[m].mean()) if m.any() else 0.0
        row = {"shares": name, "passengers": int(len(rec.passengers)),
               "incident_line_passengers": int(m.sum()),
               "mean_travel_time_min": all_mean / 60.0, "pct_change_all": pct(all_mean, base_all),
               "incident_line_mean_travel_time_min": inc_mean / 60.0,
               "pct_change_incident_line": pct(inc_mean, base_inc), "Z": rec.Z}
        table.append(row)
        for k, od in enumerate(index.K):
            for r, path in enumerate(index.R[od]):
                sel = np.isin(rec.passengers.triple, [index.position((h, k, r)) for h in range(index.n_intervals)])
                path_rows.append((name, od[0], od[1], r, path.label, int(sel.sum()),
                                  f"{rec.travel_time[sel].mean() / 60:.4f}" if sel.any() else "",
                                  f"{wait[sel].mean() / 60:.4f}" if sel.any() else ""))
        delta = rec.travel_time - brec.travel_time
        nz = delta[delta != 0]
        hist, _ = np.histogram(np.clip(nz, edges[0], edges[-1] - 1e-9), bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], hist):
            change_rows.append((name, int(lo // 60), int(hi // 60), int(c)))
        summary.append({"shares": name, "changed_passengers": int(len(nz)),
                        "mean_change_min": float(nz.mean() / 60) if len(nz) else 0.0,
                        "share_improved": float((nz < 0).mean()) if len(nz) else 0.0})
    out = _out(args)
    _write_text(out / "table.csv", _rows_csv(
        ("shares", "passengers", "mean_travel_time_min", "pct_change_all", "incident_line_passengers",
         "incident_line_mean_travel_time_min", "pct_change_incident_line"),
        [(r["shares"], r["passengers"], f"{r['mean_travel_time_min']:.4f}", f"{r['pct_change_all']:.3f}",
          r["incident_line_passengers"], f"{r['incident_line_mean_travel_time_min']:.4f}",
          f"{r['pct_change_incident_line']:.3f}") for r in table]))
    _write_text(out / "paths.csv", _rows_csv(
        ("shares", "origin", "destination", "r", "path", "passengers", "mean_travel_time_min",
         "mean_wait_time_min"), path_rows))
    _write_text(out / "changes.csv", _rows_csv(("shares", "bin_lo_min", "bin_hi_min", "passengers"),
                                               change_rows))
    report = {"command": "evaluate", "baseline": baseline,
              "config_hash": config_hash(args, [args.scenario, args.incident, args.demand, *args.shares]),
              "seed": args.seed, "table": table, "changes": summary}
    scenario_io.write_json(out / "evaluation.json", report)
    return report


def cmd_worst_case_demand(args) -> dict:
    scenario, incident, _ = _load(args)
    index = scenario.index
    model = _model(args, scenario)
    rho = args.rho if args.rho is not None else model.rho
    model = model.with_rho(rho)
    p = _shares(args.shares, index) if args.shares else benchmarks.uniform_shares(index)
    net = compile_network(scenario, incident)
    d_bar = DemandMatrix.from_vector(model.d_bar, index)
    lin = linearize(simulate(net, d_bar, p, args.seed))
    wd = optimizer.solve_wd(p, lin, model, index)
    out = _out(args)
    report = {"command": "worst-case-demand",
              "config_hash": config_hash(args, [args.scenario, args.incident, args.uncertainty, args.shares]),
              "rho": rho, "Gamma": model.Gamma, "objective": wd.objective,
              "nominal_objective": optimizer.linearized_objective(lin, index, p.values, model.d_bar),
              "status": wd.solution.status if wd.solution else "optimal",
              "z": wd.z.tolist(), "demand": scenario_io.demand_matrix_to_json(wd.demand),
              "total_demand": wd.demand.total(), "nominal_total": float(model.d_bar.sum())}
    scenario_io.write_json(out / "worst_case_demand.json", report)
    return report


def cmd_make_synthetic(args) -> dict:
    out = _out(args)
    paths = synthetic.write_disruption(out, seed=args.seed)
    return {"command": "make-synthetic", "written": [os.path.basename(p) for p in paths]}


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustpath", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, incident=True, demand=True):
        p.add_argument("--scenario", help="directory with network/timetable/paths JSON")
        if incident:
            p.add_argument("--incident", help="incident JSON")
        if demand:
            p.add_argument("--demand", help="demand JSON")
            p.add_argument("--demand-key", default="actual", choices=("actual", "nominal"),
                           help="which demand matrix to load (nominal = file mean if absent)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="out")

    p = sub.add_parser("simulate", help="run the simulator once")
    common(p)
    p.add_argument("--shares", help="shares JSON (default uniform)")
    p.add_argument("--beta", action="store_true", help="also write beta.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-uncertainty", help="fit the demand uncertainty set")
    common(p, incident=False)
    p.add_argument("--gamma", type=float, default=1.1)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--leave-lo", type=float, default=0.1)
    p.add_argument("--leave-hi", type=float, default=0.3)
    p.set_defaults(func=cmd_fit_uncertainty)

    p = sub.add_parser("optimize", help="MSA robust optimization for each rho")
    common(p, demand=False)
    p.add_argument("--uncertainty", help="uncertainty JSON from fit-uncertainty")
    p.add_argument("--rho-grid", default=",".join(f"{r:g}" for r in RHO_GRID))
    p.add_argument("--gamma", type=float, default=None, help="override the fitted Gamma")
    p.add_argument("--tcvg", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=None,
                   help="convergence threshold in passenger-seconds (default 1%% of Z at t=0)")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--expected-durations", action="store_true",
                   help="average the gradient over the incident's duration scenarios")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("benchmark-shares", help="uniform, capacity-based and status-quo shares")
    common(p)
    p.set_defaults(func=cmd_benchmark_shares)

    p = sub.add_parser("evaluate", help="simulate shares files on a demand and compare")
    common(p)
    p.add_argument("--shares", nargs="+", help="shares JSON files")
    p.add_argument("--baseline", help="name (file stem) of the baseline shares")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("worst-case-demand", help="worst-case demand for given shares")
    common(p, demand=False)
    p.add_argument("--uncertainty", help="uncertainty JSON")
    p.add_argument("--shares", help="shares JSON (default uniform)")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.set_defaults(func=cmd_worst_case_demand)

    p = sub.add_parser("make-synthetic", help="write the bundled synthetic scenario files")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", default="synthetic")
    p.set_defaults(func=cmd_make_synthetic)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = args.func(args)
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        err = {"error": str(exc), "type": type(exc).__name__, "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps({k: v for k, v in report.items() if k in ("command", "config_hash", "written",
                                                                  "all_converged", "baseline")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
