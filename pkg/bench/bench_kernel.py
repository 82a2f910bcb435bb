"""Time the compiled event loop against the pure-Python one on the bundled disruption.

    python3 bench/bench_kernel.py --repeat 5 --scale 1 3
"""

import argparse
import json
import time

import numpy as np

from robustpath import synthetic
from robustpath.benchmarks import uniform_shares
from robustpath.model import DemandMatrix
from robustpath.simulator import (PassengerSet, background_passengers, compile_network,
                                  materialize_passengers, run)
from robustpath.simulator._backend import compiled_kernel, python_kernel
from robustpath.uncertainty import fit, generate_synthetic_samples


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, nargs="+", default=[1.0, 3.0],
                    help="multipliers on the nominal demand")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    scenario, incident, _, dem = synthetic.load_disruption()
    net = compile_network(scenario, incident)
    d_bar = fit(generate_synthetic_samples(dem.baseline_days, seed=args.seed)).d_bar
    p = uniform_shares(scenario.index)
    rows = []
    for s in args.scale:
        d = DemandMatrix.from_vector(d_bar * s, scenario.index)
        pax = PassengerSet.concat([materialize_passengers(d, p, net, args.seed),
                                   background_passengers(net, args.seed)])
        row = {"scale": s, "passengers": len(pax)}
        t_py, rec_py = best_of(lambda: run(net, pax, kernel=python_kernel), args.repeat)
        row["python_s"] = t_py
        if compiled_kernel is not None:
            t_c, rec_c = best_of(lambda: run(net, pax, kernel=compiled_kernel), args.repeat)
            assert rec_c.Z == rec_py.Z and np.array_equal(rec_c.tapout, rec_py.tapout)
            row.update(cython_s=t_c, speedup=t_py / t_c, events=rec_c.events_processed)
        rows.append(row)

    if args.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"{'scale':>6} {'pax':>7} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for r in rows:
        c = f"{1e3 * r['cython_s']:10.2f} {r['speedup']:8.1f}" if "cython_s" in r else f"{'-':>10} {'-':>8}"
        print(f"{r['scale']:6g} {r['passengers']:7d} {1e3 * r['python_s']:10.2f} {c}")


if __name__ == "__main__":
    main()
