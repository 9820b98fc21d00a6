"""Command-line entry point: power flow report, scenario runs, robustness sweep.

Subcommands:
    powerflow   solve the AC power flow of a grid file and print a bus report
    simulate    run a closed-loop scenario; write trajectory.csv, events.log
                and three SVG charts (gap, voltage set-points, power)
    robustness  rerun the scenario once per erased-line sensitivity; write
                sweep.csv, sweep_gaps.csv and an overlay SVG

Exit codes: 0 success, 1 input error, 2 numerical failure. All configuration
is explicit through flags and files; no environment variables are read.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataio import bundled_path, load_grid, load_scenario
from .errors import GridDataError, GridOfoError
from .network import solve_power_flow
from .ofo import default_config
from .plotting import gap_chart, power_chart, setpoint_chart, sweep_chart
from .simulator import LINE_TRIP, run_scenario

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _num(x: float) -> str:
    """Deterministic float formatting shared by every CSV writer."""
    return f"{x:.12g}"


def _write_trajectory_csv(path, traj, n_gen: int):
    n_bus = traj.v.shape[1]
    n_line = traj.flows.shape[1]
    header = (["t", "vgap"]
              + [f"v_{i}" for i in range(1, n_bus + 1)]
              + ["dtheta"]
              + [f"flow_{i}" for i in range(1, n_line + 1)]
              + [f"pOFO_{j}" for j in range(1, n_gen + 1)]
              + [f"vOFO_{j}" for j in range(1, n_gen + 1)]
              + [f"pm_{j}" for j in range(1, n_gen + 1)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(traj.t.size):
            row = ([traj.t[k], traj.vgap[k]] + list(traj.v[k])
                   + [traj.dtheta[k]] + list(traj.flows[k])
                   + list(traj.p_ofo[k]) + list(traj.v_ofo[k])
                   + list(traj.p_m[k]))
            w.writerow([_num(x) for x in row])


def _write_events_log(path, events):
    with open(path, "w") as fh:
        for t, msg in events:
            fh.write(f"{t:10.3f}  {msg}\n")


def _read_trajectory_csv(path):
    """Load the columns the charts need; plots derive from the CSV alone."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float)
    cols = {name: i for i, name in enumerate(header)}

    def block(prefix):
        idx = [cols[n] for n in header if n.startswith(prefix)]
        return data[:, idx]

    return dict(t=data[:, cols["t"]], vgap=data[:, cols["vgap"]],
                p_ofo=block("pOFO_"), v_ofo=block("vOFO_"), p_m=block("pm_"))


def _ofo_config(net, ofo_doc: dict):
    doc = dict(ofo_doc)
    for key in ("p_min", "p_max", "v_min", "v_max", "out_v_min", "out_v_max",
                "flow_max"):
        if key in doc and isinstance(doc[key], list):
            doc[key] = np.asarray(doc[key], dtype=float)
    return default_config(net, **doc)


def cmd_powerflow(args) -> int:
    grid = load_grid(args.grid)
    net = grid.net
    sol = solve_power_flow(net, [g.p_set for g in net.generators],
                           [g.v_set for g in net.generators])
    print(f"converged in {sol.iterations} iterations, "
          f"max mismatch {sol.residual:.3e} p.u.")
    print(f"{'bus':>4} {'v (p.u.)':>10} {'theta (deg)':>12}")
    for b, v, th in zip(net.buses, sol.v, np.degrees(sol.theta)):
        print(f"{b.id:>4} {v:>10.5f} {th:>12.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    grid = load_grid(args.grid)
    scen = load_scenario(args.scenario)
    ofo_cfg = _ofo_config(grid.net, scen.ofo)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    traj = run_scenario(grid, scen.events, ofo_cfg, scen.sim,
                        sensitivity_topology=args.sensitivity_topology)
    _write_trajectory_csv(out / "trajectory.csv", traj, grid.net.n_gen)
    _write_events_log(out / "events.log", traj.events)

    cols = _read_trajectory_csv(out / "trajectory.csv")
    names = [f"G{g.bus}" for g in grid.net.generators]
    gap_chart(cols["t"], cols["vgap"], traj.events).write(out / "gap.svg")
    setpoint_chart(cols["t"], cols["v_ofo"], names,
                   traj.events).write(out / "setpoints.svg")
    power_chart(cols["t"], cols["p_ofo"], cols["p_m"], names,
                traj.events).write(out / "power.svg")
    print(f"wrote trajectory.csv, events.log and 3 charts to {out}")
    return EXIT_OK


def _sweep_worker(task):
    """Run one sweep entry in a worker process; returns a plain tuple."""
    grid_path, scenario_path, topology = task
    grid = load_grid(grid_path)
    scen = load_scenario(scenario_path)
    ofo_cfg = _ofo_config(grid.net, scen.ofo)
    try:
        traj = run_scenario(grid, scen.events, ofo_cfg, scen.sim,
                            sensitivity_topology=topology)
    except GridOfoError as exc:
        return (topology, "failed", f"{type(exc).__name__}: {exc}",
                None, None, None)
    return (topology, "ok", "", traj.t, traj.vgap, traj.events)


def _activation_time(events) -> float:
    for ev in events:
        if ev.kind == "activate_ofo":
            return ev.time
    return 0.0


def cmd_robustness(args) -> int:
    grid = load_grid(args.grid)
    scen = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    tripped = {ev.line_id for ev in scen.events if ev.kind == LINE_TRIP}
    # the controller model starts from the post-contingency topology, so the
    # islanding precheck must apply the scripted trips before the erasure
    post_net = grid.net
    for lid in tripped:
        post_net = post_net.with_line_out(lid)
    tasks = [(args.grid, args.scenario, None)]
    skipped = []
    for ln in grid.net.lines:
        if ln.id in tripped or not ln.in_service:
            continue
        reduced = post_net.with_line_out(ln.id)
        if len(reduced.connected_components()) > 1:
            skipped.append((ln.id, "removal islands the post-contingency grid"))
            continue
        tasks.append((args.grid, args.scenario, ln.id))

    with ProcessPoolExecutor() as pool:
        results = list(pool.map(_sweep_worker, tasks))
    results.sort(key=lambda r: (r[0] is not None, r[0]))

    t_on = _activation_time(scen.events)
    period = _ofo_config(grid.net, scen.ofo).sampling_period
    nominal = next(r for r in results if r[0] is None)
    if nominal[1] != "ok":
        print(f"nominal run failed: {nominal[2]}", file=sys.stderr)
        return EXIT_NUMERICAL
    t = nominal[3]
    i_on = int(np.searchsorted(t, t_on))
    peak = float(nominal[4][:i_on].max())

    def stats(vgap):
        g_on = vgap[i_on]
        post = vgap[i_on:]
        halve = ""
        for k in range(1, int((t[-1] - t_on) / period) + 1):
            idx = int(np.searchsorted(t, t_on + k * period))
            if idx < vgap.size and vgap[idx] <= 0.5 * g_on:
                halve = str(k)
                break
        stable = post.max() <= 3.0 * peak and vgap[-1] < peak
        return post.max(), vgap[-1], halve, stable

    gap_by_line = {}
    rows = []
    for topo, status, reason, rt, vgap, _ in results:
        name = topo if topo is not None else "nominal"
        if status != "ok":
            rows.append([name, status, reason, "", "", "", ""])
            continue
        max_gap, final_gap, halve, stable = stats(vgap)
        rows.append([name, "ok", "", _num(max_gap), _num(final_gap),
                     halve, "stable" if stable else "unstable"])
        if topo is not None:
            gap_by_line[topo] = vgap
    for line_id, reason in sorted(skipped):
        rows.append([line_id, "skipped", reason, "", "", "", ""])

    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id", "status", "reason", "max_gap", "final_gap",
                    "iterations_to_halve", "stability"])
        w.writerows(rows)

    ok_ids = sorted(gap_by_line)
    with open(out / "sweep_gaps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "nominal"] + [f"gap_{i}" for i in ok_ids])
        for k in range(t.size):
            w.writerow([_num(t[k]), _num(nominal[4][k])]
                       + [_num(gap_by_line[i][k]) for i in ok_ids])

    sweep_chart(t, gap_by_line, nominal[4]).write(out / "sweep.svg")
    n_ok = len(gap_by_line)
    n_unstable = sum(1 for r in rows if r[6] == "unstable")
    print(f"sweep: {n_ok} perturbed runs, {len(skipped)} skipped, "
          f"{n_unstable} unstable; wrote sweep.csv, sweep_gaps.csv, sweep.svg")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridofo",
        description="Dynamic grid simulation with a feedback optimization "
                    "controller")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=False):
        p.add_argument("--grid", default=str(bundled_path("ieee39.json")),
                       help="grid JSON file (default: bundled 39-bus case)")
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario JSON file")
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--seed", type=int, default=0,
                           help="seed for randomized runs (kept for "
                            "reproducibility bookkeeping)")

    common(sub.add_parser("powerflow", help="solve and report the power flow"))
    p_sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    common(p_sim, scenario=True)
    p_sim.add_argument("--sensitivity-topology", default=None, metavar="LINE",
                       help="erase this line from the controller model")
    common(sub.add_parser("robustness", help="erased-line sensitivity sweep"),
           scenario=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"powerflow": cmd_powerflow, "simulate": cmd_simulate,
                "robustness": cmd_robustness}
    try:
        return handlers[args.command](args)
    except GridDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GridOfoError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
