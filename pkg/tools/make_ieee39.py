"""Generate data/ieee39.json from the public IEEE 39-bus (New England) case.

Static data: standard case39 branch impedances/charging and bus loads on a
100 MVA base; off-nominal transformer taps are dropped (taps are out of
scope for this model). Dynamic data: classic 10-machine New England inertia
and reactance set on the system base, completed with self-chosen subtransient
constants and control-block parameters; no trajectory-level fidelity to any
published study is claimed.

Run from the repo root: python tools/make_ieee39.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

# from, to, r, x, total charging b (all per-unit on 100 MVA)
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987), (1, 39, 0.0010, 0.0250, 0.7500),
    (2, 3, 0.0013, 0.0151, 0.2572), (2, 25, 0.0070, 0.0086, 0.1460),
    (3, 4, 0.0013, 0.0213, 0.2214), (3, 18, 0.0011, 0.0133, 0.2138),
    (4, 5, 0.0008, 0.0128, 0.1342), (4, 14, 0.0008, 0.0129, 0.1382),
    (5, 6, 0.0002, 0.0026, 0.0434), (5, 8, 0.0008, 0.0112, 0.1476),
    (6, 7, 0.0006, 0.0092, 0.1130), (6, 11, 0.0007, 0.0082, 0.1389),
    (7, 8, 0.0004, 0.0046, 0.0780), (8, 9, 0.0023, 0.0363, 0.3804),
    (9, 39, 0.0010, 0.0250, 1.2000), (10, 11, 0.0004, 0.0043, 0.0729),
    (10, 13, 0.0004, 0.0043, 0.0729), (13, 14, 0.0009, 0.0101, 0.1723),
    (14, 15, 0.0018, 0.0217, 0.3660), (15, 16, 0.0009, 0.0094, 0.1710),
    (16, 17, 0.0007, 0.0089, 0.1342), (16, 19, 0.0016, 0.0195, 0.3040),
    (16, 21, 0.0008, 0.0135, 0.2548), (16, 24, 0.0003, 0.0059, 0.0680),
    (17, 18, 0.0007, 0.0082, 0.1319), (17, 27, 0.0013, 0.0173, 0.3216),
    (21, 22, 0.0008, 0.0140, 0.2565), (22, 23, 0.0006, 0.0096, 0.1846),
    (23, 24, 0.0022, 0.0350, 0.3610), (25, 26, 0.0032, 0.0323, 0.5130),
    (26, 27, 0.0014, 0.0147, 0.2396), (26, 28, 0.0043, 0.0474, 0.7802),
    (26, 29, 0.0057, 0.0625, 1.0290), (28, 29, 0.0014, 0.0151, 0.2490),
    # transformer branches (taps dropped)
    (12, 11, 0.0016, 0.0435, 0.0), (12, 13, 0.0016, 0.0435, 0.0),
    (6, 31, 0.0000, 0.0250, 0.0), (10, 32, 0.0000, 0.0200, 0.0),
    (19, 33, 0.0007, 0.0142, 0.0), (20, 34, 0.0009, 0.0180, 0.0),
    (22, 35, 0.0000, 0.0143, 0.0), (23, 36, 0.0005, 0.0272, 0.0),
    (25, 37, 0.0006, 0.0232, 0.0), (2, 30, 0.0000, 0.0181, 0.0),
    (29, 38, 0.0008, 0.0156, 0.0), (19, 20, 0.0007, 0.0138, 0.0),
]

LOAD_MW = {3: 322.0, 4: 500.0, 7: 233.8, 8: 522.0, 12: 7.5, 15: 320.0,
           16: 329.0, 18: 158.0, 20: 628.0, 21: 274.0, 23: 247.5, 24: 308.6,
           25: 224.0, 26: 139.0, 27: 281.0, 28: 206.0, 29: 283.5, 31: 9.2,
           39: 1104.0}
LOAD_MVAR = {3: 2.4, 4: 184.0, 7: 84.0, 8: 176.0, 12: 88.0, 15: 153.0,
             16: 32.3, 18: 30.0, 20: 103.0, 21: 115.0, 23: 84.6, 24: -92.0,
             25: 47.2, 26: 17.0, 27: 75.5, 28: 27.6, 29: 26.9, 31: 4.6,
             39: 250.0}

# dispatch keeps the 23-24 corridor lightly loaded so the monitored angle
# difference stays small after the contingency
GEN_P_MW = {30: 502.0, 31: 0.0, 32: 650.0, 33: 632.0, 34: 508.0, 35: 215.0,
            36: 120.0, 37: 869.0, 38: 1124.0, 39: 1000.0}
GEN_V = {30: 1.0475, 31: 0.9820, 32: 0.9831, 33: 0.9972, 34: 1.0123,
         35: 1.0493, 36: 1.0635, 37: 1.0278, 38: 1.0265, 39: 1.0300}
SLACK_BUS = 31

# bus: H, D, x_d, x_d', x_q, x_q', T_d0', T_q0'   (system base)
MACHINE = {
    30: (42.0, 2.0, 0.100, 0.031, 0.069, 0.060, 10.2, 1.00),
    31: (30.3, 2.0, 0.295, 0.070, 0.282, 0.170, 6.56, 1.50),
    32: (35.8, 2.0, 0.250, 0.053, 0.237, 0.088, 5.70, 1.50),
    33: (28.6, 2.0, 0.262, 0.044, 0.258, 0.166, 5.69, 1.50),
    34: (26.0, 2.0, 0.670, 0.132, 0.620, 0.166, 5.40, 0.44),
    35: (34.8, 2.0, 0.254, 0.050, 0.241, 0.081, 7.30, 0.40),
    36: (26.4, 2.0, 0.295, 0.049, 0.292, 0.186, 5.66, 1.50),
    37: (24.3, 2.0, 0.290, 0.057, 0.280, 0.091, 6.70, 0.41),
    38: (34.5, 2.0, 0.211, 0.057, 0.205, 0.059, 4.79, 1.96),
    39: (500.0, 10.0, 0.020, 0.006, 0.019, 0.008, 7.00, 0.70),
}

GEN_BUSES = sorted(GEN_P_MW)


def main():
    buses = []
    for i in range(1, 40):
        kind = "slack" if i == SLACK_BUS else ("PV" if i in GEN_P_MW else "PQ")
        buses.append(dict(
            id=i, kind=kind,
            load_p=LOAD_MW.get(i, 0.0) / 100.0,
            load_q=LOAD_MVAR.get(i, 0.0) / 100.0,
            shunt_b=0.0, v_min=0.9, v_max=1.1,
        ))

    lines = [dict(id=f"{f}-{t}", from_bus=f, to_bus=t, r=r, x=x,
                  b_charging=b, flow_max=10.0, in_service=True)
             for f, t, r, x, b in BRANCHES]

    generators = [dict(bus=b, machine=f"G{b}",
                       p_set=GEN_P_MW[b] / 100.0, v_set=GEN_V[b])
                  for b in GEN_BUSES]

    machines = []
    for b in GEN_BUSES:
        H, D, xd, xdp, xq, xqp, td0p, tq0p = MACHINE[b]
        xpp = round(0.8 * min(xdp, xqp), 4)
        machines.append(dict(
            name=f"G{b}", H=H, D=D, R=0.0,
            X_d=xd, X_d_p=xdp, X_d_pp=xpp,
            X_q=xq, X_q_p=xqp, X_q_pp=xpp,
            T_d0_p=td0p, T_q0_p=tq0p, T_d0_pp=0.05, T_q0_pp=0.10,
            S=100.0,
        ))

    governors = [dict(T_1=0.5, T_2=2.5, T_3=7.5, R_g=0.05, D_t=0.0,
                      V_min=0.0, V_max=25.0) for _ in GEN_BUSES]
    exciters = [dict(K_ex=100.0, T_a=1.0, T_b=10.0, T_e=0.1,
                     E_min=0.0, E_max=10.0) for _ in GEN_BUSES]
    pss = [dict(K_PSS=30.0, T=10.0, T_1=0.15, T_2=0.15, T_3=0.05, T_4=0.05,
                H_lim=0.1) for _ in GEN_BUSES]

    # units on the monitored corridor (35, 36) do not participate in AGC so
    # secondary control does not disturb the corridor dispatch
    p_nom = np.array([0.0 if b in (35, 36)
                      else (GEN_P_MW[b] if b != SLACK_BUS else 560.0)
                      for b in GEN_BUSES])
    beta = p_nom / p_nom.sum()
    agc = {"lambda": 200.0, "K_p": 0.02, "K_i": 0.05,
           "beta": [round(float(x), 10) for x in beta]}
    agc["beta"][0] = round(1.0 - sum(agc["beta"][1:]), 10)

    doc = dict(base_mva=100.0, frequency=60.0, monitored_pair=[23, 24],
               buses=buses, lines=lines, generators=generators,
               machines=machines, governors=governors, exciters=exciters,
               pss=pss, agc=agc)

    out = Path(__file__).resolve().parents[1] / "src/gridofo/data/ieee39.json"
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {out}")

    # sanity: power flow and base flows, then tighten flow limits to 2x base
    from gridofo.dataio import load_grid
    from gridofo.network import solve_power_flow, line_flow_complex

    grid = load_grid(out)
    sol = solve_power_flow(grid.net, [g.p_set for g in grid.net.generators],
                           [g.v_set for g in grid.net.generators])
    print(f"power flow: residual {sol.residual:.2e} in {sol.iterations} iterations")
    flows = np.abs(line_flow_complex(grid.net, sol.v_complex))
    for ln, f in zip(lines, flows):
        ln["flow_max"] = float(max(5.0, np.ceil(2.0 * f * 10) / 10))
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"max base flow {flows.max():.3f} pu; flow limits updated")
    print("slack P:", sol.p_inj[grid.net.slack_index] + LOAD_MW.get(SLACK_BUS, 0) / 100)
    print("v range:", sol.v.min(), sol.v.max())


if __name__ == "__main__":
    main()
