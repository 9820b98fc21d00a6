"""Fixed-step DAE simulation of the machine fleet coupled to the network.

Machine ODEs advance with RK4; the network is solved algebraically (machines
as Norton sources, loads as constant impedances) inside every derivative
evaluation. Control blocks advance once per step with the trapezoidal rule,
their inputs frozen over the step. A timed event engine applies line trips,
recloses (optionally guarded by the breaker angle), controller activation
and direct set-point overrides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import machines as mc
from .controls import (
    agc_step,
    average_frequency,
    exciter_init,
    exciter_step,
    governor_init,
    governor_step,
    pss_init,
    pss_step,
    AgcState,
)
from .errors import (
    GridDataError,
    IslandingError,
    PowerFlowDivergenceError,
    SimulationBlowupError,
    VoltageCollapseProximityError,
)
from .network import (
    Measurement,
    complex_voltage_gap,
    build_ybus,
    extract_measurement,
    solve_power_flow,
)
from .ofo import OfoConfig, OfoState, default_config, ofo_update
from .sensitivity import compute_sensitivity

if TYPE_CHECKING:  # pragma: no cover
    from .dataio import GridData

LINE_TRIP = "line_trip"
LINE_RECLOSE = "line_reclose"
ACTIVATE_OFO = "activate_ofo"
SET_INPUT = "set_input"

_BLOWUP_LIMIT = 1e6


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt: float = 5e-3
    record_every: float = 0.1

    def __post_init__(self):
        if not 0 < self.dt <= self.record_every:
            raise GridDataError("sim: need 0 < dt <= record_every")
        if abs(self.record_every / self.dt - round(self.record_every / self.dt)) > 1e-9:
            raise GridDataError("sim: record_every must be a multiple of dt")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    line_id: Optional[str] = None
    u: Optional[Sequence[float]] = None
    guard_max_angle_deg: Optional[float] = None

    def __post_init__(self):
        if self.time < 0:
            raise GridDataError("event: time must be >= 0")
        if self.kind not in (LINE_TRIP, LINE_RECLOSE, ACTIVATE_OFO, SET_INPUT):
            raise GridDataError(f"event: unknown kind {self.kind!r}")
        if self.kind in (LINE_TRIP, LINE_RECLOSE) and not self.line_id:
            raise GridDataError(f"event: {self.kind} requires line_id")


@dataclass
class Trajectory:
    t: np.ndarray
    vgap: np.ndarray
    v: np.ndarray
    dtheta: np.ndarray
    flows: np.ndarray
    p_ofo: np.ndarray
    v_ofo: np.ndarray
    p_m: np.ndarray
    machine_states: np.ndarray
    p_e: np.ndarray
    v_complex: np.ndarray
    events: list[tuple[float, str]]


def network_solve(ybus_dyn: np.ndarray, injections: np.ndarray) -> np.ndarray:
    """Solve the linear network equation Y*V = i for the bus voltages."""
    try:
        V = np.linalg.solve(ybus_dyn, injections)
    except np.linalg.LinAlgError:
        raise IslandingError(()) from None
    resid = np.max(np.abs(ybus_dyn @ V - injections))
    if not np.isfinite(resid) or resid > 1e-10 * max(1.0, float(np.max(np.abs(injections)))):
        raise IslandingError(())
    return V


class DynamicSimulation:
    """Owns the full mutable system state of one scenario run."""

    def __init__(self, grid: "GridData", ofo_cfg: Optional[OfoConfig] = None,
                 sensitivity_topology: Optional[str] = None):
        self.grid = grid
        net = grid.net
        self.net = net
        self.mach = grid.machines
        if self.mach.n != net.n_gen:
            raise GridDataError("one machine per generator required")
        self.omega_base = 2 * np.pi * net.frequency
        self.gen_idx = net.gen_bus_indices
        self.ofo_cfg = ofo_cfg if ofo_cfg is not None else default_config(net)
        self.sensitivity_topology = sensitivity_topology

        gen_p0 = np.array([g.p_set for g in net.generators])
        gen_v0 = np.array([g.v_set for g in net.generators])
        self.gen_p0 = gen_p0
        sol0 = solve_power_flow(net, gen_p0, gen_v0)
        V0 = sol0.v_complex

        # loads become constant impedances at the initial voltage profile
        load = np.array([b.load_p + 1j * b.load_q for b in net.buses])
        self._v0_mag = np.abs(V0)
        self.y_load = np.conj(load) / self._v0_mag ** 2
        self.y_int = 1.0 / (self.mach.R + 1j * self.mach.X_d_pp)

        s_inj = sol0.p_inj + 1j * sol0.q_inj
        s_gen = s_inj[self.gen_idx] + load[self.gen_idx]
        self.x, self.p_m0, self.E_f0 = mc.init_from_power_flow(
            self.mach, V0[self.gen_idx], s_gen, self.omega_base
        )

        self.gov_state = governor_init(grid.governors, self.p_m0)
        self.exc_state = exciter_init(grid.exciters, self.E_f0)
        self.pss_state = pss_init(grid.pss, self.mach.n)
        self.agc_state = AgcState()
        self.p_agc = np.zeros(self.mach.n)

        self.ofo_state = OfoState(u=np.concatenate([np.zeros(net.n_gen), gen_v0]))
        self.p_m = self.p_m0.copy()
        self.E_f = self.E_f0.copy()

        self.line_status = {ln.id: ln.in_service for ln in net.lines}
        self._sens_warm = sol0
        self.event_log: list[tuple[float, str]] = []
        self._rebuild_network()

    # -- topology ------------------------------------------------------------

    def current_net(self):
        net = self.net
        for lid, status in self.line_status.items():
            if status != net.lines[net.line_index(lid)].in_service:
                net = net.with_line_status(lid, status)
        return net

    def _rebuild_network(self):
        net_now = self.current_net()
        comps = net_now.connected_components()
        if len(comps) > 1:
            main = max(comps, key=len)
            lost = sorted(set(b.id for b in net_now.buses) - main)
            raise IslandingError(lost)
        self._net_now = net_now
        Y = build_ybus(net_now).astype(complex)
        Y[np.diag_indices_from(Y)] += self.y_load
        Y[self.gen_idx, self.gen_idx] += self.y_int
        self._lu = lu_factor(Y)

    def set_line_status(self, line_id: str, in_service: bool) -> bool:
        """Returns True when the status actually changed (trip is idempotent)."""
        if self.line_status[line_id] == in_service:
            return False
        self.line_status[line_id] = in_service
        self._rebuild_network()
        return True

    # -- algebraic network and derivatives ----------------------------------

    def bus_voltages(self, x: Optional[np.ndarray] = None) -> np.ndarray:
        x = self.x if x is None else x
        inj = np.zeros(self.net.n_bus, dtype=complex)
        inj[self.gen_idx] = mc.internal_emf(x) * self.y_int
        return lu_solve(self._lu, inj)

    def _derivs(self, x: np.ndarray, V: Optional[np.ndarray] = None):
        if V is None:
            V = self.bus_voltages(x)
        vg = V[self.gen_idx]
        i_d, i_q = mc.dq_currents(self.mach, x, vg)
        return mc.derivatives_given_currents(
            self.mach, x, self.p_m, self.E_f, i_d, i_q, self.omega_base
        )

    def electrical_power(self, x: Optional[np.ndarray] = None,
                         V: Optional[np.ndarray] = None) -> np.ndarray:
        x = self.x if x is None else x
        if V is None:
            V = self.bus_voltages(x)
        i_d, i_q = mc.dq_currents(self.mach, x, V[self.gen_idx])
        return mc.electrical_power(x, i_d, i_q)

    # -- time stepping -------------------------------------------------------

    def step(self, dt: float) -> np.ndarray:
        """Advance one step; returns the bus voltages at the step start."""
        x = self.x
        V0 = self.bus_voltages(x)
        dw = x[:, mc.OMEGA]

        self.gov_state, p_gov = governor_step(
            self.grid.governors, self.gov_state, dw, self.p_m0, dt)
        self.pss_state, v_pss = pss_step(self.grid.pss, self.pss_state, dw, dt)
        delta_v = self.ofo_state.v_ofo - np.abs(V0[self.gen_idx])
        self.exc_state, self.E_f = exciter_step(
            self.grid.exciters, self.exc_state, delta_v, v_pss, self.E_f0, dt)
        avg_dw = average_frequency(dw, self.mach.H, self.mach.S)
        self.agc_state, self.p_agc = agc_step(self.grid.agc, self.agc_state, avg_dw, dt)
        self.p_m = p_gov + self.ofo_state.p_ofo + self.p_agc

        k1 = self._derivs(x, V0)
        k2 = self._derivs(x + 0.5 * dt * k1)
        k3 = self._derivs(x + 0.5 * dt * k2)
        k4 = self._derivs(x + dt * k3)
        self.x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.max(np.abs(self.x)) > _BLOWUP_LIMIT:
            raise SimulationBlowupError("dynamic state exceeded blowup limit")
        return V0

    def measurement(self, t: float) -> Measurement:
        return extract_measurement(self._net_now, self.bus_voltages(), t)

    # -- controller ----------------------------------------------------------

    def controller_model_net(self, y_m: Optional[Measurement] = None):
        """Steady-state model the controller differentiates.

        Starts from the plant topology, optionally with one line erased (the
        deliberately wrong sensitivity of the robustness study). When a
        measurement is supplied, bus loads are rescaled by (v / v0)^2 so the
        model sees the power the impedance loads actually draw.
        """
        net = self._net_now
        if self.sensitivity_topology is not None:
            net = net.with_line_out(self.sensitivity_topology)
        if y_m is not None:
            scale = (y_m.v / self._v0_mag) ** 2
            load = np.array([b.load_p + 1j * b.load_q for b in self.net.buses])
            scaled = load * scale
            net = net.with_bus_loads(scaled.real, scaled.imag)
        return net

    def controller_update(self, t: float):
        y_m = self.measurement(t)
        model_net = self.controller_model_net(y_m)
        st = self.ofo_state
        try:
            comps = model_net.connected_components()
            if len(comps) > 1:
                raise IslandingError(sorted(
                    set(b.id for b in model_net.buses) - max(comps, key=len)))
            sol = None
            for warm in (self._sens_warm, None):
                try:
                    cand = solve_power_flow(
                        model_net, self.gen_p0 + st.p_ofo, st.v_ofo,
                        warm_start=warm)
                except PowerFlowDivergenceError:
                    continue
                # reject convergence onto an implausible (low-voltage) branch
                if 0.8 <= cand.v.min() and cand.v.max() <= 1.2:
                    sol = cand
                    break
            if sol is None:
                raise VoltageCollapseProximityError(
                    "model power flow found no plausible operating point")
            self._sens_warm = sol
            S = compute_sensitivity(
                model_net, sol, operating_point=f"t={t:g}",
                topology=self.sensitivity_topology or "nominal")
        except (IslandingError, PowerFlowDivergenceError,
                VoltageCollapseProximityError) as exc:
            # no trustworthy sensitivity at this instant: hold the input
            self.event_log.append((t, f"sensitivity update skipped: {exc}"))
            return
        self.ofo_state = ofo_update(self.ofo_cfg, st, y_m, S)


def run_scenario(grid: "GridData", events: Sequence[Event], ofo_cfg: Optional[OfoConfig],
                 sim_cfg: SimConfig,
                 sensitivity_topology: Optional[str] = None) -> Trajectory:
    """Run one closed-loop scenario and record the trajectory."""
    sim = DynamicSimulation(grid, ofo_cfg, sensitivity_topology)
    dt = sim_cfg.dt
    n_steps = int(round(sim_cfg.t_end / dt))
    rec_stride = int(round(sim_cfg.record_every / dt))
    samp = sim.ofo_cfg.sampling_period
    samp_stride = int(round(samp / dt))
    if abs(samp / dt - samp_stride) > 1e-9 or samp_stride < 1:
        raise GridDataError("ofo sampling_period must be a multiple of sim dt")

    events = sorted(events, key=lambda e: e.time)
    next_event = 0
    pending_reclose: list[Event] = []
    ofo_active = False
    activate_step = 0

    rec: dict[str, list] = {k: [] for k in (
        "t", "vgap", "v", "dtheta", "flows", "p_ofo", "v_ofo", "p_m",
        "x", "p_e", "V")}

    def apply_event(ev: Event, t: float):
        nonlocal ofo_active, activate_step
        if ev.kind == LINE_TRIP:
            changed = sim.set_line_status(ev.line_id, False)
            sim.event_log.append(
                (t, f"line {ev.line_id} tripped" if changed
                 else f"line {ev.line_id} already out; trip ignored"))
        elif ev.kind == LINE_RECLOSE:
            if ev.guard_max_angle_deg is not None:
                gap_deg = abs(np.degrees(sim.measurement(t).delta_theta))
                if gap_deg >= ev.guard_max_angle_deg:
                    if ev not in pending_reclose:
                        pending_reclose.append(ev)
                        sim.event_log.append(
                            (t, f"reclose of {ev.line_id} blocked: "
                                f"angle {gap_deg:.1f} deg above guard"))
                    return
            if ev in pending_reclose:
                pending_reclose.remove(ev)
            changed = sim.set_line_status(ev.line_id, True)
            if changed:
                sim.event_log.append((t, f"line {ev.line_id} reclosed"))
        elif ev.kind == ACTIVATE_OFO:
            ofo_active = True
            activate_step = round(t / dt)
            sim.ofo_state = OfoState(
                u=sim.ofo_state.u, measurement=sim.ofo_state.measurement,
                sensitivity=sim.ofo_state.sensitivity, active=True)
            sim.event_log.append((t, "OFO controller activated"))
        elif ev.kind == SET_INPUT:
            sim.ofo_state = OfoState(u=np.asarray(ev.u, dtype=float),
                                     active=sim.ofo_state.active)
            sim.event_log.append((t, "set-point override applied"))

    for k in range(n_steps + 1):
        t = k * dt
        while next_event < len(events) and events[next_event].time <= t + 1e-9:
            apply_event(events[next_event], t)
            next_event += 1
        for ev in list(pending_reclose):
            apply_event(ev, t)

        if ofo_active and (k - activate_step) % samp_stride == 0:
            sim.controller_update(t)

        if k % rec_stride == 0:
            V = sim.bus_voltages()
            m = extract_measurement(sim._net_now, V, t)
            rec["t"].append(t)
            rec["vgap"].append(complex_voltage_gap(m))
            rec["v"].append(m.v)
            rec["dtheta"].append(m.delta_theta)
            rec["flows"].append(m.flows)
            rec["p_ofo"].append(sim.ofo_state.p_ofo.copy())
            rec["v_ofo"].append(sim.ofo_state.v_ofo.copy())
            rec["p_m"].append(sim.p_m.copy())
            rec["x"].append(sim.x.copy())
            rec["p_e"].append(sim.electrical_power(V=V))
            rec["V"].append(V)

        if k < n_steps:
            sim.step(dt)

    return Trajectory(
        t=np.array(rec["t"]),
        vgap=np.array(rec["vgap"]),
        v=np.array(rec["v"]),
        dtheta=np.array(rec["dtheta"]),
        flows=np.array(rec["flows"]),
        p_ofo=np.array(rec["p_ofo"]),
        v_ofo=np.array(rec["v_ofo"]),
        p_m=np.array(rec["p_m"]),
        machine_states=np.array(rec["x"]),
        p_e=np.array(rec["p_e"]),
        v_complex=np.array(rec["V"]),
        events=list(sim.event_log),
    )
