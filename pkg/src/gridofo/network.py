"""Static grid model, admittance matrix, Newton-Raphson AC power flow.

All quantities are in per-unit on the system base. Line flows are reported
as apparent-power magnitudes at the from-end; their lower bound is zero by
construction, so flow limits are one-sided caps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateLineError,
    GridDataError,
    PowerFlowDivergenceError,
)

SLACK = "slack"
PV = "PV"
PQ = "PQ"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = PQ
    load_p: float = 0.0
    load_q: float = 0.0
    shunt_b: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1

    def __post_init__(self):
        if self.kind not in (SLACK, PV, PQ):
            raise GridDataError(f"bus {self.id}: unknown kind {self.kind!r}")
        if not self.v_min < self.v_max:
            raise GridDataError(f"bus {self.id}: v_min must be below v_max")
        if not (np.isfinite(self.load_p) and np.isfinite(self.load_q)):
            raise GridDataError(f"bus {self.id}: loads must be finite")


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    flow_max: float = 10.0
    in_service: bool = True

    def __post_init__(self):
        if self.in_service and self.x == 0.0 and self.r == 0.0:
            raise DegenerateLineError(f"line {self.id}: zero series impedance")
        if self.flow_max <= 0:
            raise GridDataError(f"line {self.id}: flow_max must be positive")


@dataclass(frozen=True)
class GenLocation:
    bus: int
    machine: str
    p_set: float = 0.0
    v_set: float = 1.0


@dataclass(frozen=True)
class NetworkModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[GenLocation, ...]
    base_power: float
    monitored_pair: tuple[int, int]
    frequency: float = 60.0

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise GridDataError("duplicate bus ids")
        idset = set(ids)
        for ln in self.lines:
            if ln.from_bus not in idset or ln.to_bus not in idset:
                raise GridDataError(f"line {ln.id} references unknown bus")
        for g in self.generators:
            if g.bus not in idset:
                raise GridDataError(f"generator at unknown bus {g.bus}")
        if sum(1 for b in self.buses if b.kind == SLACK) != 1:
            raise GridDataError("exactly one slack bus required")
        a, b = self.monitored_pair
        if a not in idset or b not in idset:
            raise GridDataError("monitored_pair references unknown bus")

    # -- index helpers -------------------------------------------------------

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._bus_index()[bus_id]
        except KeyError:
            raise GridDataError(f"unknown bus id {bus_id}") from None

    def _bus_index(self) -> dict[int, int]:
        # frozen dataclass: cache on the instance dict via object.__setattr__
        cached = self.__dict__.get("_bus_index_cache")
        if cached is None:
            cached = {b.id: i for i, b in enumerate(self.buses)}
            object.__setattr__(self, "_bus_index_cache", cached)
        return cached

    def line_index(self, line_id: str) -> int:
        for i, ln in enumerate(self.lines):
            if ln.id == line_id:
                return i
        raise GridDataError(f"unknown line id {line_id}")

    @property
    def slack_index(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == SLACK)

    @property
    def gen_bus_indices(self) -> np.ndarray:
        return np.array([self.bus_index(g.bus) for g in self.generators])

    @property
    def monitored_indices(self) -> tuple[int, int]:
        a, b = self.monitored_pair
        return self.bus_index(a), self.bus_index(b)

    # -- topology edits (model stays immutable; edits return copies) ---------

    def with_line_status(self, line_id: str, in_service: bool) -> "NetworkModel":
        k = self.line_index(line_id)
        lines = list(self.lines)
        lines[k] = replace(lines[k], in_service=in_service)
        return replace(self, lines=tuple(lines))

    def with_line_out(self, line_id: str) -> "NetworkModel":
        return self.with_line_status(line_id, False)

    def with_bus_loads(self, load_p: Sequence[float],
                       load_q: Sequence[float]) -> "NetworkModel":
        """Copy of the model with every bus load replaced (ordered like buses)."""
        if len(load_p) != self.n_bus or len(load_q) != self.n_bus:
            raise GridDataError("load vectors must be dimensioned to the buses")
        buses = tuple(replace(b, load_p=float(p), load_q=float(q))
                      for b, p, q in zip(self.buses, load_p, load_q))
        return replace(self, buses=buses)

    def connected_components(self) -> list[set[int]]:
        """Connected components of the in-service line graph, as bus-id sets."""
        adj: dict[int, set[int]] = {b.id: set() for b in self.buses}
        for ln in self.lines:
            if ln.in_service:
                adj[ln.from_bus].add(ln.to_bus)
                adj[ln.to_bus].add(ln.from_bus)
        seen: set[int] = set()
        comps = []
        for start in adj:
            if start in seen:
                continue
            comp = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for v in adj[u]:
                    if v not in comp:
                        comp.add(v)
                        stack.append(v)
            seen |= comp
            comps.append(comp)
        return comps


@dataclass(frozen=True)
class PowerFlowSolution:
    v: np.ndarray
    theta: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    converged: bool
    residual: float
    iterations: int = 0

    @property
    def v_complex(self) -> np.ndarray:
        return self.v * np.exp(1j * self.theta)


@dataclass(frozen=True)
class Measurement:
    """Controller output vector: bus voltages, line flows, monitored angle gap."""

    v: np.ndarray
    flows: np.ndarray
    delta_theta: float
    timestamp: float
    monitored_idx: tuple[int, int]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.flows, [self.delta_theta]])


# ---------------------------------------------------------------------------
# Admittance matrix and flows
# ---------------------------------------------------------------------------

def line_admittances(line: Line) -> tuple[complex, complex]:
    """Series admittance and per-end shunt (charging) admittance of a line."""
    z = complex(line.r, line.x)
    if z == 0:
        raise DegenerateLineError(f"line {line.id}: zero series impedance")
    return 1.0 / z, 1j * line.b_charging / 2.0


def build_ybus(net: NetworkModel) -> np.ndarray:
    """Complex bus-admittance matrix; out-of-service lines contribute nothing."""
    n = net.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for ln in net.lines:
        if not ln.in_service:
            continue
        ys, ysh = line_admittances(ln)
        f = net.bus_index(ln.from_bus)
        t = net.bus_index(ln.to_bus)
        Y[f, f] += ys + ysh
        Y[t, t] += ys + ysh
        Y[f, t] -= ys
        Y[t, f] -= ys
    for i, b in enumerate(net.buses):
        Y[i, i] += 1j * b.shunt_b
    return Y


def line_flow_complex(net: NetworkModel, V: np.ndarray) -> np.ndarray:
    """From-end complex power of every line (zero when out of service)."""
    S = np.zeros(net.n_line, dtype=complex)
    for k, ln in enumerate(net.lines):
        if not ln.in_service:
            continue
        ys, ysh = line_admittances(ln)
        f = net.bus_index(ln.from_bus)
        t = net.bus_index(ln.to_bus)
        i_from = ys * (V[f] - V[t]) + ysh * V[f]
        S[k] = V[f] * np.conj(i_from)
    return S


def extract_measurement(net, sol, t: float = 0.0) -> Measurement:
    """Build the controller output y = [v, flows, delta_theta] at time t.

    `sol` may be a PowerFlowSolution or a complex bus-voltage array.
    """
    if isinstance(sol, PowerFlowSolution):
        V = sol.v_complex
    else:
        V = np.asarray(sol, dtype=complex)
    if V.shape != (net.n_bus,):
        raise GridDataError("solution dimension does not match network")
    a, b = net.monitored_indices
    return Measurement(
        v=np.abs(V),
        flows=np.abs(line_flow_complex(net, V)),
        delta_theta=float(np.angle(V[a]) - np.angle(V[b])),
        timestamp=t,
        monitored_idx=(a, b),
    )


def complex_voltage_gap(m: Measurement) -> float:
    """|V_a - V_b| of the monitored pair, from magnitudes and the angle gap."""
    a, b = m.monitored_idx
    return float(abs(m.v[a] * np.exp(1j * m.delta_theta) - m.v[b]))


# ---------------------------------------------------------------------------
# Newton-Raphson power flow
# ---------------------------------------------------------------------------

def dSbus_dV(Y: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of complex bus injections w.r.t. angle and magnitude."""
    I = Y @ V
    dV = np.diag(V)
    dI = np.diag(I)
    Vnorm = V / np.abs(V)
    dS_dVa = 1j * dV @ np.conj(dI - Y @ dV)
    dS_dVm = dV @ np.conj(Y @ np.diag(Vnorm)) + np.conj(dI) @ np.diag(Vnorm)
    return dS_dVa, dS_dVm


def _bus_partitions(net: NetworkModel) -> tuple[int, np.ndarray, np.ndarray]:
    slack = net.slack_index
    pv, pq = [], []
    for i, b in enumerate(net.buses):
        if b.kind == PV:
            pv.append(i)
        elif b.kind == PQ:
            pq.append(i)
    return slack, np.array(pv, dtype=int), np.array(pq, dtype=int)


def specified_injections(
    net: NetworkModel, gen_p: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Scheduled net P and Q injection per bus (generation minus load)."""
    P = np.array([-b.load_p for b in net.buses], dtype=float)
    Q = np.array([-b.load_q for b in net.buses], dtype=float)
    for g, p in zip(net.generators, gen_p):
        P[net.bus_index(g.bus)] += p
    return P, Q


def solve_power_flow(
    net: NetworkModel,
    gen_p: Sequence[float],
    gen_v: Sequence[float],
    warm_start: Optional[PowerFlowSolution] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    ybus: Optional[np.ndarray] = None,
) -> PowerFlowSolution:
    """Newton-Raphson AC power flow with polar mismatch equations.

    gen_p / gen_v are ordered like net.generators. The slack generator's
    gen_p entry is ignored; its gen_v entry pins the slack magnitude.
    """
    if len(gen_p) != net.n_gen or len(gen_v) != net.n_gen:
        raise GridDataError("gen_p/gen_v must be dimensioned to the generators")
    n = net.n_bus
    Y = build_ybus(net) if ybus is None else ybus
    slack, pv, pq = _bus_partitions(net)

    vm = np.ones(n)
    va = np.zeros(n)
    if warm_start is not None:
        vm = warm_start.v.copy()
        va = warm_start.theta.copy()
    for g, v in zip(net.generators, gen_v):
        vm[net.bus_index(g.bus)] = v
    va -= va[slack]

    P_spec, Q_spec = specified_injections(net, gen_p)
    ang_idx = np.concatenate([pv, pq])
    mag_idx = pq

    residual = np.inf
    for it in range(max_iter + 1):
        V = vm * np.exp(1j * va)
        S = V * np.conj(Y @ V)
        dP = S.real - P_spec
        dQ = S.imag - Q_spec
        mism = np.concatenate([dP[ang_idx], dQ[mag_idx]])
        residual = float(np.max(np.abs(mism))) if mism.size else 0.0
        if residual <= tol:
            return PowerFlowSolution(
                v=vm, theta=va, p_inj=S.real, q_inj=S.imag,
                converged=True, residual=residual, iterations=it,
            )
        if it == max_iter:
            break
        dS_dVa, dS_dVm = dSbus_dV(Y, V)
        J11 = dS_dVa[np.ix_(ang_idx, ang_idx)].real
        J12 = dS_dVm[np.ix_(ang_idx, mag_idx)].real
        J21 = dS_dVa[np.ix_(mag_idx, ang_idx)].imag
        J22 = dS_dVm[np.ix_(mag_idx, mag_idx)].imag
        J = np.block([[J11, J12], [J21, J22]])
        try:
            dx = np.linalg.solve(J, -mism)
        except np.linalg.LinAlgError:
            raise PowerFlowDivergenceError(residual, it) from None
        va[ang_idx] += dx[: len(ang_idx)]
        vm[mag_idx] += dx[len(ang_idx):]
    raise PowerFlowDivergenceError(residual, max_iter)
