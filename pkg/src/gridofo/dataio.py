"""Grid and scenario file loading (JSON)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .controls import (
    AgcParams,
    ExciterParams,
    ExciterSet,
    GovernorParams,
    GovernorSet,
    PssParams,
    PssSet,
)
from .errors import GridDataError
from .machines import MachineParams, MachineSet
from .network import Bus, GenLocation, Line, NetworkModel
from .simulator import Event, SimConfig


@dataclass(frozen=True)
class GridData:
    """Everything the simulator needs: topology, machines and control blocks."""

    net: NetworkModel
    machines: MachineSet
    governors: GovernorSet
    exciters: ExciterSet
    pss: PssSet
    agc: AgcParams


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise GridDataError(f"{where}: missing field {key!r}")
    return obj[key]


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise GridDataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise GridDataError(f"{path}: {exc}") from None


def load_grid(path) -> GridData:
    doc = _load_json(path)
    try:
        buses = tuple(Bus(**b) for b in _require(doc, "buses", str(path)))
        lines = tuple(Line(**ln) for ln in _require(doc, "lines", str(path)))
        gens = tuple(GenLocation(**g) for g in _require(doc, "generators", str(path)))
        net = NetworkModel(
            buses=buses,
            lines=lines,
            generators=gens,
            base_power=float(_require(doc, "base_mva", str(path))),
            monitored_pair=tuple(_require(doc, "monitored_pair", str(path))),
            frequency=float(doc.get("frequency", 60.0)),
        )
        machines = MachineSet([MachineParams(**m) for m in _require(doc, "machines", str(path))])
        governors = GovernorSet([GovernorParams(**g) for g in _require(doc, "governors", str(path))])
        exciters = ExciterSet([ExciterParams(**e) for e in _require(doc, "exciters", str(path))])
        pss = PssSet([PssParams(**p) for p in _require(doc, "pss", str(path))])
        agc_doc = dict(_require(doc, "agc", str(path)))
        agc_doc["lam"] = agc_doc.pop("lambda")
        agc = AgcParams(beta=tuple(agc_doc.pop("beta")), **agc_doc)
    except TypeError as exc:
        raise GridDataError(f"{path}: {exc}") from None

    by_name = {m.name: m for m in machines.params}
    for g in net.generators:
        if g.machine not in by_name:
            raise GridDataError(f"{path}: generator references unknown machine {g.machine!r}")
    for name, block in (("governors", governors), ("exciters", exciters), ("pss", pss)):
        if block.n != net.n_gen:
            raise GridDataError(f"{path}: {name} must have one entry per generator")
    if len(agc.beta) != net.n_gen:
        raise GridDataError(f"{path}: agc.beta must have one entry per generator")
    return GridData(net, machines, governors, exciters, pss, agc)


@dataclass(frozen=True)
class ScenarioData:
    events: tuple[Event, ...]
    sim: SimConfig
    ofo: dict


def load_scenario(path) -> ScenarioData:
    doc = _load_json(path)
    sim_doc = _require(doc, "sim", str(path))
    sim = SimConfig(
        dt=float(sim_doc.get("dt", 5e-3)),
        t_end=float(_require(sim_doc, "t_end", "sim")),
        record_every=float(sim_doc.get("record_every", 0.1)),
    )
    events = []
    for e in doc.get("events", []):
        events.append(
            Event(
                time=float(_require(e, "time", "event")),
                kind=str(_require(e, "kind", "event")),
                line_id=e.get("line_id"),
                u=e.get("u"),
                guard_max_angle_deg=e.get("guard_max_angle_deg"),
            )
        )
    return ScenarioData(events=tuple(events), sim=sim, ofo=doc.get("ofo", {}))


def bundled_path(name: str) -> Path:
    """Path of a data file shipped inside the package (e.g. 'ieee39.json')."""
    return Path(resources.files("gridofo.data") / name)
