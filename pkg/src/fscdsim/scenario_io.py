"""Scenario files, topology construction and experiment orchestration.

A scenario is one JSON document (schema in ``scenarios/scenario.schema.json``)
with units in every field name.  Fibre constants, thresholds and the
calibrated controller processing delays all live in the scenario file.

Each experiment (an OTDR interrogation, an alert, a SoP ensemble) runs in its
own freshly built world, so experiments never perturb one another and the
output directory is a pure function of scenario + seed.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import jsonschema

from fscdsim.control_plane import (
    ControlLink,
    ControlPlane,
    LatencyRow,
    LayerNode,
    Policy,
    latency_csv,
    response_rows,
)
from fscdsim.errors import ConfigInvalid, FscdSimError, NoAlertInLog, ParseError, ValidationError
from fscdsim.fibre_plant import (
    DEFAULT_ATTENUATION_DB_KM,
    DEFAULT_CONNECTOR_IL_DB,
    DEFAULT_CONNECTOR_RL_DB,
    DEFAULT_END_RL_DB,
    DEFAULT_GROUP_INDEX,
    ConnectorEvent,
    FibrePath,
    FibreSegment,
)
from fscdsim.fscd import ActionRecord, Fscd, FscdConfig, FscdState, action_log_csv, obscuring_for_section
from fscdsim.otdr import (
    NOISELESS,
    Feature,
    GateSchedule,
    GateTechnology,
    OtdrConfig,
    OtdrTrace,
    apply_gate,
    detect_features,
    raw_trace,
    section_to_window,
)
from fscdsim.sim_core import Engine, RngStream, add_ticks, ns
from fscdsim.sop import (
    DisturbanceProfile,
    ScramblerConfig,
    SopTrace,
    detect_disturbance,
    distinguishability,
    event_labels,
    event_rotation_sequence,
    identity_sequence,
    overlaps_labels,
    propagate_sop,
    random_axes,
    scrambler_rotation_sequence,
)
from fscdsim.wire import Layer

FORMAT = "fscdsim-scenario/1"
SHIPPED = ("paper_fig5.scenario", "paper_fig1.scenario")


def _ns_out(ticks: int):
    return ticks // 1000 if ticks % 1000 == 0 else ticks / 1000


# ---------------------------------------------------------------------------
# typed scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FibreSpec:
    id: str
    segments: tuple[FibreSegment, ...]
    connectors: tuple[ConnectorEvent, ...] = ()
    end_return_loss: float = DEFAULT_END_RL_DB
    cores: int = 1

    def refs(self) -> dict[str, FibrePath]:
        if self.cores == 1:
            return {self.id: FibrePath(self.segments, self.connectors, self.end_return_loss)}
        return {f"{self.id}/{k}": FibrePath(self.segments, self.connectors, self.end_return_loss, core_id=k)
                for k in range(self.cores)}


@dataclass(frozen=True)
class WindowSpec:
    delay: Optional[int] = None
    duration: Optional[int] = None
    section: Optional[tuple[float, float]] = None

    def resolve(self, path: FibrePath, gate: GateTechnology, compensate: bool = True) -> tuple[int, int]:
        if self.section is None:
            return self.delay, self.duration
        z1, z2 = self.section
        if compensate:
            return obscuring_for_section(z1, z2, path, gate)
        return section_to_window(z1, z2, path)


@dataclass(frozen=True)
class SensingPathSpec:
    id: str
    fibres: tuple[str, ...]


@dataclass(frozen=True)
class FscdSpec:
    id: str
    path: str
    position: float
    region: str
    gate: str
    detector_threshold: float = -30.0
    decision_time: int = ns(50)
    scrambler: ScramblerConfig = field(default_factory=lambda: ScramblerConfig(activation_delay=ns(400_000)))
    initial_state: FscdState = FscdState.ALL_ENABLED


@dataclass(frozen=True)
class RegionSpec:
    id: str
    controller: str
    processing: int


@dataclass(frozen=True)
class ManagerSpec:
    id: str
    processing: int


@dataclass(frozen=True)
class PolicySpec:
    path: str
    sops_allowed: bool
    bls_allowed: bool
    at: int = 0
    sections: tuple[WindowSpec, ...] = ()
    interrogators: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class OtdrRunSpec:
    id: str
    fscd: str
    interrogator: str
    at: int
    gate: Optional[str] = None
    gate_attenuation: Optional[float] = None
    obscuring: Optional[tuple[WindowSpec, ...]] = None


@dataclass(frozen=True)
class AlertSpec:
    id: str
    fscd: str
    interrogator: str
    at: int
    power: float = 0.0
    horizon: int = ns(10_000_000)


@dataclass(frozen=True)
class SopSpec:
    paths: tuple[str, ...]
    start: int
    period: int
    samples: int
    trials: int
    threshold: float
    disturbance: DisturbanceProfile

    @property
    def end(self) -> int:
        return self.start + self.period * self.samples


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration: int
    fibres: tuple[FibreSpec, ...]
    sensing_paths: tuple[SensingPathSpec, ...]
    gates: tuple[GateTechnology, ...]
    fscds: tuple[FscdSpec, ...]
    regions: tuple[RegionSpec, ...]
    manager: ManagerSpec
    links: tuple[ControlLink, ...]
    policies: tuple[PolicySpec, ...] = ()
    otdr: OtdrConfig = OtdrConfig()
    otdr_runs: tuple[OtdrRunSpec, ...] = ()
    alerts: tuple[AlertSpec, ...] = ()
    sop: Optional[SopSpec] = None
    description: str = ""
    assumptions: tuple[str, ...] = ()

    # -- lookups ---------------------------------------------------------
    def fibre_refs(self) -> dict[str, FibrePath]:
        out: dict[str, FibrePath] = {}
        for f in self.fibres:
            out.update(f.refs())
        return out

    def path(self, path_id: str) -> FibrePath:
        spec = {p.id: p for p in self.sensing_paths}[path_id]
        refs = self.fibre_refs()
        fibre = refs[spec.fibres[0]]
        for ref in spec.fibres[1:]:
            fibre = fibre.concat(refs[ref])
        return fibre

    def fscd(self, fscd_id: str) -> FscdSpec:
        return {f.id: f for f in self.fscds}[fscd_id]

    def gate(self, name: str) -> GateTechnology:
        return {g.name: g for g in self.gates}[name]

    def otdr_path_for(self, fscd_id: str) -> FibrePath:
        """Fibre as seen by an OTDR launching through ``fscd_id`` (placed at a path end)."""
        spec = self.fscd(fscd_id)
        path = self.path(spec.path)
        return path if spec.position == 0 else path.reversed()


# ---------------------------------------------------------------------------
# parsing / serialisation
# ---------------------------------------------------------------------------

_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("fscdsim.scenarios").joinpath("scenario.schema.json").read_text("utf-8")
        _SCHEMA = json.loads(text)
    return _SCHEMA


def shipped_scenario(name: str) -> Path:
    return Path(str(resources.files("fscdsim.scenarios").joinpath(name)))


def resolve_scenario_path(name: Union[str, Path]) -> Path:
    p = Path(name)
    if p.exists():
        return p
    shipped = shipped_scenario(p.name)
    if shipped.exists():
        return shipped
    raise ParseError(f"scenario file {name} not found")


def _window_from(d: dict) -> WindowSpec:
    if "section_m" in d:
        a, b = d["section_m"]
        return WindowSpec(section=(float(a), float(b)))
    return WindowSpec(ns(d["delay_ns"]), ns(d["duration_ns"]))


def _window_to(w: WindowSpec) -> dict:
    if w.section is not None:
        return {"section_m": list(w.section)}
    return {"delay_ns": _ns_out(w.delay), "duration_ns": _ns_out(w.duration)}


def _wrap(where: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigInvalid as exc:
        raise ValidationError(f"{where}: {exc}") from None


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"{where}: {exc.message}") from None

    fibres = []
    for i, f in enumerate(doc["fibres"]):
        where = f"fibres[{i}]"
        segs = tuple(_wrap(where, FibreSegment, s["length_m"],
                           s.get("attenuation_db_per_km", DEFAULT_ATTENUATION_DB_KM),
                           s.get("group_index", DEFAULT_GROUP_INDEX)) for s in f["segments"])
        conns = tuple(_wrap(where, ConnectorEvent, c["position_m"],
                            c.get("insertion_loss_db", DEFAULT_CONNECTOR_IL_DB),
                            c.get("return_loss_db", DEFAULT_CONNECTOR_RL_DB)) for c in f.get("connectors", []))
        spec = FibreSpec(f["id"], segs, conns, f.get("end_return_loss_db", DEFAULT_END_RL_DB), f.get("cores", 1))
        _wrap(where, spec.refs)
        fibres.append(spec)

    gates = tuple(_wrap(f"gate_technologies[{i}]", GateTechnology, g["id"], ns(g["response_ns"]),
                        g["max_attenuation_db"], g.get("continuous", False))
                  for i, g in enumerate(doc["gate_technologies"]))

    fscds = []
    for i, f in enumerate(doc["fscds"]):
        s = f.get("scrambler", {})
        scr = _wrap(f"fscds[{i}].scrambler", ScramblerConfig, s.get("rate_hz", 10_000.0),
                    ns(s.get("activation_delay_ns", 400_000)), False, s.get("max_rate_hz", 100_000.0))
        fscds.append(FscdSpec(f["id"], f["path"], float(f["position_m"]), f["region"], f["gate"],
                              f.get("detector_threshold_dbm", -30.0), ns(f.get("decision_ns", 50)), scr,
                              FscdState[f.get("initial_state", "ALL_ENABLED")]))

    o = doc.get("otdr", {})
    avg = o.get("num_averages", 4096)
    otdr = OtdrConfig(o.get("wavelength_nm", 1550.0), ns(o.get("pulse_width_ns", 100)),
                      ns(o.get("pulse_period_ns", 200_000)), o.get("launch_power_dbm", 10.0),
                      NOISELESS if avg == "inf" else avg, o.get("bin_size_m", 10.0),
                      o.get("noise_floor_dbm", -70.0), o.get("saturation_dbm", -32.0),
                      o.get("rayleigh_db_per_km", 0.15), o.get("capture_fraction", 0.02835))
    _wrap("otdr", otdr.validate)

    sop = None
    if "sop" in doc:
        s = doc["sop"]
        d = s["disturbance"]
        profile = _wrap("sop.disturbance", DisturbanceProfile, ns(d["start_ns"]), ns(d["end_ns"]),
                        tuple(d["band_hz"]), d["peak_rate_rad_s"])
        sop = SopSpec(tuple(s["paths"]), ns(s["start_ns"]), ns(s["sampling_period_ns"]), s["samples"],
                      s["trials"], s["threshold_rad_s"], profile)

    scn = Scenario(
        name=doc["name"],
        seed=doc["seed"],
        duration=ns(doc["duration_ns"]),
        fibres=tuple(fibres),
        sensing_paths=tuple(SensingPathSpec(p["id"], tuple(p["fibres"])) for p in doc["sensing_paths"]),
        gates=gates,
        fscds=tuple(fscds),
        regions=tuple(RegionSpec(r["id"], r["controller"], ns(r["processing_ns"])) for r in doc["regions"]),
        manager=ManagerSpec(doc["manager"]["id"], ns(doc["manager"]["processing_ns"])),
        links=tuple(_wrap(f"control_links[{i}]", ControlLink, lk["a"], lk["b"], lk["length_m"],
                          ns(lk.get("processing_ns", 0)), lk.get("group_index", DEFAULT_GROUP_INDEX))
                    for i, lk in enumerate(doc["control_links"])),
        policies=tuple(PolicySpec(p["path"], p["sops_allowed"], p["bls_allowed"], ns(p.get("at_ns", 0)),
                                  tuple(_window_from(w) for w in p.get("obscured_sections", [])),
                                  None if p.get("interrogators") is None else tuple(p["interrogators"]))
                       for p in doc.get("policies", [])),
        otdr=otdr,
        otdr_runs=tuple(OtdrRunSpec(r["id"], r["fscd"], r["interrogator"], ns(r["at_ns"]), r.get("gate"),
                                    r.get("gate_attenuation_db"),
                                    None if "obscuring" not in r else tuple(_window_from(w) for w in r["obscuring"]))
                        for r in doc.get("otdr_runs", [])),
        alerts=tuple(AlertSpec(a["id"], a["fscd"], a["interrogator"], ns(a["at_ns"]), a.get("power_dbm", 0.0),
                               ns(a.get("horizon_ns", 10_000_000))) for a in doc.get("alerts", [])),
        sop=sop,
        description=doc.get("description", ""),
        assumptions=tuple(doc.get("assumptions", [])),
    )
    validate_scenario(scn)
    return scn


def scenario_to_dict(scn: Scenario) -> dict:
    def fibre(f: FibreSpec) -> dict:
        d = {"id": f.id, "cores": f.cores,
             "segments": [{"length_m": s.length, "attenuation_db_per_km": s.attenuation,
                           "group_index": s.group_index} for s in f.segments],
             "connectors": [{"position_m": c.position, "insertion_loss_db": c.insertion_loss,
                             "return_loss_db": c.return_loss} for c in f.connectors],
             "end_return_loss_db": f.end_return_loss}
        return d

    def fscd(f: FscdSpec) -> dict:
        return {"id": f.id, "path": f.path, "position_m": f.position, "region": f.region, "gate": f.gate,
                "detector_threshold_dbm": f.detector_threshold, "decision_ns": _ns_out(f.decision_time),
                "scrambler": {"rate_hz": f.scrambler.scrambling_rate,
                              "activation_delay_ns": _ns_out(f.scrambler.activation_delay),
                              "max_rate_hz": f.scrambler.max_rate},
                "initial_state": f.initial_state.name}

    o = scn.otdr
    doc = {
        "format": FORMAT,
        "name": scn.name,
        "description": scn.description,
        "assumptions": list(scn.assumptions),
        "seed": scn.seed,
        "duration_ns": _ns_out(scn.duration),
        "fibres": [fibre(f) for f in scn.fibres],
        "sensing_paths": [{"id": p.id, "fibres": list(p.fibres)} for p in scn.sensing_paths],
        "gate_technologies": [{"id": g.name, "response_ns": _ns_out(g.response_time),
                               "max_attenuation_db": g.max_attenuation, "continuous": g.continuous}
                              for g in scn.gates],
        "fscds": [fscd(f) for f in scn.fscds],
        "regions": [{"id": r.id, "controller": r.controller, "processing_ns": _ns_out(r.processing)}
                    for r in scn.regions],
        "manager": {"id": scn.manager.id, "processing_ns": _ns_out(scn.manager.processing)},
        "control_links": [{"a": lk.a, "b": lk.b, "length_m": lk.fibre_length,
                           "processing_ns": _ns_out(lk.processing_delay), "group_index": lk.group_index}
                          for lk in scn.links],
        "policies": [{"path": p.path, "at_ns": _ns_out(p.at), "sops_allowed": p.sops_allowed,
                      "bls_allowed": p.bls_allowed, "obscured_sections": [_window_to(w) for w in p.sections],
                      "interrogators": None if p.interrogators is None else list(p.interrogators)}
                     for p in scn.policies],
        "otdr": {"wavelength_nm": o.wavelength, "pulse_width_ns": _ns_out(o.pulse_width),
                 "pulse_period_ns": _ns_out(o.pulse_period), "launch_power_dbm": o.launch_power,
                 "num_averages": "inf" if o.noiseless else o.num_averages, "bin_size_m": o.bin_size,
                 "noise_floor_dbm": o.noise_floor, "saturation_dbm": o.saturation,
                 "rayleigh_db_per_km": o.rayleigh_coefficient, "capture_fraction": o.capture_fraction},
        "otdr_runs": [],
        "alerts": [{"id": a.id, "fscd": a.fscd, "interrogator": a.interrogator, "at_ns": _ns_out(a.at),
                    "power_dbm": a.power, "horizon_ns": _ns_out(a.horizon)} for a in scn.alerts],
    }
    for r in scn.otdr_runs:
        d = {"id": r.id, "fscd": r.fscd, "interrogator": r.interrogator, "at_ns": _ns_out(r.at)}
        if r.gate is not None:
            d["gate"] = r.gate
        if r.gate_attenuation is not None:
            d["gate_attenuation_db"] = r.gate_attenuation
        if r.obscuring is not None:
            d["obscuring"] = [_window_to(w) for w in r.obscuring]
        doc["otdr_runs"].append(d)
    if scn.sop is not None:
        s = scn.sop
        p = s.disturbance
        doc["sop"] = {"paths": list(s.paths), "start_ns": _ns_out(s.start),
                      "sampling_period_ns": _ns_out(s.period), "samples": s.samples, "trials": s.trials,
                      "threshold_rad_s": s.threshold,
                      "disturbance": {"start_ns": _ns_out(p.start), "end_ns": _ns_out(p.end),
                                      "band_hz": list(p.band), "peak_rate_rad_s": p.peak_rate}}
    return doc


def serialize_scenario(scn: Scenario) -> str:
    return json.dumps(scenario_to_dict(scn), indent=2) + "\n"


def parse_scenario_text(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError("a scenario must be a JSON object")
    return scenario_from_dict(doc)


def parse_scenario(file: Union[str, Path]) -> Scenario:
    path = resolve_scenario_path(file)
    try:
        return parse_scenario_text(path.read_text("utf-8"))
    except (ParseError, ValidationError) as exc:
        raise type(exc)(f"{path.name}: {exc}") from None


def validate_scenario(scn: Scenario) -> None:
    def fail(msg):
        raise ValidationError(msg)

    def unique(kind, ids):
        seen = set()
        for i in ids:
            if i in seen:
                fail(f"duplicate {kind} id {i!r}")
            seen.add(i)

    unique("fibre", [f.id for f in scn.fibres])
    unique("sensing path", [p.id for p in scn.sensing_paths])
    unique("gate technology", [g.name for g in scn.gates])
    unique("FSCD", [f.id for f in scn.fscds])
    unique("region", [r.id for r in scn.regions])
    unique("control node", [scn.manager.id, *(r.controller for r in scn.regions), *(f.id for f in scn.fscds)])

    refs = scn.fibre_refs()
    paths = {p.id for p in scn.sensing_paths}
    for p in scn.sensing_paths:
        for ref in p.fibres:
            if ref not in refs:
                fail(f"sensing path {p.id!r} references undefined fibre {ref!r}")
    gates = {g.name for g in scn.gates}
    regions = {r.id for r in scn.regions}
    fscds = {f.id: f for f in scn.fscds}
    for f in scn.fscds:
        if f.path not in paths:
            fail(f"FSCD {f.id!r} placed on undefined sensing path {f.path!r}")
        if f.region not in regions:
            fail(f"FSCD {f.id!r} assigned to undefined region {f.region!r}")
        if f.gate not in gates:
            fail(f"FSCD {f.id!r} uses undefined gate technology {f.gate!r}")
        if f.position > scn.path(f.path).length:
            fail(f"FSCD {f.id!r} sits beyond the end of {f.path!r}")
        if f.decision_time > ns(50):
            fail(f"FSCD {f.id!r}: decision time above the 50 ns agent bound")

    nodes = {scn.manager.id, *(r.controller for r in scn.regions), *fscds}
    for lk in scn.links:
        for end in (lk.a, lk.b):
            if end not in nodes:
                fail(f"control link endpoint {end!r} is not a defined control node")

    def check_windows(where, windows, path):
        spans = []
        for w in windows:
            if w.section is not None:
                z1, z2 = w.section
                if not 0 <= z1 < z2 <= path.length:
                    fail(f"{where}: section {w.section} outside the fibre or empty")
                spans.append(section_to_window(z1, z2, path))
            else:
                spans.append((w.delay, w.duration))
        spans.sort()
        for (d0, w0), (d1, _) in zip(spans, spans[1:]):
            if d1 < d0 + w0:
                fail(f"{where}: overlapping obscuring windows")

    last_activity = 0
    for p in scn.policies:
        if p.path not in paths:
            fail(f"policy for undefined sensing path {p.path!r}")
        check_windows(f"policy {p.path}", p.sections, scn.path(p.path))
        last_activity = max(last_activity, p.at)
    for r in scn.otdr_runs:
        if r.fscd not in fscds:
            fail(f"OTDR run {r.id!r} references undefined FSCD {r.fscd!r}")
        spec = fscds[r.fscd]
        length = scn.path(spec.path).length
        if spec.position not in (0.0, length):
            fail(f"OTDR run {r.id!r}: FSCD {r.fscd!r} must sit at an end of its path")
        if r.gate is not None and r.gate not in gates:
            fail(f"OTDR run {r.id!r} uses undefined gate technology {r.gate!r}")
        if r.obscuring:
            check_windows(f"OTDR run {r.id}", r.obscuring, scn.otdr_path_for(r.fscd))
        if scn.otdr.pulse_period <= 0 or r.at + scn.otdr.pulse_period > scn.duration:
            fail(f"OTDR run {r.id!r} does not finish within the scenario duration")
    for a in scn.alerts:
        if a.fscd not in fscds:
            fail(f"alert {a.id!r} references undefined FSCD {a.fscd!r}")
        last_activity = max(last_activity, a.at + a.horizon)
    if scn.sop is not None:
        for p in scn.sop.paths:
            if p not in paths:
                fail(f"SoP experiment on undefined path {p!r}")
        last_activity = max(last_activity, scn.sop.end)
    unique("OTDR run", [r.id for r in scn.otdr_runs])
    unique("alert", [a.id for a in scn.alerts])
    if last_activity > scn.duration:
        fail(f"scheduled activity runs to {last_activity} ps, past duration {scn.duration} ps")


# ---------------------------------------------------------------------------
# world construction
# ---------------------------------------------------------------------------

@dataclass
class World:
    scenario: Scenario
    engine: Engine
    plane: ControlPlane
    fscds: dict[str, Fscd]
    records: list[ActionRecord]


def build_world(scn: Scenario, seed: int, gate_overrides: Optional[dict[str, str]] = None) -> World:
    gate_overrides = gate_overrides or {}
    engine = Engine(seed)
    records: list[ActionRecord] = []
    fscds = {}
    for f in scn.fscds:
        cfg = FscdConfig(gate=scn.gate(gate_overrides.get(f.id, f.gate)), scrambler=f.scrambler,
                         detector_threshold=f.detector_threshold, agent_decision_time=f.decision_time)
        fscds[f.id] = Fscd(f.id, cfg, engine, f.initial_state, sink=records)
    msm = LayerNode(Layer.MSM, scn.manager.id, tuple(r.controller for r in scn.regions), scn.manager.processing)
    controllers = [LayerNode(Layer.SRC, r.controller, tuple(f.id for f in scn.fscds if f.region == r.id),
                             r.processing) for r in scn.regions]
    members = {p.id: [f.id for f in scn.fscds if f.path == p.id] for p in scn.sensing_paths}
    sensed = {p.id for p in scn.sensing_paths} | set(scn.fibre_refs())
    plane = ControlPlane(engine, msm, controllers, fscds, scn.links, members, sensed, sink=records)

    for p in scn.policies:
        policy = _resolve_policy(scn, p)
        engine.schedule(p.at, "policy_submit", scn.manager.id, p.path,
                        lambda e, policy=policy: plane.submit_policy(policy, e.time))
    return World(scn, engine, plane, fscds, records)


def _resolve_policy(scn: Scenario, p: PolicySpec) -> Policy:
    windows = []
    if p.sections:
        heads = [f for f in scn.fscds if f.path == p.path and f.position == 0]
        if not heads and any(w.section is not None for w in p.sections):
            raise ValidationError(f"policy {p.path}: distance sections need an FSCD at the path start")
        path = scn.path(p.path)
        gate = scn.gate(heads[0].gate) if heads else None
        windows = sorted(w.resolve(path, gate) for w in p.sections)
    return Policy(p.path, p.sops_allowed, p.bls_allowed, tuple(windows), p.interrogators)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class OtdrResult:
    run: OtdrRunSpec
    raw: OtdrTrace
    trace: OtdrTrace
    schedule: GateSchedule
    predicted: GateSchedule
    features: list[Feature]
    world: World


def run_otdr(scn: Scenario, run: Union[OtdrRunSpec, str, int], seed: Optional[int] = None) -> OtdrResult:
    if isinstance(run, int):
        run = scn.otdr_runs[run]
    elif isinstance(run, str):
        run = {r.id: r for r in scn.otdr_runs}[run]
    seed = scn.seed if seed is None else seed
    overrides = {run.fscd: run.gate} if run.gate else {}
    world = build_world(scn, seed, overrides)
    fscd = world.fscds[run.fscd]
    path = scn.otdr_path_for(run.fscd)
    if run.gate_attenuation is not None:
        fscd.set_gate_attenuation(run.gate_attenuation, 0)
    world.engine.run_until(run.at)
    if run.obscuring is not None:
        fscd.obscuring = tuple(sorted(w.resolve(path, fscd.config.gate) for w in run.obscuring))
    authorized = fscd.is_authorized(run.interrogator)
    detected = scn.otdr.launch_power >= fscd.config.detector_threshold
    predicted = fscd.gate_schedule_for_pulse(run.at, authorized, detected)
    world.plane.pulse(run.fscd, scn.otdr.launch_power, run.at, run.interrogator)
    world.engine.run_until(add_ticks(run.at, scn.otdr.pulse_period))
    schedule = fscd.observed_gate_schedule(run.at, scn.otdr.pulse_period)
    rng = None if scn.otdr.noiseless else RngStream(seed, f"otdr/{run.id}").generator()
    raw = raw_trace(scn.otdr, path, rng)
    trace = apply_gate(raw, schedule)
    return OtdrResult(run, raw, trace, schedule, predicted, detect_features(trace), world)


@dataclass
class AlertResult:
    alert: AlertSpec
    rows: list[LatencyRow]
    world: World


def run_alert(scn: Scenario, alert: Union[AlertSpec, str, int, None] = None,
              seed: Optional[int] = None) -> AlertResult:
    if alert is None:
        if not scn.alerts:
            raise NoAlertInLog(f"scenario {scn.name} defines no alerts")
        alert = scn.alerts[0]
    elif isinstance(alert, int):
        alert = scn.alerts[alert]
    elif isinstance(alert, str):
        alert = {a.id: a for a in scn.alerts}[alert]
    world = build_world(scn, scn.seed if seed is None else seed)
    world.engine.run_until(alert.at)
    world.plane.pulse(alert.fscd, alert.power, alert.at, alert.interrogator)
    world.engine.run_until(add_ticks(alert.at, alert.horizon))
    return AlertResult(alert, response_rows(world.records), world)


@dataclass
class SopEnsemble:
    path: str
    scrambled: bool
    event_traces: list[SopTrace]
    static_traces: list[SopTrace]
    detected: int  # event traces with a flagged interval overlapping the event
    false_intervals_static: int
    false_intervals_event: int
    auc: float

    def summary(self) -> dict:
        return {"path": self.path, "scrambled": self.scrambled, "trials": len(self.event_traces),
                "detected": self.detected, "false_intervals_static": self.false_intervals_static,
                "false_intervals_event": self.false_intervals_event,
                "auc": None if math.isnan(self.auc) else round(self.auc, 6)}


def path_scrambler(world: World, path_id: str, t: int) -> Optional[ScramblerConfig]:
    """Scrambler acting on ``path_id`` at time ``t``, if any FSCD on it is scrambling."""
    for f in world.scenario.fscds:
        if f.path == path_id and world.fscds[f.id].scrambler_at(t):
            return replace(f.scrambler, enabled=True, activation_delay=0)
    return None


def run_sop(scn: Scenario, path_id: str, seed: Optional[int] = None, trials: Optional[int] = None) -> SopEnsemble:
    spec = scn.sop
    if spec is None:
        raise ValidationError(f"scenario {scn.name} has no SoP experiment")
    seed = scn.seed if seed is None else seed
    world = build_world(scn, seed)
    world.engine.run_until(spec.start)
    scrambler = path_scrambler(world, path_id, spec.start)
    n, dt = spec.samples, spec.period
    labels = event_labels(spec.disturbance, dt, n)
    static = identity_sequence(n)
    events, quiet = [], []
    detected = fp_static = fp_event = 0
    for k in range(spec.trials if trials is None else trials):
        rng = RngStream(seed, f"sop/{path_id}/{k}").generator()
        s0 = random_axes(rng, 1)[0]
        evt = event_rotation_sequence(spec.disturbance, dt, n, rng)
        if scrambler is not None:
            scr_a = scrambler_rotation_sequence(scrambler, dt, n, rng)
            scr_b = scrambler_rotation_sequence(scrambler, dt, n, rng)
        else:
            scr_a = scr_b = static
        ev = propagate_sop(s0, evt, scr_a, dt, labels)
        st = propagate_sop(s0, static, scr_b, dt)
        events.append(ev)
        quiet.append(st)
        hits = detect_disturbance(ev, spec.threshold)
        if any(overlaps_labels(iv, labels) for iv in hits):
            detected += 1
        fp_event += sum(not overlaps_labels(iv, labels) for iv in hits)
        fp_static += len(detect_disturbance(st, spec.threshold))
    auc = distinguishability(events, quiet) if len(events) >= 20 else math.nan
    return SopEnsemble(path_id, scrambler is not None, events, quiet, detected, fp_static, fp_event, auc)


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    seed: int
    files: list[tuple[str, str]] = field(default_factory=list)  # (relative path, sha256)
    latency: list[LatencyRow] = field(default_factory=list)
    features: dict[str, list[Feature]] = field(default_factory=dict)
    sop: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "files": [{"path": p, "sha256": h} for p, h in self.files],
            "latency": [{"layer": r.layer, "trigger_ps": r.trigger, "completed_ps": r.completed,
                         "response_ps": r.response} for r in self.latency],
            "features": {k: [{"position_m": f.position, "kind": f.kind, "magnitude_db": round(f.magnitude, 6)}
                             for f in v] for k, v in self.features.items()},
            "sop": self.sop,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def gate_schedule_csv(schedule: GateSchedule) -> str:
    lines = ["start_ps,attenuation_db"] + [f"{t},{a:.6f}" for t, a in schedule.steps]
    return "\n".join(lines) + "\n"


def run_scenario(scn: Scenario, out_dir: Union[str, Path], seed: Optional[int] = None) -> RunReport:
    seed = scn.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(scn.name, seed)

    def write(rel: str, text: str) -> None:
        target = out / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        report.files.append((rel, hashlib.sha256(text.encode("utf-8")).hexdigest()))

    base = build_world(scn, seed)
    base.engine.run_until(scn.duration)
    write("actions.csv", action_log_csv(base.records))
    write("events.tsv", base.engine.log_text())

    for run in scn.otdr_runs:
        res = run_otdr(scn, run, seed)
        write(f"otdr/{run.id}.csv", res.trace.to_csv())
        write(f"otdr/{run.id}_gate.csv", gate_schedule_csv(res.schedule))
        write(f"otdr/{run.id}_actions.csv", action_log_csv(res.world.records))
        report.features[run.id] = res.features

    for i, alert in enumerate(scn.alerts):
        res = run_alert(scn, alert, seed)
        write(f"alerts/{alert.id}_latency.csv", latency_csv(res.rows))
        write(f"alerts/{alert.id}_actions.csv", action_log_csv(res.world.records))
        if i == 0:
            write("latency.csv", latency_csv(res.rows))
            report.latency = res.rows

    if scn.sop is not None:
        for path_id in scn.sop.paths:
            ens = run_sop(scn, path_id, seed)
            write(f"sop/{path_id}_event.csv", ens.event_traces[0].to_csv())
            write(f"sop/{path_id}_static.csv", ens.static_traces[0].to_csv())
            report.sop[path_id] = ens.summary()

    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    return report


__all__ = [
    "Scenario", "RunReport", "World", "parse_scenario", "parse_scenario_text", "serialize_scenario",
    "scenario_from_dict", "scenario_to_dict", "validate_scenario", "build_world", "run_scenario",
    "run_otdr", "run_alert", "run_sop", "shipped_scenario", "resolve_scenario_path", "FscdSimError",
]
