"""Declarative scenario documents: parsing, validation, canonical dump and
assembly into a runnable :class:`~chronosim.world.World`.

A scenario is one JSON object with the sections ``nodes``, ``networks``,
``plants``, ``links``, ``batteries`` and ``outputs`` plus ``name``,
``duration`` and ``root_seed``. See README.md for the full schema.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import DuplicateCanId, MissingPosition, ParseError, ValidationError
from .kernel import (Battery, ClockModel, EventTriggered, ExecTimeModel, NodeSpec, Periodic, Policy,
                     TaskSpec)
from .net.common import DelayModel
from .net.wired import NetworkConfig
from .net.wireless import UltrasoundConfig, WirelessConfig
from .plant import ControlLaw, LtiPlant, Reference, dc_servo_plant, grid_aligned
from .world import IoAction, World

ACTION_TYPES = ("none", "send", "sense", "control", "actuate")
DEFAULT_FRAME_BITS = 400


@dataclass
class PlantSpec:
    name: str
    model: str = "dc_servo"
    a: float = 1.0
    b: float = 1000.0
    A: tuple | None = None
    B: tuple | None = None
    C: tuple | None = None
    D: tuple | None = None
    x0: tuple = (0.0, 0.0)
    h_int: float | None = None
    reference: Reference = field(default_factory=Reference)
    response_period: float | None = None

    def build(self) -> LtiPlant:
        if self.model == "dc_servo":
            return dc_servo_plant(self.a, self.b, self.x0)
        return LtiPlant(self.A, self.B, self.C, self.D, list(self.x0))


@dataclass
class LinkSpec:
    plant: str
    direction: str
    node: str
    task: str
    port: int = 0
    delay: DelayModel | None = None


@dataclass
class BatterySpec:
    id: str
    capacity: float


@dataclass
class Outputs:
    schedule: bool = True
    network: bool = True
    response: bool = True
    energy: bool = True
    events: bool = True
    plots: bool = False


@dataclass
class Scenario:
    name: str
    duration: float
    root_seed: int = 0
    nodes: list = field(default_factory=list)
    networks: list = field(default_factory=list)
    plants: list = field(default_factory=list)
    links: list = field(default_factory=list)
    batteries: list = field(default_factory=list)
    outputs: Outputs = field(default_factory=Outputs)

    def node(self, name):
        return next((n for n in self.nodes if n.name == name), None)

    def network(self, number):
        return next((n for n in self.networks if n.network_number == number), None)

    def plant(self, name):
        return next((p for p in self.plants if p.name == name), None)


# -- dict -> objects --------------------------------------------------------

def _req(d, key, ctx):
    if key not in d:
        raise ValidationError("MissingField", f"{ctx}: missing {key!r}")
    return d[key]


def _exec_time(d, ctx):
    kind = d.get("type", "constant")
    if kind == "constant":
        return ExecTimeModel.constant(float(_req(d, "c", ctx)))
    if kind == "uniform":
        return ExecTimeModel.uniform(float(_req(d, "lo", ctx)), float(_req(d, "hi", ctx)))
    raise ValidationError("BadExecTime", f"{ctx}: unknown exec_time type {kind!r}")


def _activation(d, ctx):
    kind = d.get("type", "periodic")
    if kind == "periodic":
        return Periodic(float(_req(d, "period", ctx)), float(d.get("first_release", 0.0)))
    if kind in ("event", "event_triggered"):
        trig = d.get("trigger", "message")
        if trig not in ("message", "timer"):
            raise ValidationError("BadTrigger", f"{ctx}: trigger must be message or timer")
        return EventTriggered(trig, tuple(float(v) for v in d.get("at", ())))
    raise ValidationError("BadActivation", f"{ctx}: unknown activation type {kind!r}")


def _task(d, ctx):
    name = _req(d, "name", ctx)
    ctx = f"{ctx} task {name}"
    action = d.get("action")
    if action is not None:
        action = dict(action)
        if action.get("type", "none") not in ACTION_TYPES:
            raise ValidationError("BadAction", f"{ctx}: action type must be one of {ACTION_TYPES}")
        action.setdefault("type", "none")
    return TaskSpec(
        name=name,
        activation=_activation(_req(d, "activation", ctx), ctx),
        rel_deadline=float(_req(d, "rel_deadline", ctx)),
        exec_time=_exec_time(_req(d, "exec_time", ctx), ctx),
        fixed_priority=int(d.get("priority", 1)),
        action=action,
        params=dict(d.get("params", {})),
    )


def _node(d):
    name = _req(d, "name", "node")
    ctx = f"node {name}"
    clock = d.get("clock", {})
    pos = d.get("position")
    return NodeSpec(
        name=name,
        node_number=int(_req(d, "node_number", ctx)),
        tasks=[_task(t, ctx) for t in d.get("tasks", [])],
        policy=Policy.parse(d.get("policy", "FP")),
        clock=ClockModel(float(clock.get("drift", 0.0)), float(clock.get("offset", 0.0))),
        context_switch=float(d.get("context_switch", 0.0)),
        battery=d.get("battery"),
        msg_handlers={int(k): v for k, v in d.get("msg_handlers", {}).items()},
        position=None if pos is None else (float(pos[0]), float(pos[1])),
        networks=tuple(sorted(int(n) for n in d.get("networks", ()))),
    )


_WIRED_KEYS = {f.name for f in fields(NetworkConfig)}
_WIRELESS_KEYS = {f.name for f in fields(WirelessConfig)}
_ULTRA_KEYS = {f.name for f in fields(UltrasoundConfig)}


def _network(d):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind is None:
        t = str(d.get("net_type", "")).upper()
        kind = "wireless" if t in ("WLAN", "ZIGBEE") else "ultrasound" if t == "ULTRASOUND" else "wired"
    keys = {"wired": _WIRED_KEYS, "wireless": _WIRELESS_KEYS, "ultrasound": _ULTRA_KEYS}.get(kind)
    if keys is None:
        raise ValidationError("UnknownNetworkType", f"network kind {kind!r}")
    if kind == "ultrasound":
        d.pop("net_type", None)
    extra = set(d) - keys
    if extra:
        raise ValidationError("UnknownField", f"network {d.get('network_number')}: unknown fields {sorted(extra)}")
    try:
        if kind == "wired":
            return NetworkConfig(**d)
        if kind == "wireless":
            return WirelessConfig(**d)
        return UltrasoundConfig(**d)
    except TypeError as exc:
        raise ValidationError("MissingField", f"network: {exc}") from None


def _tuple2(m):
    return None if m is None else tuple(tuple(float(v) for v in row) for row in m)


def _plant(d):
    name = _req(d, "name", "plant")
    ref = d.get("reference", {})
    model = d.get("model", "dc_servo")
    if model not in ("dc_servo", "lti"):
        raise ValidationError("UnknownPlantModel", f"plant {name}: model {model!r}")
    spec = PlantSpec(
        name=name,
        model=model,
        a=float(d.get("a", 1.0)),
        b=float(d.get("b", 1000.0)),
        A=_tuple2(d.get("A")),
        B=_tuple2(d.get("B")),
        C=_tuple2(d.get("C")),
        D=_tuple2(d.get("D")),
        x0=tuple(float(v) for v in d.get("x0", (0.0, 0.0))),
        h_int=None if d.get("h_int") is None else float(d["h_int"]),
        reference=Reference(ref.get("type", "step"), float(ref.get("amplitude", 1.0)), float(ref.get("period", 1.0))),
        response_period=None if d.get("response_period") is None else float(d["response_period"]),
    )
    if spec.reference.kind not in ("step", "square"):
        raise ValidationError("UnknownReference", f"plant {name}: reference {spec.reference.kind!r}")
    if model == "lti" and any(m is None for m in (spec.A, spec.B, spec.C, spec.D)):
        raise ValidationError("MissingField", f"plant {name}: lti model needs A, B, C, D")
    spec.build()
    return spec


def _link(d):
    ctx = "link"
    direction = _req(d, "direction", ctx)
    if direction not in ("sample", "actuate"):
        raise ValidationError("BadLink", f"link direction must be sample or actuate, got {direction!r}")
    delay = d.get("delay")
    return LinkSpec(
        plant=_req(d, "plant", ctx),
        direction=direction,
        node=_req(d, "node", ctx),
        task=_req(d, "task", ctx),
        port=int(d.get("port", 0)),
        delay=None if delay is None else DelayModel.from_dict(delay),
    )


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ValidationError("NotAnObject", "scenario must be a JSON object")
    out = d.get("outputs", {})
    unknown = set(out) - {f.name for f in fields(Outputs)}
    if unknown:
        raise ValidationError("UnknownField", f"outputs: unknown fields {sorted(unknown)}")
    s = Scenario(
        name=str(d.get("name", "scenario")),
        duration=float(_req(d, "duration", "scenario")),
        root_seed=int(d.get("root_seed", 0)),
        nodes=[_node(n) for n in d.get("nodes", [])],
        networks=[_network(n) for n in d.get("networks", [])],
        plants=[_plant(p) for p in d.get("plants", [])],
        links=[_link(k) for k in d.get("links", [])],
        batteries=[BatterySpec(str(_req(b, "id", "battery")), float(_req(b, "capacity", "battery")))
                   for b in d.get("batteries", [])],
        outputs=Outputs(**{k: bool(v) for k, v in out.items()}),
    )
    validate(s)
    return s


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return loads_scenario(text)


def loads_scenario(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return scenario_from_dict(d)


# -- validation -------------------------------------------------------------

def effective_h_int(s: Scenario, p: PlantSpec) -> float:
    if p.h_int is not None:
        return p.h_int
    periods = [_sample_period(s, k) for k in s.links if k.plant == p.name and k.direction == "sample"]
    periods = [x for x in periods if x is not None]
    if not periods and p.response_period:
        periods.append(p.response_period)
    return min(periods) / 100 if periods else 1e-3


def _sample_period(s, link):
    node = s.node(link.node)
    task = node.task(link.task) if node else None
    if task is None or not task.periodic:
        return None
    return task.period


def validate(s: Scenario) -> None:
    if not s.duration >= 0:
        raise ValidationError("BadDuration", "duration must be >= 0")
    nums = [n.network_number for n in s.networks]
    dup = {x for x in nums if nums.count(x) > 1}
    if dup:
        raise ValidationError("DuplicateNetworkNumber", f"network number(s) {sorted(dup)} used more than once")
    names = [n.name for n in s.nodes]
    if len(set(names)) != len(names):
        raise ValidationError("DuplicateNodeName", "node names must be unique")
    bats = {b.id for b in s.batteries}
    if len(bats) != len(s.batteries):
        raise ValidationError("DuplicateBattery", "battery ids must be unique")
    used = [n.battery for n in s.nodes if n.battery is not None]
    for b in used:
        if b not in bats:
            raise ValidationError("UnknownBattery", f"battery {b!r} is not defined")
    if len(set(used)) != len(used):
        raise ValidationError("SharedBattery", "a battery powers at most one node")

    attached = {n: [] for n in nums}
    for node in s.nodes:
        for net in node.attached():
            if net not in attached:
                raise ValidationError("UnknownNetwork", f"node {node.name} references network {net}")
            attached[net].append(node)
    for cfg in s.networks:
        members = attached[cfg.network_number]
        numbers = [m.node_number for m in members]
        if len(set(numbers)) != len(numbers):
            raise ValidationError("DuplicateNodeNumber", f"network {cfg.network_number}: node numbers must be unique")
        if cfg.node_count != len(members):
            raise ValidationError("NodeCountMismatch",
                                  f"network {cfg.network_number} declares {cfg.node_count} nodes, {len(members)} attached")
        if isinstance(cfg, (WirelessConfig, UltrasoundConfig)):
            for m in members:
                if m.position is None:
                    raise MissingPosition(f"node {m.name} on network {cfg.network_number} has no position")

    plants = {p.name: p for p in s.plants}
    if len(plants) != len(s.plants):
        raise ValidationError("DuplicatePlant", "plant names must be unique")
    bound = {}
    for link in s.links:
        p = plants.get(link.plant)
        if p is None:
            raise ValidationError("UnknownPlant", f"link references plant {link.plant!r}")
        node = s.node(link.node)
        if node is None or node.task(link.task) is None:
            raise ValidationError("UnknownTask", f"link references {link.node}/{link.task}")
        lti = p.build()
        width = lti.n_outputs if link.direction == "sample" else lti.n_inputs
        if not 0 <= link.port < width:
            raise ValidationError("BadPort", f"plant {p.name} has no {link.direction} port {link.port}")
        key = (link.node, link.task, link.direction)
        if key in bound:
            raise ValidationError("DuplicateLink", f"{link.node}/{link.task} has two {link.direction} links")
        bound[key] = link
    for p in s.plants:
        h = effective_h_int(s, p)
        if not h > 0:
            raise ValidationError("BadStep", f"plant {p.name}: h_int must be > 0")
        periods = [(f"{k.node}/{k.task}", _sample_period(s, k)) for k in s.links
                   if k.plant == p.name and k.direction == "sample"]
        if p.response_period:
            periods.append(("response_period", p.response_period))
        for who, per in periods:
            if per is not None and not grid_aligned(per, h):
                raise ValidationError("SampleOffGrid", f"plant {p.name}: period of {who} ({per}) "
                                                       f"is not a multiple of h_int={h}")

    can_ids = {}
    for node in s.nodes:
        for task in node.tasks:
            act = task.action or {"type": "none"}
            kind = act["type"]
            ctx = f"{node.name}/{task.name}"
            has_sample = (node.name, task.name, "sample") in bound
            has_act = (node.name, task.name, "actuate") in bound
            if kind == "sense" and not has_sample:
                raise ValidationError("UnboundLink", f"{ctx}: sense task needs a sample link")
            if kind == "actuate" and not has_act:
                raise ValidationError("UnboundLink", f"{ctx}: actuate task needs an actuate link")
            if kind == "control":
                for k in ("K", "Td"):
                    if k not in task.params:
                        raise ValidationError("MissingField", f"{ctx}: control task needs params.{k}")
                if "h" not in task.params and not task.periodic and not act.get("h"):
                    raise ValidationError("MissingField", f"{ctx}: event-triggered control task needs params.h")
                if not (has_sample or has_act) and "plant" not in act:
                    raise ValidationError("MissingField", f"{ctx}: control action needs a 'plant' for its reference")
                if "plant" in act and act["plant"] not in plants:
                    raise ValidationError("UnknownPlant", f"{ctx}: plant {act['plant']!r}")
            uses_net_in = kind == "actuate" or (kind == "control" and not has_sample)
            uses_net_out = kind in ("send", "sense") or (kind == "control" and not has_act)
            if uses_net_in or uses_net_out:
                net = act.get("network")
                if net is None:
                    raise ValidationError("MissingField", f"{ctx}: action needs 'network'")
                if net not in node.attached():
                    raise ValidationError("UnknownNetwork", f"{ctx}: node not attached to network {net}")
            if uses_net_out:
                net = act["network"]
                dest = act.get("dest")
                if dest is not None and dest not in [m.node_number for m in attached[net]]:
                    raise ValidationError("UnknownDestination", f"{ctx}: no node {dest} on network {net}")
                cfg = s.network(net)
                if isinstance(cfg, NetworkConfig) and cfg.net_type == "CAN":
                    cid = act.get("can_id", node.node_number)
                    key = (net, cid)
                    if key in can_ids and can_ids[key] != ctx:
                        raise DuplicateCanId(f"network {net}: can_id {cid} used by {can_ids[key]} and {ctx}")
                    can_ids[key] = ctx


# -- canonical dump ---------------------------------------------------------

def _task_dict(t: TaskSpec):
    if isinstance(t.activation, Periodic):
        act = {"type": "periodic", "period": t.activation.period, "first_release": t.activation.first_release}
    else:
        act = {"type": "event", "trigger": t.activation.trigger, "at": list(t.activation.at)}
    ex = ({"type": "constant", "c": t.exec_time.lo} if t.exec_time.is_constant
          else {"type": "uniform", "lo": t.exec_time.lo, "hi": t.exec_time.hi})
    return {"name": t.name, "activation": act, "rel_deadline": t.rel_deadline, "exec_time": ex,
            "priority": t.fixed_priority, "action": t.action, "params": t.params}


def _network_dict(cfg):
    kind = ("wired" if isinstance(cfg, NetworkConfig) else
            "wireless" if isinstance(cfg, WirelessConfig) else "ultrasound")
    d = {"kind": kind}
    d.update({f.name: getattr(cfg, f.name) for f in fields(cfg)})
    return d


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "duration": s.duration,
        "root_seed": s.root_seed,
        "batteries": [{"id": b.id, "capacity": b.capacity} for b in s.batteries],
        "networks": [_network_dict(n) for n in s.networks],
        "nodes": [{
            "name": n.name, "node_number": n.node_number, "policy": n.policy.value,
            "clock": {"drift": n.clock.drift, "offset": n.clock.offset},
            "context_switch": n.context_switch, "battery": n.battery,
            "position": None if n.position is None else list(n.position),
            "networks": list(n.networks),
            "msg_handlers": {str(k): v for k, v in sorted(n.msg_handlers.items())},
            "tasks": [_task_dict(t) for t in n.tasks],
        } for n in s.nodes],
        "plants": [{
            "name": p.name, "model": p.model, "a": p.a, "b": p.b,
            "A": _lists(p.A), "B": _lists(p.B), "C": _lists(p.C), "D": _lists(p.D),
            "x0": list(p.x0), "h_int": p.h_int, "reference": p.reference.to_dict(),
            "response_period": p.response_period,
        } for p in s.plants],
        "links": [{
            "plant": k.plant, "direction": k.direction, "node": k.node, "task": k.task, "port": k.port,
            "delay": None if k.delay is None else k.delay.to_dict(),
        } for k in s.links],
        "outputs": {f.name: getattr(s.outputs, f.name) for f in fields(Outputs)},
    }


def _lists(m):
    return None if m is None else [list(r) for r in m]


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def dump_scenario(s: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")


def with_overrides(s: Scenario, **changes) -> Scenario:
    s = copy.deepcopy(s)
    for k, v in changes.items():
        setattr(s, k, v)
    validate(s)
    return s


# -- assembly ---------------------------------------------------------------

def build_world(s: Scenario, seed: int | None = None) -> World:
    world = World(s.root_seed if seed is None else seed)
    for cfg in s.networks:
        world.add_network(cfg)
    bats = {b.id: b for b in s.batteries}
    for node in s.nodes:
        battery = None
        if node.battery is not None:
            b = bats[node.battery]
            battery = Battery(b.capacity, b.id, node.name)
        world.add_node(node, battery)
    for p in s.plants:
        world.add_plant(p.name, p.build(), effective_h_int(s, p), p.reference,
                        p.response_period if s.outputs.response else None)
    links = {(k.node, k.task, k.direction): k for k in s.links}
    for node in s.nodes:
        kernel = world.kernels[node.name]
        for task in node.tasks:
            act = task.action or {"type": "none"}
            kind = act["type"]
            if kind == "none":
                continue
            sl = links.get((node.name, task.name, "sample"))
            al = links.get((node.name, task.name, "actuate"))
            net = act.get("network")
            size = float(act.get("size", DEFAULT_FRAME_BITS))
            net_sink = ("net", net, act.get("dest"), size, act.get("can_id"))
            plant_src = None if sl is None else ("plant", world.plants[sl.plant], sl.port)
            plant_sink = None if al is None else (
                "plant", world.plants[al.plant], al.port, copy.copy(al.delay),
                world.rng(f"link.{node.name}.{task.name}.delay"))
            law = ref = None
            if kind == "send":
                src, sink = None, net_sink
            elif kind == "sense":
                src, sink = plant_src, net_sink
            elif kind == "actuate":
                src, sink = ("net", net), plant_sink
            else:
                src = plant_src or ("net", net)
                sink = plant_sink or net_sink
                h = float(task.params.get("h", act.get("h", task.period or 0.0)))
                law = ControlLaw(float(task.params["K"]), float(task.params["Td"]), h)
                pname = act.get("plant") or (sl or al).plant
                ref = world.plants[pname].reference
            kernel.actions[task.name] = IoAction(src, sink, law, ref)
    return world
