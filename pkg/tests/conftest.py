"""Shared builders for tests: tiny worlds, injectors and scenario dicts."""
import copy

import pytest

from chronosim.engine import EventKind
from chronosim.kernel import (ClockModel, EventTriggered, ExecTimeModel, NodeSpec, Periodic, Policy,
                              TaskSpec)
from chronosim.world import World


def periodic(name, c, period, deadline=None, prio=1, first=0.0, action=None, params=None):
    return TaskSpec(name, Periodic(period, first), deadline if deadline is not None else period,
                    ExecTimeModel.constant(c), prio, action, params or {})


def handler(name, c, deadline, prio=1):
    return TaskSpec(name, EventTriggered("message"), deadline, ExecTimeModel.constant(c), prio)


def node(name, number, tasks=(), policy="FP", networks=(), position=None, handlers=None,
         context_switch=0.0, drift=0.0, offset=0.0, battery=None):
    return NodeSpec(name=name, node_number=number, tasks=list(tasks), policy=Policy.parse(policy),
                    clock=ClockModel(drift, offset), context_switch=context_switch, battery=battery,
                    msg_handlers=dict(handlers or {}), position=position, networks=tuple(networks))


class Injector:
    """Offers frames at fixed times, bypassing kernels.

    All frames sharing a time are offered inside one event so they count as
    simultaneous for arbitration. ``sends`` items are
    ``(t, net, src, dst, size)`` or ``(t, net, src, dst, size, can_id)``.
    """

    def __init__(self, world, sends, target="inject"):
        self.world = world
        self.by_time = {}
        for s in sends:
            self.by_time.setdefault(s[0], []).append(s)
        self.frames = []
        self.target = target
        world.register(target, self)

    def start(self):
        for t in sorted(self.by_time):
            self.world.schedule(t, EventKind.Custom, self.target, t)

    def handle(self, ev):
        for s in self.by_time[ev.payload]:
            t, net, src, dst, size = s[:5]
            can_id = s[5] if len(s) > 5 else None
            self.frames.append(self.world.send(net, src, dst, len(self.frames), size, ev.fire_time, can_id=can_id))


def bare_world(net_cfg, nodes, seed=0):
    """World with one network and task-less (or given) nodes attached."""
    w = World(seed)
    w.add_network(net_cfg)
    for n in nodes:
        w.add_node(n)
    return w


def received(world, node_name, net):
    """Payloads delivered to a node, in arrival order."""
    return list(world.kernels[node_name].rx.get(net, []))


MINIMAL = {
    "name": "minimal",
    "duration": 0.1,
    "nodes": [{
        "name": "n1", "node_number": 1,
        "tasks": [{"name": "t", "activation": {"type": "periodic", "period": 0.01},
                   "rel_deadline": 0.01, "exec_time": {"type": "constant", "c": 0.002}}],
    }],
}


@pytest.fixture
def minimal_dict():
    return copy.deepcopy(MINIMAL)
