"""A simulation world: kernels, networks and plants sharing one event loop."""
from __future__ import annotations

import itertools

from .engine import EventKind, Simulation
from .errors import UnknownNetwork
from .kernel import Battery, Kernel, NodeSpec
from .net.common import Frame, Medium, sample_delay
from .net.wired import WIRED_MEDIA, NetworkConfig
from .net.wireless import UltrasoundConfig, UltrasoundMedium, WirelessConfig, WirelessMedium
from .plant import ControlLaw, PlantRunner, pd_control


def make_medium(world, cfg) -> Medium:
    if isinstance(cfg, NetworkConfig):
        return WIRED_MEDIA[cfg.net_type](world, cfg)
    if isinstance(cfg, WirelessConfig):
        return WirelessMedium(world, cfg)
    if isinstance(cfg, UltrasoundConfig):
        return UltrasoundMedium(world, cfg)
    raise TypeError(f"unknown network config {cfg!r}")


class World(Simulation):
    def __init__(self, root_seed: int = 0):
        super().__init__(root_seed)
        self.kernels: dict[str, Kernel] = {}
        self.networks: dict[int, Medium] = {}
        self.plants: dict[str, PlantRunner] = {}
        self._by_number: dict[tuple, Kernel] = {}
        self._frame_ids = itertools.count(1)

    def add_network(self, cfg) -> Medium:
        m = make_medium(self, cfg)
        self.networks[cfg.network_number] = m
        return m

    def add_node(self, spec: NodeSpec, battery: Battery | None = None) -> Kernel:
        k = Kernel(self, spec, battery)
        self.kernels[spec.name] = k
        for net in spec.attached():
            medium = self.networks.get(net)
            if medium is None:
                raise UnknownNetwork(f"node {spec.name} references network {net}")
            if isinstance(medium, (WirelessMedium, UltrasoundMedium)):
                medium.attach(spec.node_number, spec.position)
            else:
                medium.attach(spec.node_number)
            self._by_number[(net, spec.node_number)] = k
        return k

    def add_plant(self, name, plant, h_int, reference=None, response_period=None) -> PlantRunner:
        r = PlantRunner(self, name, plant, h_int, reference, response_period)
        self.plants[name] = r
        return r

    def kernel_on(self, net: int, number: int) -> Kernel | None:
        return self._by_number.get((net, number))

    # services used by kernels and media

    def send(self, net, src, dst, payload, size, t, can_id=None) -> Frame:
        medium = self.networks.get(net)
        if medium is None:
            raise UnknownNetwork(f"network {net} does not exist")
        k = self.kernel_on(net, src)
        if k is not None and not k.powered:
            self.trace.add_event(t, "NodeOff", f"{k.name} send to {dst} on net {net} dropped")
            return None
        # per-world ids keep event details identical across runs in one process
        frame = Frame(src, dst, size, payload, can_id=can_id, frame_id=next(self._frame_ids))
        return medium.offer(frame, t)

    def deliver(self, net, dst, frame, t):
        k = self.kernel_on(net, dst)
        if k is None:
            self.trace.add_event(t, "NoReceiver", f"net {net} frame {frame.frame_id} to {dst}")
            return None
        return k.deliver_msg(net, frame, t)

    def consume_energy(self, net, number, j, t):
        k = self.kernel_on(net, number)
        if k is not None:
            k.consume_energy(j, t)

    def node_powered(self, net, number) -> bool:
        k = self.kernel_on(net, number)
        return k is not None and k.powered


class IoAction:
    """What a task does with data: read at job start, write at completion.

    ``source`` is ``("net", network)`` or ``("plant", runner, port)``;
    ``sink`` is ``("net", network, dest, size, can_id)`` or
    ``("plant", runner, port, delay_model, stream)``. With a PD ``law`` the
    value read is the measurement and the value written is the control
    signal against ``reference``.
    """

    def __init__(self, source=None, sink=None, law: ControlLaw | None = None, reference=None):
        self.source = source
        self.sink = sink
        self.law = law
        self.reference = reference
        self.log: list[tuple] = []

    def on_start(self, kernel, job, t):
        src = self.source
        if src is None:
            value = float(job.seq)
        elif src[0] == "net":
            value = kernel.receive(src[1])
        else:
            value = src[1].read(t, src[2])
        if value is not None and self.law is not None:
            value = pd_control(self.reference(t) - value, self.law)
        job.data = value

    def on_complete(self, kernel, job, t):
        value = job.data
        sink = self.sink
        if value is None or sink is None:
            return
        self.log.append((t, value))
        if sink[0] == "net":
            _, net, dest, size, can_id = sink
            kernel.send_msg(net, dest, value, size, t, can_id=can_id)
        else:
            _, runner, port, delay, stream = sink
            if delay is None:
                runner.write(t, value, port)
            else:
                d = sample_delay(delay, stream)
                kernel.world.schedule(t + d, EventKind.Custom, runner.target, (port, value))
