"""Frames, transmission timing, Bernoulli loss, link delay models and the
bookkeeping shared by every medium."""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field

from ..engine import RngStream
from ..errors import ValidationError

BROADCAST = None

_frame_ids = itertools.count(1)


@dataclass(eq=False)
class Frame:
    src: int
    dst: int | None
    size: float
    payload: object = None
    can_id: int | None = None
    enqueue_time: float = 0.0
    tx_start: float | None = None
    tx_end: float | None = None
    network: int | None = None
    transmissions: int = 0
    frame_id: int = field(default_factory=lambda: next(_frame_ids))

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError(f"frame size must be > 0, got {self.size}")


def tx_duration(size: float, cfg) -> float:
    if not size > 0:
        raise ValueError(f"frame size must be > 0, got {size}")
    return max(size, cfg.min_frame) / cfg.data_rate


def apply_loss(stream: RngStream, p: float) -> bool:
    """True when the frame is delivered, False when dropped (probability p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"loss probability out of range: {p}")
    if p == 0.0:
        return True
    if p == 1.0:
        return False
    return stream.random() >= p


@dataclass
class DelayModel:
    """Extra serial delay on a directed link.

    ``kind`` is one of constant, uniform, empirical, markov. Parameter names
    follow the variant: ``d``; ``lo, hi``; ``edges, probs``;
    ``p_gb, p_bg, delay_good, delay_bad``.
    """

    kind: str
    d: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    edges: tuple = ()
    probs: tuple = ()
    p_gb: float = 0.0
    p_bg: float = 0.0
    delay_good: float = 0.0
    delay_bad: float = 0.0
    bad: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        k = self.kind = self.kind.lower()
        if k == "constant":
            ok = self.d >= 0
        elif k == "uniform":
            ok = 0 <= self.lo <= self.hi
        elif k == "empirical":
            self.edges = tuple(float(e) for e in self.edges)
            self.probs = tuple(float(p) for p in self.probs)
            ok = (len(self.edges) == len(self.probs) + 1 and len(self.probs) > 0
                  and self.edges[0] >= 0
                  and all(a < b for a, b in zip(self.edges, self.edges[1:]))
                  and all(p >= 0 for p in self.probs)
                  and abs(sum(self.probs) - 1.0) <= 1e-9)
        elif k == "markov":
            ok = (0 <= self.p_gb <= 1 and 0 <= self.p_bg <= 1
                  and self.delay_good >= 0 and self.delay_bad >= 0)
        else:
            raise ValidationError("UnknownDelayModel", f"unknown delay model {self.kind!r}")
        if not ok:
            raise ValidationError("BadDelayModel", f"invalid parameters for {self!r}")

    @classmethod
    def constant(cls, d):
        return cls("constant", d=d)

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", lo=lo, hi=hi)

    @classmethod
    def empirical(cls, edges, probs):
        return cls("empirical", edges=tuple(edges), probs=tuple(probs))

    @classmethod
    def markov(cls, p_gb, p_bg, delay_good, delay_bad):
        return cls("markov", p_gb=p_gb, p_bg=p_bg, delay_good=delay_good, delay_bad=delay_bad)

    def cdf(self, x: float) -> float:
        """Distribution function of one sample (Markov: the stationary mixture)."""
        if self.kind == "constant":
            return 1.0 if x >= self.d else 0.0
        if self.kind == "uniform":
            if self.hi == self.lo:
                return 1.0 if x >= self.lo else 0.0
            return min(1.0, max(0.0, (x - self.lo) / (self.hi - self.lo)))
        if self.kind == "empirical":
            e = self.edges
            if x <= e[0]:
                return 0.0
            if x >= e[-1]:
                return 1.0
            i = bisect.bisect_right(e, x) - 1
            return sum(self.probs[:i]) + self.probs[i] * (x - e[i]) / (e[i + 1] - e[i])
        pi_bad = self.p_gb / (self.p_gb + self.p_bg) if self.p_gb + self.p_bg > 0 else 0.0
        return (1 - pi_bad) * (x >= self.delay_good) + pi_bad * (x >= self.delay_bad)

    def to_dict(self):
        k = self.kind
        if k == "constant":
            return {"type": k, "d": self.d}
        if k == "uniform":
            return {"type": k, "lo": self.lo, "hi": self.hi}
        if k == "empirical":
            return {"type": k, "edges": list(self.edges), "probs": list(self.probs)}
        return {"type": k, "p_gb": self.p_gb, "p_bg": self.p_bg,
                "delay_good": self.delay_good, "delay_bad": self.delay_bad}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("type", d.pop("kind", None))
        if kind is None:
            raise ValidationError("UnknownDelayModel", "delay model needs a 'type'")
        try:
            return cls(kind, **d)
        except TypeError as exc:
            raise ValidationError("BadDelayModel", str(exc)) from None

    @classmethod
    def parse(cls, text: str):
        """Parse the CLI shorthand ``none``, ``const:D``, ``uniform:LO,HI``,
        ``markov:PGB,PBG,DGOOD,DBAD``."""
        text = text.strip()
        if text.lower() in ("", "none"):
            return None
        name, _, rest = text.partition(":")
        try:
            args = [float(v) for v in rest.split(",")] if rest else []
            name = name.lower()
            if name in ("const", "constant"):
                return cls.constant(*args)
            if name == "uniform":
                return cls.uniform(*args)
            if name == "markov":
                return cls.markov(*args)
        except (TypeError, ValueError) as exc:
            raise ValidationError("BadDelayModel", f"cannot parse {text!r}: {exc}") from None
        raise ValidationError("UnknownDelayModel", f"cannot parse {text!r}")


def sample_delay(model: DelayModel, stream: RngStream) -> float:
    k = model.kind
    if k == "constant":
        return model.d
    if k == "uniform":
        return stream.uniform(model.lo, model.hi)
    if k == "empirical":
        i = stream.choice(model.probs)
        return stream.uniform(model.edges[i], model.edges[i + 1])
    # markov: advance the hidden state, then emit its delay
    u = stream.random()
    if model.bad:
        model.bad = u >= model.p_bg
    else:
        model.bad = u < model.p_gb
    return model.delay_bad if model.bad else model.delay_good


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class TxRecord:
    network: int
    src: int
    dst: int | None
    frame_id: int
    start: float
    end: float
    ack: bool = False
    energy: float = 0.0
    outcome: str = ""


@dataclass
class NetStats:
    offered: int = 0
    delivered: int = 0
    dropped: int = 0
    discarded: int = 0
    delivered_bits: float = 0.0
    latencies: list = field(default_factory=list)


class Medium:
    """Per-network runtime base: node bookkeeping, traces and statistics."""

    label = "medium"

    def __init__(self, world, cfg):
        self.world = world
        self.cfg = cfg
        self.number = cfg.network_number
        self.target = f"net:{self.number}"
        self.nodes: list[int] = []
        self.stats = NetStats()
        self.tx_log: list[TxRecord] = []
        self._state: dict[int, str] = {}
        self._loss_rng = world.rng(f"net{self.number}.loss")
        world.register(self.target, self)

    def attach(self, node_number: int):
        if node_number in self.nodes:
            raise ValidationError("DuplicateNodeNumber", f"node {node_number} attached twice to network {self.number}")
        self.nodes.append(node_number)
        self.nodes.sort()

    def index_of(self, node_number):
        return self.nodes.index(node_number)

    def start(self):
        for n in self.nodes:
            self._set_state(n, "IDLE", self.world.now)

    def _set_state(self, node, state, t):
        if self._state.get(node) != state:
            self._state[node] = state
            self.world.trace.add_network(t, self.number, node, state)

    def offer(self, frame: Frame, t: float):
        raise NotImplementedError

    def _accept(self, frame, t):
        frame.network = self.number
        frame.enqueue_time = t
        self.stats.offered += 1

    def _deliver(self, frame, dst, t):
        self.world.deliver(self.number, dst, frame, t)

    def _delivered(self, frame, t):
        self.stats.delivered += 1
        self.stats.delivered_bits += frame.size
        self.stats.latencies.append(t - frame.enqueue_time)

    def _receivers(self, frame):
        if frame.dst is BROADCAST:
            return [n for n in self.nodes if n != frame.src]
        return [frame.dst]

    def summary(self) -> dict:
        s = self.stats
        lat = sorted(s.latencies)
        out = {
            "offered": s.offered,
            "delivered": s.delivered,
            "dropped": s.dropped,
            "discarded": s.discarded,
            "delivery_ratio": s.delivered / s.offered if s.offered else None,
            "latency_mean": sum(lat) / len(lat) if lat else None,
            "latency_p95": _percentile(lat, 0.95) if lat else None,
        }
        return out


def _percentile(sorted_vals, q):
    # nearest-rank percentile
    k = max(0, math.ceil(q * len(sorted_vals)) - 1)
    return sorted_vals[k]
