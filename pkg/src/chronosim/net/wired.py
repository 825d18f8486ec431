"""Shared-medium wired networks: CSMA/CD (Ethernet), CAN and TDMA.

Propagation delay is zero. A medium is busy only while a frame is on the
wire; collisions on CSMA/CD happen when two or more stations start at the
same instant and cost no airtime.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from ..engine import EventKind
from ..errors import ValidationError
from .common import Frame, Medium, TxRecord, apply_loss, tx_duration

CSMA_MAX_ATTEMPTS = 16
CSMA_BACKOFF_CAP = 10


@dataclass
class NetworkConfig:
    net_type: str
    network_number: int
    node_count: int
    data_rate: float
    min_frame: float
    loss_prob: float = 0.0
    tdma_slot: float | None = None

    def __post_init__(self):
        self.net_type = self.net_type.upper()
        if self.net_type not in ("CSMA_CD", "CAN", "TDMA"):
            raise ValidationError("UnknownNetworkType", f"wired network type {self.net_type!r}")
        if not self.data_rate > 0:
            raise ValidationError("BadDataRate", f"network {self.network_number}: data_rate must be > 0")
        if not self.min_frame > 0:
            raise ValidationError("BadMinFrame", f"network {self.network_number}: min_frame must be > 0")
        if not 0 <= self.loss_prob <= 1:
            raise ValidationError("BadLossProb", f"network {self.network_number}: loss_prob not in [0, 1]")
        if self.node_count < 1:
            raise ValidationError("BadNodeCount", f"network {self.network_number}: node_count must be >= 1")
        if self.net_type == "TDMA" and not (self.tdma_slot and self.tdma_slot > 0):
            raise ValidationError("BadTdmaSlot", f"network {self.network_number}: TDMA needs tdma_slot > 0")

    @property
    def slot(self):
        return self.min_frame / self.data_rate


def _slot_index(t: float, slot: float) -> int:
    q = t / slot
    r = round(q)
    # snap quotients within rounding noise of an integer (0.003/0.001 = 2.9999...)
    if abs(q - r) <= 1e-9 * max(1.0, abs(q)):
        return int(r)
    return math.floor(q)


def tdma_owner(t: float, cfg: NetworkConfig) -> int:
    """Index of the node owning the slot containing ``t`` (slots are [a, b))."""
    if not (cfg.tdma_slot and cfg.tdma_slot > 0):
        raise ValueError("tdma_slot must be > 0")
    return _slot_index(t, cfg.tdma_slot) % cfg.node_count


def can_arbitrate(pending, t=None):
    """Winner of CAN arbitration: smallest identifier, enqueue order on ties."""
    if not pending:
        return None
    return min(pending, key=lambda f: (f.can_id, f.frame_id))


class WiredMedium(Medium):
    """Common transmit/receive path; subclasses decide who gets the wire."""

    def __init__(self, world, cfg: NetworkConfig):
        super().__init__(world, cfg)
        self.current: tuple | None = None  # (node, frame, end)

    def _start_tx(self, node, frame, t):
        end = t + tx_duration(frame.size, self.cfg)
        frame.tx_start = t
        frame.tx_end = end
        frame.transmissions += 1
        self.current = (node, frame, end)
        self.world.schedule(end, EventKind.TxEnd, self.target, (node, frame))
        self._set_state(node, "SENDING", t)

    def _finish_tx(self, node, frame, t):
        self.current = None
        ok = apply_loss(self._loss_rng, self.cfg.loss_prob)
        self.tx_log.append(TxRecord(self.number, node, frame.dst, frame.frame_id, frame.tx_start, t,
                                    outcome="ok" if ok else "dropped"))
        if ok:
            self._delivered(frame, t)
            for dst in self._receivers(frame):
                self._deliver(frame, dst, t)
        else:
            self.stats.dropped += 1
            self.world.trace.add_event(t, "FrameDropped", f"net {self.number} frame {frame.frame_id} {node}->{frame.dst}")


class CsmaCd(WiredMedium):
    """1-persistent CSMA/CD with truncated binary exponential backoff."""

    def __init__(self, world, cfg):
        super().__init__(world, cfg)
        self.queues: dict[int, deque] = {}
        self.phase: dict[int, str] = {}
        self.attempts: dict[int, int] = {}
        self.deferring: list[int] = []
        self.contenders: list[int] = []
        self._resolve_at: float | None = None
        self.collisions = 0
        self._backoff_rng = world.rng(f"net{self.number}.backoff")

    def attach(self, node_number):
        super().attach(node_number)
        self.queues[node_number] = deque()
        self.phase[node_number] = "idle"
        self.attempts[node_number] = 0

    def offer(self, frame: Frame, t: float):
        self._accept(frame, t)
        n = frame.src
        self.queues[n].append(frame)
        if self.phase[n] == "idle":
            self._try(n, t)
        return frame

    def _try(self, n, t):
        if self.current is not None:
            self.phase[n] = "defer"
            if n not in self.deferring:
                self.deferring.append(n)
            self._set_state(n, "WAITING", t)
            return
        self.phase[n] = "contend"
        self.contenders.append(n)
        self._set_state(n, "WAITING", t)
        if self._resolve_at != t:
            self._resolve_at = t
            self.world.schedule(t, EventKind.SlotBoundary, self.target)

    def handle(self, ev):
        t = ev.fire_time
        if ev.kind is EventKind.SlotBoundary:
            self._resolve(t)
        elif ev.kind is EventKind.TxStart:
            n = ev.payload
            if self.phase[n] == "backoff":
                self._try(n, t)
        elif ev.kind is EventKind.TxEnd:
            self._tx_end(*ev.payload, t)

    def _resolve(self, t):
        self._resolve_at = None
        cs, self.contenders = self.contenders, []
        if not cs:
            return
        if len(cs) == 1:
            n = cs[0]
            self.phase[n] = "send"
            self._start_tx(n, self.queues[n][0], t)
            return
        self.collisions += 1
        self.world.trace.add_event(t, "Collision", f"net {self.number} nodes {' '.join(map(str, cs))}")
        for n in cs:
            self.attempts[n] += 1
            a = self.attempts[n]
            if a >= CSMA_MAX_ATTEMPTS:
                frame = self.queues[n].popleft()
                self.stats.discarded += 1
                self.world.trace.add_event(t, "FrameDiscarded", f"net {self.number} frame {frame.frame_id} after {a} attempts")
                self.attempts[n] = 0
                self.phase[n] = "idle"
                if self.queues[n]:
                    self._try(n, t)
                else:
                    self._set_state(n, "IDLE", t)
                continue
            k = self._backoff_rng.integer(0, 2 ** min(a, CSMA_BACKOFF_CAP) - 1)
            self.phase[n] = "backoff"
            self.world.schedule(t + k * self.cfg.slot, EventKind.TxStart, self.target, n)

    def _tx_end(self, n, frame, t):
        self.queues[n].popleft()
        self._finish_tx(n, frame, t)
        self.attempts[n] = 0
        self.phase[n] = "idle"
        if self.queues[n]:
            self._try(n, t)
        else:
            self._set_state(n, "IDLE", t)
        waiting, self.deferring = self.deferring, []
        for m in waiting:
            if self.phase[m] == "defer":
                self._try(m, t)


class Can(WiredMedium):
    """Priority arbitration: smallest pending identifier wins the idle bus."""

    def __init__(self, world, cfg):
        super().__init__(world, cfg)
        self.pending: list[Frame] = []
        self._resolve_at: float | None = None

    def offer(self, frame: Frame, t: float):
        if frame.can_id is None:
            frame.can_id = frame.src
        self._accept(frame, t)
        self.pending.append(frame)
        self._set_state(frame.src, "WAITING", t)
        self._kick(t)
        return frame

    def _kick(self, t):
        if self.current is None and self.pending and self._resolve_at != t:
            self._resolve_at = t
            self.world.schedule(t, EventKind.SlotBoundary, self.target)

    def handle(self, ev):
        t = ev.fire_time
        if ev.kind is EventKind.SlotBoundary:
            self._resolve_at = None
            if self.current is None and self.pending:
                win = can_arbitrate(self.pending, t)
                self.pending.remove(win)
                self._start_tx(win.src, win, t)
        elif ev.kind is EventKind.TxEnd:
            n, frame = ev.payload
            self._finish_tx(n, frame, t)
            left = any(f.src == n for f in self.pending)
            self._set_state(n, "WAITING" if left else "IDLE", t)
            self._kick(t)


class Tdma(WiredMedium):
    """Round-robin slots; a frame may start only if it ends inside its owner's slot."""

    def __init__(self, world, cfg):
        super().__init__(world, cfg)
        self.queues: dict[int, deque] = {}
        self.busy: dict[int, bool] = {}
        self._wake: dict[int, int | None] = {}

    def attach(self, node_number):
        super().attach(node_number)
        self.queues[node_number] = deque()
        self.busy[node_number] = False
        self._wake[node_number] = None

    def offer(self, frame, t):
        self._accept(frame, t)
        n = frame.src
        self.queues[n].append(frame)
        if not self.busy[n] and self._wake[n] is None:
            self._try(n, t)
        return frame

    def _try(self, n, t):
        slot = self.cfg.tdma_slot
        idx = self.index_of(n)
        count = self.cfg.node_count
        while self.queues[n]:
            frame = self.queues[n][0]
            dur = tx_duration(frame.size, self.cfg)
            if dur > slot * (1 + 1e-12):
                self.queues[n].popleft()
                self.stats.discarded += 1
                self.world.trace.add_event(t, "FrameDiscarded", f"net {self.number} frame {frame.frame_id} longer than slot")
                continue
            s = _slot_index(t, slot)
            if s % count == idx and t + dur <= (s + 1) * slot * (1 + 1e-12):
                self.busy[n] = True
                self._start_tx(n, frame, t)
                return
            nxt = s + ((idx - s) % count)
            if nxt == s:
                nxt += count
            self._set_state(n, "WAITING", t)
            self._wake[n] = self.world.schedule(nxt * slot, EventKind.TxStart, self.target, n)
            return
        self._set_state(n, "IDLE", t)

    def handle(self, ev):
        t = ev.fire_time
        if ev.kind is EventKind.TxStart:
            n = ev.payload
            self._wake[n] = None
            self._try(n, t)
        elif ev.kind is EventKind.TxEnd:
            n, frame = ev.payload
            self.queues[n].popleft()
            self.busy[n] = False
            self._finish_tx(n, frame, t)
            self._try(n, t)


WIRED_MEDIA = {"CSMA_CD": CsmaCd, "CAN": Can, "TDMA": Tdma}


def csma_cd_offer(medium: CsmaCd, frame: Frame, t: float):
    return medium.offer(frame, t)
