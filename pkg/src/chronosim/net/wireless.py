"""Wireless media: CSMA/CA with acknowledgements (WLAN, ZigBee) and an
ultrasound broadcast medium with finite propagation speed.

Power is in linear milliwatts. Path loss is ``p_tx / max(d, 1)**alpha``;
a frame is received when that power reaches the signal threshold and no
other audible transmission overlaps it.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from ..engine import EventKind
from ..errors import MissingPosition, ValidationError
from .common import Frame, Medium, TxRecord, apply_loss, distance, tx_duration

MAX_BACKOFF_EXP = 5

# per-type defaults; 802.11b-like WLAN and 802.15.4-like ZigBee
WIRELESS_DEFAULTS = {
    "WLAN": dict(data_rate=11e6, min_frame=272, slot_time=20e-6, cw_min_slots=32, ack_timeout=100e-6),
    "ZIGBEE": dict(data_rate=250e3, min_frame=248, slot_time=320e-6, cw_min_slots=8, ack_timeout=2e-3),
}


@dataclass
class WirelessConfig:
    net_type: str
    network_number: int
    node_count: int
    data_rate: float | None = None
    min_frame: float | None = None
    loss_prob: float = 0.0
    transmit_power: float = 20.0
    signal_threshold: float = 0.01
    pathloss_exp: float = 3.5
    ack_timeout: float | None = None
    retry_limit: int = 3
    cw_min_slots: int | None = None
    slot_time: float | None = None
    ack_lossy: bool = False

    def __post_init__(self):
        self.net_type = self.net_type.upper()
        if self.net_type not in WIRELESS_DEFAULTS:
            raise ValidationError("UnknownNetworkType", f"wireless network type {self.net_type!r}")
        for k, v in WIRELESS_DEFAULTS[self.net_type].items():
            if getattr(self, k) is None:
                setattr(self, k, v)
        n = self.network_number
        checks = [
            (self.data_rate > 0, "BadDataRate", "data_rate must be > 0"),
            (self.min_frame > 0, "BadMinFrame", "min_frame must be > 0"),
            (0 <= self.loss_prob <= 1, "BadLossProb", "loss_prob not in [0, 1]"),
            (self.transmit_power > 0, "BadTransmitPower", "transmit_power must be > 0"),
            (self.signal_threshold > 0, "BadSignalThreshold", "signal_threshold must be > 0"),
            (self.pathloss_exp > 0, "BadPathLoss", "pathloss_exp must be > 0"),
            (self.ack_timeout > 0, "BadAckTimeout", "ack_timeout must be > 0"),
            (self.retry_limit >= 0, "BadRetryLimit", "retry_limit must be >= 0"),
            (self.cw_min_slots >= 1, "BadContentionWindow", "cw_min_slots must be >= 1"),
            (self.slot_time > 0, "BadSlotTime", "slot_time must be > 0"),
            (self.node_count >= 1, "BadNodeCount", "node_count must be >= 1"),
        ]
        for ok, rule, msg in checks:
            if not ok:
                raise ValidationError(rule, f"network {n}: {msg}")
        if self.ack_timeout < self.min_frame / self.data_rate:
            raise ValidationError("AckTimeoutTooShort", f"network {n}: ack_timeout shorter than an ack frame")


@dataclass
class UltrasoundConfig:
    network_number: int
    node_count: int
    ping_length: float
    speed_of_sound: float = 343.0

    def __post_init__(self):
        if not self.ping_length > 0:
            raise ValidationError("BadPingLength", f"network {self.network_number}: ping_length must be > 0")
        if not self.speed_of_sound > 0:
            raise ValidationError("BadSpeedOfSound", f"network {self.network_number}: speed_of_sound must be > 0")


def received_power(p_tx: float, d: float, alpha: float) -> float:
    return p_tx / max(d, 1.0) ** alpha


def range_limit(p_tx: float, threshold: float, alpha: float) -> float:
    """Distance at which the received power equals the threshold."""
    return (p_tx / threshold) ** (1.0 / alpha)


def in_range(a, b, cfg) -> bool:
    if a is None or b is None:
        raise MissingPosition("both nodes need a position")
    return received_power(cfg.transmit_power, distance(a, b), cfg.pathloss_exp) >= cfg.signal_threshold


def tx_energy(p_tx: float, duration: float) -> float:
    if duration < 0:
        raise ValueError("duration must be >= 0")
    return p_tx * 1e-3 * duration


@dataclass(eq=False)
class Transmission:
    src: int
    frame: Frame
    start: float
    end: float
    ack: bool = False
    dst: int | None = None
    record: TxRecord | None = None


def reception_outcome(receiver_pos, tx: Transmission, overlapping, cfg, stream, positions,
                      lossy: bool = True) -> str:
    """Ok, Corrupted, OutOfRange or Dropped for ``tx`` heard at ``receiver_pos``.

    ``overlapping`` are the other transmissions to consider; only those whose
    airtime intersects ``tx`` and whose power at the receiver reaches the
    threshold corrupt it.
    """
    if not in_range(positions[tx.src], receiver_pos, cfg):
        return "OutOfRange"
    for o in overlapping:
        if o is tx or not (o.start < tx.end and tx.start < o.end):
            continue
        p = received_power(cfg.transmit_power, distance(positions[o.src], receiver_pos), cfg.pathloss_exp)
        if p >= cfg.signal_threshold:
            return "Corrupted"
    if lossy and not apply_loss(stream, cfg.loss_prob):
        return "Dropped"
    return "Ok"


class WirelessMedium(Medium):
    """Unslotted CSMA/CA with immediate acks, ack timeout and bounded retries."""

    def __init__(self, world, cfg: WirelessConfig):
        super().__init__(world, cfg)
        self.queues: dict[int, deque] = {}
        self.phase: dict[int, str] = {}
        self.retries: dict[int, int] = {}
        self.waiters: list[int] = []
        self.ongoing: list[Transmission] = []
        self.recent: list[Transmission] = []
        self._ack_timer: dict[int, int | None] = {}
        self._seen: dict[int, set] = {}
        self._backoff_rng = world.rng(f"net{self.number}.backoff")
        self.positions: dict[int, tuple] = {}

    def attach(self, node_number, position=None):
        super().attach(node_number)
        if position is None:
            raise MissingPosition(f"node {node_number} on wireless network {self.number} has no position")
        self.positions[node_number] = tuple(position)
        self.queues[node_number] = deque()
        self.phase[node_number] = "idle"
        self.retries[node_number] = 0
        self._ack_timer[node_number] = None
        self._seen[node_number] = set()

    def _audible(self, tx, node):
        if tx.src == node:
            return True
        p = received_power(self.cfg.transmit_power, distance(self.positions[tx.src], self.positions[node]),
                           self.cfg.pathloss_exp)
        return p >= self.cfg.signal_threshold

    def sensed_busy(self, node, t, strict=True):
        for tx in self.ongoing:
            if (tx.start < t or (not strict and tx.start <= t)) and self._audible(tx, node):
                return True
        return False

    def offer(self, frame: Frame, t: float):
        self._accept(frame, t)
        n = frame.src
        self.queues[n].append(frame)
        if self.phase[n] == "idle":
            self._access(n, t)
        return frame

    def _access(self, n, t):
        if not self.world.node_powered(self.number, n):
            self._drop_queue(n, t)
            return
        self._set_state(n, "WAITING", t)
        if self.sensed_busy(n, t, strict=False):
            self.phase[n] = "sense"
            if n not in self.waiters:
                self.waiters.append(n)
            return
        cw = self.cfg.cw_min_slots * 2 ** min(self.retries[n], MAX_BACKOFF_EXP)
        k = self._backoff_rng.integer(0, cw - 1)
        self.phase[n] = "backoff"
        self.world.schedule(t + k * self.cfg.slot_time, EventKind.TxStart, self.target, n)

    def handle(self, ev):
        t = ev.fire_time
        if ev.kind is EventKind.TxStart:
            n = ev.payload
            if self.phase[n] != "backoff":
                return
            if not self.world.node_powered(self.number, n):
                self._drop_queue(n, t)
                return
            if self.sensed_busy(n, t, strict=True):
                self.phase[n] = "sense"
                if n not in self.waiters:
                    self.waiters.append(n)
                return
            self.phase[n] = "send"
            self._transmit(n, self.queues[n][0], t, ack=False)
        elif ev.kind is EventKind.TxEnd:
            self._tx_end(ev.payload, t)
        elif ev.kind is EventKind.AckTimeout:
            n, frame_id = ev.payload
            self._ack_timer[n] = None
            if self.phase[n] != "wait_ack" or not self.queues[n] or self.queues[n][0].frame_id != frame_id:
                return
            self.retries[n] += 1
            if self.retries[n] > self.cfg.retry_limit:
                frame = self.queues[n][0]
                self.stats.discarded += 1
                self.world.trace.add_event(t, "FrameDiscarded",
                                           f"net {self.number} frame {frame.frame_id} after {self.retries[n]} attempts")
                self._next(n, t)
            else:
                self._access(n, t)

    def _transmit(self, n, frame, t, ack):
        dur = tx_duration(self.cfg.min_frame if ack else frame.size, self.cfg)
        tx = Transmission(n, frame, t, t + dur, ack, frame.src if ack else frame.dst)
        self.ongoing.append(tx)
        self.recent.append(tx)
        if not ack:
            frame.transmissions += 1
            frame.tx_start = t
            frame.tx_end = tx.end
        energy = tx_energy(self.cfg.transmit_power, dur)
        tx.record = TxRecord(self.number, n, tx.dst, frame.frame_id, t, tx.end, ack, energy)
        self.tx_log.append(tx.record)
        self.world.consume_energy(self.number, n, energy, t)
        self._set_state(n, "SENDING", t)
        self.world.schedule(tx.end, EventKind.TxEnd, self.target, tx)

    def _prune(self):
        if not self.ongoing:
            horizon = math.inf
        else:
            horizon = min(tx.start for tx in self.ongoing)
        self.recent = [tx for tx in self.recent if tx.end > horizon or tx in self.ongoing]

    def _outcome(self, receiver, tx, lossy=True):
        if not self.world.node_powered(self.number, receiver):
            return "NodeOff"
        return reception_outcome(self.positions[receiver], tx, self.recent, self.cfg, self._loss_rng,
                                 self.positions, lossy=lossy)

    def _tx_end(self, tx: Transmission, t):
        self.ongoing.remove(tx)
        n = tx.src
        frame = tx.frame
        if tx.ack:
            # n is the data receiver; tx.dst the original sender
            s = tx.dst
            out = self._outcome(s, tx, lossy=self.cfg.ack_lossy)
            tx.record.outcome = out
            self._restore_state(n, t)
            if (out == "Ok" and self.phase[s] == "wait_ack" and self.queues[s]
                    and self.queues[s][0] is frame):
                self.world.cancel(self._ack_timer[s])
                self._ack_timer[s] = None
                self._next(s, t)
        else:
            if frame.dst is None:
                got = False
                for r in self._receivers(frame):
                    out = self._outcome(r, tx)
                    if out == "Ok":
                        got = True
                        self._deliver(frame, r, t)
                tx.record.outcome = "Ok" if got else "Lost"
                if got:
                    self._delivered(frame, t)
                self._next(n, t)
            else:
                r = frame.dst
                out = self._outcome(r, tx)
                tx.record.outcome = out
                self.phase[n] = "wait_ack"
                self._ack_timer[n] = self.world.schedule(t + self.cfg.ack_timeout, EventKind.AckTimeout,
                                                         self.target, (n, frame.frame_id))
                if out == "Ok":
                    if frame.frame_id not in self._seen[r]:
                        self._seen[r].add(frame.frame_id)
                        self._delivered(frame, t)
                        self._deliver(frame, r, t)
                    self._transmit(r, frame, t, ack=True)
                elif out == "Dropped":
                    self.stats.dropped += 1
                if not self.world.node_powered(self.number, n):
                    # sender died during its own airtime: it cannot hear the ack
                    self.world.cancel(self._ack_timer[n])
                    self._ack_timer[n] = None
                    if out == "Ok":
                        self.queues[n].popleft()
                    self._drop_queue(n, t)
                else:
                    self._restore_state(n, t)
        self._prune()
        waiting, self.waiters = self.waiters, []
        for m in waiting:
            if self.phase[m] == "sense":
                self._access(m, t)

    def _drop_queue(self, n, t):
        """A node without power abandons everything it had queued."""
        while self.queues[n]:
            frame = self.queues[n].popleft()
            self.stats.discarded += 1
            self.world.trace.add_event(t, "FrameDiscarded", f"net {self.number} frame {frame.frame_id} sender off")
        self.retries[n] = 0
        self.phase[n] = "idle"
        self._restore_state(n, t)

    def _restore_state(self, n, t):
        if any(tx.src == n for tx in self.ongoing):
            return
        self._set_state(n, "WAITING" if self.queues[n] else "IDLE", t)

    def _next(self, n, t):
        self.queues[n].popleft()
        self.retries[n] = 0
        self.phase[n] = "idle"
        if self.queues[n]:
            self._access(n, t)
        else:
            self._restore_state(n, t)


def csma_ca_transmit(medium: WirelessMedium, frame: Frame, t: float):
    return medium.offer(frame, t)


class UltrasoundMedium(Medium):
    """Broadcast pings; arrival after distance / speed of sound, within ping_length only."""

    def __init__(self, world, cfg: UltrasoundConfig):
        super().__init__(world, cfg)
        self.positions: dict[int, tuple] = {}
        self.arrivals: list[tuple] = []  # (frame_id, src, dst, send_time, arrival, distance)

    def attach(self, node_number, position=None):
        super().attach(node_number)
        if position is None:
            raise MissingPosition(f"node {node_number} on ultrasound network {self.number} has no position")
        self.positions[node_number] = tuple(position)

    def offer(self, frame: Frame, t: float):
        self._accept(frame, t)
        for dst, arrival, d in ultrasound_send(self.positions, frame.src, self.cfg, t):
            self.world.schedule(arrival, EventKind.Custom, self.target, (frame, dst, t, d))
        return frame

    def handle(self, ev):
        frame, dst, sent, d = ev.payload
        self.arrivals.append((frame.frame_id, frame.src, dst, sent, ev.fire_time, d))
        self.stats.delivered += 1
        self.stats.delivered_bits += frame.size
        self.stats.latencies.append(ev.fire_time - sent)
        self._deliver(frame, dst, ev.fire_time)

    def summary(self):
        s = super().summary()
        # one offered ping can reach several nodes
        s["delivery_ratio"] = None
        return s


def ultrasound_send(positions: dict, sender: int, cfg: UltrasoundConfig, t: float):
    """(receiver, arrival time, distance) for every node within ping_length."""
    src = positions.get(sender)
    if src is None:
        raise MissingPosition(f"node {sender} has no position")
    out = []
    for n in sorted(positions):
        if n == sender:
            continue
        d = distance(src, positions[n])
        if d <= cfg.ping_length:
            out.append((n, t + d / cfg.speed_of_sound, d))
    return out
