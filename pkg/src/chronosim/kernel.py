"""Simulated real-time kernel node.

A :class:`Kernel` runs the jobs of its tasks on one processor under a
preemptive FP/RM/DM/EDF policy, charges context-switch overhead on every
switch-in, owns the node's receive buffers and is powered off when its
battery runs dry.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .engine import EventKind, RngStream
from .errors import Divergent, UnknownNetwork, ValidationError


class Policy(enum.Enum):
    FP = "FP"
    RM = "RM"
    DM = "DM"
    EDF = "EDF"

    @classmethod
    def parse(cls, v) -> "Policy":
        if isinstance(v, Policy):
            return v
        try:
            return cls(str(v).upper())
        except ValueError:
            raise ValidationError("UnknownPolicy", f"{v!r} is not one of FP, RM, DM, EDF") from None


@dataclass(frozen=True)
class ExecTimeModel:
    """Constant (lo == hi) or uniform [lo, hi) execution time."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo <= self.hi):
            raise ValidationError("BadExecTime", f"need 0 < lo <= hi, got ({self.lo}, {self.hi})")

    @classmethod
    def constant(cls, c):
        return cls(c, c)

    @classmethod
    def uniform(cls, lo, hi):
        return cls(lo, hi)

    @property
    def is_constant(self):
        return self.lo == self.hi

    def sample(self, stream: RngStream | None) -> float:
        if self.is_constant:
            return self.lo
        return stream.uniform(self.lo, self.hi)


@dataclass(frozen=True)
class Periodic:
    period: float
    first_release: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValidationError("BadPeriod", f"period must be > 0, got {self.period}")


@dataclass(frozen=True)
class EventTriggered:
    """Released by message arrival (``trigger="message"``) or at local timer instants."""

    trigger: str = "message"
    at: tuple = ()


@dataclass
class TaskSpec:
    name: str
    activation: Periodic | EventTriggered
    rel_deadline: float
    exec_time: ExecTimeModel
    fixed_priority: int = 1
    action: dict | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rel_deadline > 0:
            raise ValidationError("BadDeadline", f"task {self.name}: rel_deadline must be > 0")

    @property
    def periodic(self):
        return isinstance(self.activation, Periodic)

    @property
    def period(self):
        return self.activation.period if self.periodic else None


class JobState(enum.Enum):
    Ready = "Ready"
    Running = "Running"
    Blocked = "Blocked"
    Done = "Done"


@dataclass(eq=False)
class Job:
    task: TaskSpec
    task_index: int
    release_time: float
    abs_deadline: float
    remaining: float
    state: JobState = JobState.Ready
    seq: int = 0
    started: bool = False
    finish_time: float | None = None
    data: object = None
    missed: bool = False

    @property
    def response_time(self):
        return None if self.finish_time is None else self.finish_time - self.release_time


@dataclass(frozen=True)
class ClockModel:
    """Affine local clock: local = (1 + drift) * nominal + offset."""

    drift: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.drift > -1:
            raise ValidationError("BadClock", f"drift must be > -1, got {self.drift}")

    def local(self, t):
        return (1 + self.drift) * t + self.offset

    def nominal(self, local):
        return (local - self.offset) / (1 + self.drift)


def local_time(clock: ClockModel, t: float) -> float:
    return clock.local(t)


@dataclass
class Battery:
    capacity: float
    id: str = "battery"
    attached_node: str | None = None
    consumed: float = 0.0

    def __post_init__(self):
        if not self.capacity >= 0:
            raise ValidationError("BadBattery", f"capacity must be >= 0, got {self.capacity}")

    @property
    def remaining(self):
        return max(0.0, self.capacity - self.consumed)

    @property
    def depleted(self):
        return self.consumed >= self.capacity


def consume_energy(battery: Battery, j: float) -> float:
    """Drain up to ``j`` joules; the drain is floored at the remaining charge."""
    if j < 0:
        raise ValueError("energy must be nonnegative")
    if j > 0 and not battery.depleted:
        battery.consumed += min(j, battery.remaining)
        if battery.remaining == 0.0:
            battery.consumed = battery.capacity
    return battery.remaining


@dataclass
class NodeSpec:
    name: str
    node_number: int
    tasks: list
    policy: Policy = Policy.FP
    clock: ClockModel = field(default_factory=ClockModel)
    context_switch: float = 0.0
    battery: str | None = None
    msg_handlers: dict = field(default_factory=dict)  # network number -> task name
    position: tuple | None = None
    networks: tuple = ()

    def __post_init__(self):
        self.policy = Policy.parse(self.policy)
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValidationError("DuplicateTaskName", f"node {self.name}: task names must be unique")
        if self.context_switch < 0:
            raise ValidationError("BadContextSwitch", f"node {self.name}: context_switch < 0")
        for net, task in self.msg_handlers.items():
            spec = self.task(task)
            if spec is None:
                raise ValidationError("UnknownTask", f"node {self.name}: handler {task!r} for network {net} not found")
            if spec.periodic:
                raise ValidationError("HandlerNotEventTriggered", f"node {self.name}: handler {task!r} is periodic")

    def task(self, name):
        return next((t for t in self.tasks if t.name == name), None)

    def attached(self):
        return tuple(sorted(set(self.networks) | set(self.msg_handlers)))


def release_job(task: TaskSpec, t_release: float, stream: RngStream | None = None,
                task_index: int = 0, seq: int = 0) -> Job:
    c = task.exec_time.sample(stream)
    return Job(task, task_index, t_release, t_release + task.rel_deadline, c, JobState.Ready, seq)


def effective_priority(policy: Policy, job: Job, task: TaskSpec | None = None):
    """Sort key under ``policy``; the smaller key runs first."""
    task = task or job.task
    if policy is Policy.FP:
        k = task.fixed_priority
    elif policy is Policy.RM:
        # event-triggered tasks have no period; their deadline stands in
        k = task.period if task.periodic else task.rel_deadline
    elif policy is Policy.DM:
        k = task.rel_deadline
    else:
        k = job.abs_deadline
    return (k, job.task_index)


class Idle:
    def __repr__(self):
        return "Idle"


IDLE = Idle()


def pick_next(ready, policy: Policy, t: float | None = None):
    best = None
    best_key = None
    for job in ready:
        key = effective_priority(policy, job) + (job.seq,)
        if best_key is None or key < best_key:
            best, best_key = job, key
    return IDLE if best is None else best


def response_time_fp(tasks, policy: Policy = Policy.FP) -> list[float]:
    """Worst-case response times by fixed-point iteration.

    Tasks must be periodic with constant execution times; priorities come
    from ``policy`` (FP, RM or DM) with task index as the tie-break. Exact
    rational arithmetic is used so integer-valued inputs give exact results.
    Returns response times in input order; raises :class:`Divergent` for the
    first task whose iteration passes its relative deadline.
    """
    policy = Policy.parse(policy)
    if policy is Policy.EDF:
        raise ValueError("response_time_fp needs a fixed-priority policy")

    def key(i):
        t = tasks[i]
        if policy is Policy.FP:
            return (t.fixed_priority, i)
        if policy is Policy.RM:
            return (t.period, i)
        return (t.rel_deadline, i)

    for t in tasks:
        if not t.periodic or not t.exec_time.is_constant:
            raise ValueError(f"task {t.name}: periodic, constant-exec tasks only")
    order = sorted(range(len(tasks)), key=key)
    out = [0.0] * len(tasks)
    for rank, i in enumerate(order):
        c = Fraction(tasks[i].exec_time.lo)
        d = Fraction(tasks[i].rel_deadline)
        hp = [(Fraction(tasks[j].exec_time.lo), Fraction(tasks[j].period)) for j in order[:rank]]
        r = c
        while True:
            nxt = c + sum(math.ceil(r / tj) * cj for cj, tj in hp)
            if nxt > d:
                raise Divergent(tasks[i].name, float(nxt))
            if nxt == r:
                break
            r = nxt
        out[i] = float(r)
    return out


def _late(t: float, deadline: float) -> bool:
    # completion times are sums of float offsets; one-ulp overshoot is not a miss
    return t > deadline + 1e-12 * max(1.0, abs(deadline))


@dataclass
class TaskStats:
    jobs: int = 0
    completed: int = 0
    misses: int = 0
    max_response: float = 0.0
    responses: list = field(default_factory=list)


class Kernel:
    """Runtime state of one node inside a simulation world."""

    def __init__(self, world, spec: NodeSpec, battery: Battery | None = None):
        self.world = world
        self.spec = spec
        self.name = spec.name
        self.target = f"node:{spec.name}"
        self.battery = battery
        self.powered = True
        self.ready: list[Job] = []
        self.running: Job | None = None
        self.exec_start = 0.0
        self._done_event = None
        self._release_events: dict[int, int] = {}
        self._seq = 0
        self.actions: dict[str, object] = {}
        self.rx: dict[int, deque] = {n: deque() for n in spec.attached()}
        self.stats = {t.name: TaskStats() for t in spec.tasks}
        self.jobs: list[Job] = []
        self.keep_jobs = False
        self._state = {t.name: None for t in spec.tasks}
        self._exec_rng = world.rng(f"node.{spec.name}.exec")
        self.switches = 0
        world.register(self.target, self)

    # -- lifecycle -----------------------------------------------------

    def start(self):
        t0 = self.world.now
        for t in self.spec.tasks:
            self._emit(t0, t.name, "IDLE")
        for i, task in enumerate(self.spec.tasks):
            act = task.activation
            if isinstance(act, Periodic):
                k = 0
                while self._release_time(act, k) < t0:
                    k += 1
                self._schedule_release(i, k)
            elif act.trigger == "timer":
                for local in act.at:
                    tn = self.spec.clock.nominal(local)
                    if tn >= t0:
                        self.world.schedule(tn, EventKind.TimerExpiry, self.target, i)

    def _release_time(self, act: Periodic, k: int) -> float:
        return self.spec.clock.nominal(act.first_release + k * act.period)

    def _schedule_release(self, i, k):
        t = self._release_time(self.spec.tasks[i].activation, k)
        self._release_events[i] = self.world.schedule(t, EventKind.TaskRelease, self.target, (i, k))

    def handle(self, ev):
        kind = ev.kind
        if kind is EventKind.TaskRelease:
            i, k = ev.payload
            self._release_events.pop(i, None)
            if not self.powered:
                return
            self._schedule_release(i, k + 1)
            self.release(i, ev.fire_time)
        elif kind is EventKind.TimerExpiry:
            if self.powered:
                self.release(ev.payload, ev.fire_time)
        elif kind is EventKind.ExecDone:
            self._complete(ev.payload, ev.fire_time)
        elif kind is EventKind.BatteryDepleted:
            self._shutdown(ev.fire_time)
        else:
            raise ValueError(f"kernel {self.name} cannot handle {kind.name}")

    # -- jobs ----------------------------------------------------------

    def release(self, task_index: int, t: float) -> Job:
        task = self.spec.tasks[task_index]
        self._seq += 1
        job = release_job(task, t, self._exec_rng, task_index, self._seq)
        self.ready.append(job)
        self.stats[task.name].jobs += 1
        if self.keep_jobs:
            self.jobs.append(job)
        self.world.defer(self)
        return job

    def _complete(self, job: Job, t: float):
        if job is not self.running:
            return
        job.remaining = 0.0
        job.state = JobState.Done
        job.finish_time = t
        self.running = None
        self._done_event = None
        st = self.stats[job.task.name]
        st.completed += 1
        rt = t - job.release_time
        st.responses.append(rt)
        st.max_response = max(st.max_response, rt)
        if _late(t, job.abs_deadline) and not job.missed:
            job.missed = True
            st.misses += 1
            self.world.trace.add_event(t, "DeadlineMiss", f"{self.name}/{job.task.name} released {job.release_time:.9f}")
        action = self.actions.get(job.task.name)
        if action is not None:
            action.on_complete(self, job, t)
        self.world.defer(self)

    def end_instant(self, t: float):
        if not self.powered:
            return
        self.dispatch(t)
        self._emit_states(t)

    def dispatch(self, t: float):
        cands = self.ready + ([self.running] if self.running else [])
        nxt = pick_next(cands, self.spec.policy, t)
        if nxt is self.running or (nxt is IDLE and self.running is None):
            return
        cur = self.running
        if cur is not None:
            done = max(0.0, t - self.exec_start)
            cur.remaining = max(0.0, cur.remaining - done)
            cur.state = JobState.Ready
            self.world.cancel(self._done_event)
            self._done_event = None
            self.ready.append(cur)
            self.running = None
        if nxt is IDLE:
            return
        self.ready.remove(nxt)
        nxt.state = JobState.Running
        self.running = nxt
        self.switches += 1
        self.exec_start = t + self.spec.context_switch
        self._done_event = self.world.schedule(self.exec_start + nxt.remaining, EventKind.ExecDone, self.target, nxt)
        if not nxt.started:
            nxt.started = True
            action = self.actions.get(nxt.task.name)
            if action is not None:
                action.on_start(self, nxt, t)

    def task_state(self, task_index: int) -> str:
        if self.running is not None and self.running.task_index == task_index:
            return "RUNNING"
        if any(j.task_index == task_index for j in self.ready):
            return "READY"
        return "IDLE"

    def _emit(self, t, task, state):
        if self._state[task] != state:
            self._state[task] = state
            self.world.trace.add_schedule(t, self.name, task, state)

    def _emit_states(self, t):
        for i, task in enumerate(self.spec.tasks):
            self._emit(t, task.name, self.task_state(i))

    # -- messaging -----------------------------------------------------

    def send_msg(self, network: int, dest, payload, size: float, t: float, can_id=None):
        """Hand a frame to ``network``; returns the frame or None when the node is off."""
        if network not in self.rx:
            raise UnknownNetwork(f"node {self.name} is not attached to network {network}")
        if not self.powered:
            self.world.trace.add_event(t, "NodeOff", f"{self.name} send to {dest} on net {network} dropped")
            return None
        return self.world.send(network, self.spec.node_number, dest, payload, size, t, can_id=can_id)

    def deliver_msg(self, network: int, frame, t: float):
        if not self.powered:
            self.world.trace.add_event(t, "NodeOff", f"{self.name} dropped frame {frame.frame_id} from net {network}")
            return None
        self.rx.setdefault(network, deque()).append(frame.payload)
        handler = self.spec.msg_handlers.get(network)
        if handler is None:
            return None
        idx = next(i for i, tk in enumerate(self.spec.tasks) if tk.name == handler)
        return self.release(idx, t)

    def receive(self, network: int):
        buf = self.rx.get(network)
        return buf.popleft() if buf else None

    # -- power ---------------------------------------------------------

    def consume_energy(self, j: float, t: float) -> float:
        b = self.battery
        if b is None:
            return math.inf
        was_on = not b.depleted
        rem = consume_energy(b, j)
        if j > 0:
            self.world.trace.add_energy(t, self.name, rem)
        if was_on and b.depleted:
            self.powered = False
            self.world.schedule(t, EventKind.BatteryDepleted, self.target)
        return rem

    def _shutdown(self, t):
        self.powered = False
        self.world.trace.add_event(t, "BatteryDepleted", self.name)
        self.world.cancel(self._done_event)
        self._done_event = None
        for job in self.ready + ([self.running] if self.running else []):
            job.state = JobState.Done
        self.ready.clear()
        self.running = None
        for ev in self._release_events.values():
            self.world.cancel(ev)
        self._release_events.clear()
        for task in self.spec.tasks:
            self._emit(t, task.name, "IDLE")

    def finish(self, t_end: float):
        # overdue jobs still pending at the end count as misses
        pending = self.ready + ([self.running] if self.running else [])
        for job in pending:
            if self.powered and _late(t_end, job.abs_deadline) and not job.missed:
                job.missed = True
                self.stats[job.task.name].misses += 1
