"""Continuous LTI plants integrated with fixed-step RK4 under zero-order hold."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import EventKind
from .errors import Diverged, GridMismatch, NonFinite, SampleOffGrid, ValidationError

DIVERGENCE_LIMIT = 1e12


@dataclass
class LtiPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x: np.ndarray
    u_hold: np.ndarray = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        m = self.B.shape[1]
        self.D = np.asarray(self.D, dtype=float).reshape(self.C.shape[0], m)
        self.x = np.asarray(self.x, dtype=float).reshape(-1).copy()
        if self.u_hold is None:
            self.u_hold = np.zeros(m)
        self.u_hold = np.asarray(self.u_hold, dtype=float).reshape(m).copy()
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.x.shape != (n,) or self.C.shape[1] != n:
            raise ValidationError("PlantDimensions", f"inconsistent shapes A{self.A.shape} B{self.B.shape} "
                                                     f"C{self.C.shape} x{self.x.shape}")

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    def output(self):
        return self.C @ self.x + self.D @ self.u_hold


def rk4_step(plant: LtiPlant, h: float) -> np.ndarray:
    """Advance ``plant.x`` by one classical RK4 step of size h with u held."""
    if not h > 0:
        raise ValueError("step must be > 0")
    A = plant.A
    bu = plant.B @ plant.u_hold
    x = plant.x
    k1 = A @ x + bu
    k2 = A @ (x + 0.5 * h * k1) + bu
    k3 = A @ (x + 0.5 * h * k2) + bu
    k4 = A @ (x + h * k3) + bu
    x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
        raise Diverged(f"state {x} exceeded {DIVERGENCE_LIMIT:g}")
    plant.x = x
    return x


def rk4_matrices(A, B, h: float):
    """Closed form of one RK4 step for x' = Ax + Bu with u held: ``x+ = Phi x + Gamma u``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    M = h * A
    M2 = M @ M
    M3 = M2 @ M
    eye = np.eye(n)
    phi = eye + M + M2 / 2 + M3 / 6 + M3 @ M / 24
    gamma = h * (eye + M / 2 + M2 / 6 + M3 / 24) @ np.asarray(B, dtype=float)
    return phi, gamma


def dc_servo_plant(a: float = 1.0, b: float = 1000.0, x0=(0.0, 0.0)) -> LtiPlant:
    """Servo b / (s^2 + a s): state (position, velocity), input voltage, output position."""
    return LtiPlant(A=[[0.0, 1.0], [0.0, -a]], B=[[0.0], [b]], C=[[1.0, 0.0]], D=[[0.0]], x=list(x0))


@dataclass
class ControlLaw:
    """Discrete PD: u = K e + K Td/h (e - e_prev)."""

    K: float
    Td: float
    h: float
    e_prev: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValidationError("BadControlPeriod", "PD sampling period must be > 0")
        if not math.isfinite(self.K):
            raise ValidationError("BadGain", "K must be finite")


def pd_control(e: float, law: ControlLaw) -> float:
    u = law.K * e + law.K * (law.Td / law.h) * (e - law.e_prev)
    law.e_prev = e
    return u


def sample_output(plant: LtiPlant, t: float, plant_time: float, port: int = 0) -> float:
    """Output ``port`` at ``t``; the plant must already have been integrated to t."""
    if abs(plant_time - t) > 1e-12 * max(1.0, abs(t)):
        raise SampleOffGrid(f"plant is at t={plant_time!r}, sample requested at t={t!r}")
    return float(plant.output()[port])


def actuate(plant: LtiPlant, value: float, port: int = 0) -> None:
    if not math.isfinite(value):
        raise NonFinite(f"actuation value {value!r}")
    plant.u_hold[port] = value


def quadratic_cost(ref_times, ref, out_times, out) -> float:
    """Trapezoid integral of (y - r)^2 over a shared sampling grid."""
    rt = np.asarray(ref_times, dtype=float)
    ot = np.asarray(out_times, dtype=float)
    if rt.shape != ot.shape or not np.array_equal(rt, ot):
        raise GridMismatch("reference and output traces use different grids")
    if len(rt) < 2:
        return 0.0
    e2 = (np.asarray(out, dtype=float) - np.asarray(ref, dtype=float)) ** 2
    return float(np.sum(0.5 * (e2[1:] + e2[:-1]) * np.diff(rt)))


@dataclass(frozen=True)
class Reference:
    """Reference signal: ``step`` (amplitude from t=0) or ``square`` (+-amplitude)."""

    kind: str = "step"
    amplitude: float = 1.0
    period: float = 1.0

    def __call__(self, t: float) -> float:
        if self.kind == "step":
            return self.amplitude
        if self.kind == "square":
            phase = math.floor(t / (self.period / 2) + 1e-9)
            return self.amplitude if phase % 2 == 0 else -self.amplitude
        raise ValidationError("UnknownReference", f"reference type {self.kind!r}")

    def to_dict(self):
        return {"type": self.kind, "amplitude": self.amplitude, "period": self.period}


class PlantRunner:
    """Plant living inside a simulation world.

    The plant is integrated lazily in nominal time: every read or actuation
    first brings the state forward. Full RK4 steps land on the grid
    ``k * h_int``; an actuation between grid points splits the step so the
    input change takes effect exactly at its instant.
    """

    def __init__(self, world, name, plant: LtiPlant, h_int: float, reference: Reference | None = None,
                 response_period: float | None = None, record: bool = True):
        self.world = world
        self.name = name
        self.plant = plant
        self.h = h_int
        self.reference = reference or Reference()
        self.response_period = response_period
        self.record = record
        self.t = 0.0
        self.k = 0
        self.target = f"plant:{name}"
        self.actuations: list[tuple] = []
        self._step_cache: dict[float, tuple] = {}
        world.register(self.target, self)

    def _step(self, h):
        # full grid steps hit the cache; split steps are rare
        mats = self._step_cache.get(h)
        if mats is None:
            mats = rk4_matrices(self.plant.A, self.plant.B, h)
            if len(self._step_cache) < 64:
                self._step_cache[h] = mats
        phi, gamma = mats
        x = phi @ self.plant.x + gamma @ self.plant.u_hold
        if not (np.abs(x).max() <= DIVERGENCE_LIMIT):
            raise Diverged(f"plant {self.name}: state {x} exceeded {DIVERGENCE_LIMIT:g}")
        self.plant.x = x

    def _grid(self, k):
        return k * self.h

    def advance_to(self, t: float):
        if t < self.t - 1e-12:
            raise ValueError(f"plant {self.name} cannot go back from {self.t} to {t}")
        while self.t < t:
            nxt = self._grid(self.k + 1)
            if abs(nxt - t) <= 1e-12 * max(1.0, t):
                t = nxt
            if nxt <= t:
                self._step(self.h if self.t == self._grid(self.k) else nxt - self.t)
                self.t = nxt
                self.k += 1
            else:
                self._step(t - self.t)
                self.t = t

    def read(self, t: float, port: int = 0) -> float:
        self.advance_to(t)
        return sample_output(self.plant, t, self.t, port)

    def write(self, t: float, value: float, port: int = 0):
        self.advance_to(t)
        actuate(self.plant, value, port)
        self.actuations.append((t, port, value))

    def start(self):
        if self.record and self.response_period:
            self.world.schedule(self.world.now, EventKind.PlantSample, self.target, 0)

    def handle(self, ev):
        if ev.kind is EventKind.PlantSample:
            t = ev.fire_time
            y = self.read(t)
            self.world.trace.add_response(self.name, t, self.reference(t), y, float(self.plant.u_hold[0]))
            i = ev.payload + 1
            self.world.schedule(i * self.response_period, EventKind.PlantSample, self.target, i)
        elif ev.kind is EventKind.Custom:
            port, value = ev.payload
            self.write(ev.fire_time, value, port)

    def cost(self) -> float:
        rows = self.world.trace.response.get(self.name, [])
        ts = [r[0] for r in rows]
        return quadratic_cost(ts, [r[1] for r in rows], ts, [r[2] for r in rows])


def grid_aligned(period: float, h: float) -> bool:
    q = period / h
    return abs(q - round(q)) <= 1e-9 * max(1.0, q) and round(q) >= 1
