"""Trace rows and their CSV encoding.

Every trace file is UTF-8 CSV with a one-line header and ``\\n`` line
endings. Times are printed with 9 decimals; other reals with ``%.12g`` so
that reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedTrace

SCHEDULE_HEADER = ("time", "node", "task", "state")
NETWORK_HEADER = ("time", "network", "node", "state")
RESPONSE_HEADER = ("time", "reference", "output", "control")
ENERGY_HEADER = ("time", "node", "remaining_joules")
EVENT_HEADER = ("time", "kind", "detail")

HEADERS = {
    "schedule": SCHEDULE_HEADER,
    "network": NETWORK_HEADER,
    "response": RESPONSE_HEADER,
    "energy": ENERGY_HEADER,
    "events": EVENT_HEADER,
}

# offset added to the entity index when plotting stacked step traces
STATE_LEVEL = {"IDLE": 0.0, "READY": 0.25, "WAITING": 0.25, "RUNNING": 0.5, "SENDING": 0.5}


def fmt_time(t: float) -> str:
    return f"{t:.9f}"


def fmt_real(v: float) -> str:
    return f"{v:.12g}"


@dataclass
class TraceSet:
    schedule: list = field(default_factory=list)
    network: list = field(default_factory=list)
    response: dict = field(default_factory=dict)  # plant name -> rows
    energy: list = field(default_factory=list)
    events: list = field(default_factory=list)
    failed: str | None = None

    def add_schedule(self, t, node, task, state):
        self.schedule.append((t, node, task, state))

    def add_network(self, t, network, node, state):
        self.network.append((t, network, node, state))

    def add_response(self, plant, t, ref, y, u):
        self.response.setdefault(plant, []).append((t, ref, y, u))

    def add_energy(self, t, node, remaining):
        self.energy.append((t, node, remaining))

    def add_event(self, t, kind, detail=""):
        self.events.append((t, kind, detail))

    def events_of(self, kind):
        return [e for e in self.events if e[1] == kind]


def _encode(rows, header, real_cols=()):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for i, v in enumerate(row):
            if i == 0:
                cells.append(fmt_time(v))
            elif i in real_cols:
                cells.append(fmt_real(v))
            else:
                cells.append(_cell(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _cell(v):
    s = str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def encode_schedule(rows):
    return _encode(rows, SCHEDULE_HEADER)


def encode_network(rows):
    return _encode(rows, NETWORK_HEADER)


def encode_response(rows):
    return _encode(rows, RESPONSE_HEADER, real_cols=(1, 2, 3))


def encode_energy(rows):
    return _encode(rows, ENERGY_HEADER, real_cols=(2,))


def encode_events(rows):
    return _encode(rows, EVENT_HEADER)


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_trace(path) -> tuple[str, list[dict]]:
    """Parse a trace file, returning (kind, rows) where kind is a HEADERS key."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise MalformedTrace(f"{path}: not UTF-8") from exc
    return parse_trace(text, str(path))


def parse_trace(text: str, name: str = "<trace>") -> tuple[str, list[dict]]:
    lines = text.split("\n")
    if not lines or not lines[0]:
        raise MalformedTrace(f"{name}: missing header")
    header = tuple(lines[0].split(","))
    kind = next((k for k, h in HEADERS.items() if h == header), None)
    if kind is None:
        raise MalformedTrace(f"{name}: unrecognised header {lines[0]!r}")
    rows = []
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise MalformedTrace(f"{name}:{lineno}: expected {len(header)} fields, got {len(rec)}")
        row = dict(zip(header, rec))
        try:
            row["time"] = float(row["time"])
            if kind == "response":
                for k in ("reference", "output", "control"):
                    row[k] = float(row[k])
            elif kind == "energy":
                row["remaining_joules"] = float(row["remaining_joules"])
        except ValueError as exc:
            raise MalformedTrace(f"{name}:{lineno}: {exc}") from exc
        if kind in ("schedule", "network") and row["state"] not in STATE_LEVEL:
            raise MalformedTrace(f"{name}:{lineno}: unknown state {row['state']!r}")
        rows.append(row)
    return kind, rows
