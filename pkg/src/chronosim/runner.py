"""Run a scenario to completion and write its artifacts."""
from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

from . import traces as tr
from .errors import ChronosimError
from .scenario import Scenario, build_world

log = logging.getLogger(__name__)


def simulate(s: Scenario, seed: int | None = None, until: float | None = None):
    """Build and run the world; returns ``(world, error)``, error is None on success."""
    world = build_world(s, seed)
    t_end = s.duration if until is None else until
    try:
        world.run(t_end)
    except ChronosimError as exc:
        log.warning("simulation of %s failed: %s", s.name, exc)
        return world, exc
    return world, None


def metrics(world, s: Scenario, error=None) -> dict:
    tasks = {}
    misses = 0
    for name, k in world.kernels.items():
        for task, st in k.stats.items():
            tasks[f"{name}/{task}"] = {
                "jobs": st.jobs,
                "completed": st.completed,
                "deadline_misses": st.misses,
                "max_response": st.max_response,
            }
            misses += st.misses
    nets = {str(n): m.summary() for n, m in sorted(world.networks.items())}
    offered = sum(m.stats.offered for m in world.networks.values() if m.summary()["delivery_ratio"] is not None)
    delivered = sum(m.stats.delivered for m in world.networks.values() if m.summary()["delivery_ratio"] is not None)
    lat = sorted(x for m in world.networks.values() for x in m.stats.latencies)
    plants = {}
    for name, p in world.plants.items():
        plants[name] = {"J": p.cost() if p.response_period else None}
    energy = {name: k.battery.consumed for name, k in world.kernels.items() if k.battery is not None}
    first = next(iter(plants.values()), {"J": None})
    return {
        "scenario": s.name,
        "root_seed": world.root_seed,
        "status": "ok" if error is None else "error",
        "error": None if error is None else f"{type(error).__name__}: {error}",
        "deadline_misses": misses,
        "tasks": tasks,
        "delivery_ratio": delivered / offered if offered else None,
        "latency_mean": sum(lat) / len(lat) if lat else None,
        "latency_p95": lat[max(0, -(-95 * len(lat) // 100) - 1)] if lat else None,
        "networks": nets,
        "J": first["J"],
        "plants": plants,
        "energy_consumed": energy,
    }


def trace_files(world, s: Scenario) -> dict[str, str]:
    """File name -> contents for every selected trace."""
    t = world.trace
    out = {}
    if s.outputs.schedule:
        out["schedule.csv"] = tr.encode_schedule(t.schedule)
    if s.outputs.network:
        out["network.csv"] = tr.encode_network(t.network)
    if s.outputs.response and s.plants:
        for i, p in enumerate(s.plants):
            fname = "response.csv" if i == 0 else f"response_{p.name}.csv"
            out[fname] = tr.encode_response(t.response.get(p.name, []))
    if s.outputs.energy and s.batteries:
        out["energy.csv"] = tr.encode_energy(t.energy)
    if s.outputs.events:
        out["events.csv"] = tr.encode_events(t.events)
    return out


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_scenario(s: Scenario, out_dir, seed: int | None = None, until: float | None = None,
                 plots: bool | None = None) -> dict:
    """Run ``s`` and write traces, ``summary.json`` and ``manifest.json`` into ``out_dir``.

    Returns the manifest. Simulation errors do not raise: partial traces are
    still written and the error is recorded in both summary and manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world, error = simulate(s, seed, until)
    files = trace_files(world, s)
    summary = metrics(world, s, error)
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    for name, text in files.items():
        tr.write_text(out / name, text)
    if s.outputs.plots if plots is None else plots:
        from .plots import render_plots

        csvs = [out / n for n in files if n.endswith(".csv") and n != "events.csv" and n != "energy.csv"]
        for p in render_plots(csvs, out):
            files[p.name] = p.read_text(encoding="utf-8")
    manifest = {
        "scenario": s.name,
        "root_seed": world.root_seed,
        "duration": s.duration if until is None else until,
        "status": summary["status"],
        "error": summary["error"],
        "files": [{"name": n, "sha256": _sha256(files[n].encode("utf-8"))} for n in sorted(files)],
    }
    tr.write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    manifest["summary"] = summary
    return manifest
