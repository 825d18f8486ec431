"""The shipped DC-servo-over-WLAN benchmark.

Topology and task parameters live in ``data/dcservo.json``; this module only
applies the knobs that experiments vary (policy, loss, actuator delay, seed).
"""
from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path

from .kernel import Policy
from .net.common import DelayModel
from .runner import metrics, run_scenario, simulate, trace_files
from .scenario import Scenario, loads_scenario, validate

BENCHMARKS = ("dcservo",)


def load_benchmark(name: str = "dcservo") -> Scenario:
    if name not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")
    text = resources.files("chronosim").joinpath("data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return loads_scenario(text)


def dcservo_scenario(policy="EDF", loss_prob: float = 0.0, delay_model: DelayModel | None = None,
                     seed: int | None = None, duration: float | None = None) -> Scenario:
    s = copy.deepcopy(load_benchmark("dcservo"))
    pol = Policy.parse(policy)
    for node in s.nodes:
        node.policy = pol
    for net in s.networks:
        net.loss_prob = float(loss_prob)
    for link in s.links:
        if link.direction == "actuate":
            link.delay = copy.deepcopy(delay_model)
    if seed is not None:
        s.root_seed = int(seed)
    if duration is not None:
        s.duration = float(duration)
    validate(s)
    return s


def benchmark_dcservo(policy="EDF", loss_prob: float = 0.0, delay_model: DelayModel | None = None,
                      seed: int | None = None, duration: float | None = None, out_dir=None) -> dict:
    """Run the benchmark; returns ``{"metrics", "traces", "scenario"}``.

    With ``out_dir`` the run also writes its artifacts like ``run_scenario``
    and the manifest is included under ``"manifest"``.
    """
    s = dcservo_scenario(policy, loss_prob, delay_model, seed, duration)
    if out_dir is not None:
        manifest = run_scenario(s, out_dir)
        traces = {f["name"]: (Path(out_dir) / f["name"]).read_text(encoding="utf-8")
                  for f in manifest["files"] if f["name"].endswith(".csv")}
        return {"metrics": manifest["summary"], "traces": traces, "scenario": s, "manifest": manifest}
    world, error = simulate(s)
    return {"metrics": metrics(world, s, error), "traces": trace_files(world, s), "scenario": s}
