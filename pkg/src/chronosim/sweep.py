"""Parameter sweeps: one independent world per (value, seed) pair."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import UnknownParameter
from .runner import metrics, simulate
from .scenario import Scenario, scenario_from_dict, scenario_to_dict

COLUMNS = ("param", "value", "seed", "status", "deadline_misses", "delivery_ratio",
           "latency_mean", "latency_p95", "J", "energy_consumed")


def _resolve(d, path: str):
    """Return (container, key) for a dotted path like ``networks.0.loss_prob``."""
    parts = path.split(".")
    cur = d
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(cur, list):
            try:
                idx = int(part)
            except ValueError:
                raise UnknownParameter(path) from None
            if not -len(cur) <= idx < len(cur):
                raise UnknownParameter(path)
            key = idx
        elif isinstance(cur, dict):
            if part not in cur:
                raise UnknownParameter(path)
            key = part
        else:
            raise UnknownParameter(path)
        if last:
            return cur, key
        cur = cur[key]
    raise UnknownParameter(path)


def set_parameter(s: Scenario, path: str, value) -> Scenario:
    """Copy of ``s`` with the dotted ``path`` set to ``value`` (revalidated)."""
    d = scenario_to_dict(s)
    container, key = _resolve(d, path)
    container[key] = value
    return scenario_from_dict(d)


def parse_value(text: str):
    """CLI values are JSON when they parse as JSON, plain strings otherwise."""
    try:
        return json.loads(text)
    except ValueError:
        return text


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _one(job):
    s, path, value, seed = job
    world, error = simulate(s, seed)
    m = metrics(world, s, error)
    return {
        "param": path, "value": json.dumps(value), "seed": seed, "status": m["status"],
        "deadline_misses": m["deadline_misses"], "delivery_ratio": m["delivery_ratio"],
        "latency_mean": m["latency_mean"], "latency_p95": m["latency_p95"], "J": m["J"],
        "energy_consumed": sum(m["energy_consumed"].values()) if m["energy_consumed"] else None,
    }


def sweep(base: Scenario, param_path: str, values, seeds=1, workers: int = 1) -> list[dict]:
    """Run ``values x seeds``; ``seeds`` is a count (offsets from the base root seed) or a list.

    Rows come back in value-major, seed-minor order regardless of ``workers``.
    """
    _resolve(scenario_to_dict(base), param_path)
    seed_list = list(range(base.root_seed, base.root_seed + seeds)) if isinstance(seeds, int) else list(seeds)
    jobs = [(set_parameter(base, param_path, v), param_path, v, sd) for v in values for sd in seed_list]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, jobs))
    return [_one(j) for j in jobs]


def encode_table(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def write_table(rows, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(encode_table(rows))
