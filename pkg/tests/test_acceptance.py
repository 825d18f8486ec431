"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py`` for just the summary lines.
"""
import itertools
import math
import random
import sys
import tempfile
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chronosim.bench import benchmark_dcservo  # noqa: E402
from chronosim.engine import RngStream  # noqa: E402
from chronosim.errors import Divergent  # noqa: E402
from chronosim.kernel import response_time_fp  # noqa: E402
from chronosim.net.common import DelayModel, apply_loss, tx_duration  # noqa: E402
from chronosim.net.wired import NetworkConfig  # noqa: E402
from chronosim.net.wireless import (UltrasoundConfig, WirelessConfig, in_range, range_limit,  # noqa: E402
                                    tx_energy)
from chronosim.plant import LtiPlant, rk4_step  # noqa: E402
from chronosim.runner import run_scenario  # noqa: E402
from chronosim.scenario import build_world, loads_scenario, scenario_from_dict  # noqa: E402
from chronosim.world import World  # noqa: E402

from conftest import Injector, bare_world, node, periodic  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


def _hyperperiod(tasks):
    return math.lcm(*[int(t.period) for t in tasks])


def _run_cpu(tasks, policy):
    w = World(0)
    k = w.add_node(node("cpu", 1, tasks, policy))
    w.run(_hyperperiod(tasks))
    return k


# -- criteria ---------------------------------------------------------------
# each returns (passed, detail)

def c01_fp_matches_rta():
    rng = random.Random(1)
    periods = [2, 3, 4, 5, 6, 8, 10, 12, 15, 20]
    checked = mismatches = 0
    while checked < 100:
        n = rng.randint(1, 5)
        ps = [rng.choice(periods) for _ in range(n)]
        cs = [rng.randint(1, max(1, p // 3)) for p in ps]
        prios = rng.sample(range(1, n + 1), n)
        tasks = [periodic(f"t{i}", c, p, prio=pr) for i, (c, p, pr) in enumerate(zip(cs, ps, prios))]
        try:
            r = response_time_fp(tasks)
        except Divergent:
            continue
        if any(ri > t.rel_deadline for ri, t in zip(r, tasks)):
            continue
        k = _run_cpu(tasks, "FP")
        checked += 1
        mismatches += [k.stats[t.name].max_response for t in tasks] != r
    return mismatches == 0, f"{checked} schedulable sets, {mismatches} mismatches"


def c02_edf_no_miss():
    rng = random.Random(2)
    periods = [4, 5, 8, 10, 20, 25, 40, 50, 100, 200]
    sets = misses = 0
    u_max = Fraction(0)
    while sets < 100:
        n = rng.randint(2, 6)
        ps = [rng.choice(periods) for _ in range(n)]
        cs = [rng.randint(1, p // 2) for p in ps]
        u = sum(Fraction(c, p) for c, p in zip(cs, ps))
        if u > Fraction(99, 100):
            continue
        tasks = [periodic(f"t{i}", c, p) for i, (c, p) in enumerate(zip(cs, ps))]
        k = _run_cpu(tasks, "EDF")
        sets += 1
        u_max = max(u_max, u)
        misses += sum(s.misses for s in k.stats.values())
    return misses == 0, f"{sets} sets, max U={float(u_max):.3f}, {misses} misses"


def c03_policy_differentiation():
    runs = {p: benchmark_dcservo(p) for p in ("FP", "DM", "EDF")}
    sched = {p: r["traces"]["schedule.csv"] for p, r in runs.items()}
    distinct = len(set(sched.values())) == 3
    ctl = {p: r["metrics"]["tasks"]["controller/control"]["deadline_misses"] for p, r in runs.items()}
    golden = all(sched[p] == (GOLDEN / f"dcservo_{p.lower()}_schedule.csv").read_text(encoding="utf-8")
                 for p in runs)
    ok = distinct and ctl["FP"] >= 1 and ctl["DM"] == 0 and ctl["EDF"] == 0 and golden
    return ok, f"distinct={distinct} control misses {ctl} golden={golden}"


def c04_network_timing():
    cfg = NetworkConfig("CSMA_CD", 1, 2, 1e6, 1000)
    exact = all(tx_duration(s, cfg) == max(s, 1000) / 1e6 for s in (1, 64, 800, 999, 1000, 1001, 1500, 12000))
    details = []
    ok = exact
    for payload in (800, 1500):
        w = bare_world(NetworkConfig("CSMA_CD", 1, 2, 1e6, 1000), [node("a", 1, networks=[1]),
                                                                   node("b", 2, networks=[1])])
        Injector(w, [(0.0, 1, 1, 2, payload)] * (10_000_000 // min(payload, 1000) + 100))
        w.run(10.0)
        done = sum(1 for r in w.networks[1].tx_log if r.end <= 10.0)
        thr = done * payload / 10.0
        want = 1e6 * payload / max(payload, 1000)
        ok = ok and abs(thr - want) <= 0.01 * want
        details.append(f"{payload}b: {thr:.0f}/{want:.0f} bit/s")
    return ok, f"tx_duration exact={exact}; " + ", ".join(details)


def c05_loss_statistics():
    inside = 0
    for seed in range(20):
        s = RngStream(seed, "net1.loss")
        drops = sum(not apply_loss(s, 0.3) for _ in range(10_000))
        inside += 2862 <= drops <= 3138
    return inside >= 19, f"{inside}/20 seeds within [2862, 3138]"


def c06_can_ordering():
    ids = [17, 3, 42, 8, 25]
    good = 0
    for perm in itertools.permutations(range(5)):
        nodes = [node(f"n{i}", i, networks=[1]) for i in range(1, 7)]
        w = bare_world(NetworkConfig("CAN", 1, 6, 1e6, 100), nodes)
        inj = Injector(w, [(0.0, 1, i + 1, 6, 100, ids[i]) for i in perm])
        w.run(0.01)
        cid = {f.frame_id: f.can_id for f in inj.frames}
        good += [cid[r.frame_id] for r in w.networks[1].tx_log] == sorted(ids)
    return good == 120, f"{good}/120 permutations in ascending can_id order"


def c07_retry_math():
    n = 10_000
    w = World(7)
    w.add_network(WirelessConfig(network_number=1, node_count=2, net_type="WLAN", loss_prob=0.5, retry_limit=3))
    w.add_node(node("a", 1, networks=[1], position=(0, 0)))
    w.add_node(node("b", 2, networks=[1], position=(5, 0)))
    Injector(w, [(0.0, 1, 1, 2, 500)] * n)
    w.run(1e6)
    ratio = w.networks[1].stats.delivered / n
    return abs(ratio - 0.9375) <= 0.0073, f"delivery ratio {ratio:.4f} (N={n})"


def c08_range_boundary():
    rng = random.Random(8)
    worst = 0.0
    for _ in range(50):
        p, thr, alpha = rng.uniform(1, 100), rng.uniform(1e-4, 0.5), rng.uniform(2, 4)
        cfg = WirelessConfig(net_type="WLAN", network_number=1, node_count=2, transmit_power=p,
                             signal_threshold=thr, pathloss_exp=alpha)
        cut = range_limit(p, thr, alpha)
        lo, hi = 0.0, 4 * cut
        while hi - lo > 1e-12 * cut:
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if in_range((0.0, 0.0), (mid, 0.0), cfg) else (lo, mid)
        worst = max(worst, abs(lo - cut) / cut)
    return worst <= 1e-9, f"worst relative gap {worst:.2e} over 50 radios"


def c09_ultrasound_latency():
    rng = random.Random(9)
    w = World(9)
    cfg = UltrasoundConfig(1, 8, ping_length=30.0, speed_of_sound=343.0)
    w.add_network(cfg)
    pos = {i: (rng.uniform(0, 40), rng.uniform(0, 40)) for i in range(1, 9)}
    for i, p in pos.items():
        w.add_node(node(f"n{i}", i, networks=[1], position=p))
    Injector(w, [(round(rng.uniform(0, 1), 6), 1, rng.randint(1, 8), None, 64) for _ in range(40)])
    w.run(2.0)
    arr = w.networks[1].arrivals
    worst = max(abs((a[4] - a[3]) - math.dist(pos[a[1]], pos[a[2]]) / 343.0) for a in arr)
    return bool(arr) and worst <= 1e-12, f"{len(arr)} arrivals, worst error {worst:.1e} s"


def _energy_world(capacity, seed=0, loss=0.0):
    d = {"duration": 0.1, "root_seed": seed, "batteries": [{"id": "b", "capacity": capacity},
                                                          {"id": "s", "capacity": 1.0}],
         "networks": [{"kind": "wireless", "net_type": "WLAN", "network_number": 1, "node_count": 2,
                       "cw_min_slots": 1, "loss_prob": loss}],
         "nodes": [{"name": "mote", "node_number": 1, "position": [0, 0], "battery": "b", "networks": [1],
                    "tasks": [{"name": "tx", "activation": {"type": "periodic", "period": 0.01},
                               "rel_deadline": 0.01, "exec_time": {"type": "constant", "c": 0.001},
                               "action": {"type": "send", "network": 1, "dest": 2, "size": 1000}}]},
                   {"name": "sink", "node_number": 2, "position": [5, 0], "battery": "s", "networks": [1],
                    "tasks": []}]}
    s = scenario_from_dict(d)
    w = build_world(s)
    w.run(s.duration)
    return w


def c10_energy_ledger():
    # ledger: lossy link, ample batteries, acks charge the receiver
    w = _energy_world(1.0, seed=4, loss=0.3)
    log = w.networks[1].tx_log
    exact = True
    for name, num in (("mote", 1), ("sink", 2)):
        total = 0.0
        for r in log:
            if r.src == num:
                total += r.energy
        exact = exact and w.kernels[name].battery.consumed == total
    # depletion: 2.5 frames of energy dies on the third TxStart = 2T + C
    e = tx_energy(20.0, 1000 / 11e6)
    w = _energy_world(2.5 * e)
    predicted = 2 * 0.01 + 0.001
    died = [ev[0] for ev in w.trace.events if ev[1] == "BatteryDepleted"]
    sched_after = [r for r in w.trace.schedule if r[1] == "mote" and r[0] > predicted]
    net_after = [r for r in w.trace.network if r[2] == 1 and r[0] > predicted]
    energy_after = [r for r in w.trace.energy if r[1] == "mote" and r[0] > predicted]
    stops = (died == [pytest.approx(predicted, abs=1e-12)] and not sched_after and not energy_after
             and len(net_after) <= 1)
    return exact and stops, (f"drain==sum exact={exact}; depleted at {died} (predicted {predicted}), "
                             f"rows after: {len(sched_after) + len(net_after) + len(energy_after)}")


def c11_rk4_order():
    errs = []
    for h in (0.1, 0.05):
        p = LtiPlant([[-1.0]], [[0.0]], [[1.0]], [[0.0]], [1.0])
        for _ in range(round(1.0 / h)):
            rk4_step(p, h)
        errs.append(abs(p.x[0] - math.exp(-1.0)))
    ratio = errs[0] / errs[1]
    return 12 <= ratio <= 20, f"error ratio {ratio:.3f}"


def c12_monotone_degradation():
    seeds = range(1, 6)

    def mean_j(**kw):
        return sum(benchmark_dcservo("EDF", seed=s, **kw)["metrics"]["J"] for s in seeds) / len(seeds)

    base = mean_j()
    loss = [base] + [mean_j(loss_prob=p) for p in (0.2, 0.4, 0.6)]
    delay = [base] + [mean_j(delay_model=DelayModel.constant(d)) for d in (0.002, 0.005, 0.010)]
    ok = all(a <= b for a, b in itertools.pairwise(loss)) and all(a <= b for a, b in itertools.pairwise(delay))
    fmt = lambda xs: "[" + ", ".join(f"{x:.3f}" for x in xs) + "]"  # noqa: E731
    return ok, f"J vs loss {fmt(loss)}, J vs delay {fmt(delay)}"


def c13_determinism():
    data = resources.files("chronosim").joinpath("data")
    names = sorted(p.name for p in data.iterdir() if p.name.endswith(".json"))
    same = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            s = loads_scenario(data.joinpath(name).read_text(encoding="utf-8"))
            a = run_scenario(s, Path(tmp) / name / "a")
            b = run_scenario(s, Path(tmp) / name / "b")
            same.append(a["files"] == b["files"])
    return all(same), f"{sum(same)}/{len(names)} shipped scenarios byte-identical"


CRITERIA = [
    (1, "FP simulation equals response-time analysis", c01_fp_matches_rta),
    (2, "EDF meets all deadlines at U <= 0.99", c02_edf_no_miss),
    (3, "policy differentiation on the benchmark", c03_policy_differentiation),
    (4, "network timing and saturated CSMA/CD throughput", c04_network_timing),
    (5, "loss statistics", c05_loss_statistics),
    (6, "CAN arbitration order", c06_can_ordering),
    (7, "wireless retry math", c07_retry_math),
    (8, "radio range boundary", c08_range_boundary),
    (9, "ultrasound latency", c09_ultrasound_latency),
    (10, "energy ledger and depletion", c10_energy_ledger),
    (11, "RK4 order", c11_rk4_order),
    (12, "monotone degradation of J", c12_monotone_degradation),
    (13, "determinism of shipped scenarios", c13_determinism),
]


def _report(num, title, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'} {title}: {detail} ({time.perf_counter() - t0:.1f}s)"
    return ok, line


@pytest.mark.parametrize("num,title,fn", CRITERIA, ids=[f"c{n:02d}" for n, _, _ in CRITERIA])
def test_criterion(num, title, fn, capsys):
    ok, line = _report(num, title, fn)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [_report(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
