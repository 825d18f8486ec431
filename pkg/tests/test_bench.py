import json
from pathlib import Path

import pytest

from chronosim.bench import benchmark_dcservo, dcservo_scenario, load_benchmark
from chronosim.net.common import DelayModel
from regen_golden import POLICIES, golden_summary

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def runs():
    return {pol: benchmark_dcservo(pol) for pol in POLICIES}


@pytest.mark.parametrize("pol", POLICIES)
def test_schedule_matches_golden(runs, pol):
    expected = (GOLDEN / f"dcservo_{pol.lower()}_schedule.csv").read_text(encoding="utf-8")
    assert runs[pol]["traces"]["schedule.csv"] == expected


@pytest.mark.parametrize("pol", POLICIES)
def test_summary_matches_golden(runs, pol):
    expected = json.loads((GOLDEN / f"dcservo_{pol.lower()}_summary.json").read_text())
    got = golden_summary(runs[pol]["metrics"])
    assert got["tasks"] == expected["tasks"]
    for k in ("deadline_misses", "delivery_ratio", "latency_mean", "latency_p95", "J"):
        assert got[k] == pytest.approx(expected[k], rel=1e-9, abs=1e-12), k


def test_policies_give_distinct_schedules(runs):
    s = [runs[p]["traces"]["schedule.csv"] for p in POLICIES]
    assert len(set(s)) == 3


def test_fp_misses_control_deadlines_dm_edf_do_not(runs):
    fp = runs["FP"]["metrics"]["tasks"]
    assert fp["controller/control"]["deadline_misses"] >= 1
    for pol in ("DM", "EDF"):
        assert runs[pol]["metrics"]["deadline_misses"] == 0
    assert runs["FP"]["metrics"]["J"] > runs["EDF"]["metrics"]["J"]


def test_knobs_do_not_touch_shipped_copy():
    s = dcservo_scenario("FP", loss_prob=0.4, delay_model=DelayModel.constant(0.003), seed=5, duration=0.5)
    base = load_benchmark()
    assert s.networks[0].loss_prob == 0.4 and base.networks[0].loss_prob == 0.0
    assert s.root_seed == 5 and s.duration == 0.5
    assert all(k.delay is None for k in base.links)


def test_out_dir_traces_match_in_memory(tmp_path):
    a = benchmark_dcservo("EDF", duration=0.3, out_dir=tmp_path)
    b = benchmark_dcservo("EDF", duration=0.3)
    assert a["traces"] == b["traces"]
    assert (tmp_path / "manifest.json").exists()


@pytest.mark.slow
def test_heavy_loss_costs_more():
    for seed in range(5):
        good = benchmark_dcservo("EDF", loss_prob=0.0, seed=seed, duration=1.0)["metrics"]["J"]
        bad = benchmark_dcservo("EDF", loss_prob=0.9, seed=seed, duration=1.0)["metrics"]
        assert bad["J"] is not None and bad["J"] > good
