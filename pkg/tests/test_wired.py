import itertools
import math

import numpy as np
import pytest
from scipy import stats

from chronosim.engine import RngStream
from chronosim.errors import ValidationError
from chronosim.net.common import DelayModel, Frame, apply_loss, sample_delay, tx_duration
from chronosim.net.wired import NetworkConfig, can_arbitrate, tdma_owner

from conftest import Injector, bare_world, node, received


def cfg(kind="CSMA_CD", n=2, rate=1e6, min_frame=1000, loss=0.0, slot=None):
    return NetworkConfig(kind, 1, n, rate, min_frame, loss, slot)


def nodes(n):
    return [node(f"n{i}", i, networks=[1]) for i in range(1, n + 1)]


def run(kind, sends, n=2, t_end=1.0, seed=0, **kw):
    w = bare_world(cfg(kind, n, **kw), nodes(n), seed)
    inj = Injector(w, sends)
    w.run(t_end)
    return w, w.networks[1], inj


# -- timing and loss ------------------------------------------------------

@pytest.mark.parametrize("size,expected", [(500, 0.001), (2000, 0.002), (1000, 0.001)])
def test_tx_duration(size, expected):
    assert tx_duration(size, cfg()) == expected


def test_tx_duration_rejects_empty_frame():
    with pytest.raises(ValueError):
        tx_duration(0, cfg())


def test_loss_extremes():
    s = RngStream(0, "l")
    assert all(apply_loss(s, 0.0) for _ in range(1000))
    assert not any(apply_loss(s, 1.0) for _ in range(1000))


def test_loss_rate_and_independence():
    s = RngStream(11, "net1.loss")
    drops = np.array([not apply_loss(s, 0.3) for _ in range(10_000)], dtype=float)
    assert 2862 <= drops.sum() <= 3138
    x = drops - drops.mean()
    r1 = float(np.dot(x[:-1], x[1:]) / np.dot(x, x))
    assert abs(r1) <= 3 / math.sqrt(len(x))


def test_config_validation():
    with pytest.raises(ValidationError):
        cfg(rate=0)
    with pytest.raises(ValidationError):
        cfg(loss=1.5)
    with pytest.raises(ValidationError):
        cfg("TDMA")
    with pytest.raises(ValidationError):
        NetworkConfig("TOKEN_RING", 1, 2, 1e6, 100)


def test_loss_applied_at_tx_end_consumes_bandwidth():
    w, m, inj = run("CAN", [(0.0, 1, 1, 2, 1000)], loss=1.0)
    assert m.stats.dropped == 1 and m.tx_log[0].end == 0.001
    assert received(w, "n2", 1) == []


# -- CSMA/CD --------------------------------------------------------------

def test_single_sender_starts_immediately():
    w, m, inj = run("CSMA_CD", [(0.25, 1, 1, 2, 800)])
    f = inj.frames[0]
    assert f.tx_start == 0.25 and f.tx_end == 0.25 + 0.001
    assert received(w, "n2", 1) == [0]


def test_busy_medium_defers():
    w, m, inj = run("CSMA_CD", [(0.0, 1, 1, 2, 1000), (0.0004, 1, 2, 1, 1000)])
    a, b = inj.frames
    assert b.tx_start == a.tx_end == 0.001
    assert m.collisions == 0


def test_two_simultaneous_senders_collide_then_separate_half_the_time():
    distinct = 0
    seeds = 400
    for seed in range(seeds):
        w, m, inj = run("CSMA_CD", [(0.0, 1, 1, 2, 1000), (0.0, 1, 2, 1, 1000)], seed=seed, t_end=0.01)
        assert m.collisions >= 1
        starts = [r for r in w.trace.events if r[1] == "Collision"]
        assert starts[0][0] == 0.0
        if m.collisions == 1:
            distinct += 1
    # (k1, k2) uniform on {0,1}^2: distinct with probability 1/2
    p = distinct / seeds
    assert abs(p - 0.5) <= 3 * math.sqrt(0.25 / seeds)


def test_sixteen_collisions_discard(monkeypatch):
    w = bare_world(cfg(), nodes(2))
    m = w.networks[1]
    monkeypatch.setattr(m._backoff_rng, "integer", lambda lo, hi: 0)
    Injector(w, [(0.0, 1, 1, 2, 1000), (0.0, 1, 2, 1, 1000)])
    w.run(1.0)
    assert m.collisions == 16
    assert m.stats.discarded == 2
    assert len(w.trace.events_of("FrameDiscarded")) == 2


def test_backoff_window_grows_and_caps():
    w = bare_world(cfg(), nodes(2))
    m = w.networks[1]
    calls = []

    def spy(lo, hi):
        calls.append(hi)
        return 0

    m._backoff_rng.integer = spy
    Injector(w, [(0.0, 1, 1, 2, 1000), (0.0, 1, 2, 1, 1000)])
    w.run(1.0)
    per_node = calls[::2]
    assert per_node[:11] == [2 ** min(n, 10) - 1 for n in range(1, 12)]
    assert max(calls) == 1023


def test_saturated_throughput():
    rate, payload, min_frame = 1e6, 800, 1000
    n_frames = 10_100
    w, m, inj = run("CSMA_CD", [(0.0, 1, 1, 2, payload)] * n_frames, t_end=10.0, rate=rate, min_frame=min_frame)
    done = [r for r in m.tx_log if r.end <= 10.0]
    throughput = len(done) * payload / 10.0
    assert throughput == pytest.approx(rate * payload / max(payload, min_frame), rel=0.01)


# -- CAN ------------------------------------------------------------------

def _f(can_id, fid):
    return Frame(1, 2, 100, can_id=can_id, frame_id=fid)


def test_can_arbitrate_smallest():
    frames = [_f(5, 1), _f(2, 2), _f(9, 3)]
    assert can_arbitrate(frames).can_id == 2
    assert can_arbitrate([frames[0]]) is frames[0]
    assert can_arbitrate([]) is None


def test_can_nonpreemptive_then_priority():
    # id 9 starts alone; id 1 and id 5 arrive mid-transmission; 1 goes next
    sends = [(0.0, 1, 1, 4, 1000, 9), (0.0005, 1, 2, 4, 1000, 5), (0.0006, 1, 3, 4, 1000, 1)]
    w, m, inj = run("CAN", sends, n=4)
    order = [r.frame_id for r in m.tx_log]
    ids = {f.frame_id: f.can_id for f in inj.frames}
    assert [ids[i] for i in order] == [9, 1, 5]
    assert m.tx_log[1].start == 0.001


def test_can_default_id_is_node_number():
    w, m, inj = run("CAN", [(0.0, 1, 2, 1, 100), (0.0, 1, 1, 2, 100)])
    assert [f.can_id for f in inj.frames] == [2, 1]
    assert m.tx_log[0].src == 1


def test_can_order_all_permutations_of_six():
    ids = [13, 4, 8, 1, 21, 6]
    for perm in itertools.permutations(range(6)):
        if perm[0] % 2:  # half of the 720 keeps this quick; ordering is symmetric anyway
            continue
        sends = [(0.0, 1, i + 1, 7, 100, ids[i]) for i in perm]
        w, m, inj = run("CAN", sends, n=7, t_end=0.01)
        cid = {f.frame_id: f.can_id for f in inj.frames}
        assert [cid[r.frame_id] for r in m.tx_log] == sorted(ids)


# -- TDMA -----------------------------------------------------------------

def test_tdma_owner_examples():
    c = cfg("TDMA", n=3, slot=0.001)
    assert tdma_owner(0.0025, c) == 2
    assert tdma_owner(0.003, c) == 0
    assert all(tdma_owner(t, cfg("TDMA", n=1, slot=0.001)) == 0 for t in (0.0, 0.5, 7.25))


def test_tdma_waits_for_own_slot():
    # node 2 (index 1) offers at 0.0; its slot starts at 0.002
    w, m, inj = run("TDMA", [(0.0, 1, 2, 1, 1000)], n=2, slot=0.002)
    assert inj.frames[0].tx_start == 0.002


def test_tdma_frame_must_fit_in_slot():
    # 0.0015 into a 0.002 slot, 1 ms frame does not fit: next own slot at 0.004
    w, m, inj = run("TDMA", [(0.0015, 1, 1, 2, 1000)], n=2, slot=0.002)
    assert inj.frames[0].tx_start == 0.004


def test_tdma_oversized_frame_discarded():
    w, m, inj = run("TDMA", [(0.0, 1, 1, 2, 5000)], n=2, slot=0.002)
    assert m.stats.discarded == 1 and m.tx_log == []


# -- shared medium invariants --------------------------------------------

@pytest.mark.parametrize("kind", ["CSMA_CD", "CAN", "TDMA"])
def test_exclusivity_and_throughput_ceiling(kind):
    rng = np.random.default_rng(5)
    sends = [(float(rng.integers(0, 200)) * 1e-4, 1, int(rng.integers(1, 5)), 0, int(rng.integers(200, 1500)))
             for _ in range(300)]
    sends = [(t, net, src, (src % 4) + 1, size) for t, net, src, _, size in sends]
    w, m, inj = run(kind, sends, n=4, t_end=2.0, slot=0.002 if kind == "TDMA" else None, seed=2)
    log = sorted(m.tx_log, key=lambda r: r.start)
    for a, b in zip(log, log[1:]):
        assert a.end <= b.start + 1e-15
    for lo in np.arange(0.0, 0.5, 0.05):
        busy = sum(min(r.end, lo + 0.05) - max(r.start, lo) for r in log if r.start < lo + 0.05 and r.end > lo)
        assert busy <= 0.05 + 1e-12


# -- delay models ---------------------------------------------------------

def test_constant_and_uniform_delay():
    s = RngStream(0, "d")
    assert sample_delay(DelayModel.constant(0.002), s) == 0.002
    u = [sample_delay(DelayModel.uniform(0.001, 0.003), s) for _ in range(1000)]
    assert min(u) >= 0.001 and max(u) < 0.003


def test_markov_stationary_fraction():
    m = DelayModel.markov(0.1, 0.5, 0.001, 0.01)
    s = RngStream(4, "node2.delay")
    n = 60_000
    bad = sum(sample_delay(m, s) == 0.01 for _ in range(n))
    p = 0.1 / 0.6
    # samples are correlated; inflate sigma by the chain's (1+rho)/(1-rho), rho = 1 - p_gb - p_bg
    rho = 1 - 0.1 - 0.5
    sigma = math.sqrt(p * (1 - p) / n * (1 + rho) / (1 - rho))
    assert abs(bad / n - p) <= 3 * sigma


@pytest.mark.parametrize("model", [
    DelayModel.uniform(0.001, 0.003),
    DelayModel.empirical([0.0, 0.001, 0.002, 0.005], [0.2, 0.5, 0.3]),
])
def test_delay_matches_cdf_ks(model):
    s = RngStream(9, "ks")
    xs = np.array([sample_delay(model, s) for _ in range(10_000)])
    assert (xs >= 0).all()
    assert stats.kstest(xs, np.vectorize(model.cdf)).pvalue > 0.01


def test_delay_model_validation():
    with pytest.raises(ValidationError):
        DelayModel.empirical([0.0, 1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ValidationError):
        DelayModel.constant(-1.0)
    with pytest.raises(ValidationError):
        DelayModel.markov(1.5, 0.1, 0.0, 0.1)


@pytest.mark.parametrize("text,kind", [("const:0.002", "constant"), ("uniform:0.001,0.003", "uniform"),
                                       ("markov:0.1,0.5,0.001,0.01", "markov")])
def test_delay_parse(text, kind):
    assert DelayModel.parse(text).kind == kind
    assert DelayModel.parse("none") is None


def test_delay_dict_round_trip():
    m = DelayModel.empirical([0.0, 0.001, 0.002], [0.25, 0.75])
    assert DelayModel.from_dict(m.to_dict()) == m
