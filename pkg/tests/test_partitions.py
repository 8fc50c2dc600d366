"""Exchangeable partitions, paintbox sampling, nested paths, tagged piece."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from homfrag.partitions import (
    PartitionOfN,
    block_frequency_estimates,
    paintbox,
    simulate_partition,
    simulate_subordinator,
    split_rate,
    tagged_xi,
)
from homfrag.streams import Stream


# --- PartitionOfN ------------------------------------------------------------


def test_canonical_labels():
    p = PartitionOfN([2, 2, 0, 1])
    assert list(p.assignment) == [0, 0, 1, 2]


def test_single_block_and_blocks_order():
    p = PartitionOfN.single_block(4)
    assert [b.tolist() for b in p.blocks()] == [[0, 1, 2, 3]]
    q = PartitionOfN([1, 0, 1, 2, 0])
    blocks = [b.tolist() for b in q.blocks()]
    assert blocks == [[0, 2], [1, 4], [3]]
    assert [min(b) for b in blocks] == sorted(min(b) for b in blocks)
    assert q.block_sizes().tolist() == [2, 2, 1]


def test_from_blocks_round_trip():
    blocks = [[0, 3], [1], [2, 4, 5]]
    p = PartitionOfN.from_blocks(blocks, 6)
    assert [b.tolist() for b in p.blocks()] == blocks


def test_restrict_prefix():
    p = PartitionOfN([0, 1, 0, 2, 1, 0])
    r = p.restrict(4)
    assert r.n == 4
    assert [b.tolist() for b in r.blocks()] == [[0, 2], [1], [3]]


def test_finer_than():
    coarse = PartitionOfN([0, 0, 0, 1, 1])
    fine = PartitionOfN([0, 0, 1, 2, 3])
    assert fine.finer_than(coarse)
    assert not coarse.finer_than(fine)
    assert coarse.finer_than(coarse)


def test_equality():
    assert PartitionOfN([5, 5, 9]) == PartitionOfN([0, 0, 1])
    assert PartitionOfN([0, 1]) != PartitionOfN([0, 0])


@given(st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=40))
@settings(max_examples=200, deadline=None)
def test_canonicalization_is_idempotent(assignment):
    p = PartitionOfN(assignment)
    q = PartitionOfN(p.assignment)
    assert p == q
    labels = list(p.assignment)
    seen = []
    for lab in labels:  # labels appear in first-use order 0,1,2,...
        if lab not in seen:
            assert lab == len(seen)
            seen.append(lab)


# --- paintbox -----------------------------------------------------------------


def test_paintbox_two_boxes_binomial():
    s = Stream(31)
    p = paintbox([0.5, 0.5], 2000, s)
    sizes = sorted(p.block_sizes(), reverse=True)
    assert sum(sizes) == 2000
    assert len(sizes) == 2
    # two-sided binomial bound, ~4 standard deviations
    assert abs(sizes[0] - 1000) < 4 * math.sqrt(2000 * 0.25)


def test_paintbox_dust_becomes_singletons():
    s = Stream(32)
    p = paintbox([0.3], 1000, s)
    sizes = sorted(p.block_sizes(), reverse=True)
    assert sum(sizes) == 1000
    assert sizes[0] == pytest.approx(300, abs=4 * math.sqrt(1000 * 0.21))
    assert all(sz == 1 for sz in sizes[1:])


def test_paintbox_deterministic():
    a = paintbox([0.6, 0.4], 100, Stream(9))
    b = paintbox([0.6, 0.4], 100, Stream(9))
    assert a == b


# --- split rates ----------------------------------------------------------------


def test_split_rate_matches_phi(ub_eval):
    assert split_rate(ub_eval, 2) == pytest.approx(ub_eval.phi(1.0), abs=1e-15)
    assert split_rate(ub_eval, 5) == pytest.approx(1.0 - 2.0 / 6.0, abs=1e-12)
    with pytest.raises(ValueError):
        split_rate(ub_eval, 1)
    with pytest.raises(ValueError):
        split_rate(ub_eval, 2.5)


# --- nested partition paths -------------------------------------------------------


def test_partition_path_is_nested(ub):
    for seed in range(30):
        path = simulate_partition(ub, 30, 2.0, seed)
        prev = None
        for t in (0.0, 0.5, 1.0, 1.5, 2.0):
            cur = path.partition_at(t)
            if prev is not None:
                assert cur.finer_than(prev)
            prev = cur
        assert path.partition_at(0.0) == PartitionOfN.single_block(30)


def test_partition_events_increasing_times(ub):
    path = simulate_partition(ub, 40, 3.0, 77)
    times = [ev.time for ev in path.events]
    assert times == sorted(times)
    assert all(0.0 < t <= 3.0 for t in times)


def test_first_split_time_distribution(ub, ub_eval):
    # the root block of n points refines at rate phi(n-1)
    n = 5
    rate = ub_eval.phi(float(n - 1))
    firsts = []
    for seed in range(2000):
        path = simulate_partition(ub, n, 50.0, seed)
        assert path.events, "full shatter horizon must produce events"
        firsts.append(path.events[0].time)
    d, pvalue = stats.kstest(firsts, stats.expon(scale=1.0 / rate).cdf)
    assert pvalue > 0.01


def test_tagged_block_shrinks(ub):
    path = simulate_partition(ub, 500, 2.0, 5)
    sizes = [path.tagged_block_size(t) for t in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert sizes[0] == 500
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    assert tagged_xi(path, 0.0) == 0.0
    assert tagged_xi(path, 2.0) == -math.log(sizes[-1] / 500)


def test_block_frequencies_sum_to_one(ub):
    path = simulate_partition(ub, 5000, 1.0, 8)
    entries = block_frequency_estimates(path, 1.0)
    total = sum(freq for _, freq in entries)
    assert total == pytest.approx(1.0, abs=1e-12)  # partitions cover all points
    sizes = [len(blk) for blk, _ in entries]
    assert sum(sizes) == 5000


def test_partition_determinism(ub):
    a = simulate_partition(ub, 25, 1.5, 123)
    b = simulate_partition(ub, 25, 1.5, 123)
    assert len(a.events) == len(b.events)
    for x, y in zip(a.events, b.events):
        assert x.time == y.time
        assert np.array_equal(x.elements, y.elements)
        assert np.array_equal(x.sub_assignment, y.sub_assignment)


# --- subordinator ------------------------------------------------------------------


def test_subordinator_path_value(ub):
    path = simulate_subordinator(ub, 3.0, 4)
    assert path.value(0.0) == 0.0
    vals = [path.value(t) for t in np.linspace(0.0, 3.0, 31)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        path.value(3.5)


def test_subordinator_dyadic_jumps_are_log2(dyadic):
    path = simulate_subordinator(dyadic, 5.0, 12)
    assert np.allclose(path.jump_sizes, math.log(2.0), atol=1e-15)


def test_subordinator_jump_count_poisson_mean(ub):
    counts = [len(simulate_subordinator(ub, 2.0, seed).jump_times)
              for seed in range(4000)]
    mean = np.mean(counts)
    se = np.std(counts, ddof=1) / math.sqrt(len(counts))
    assert abs(mean - 2.0) < 4 * se  # rate 1, horizon 2


def test_tagged_xi_close_to_subordinator_mean(ub):
    # law of large numbers at large n: one partition path per seed
    vals = [tagged_xi(simulate_partition(ub, 4000, 1.0, seed), 1.0)
            for seed in range(600)]
    ref = [simulate_subordinator(ub, 1.0, 10_000 + seed).value(1.0)
           for seed in range(6000)]
    # E xi(1) = phi'(0) = 0.5; four combined standard errors of slack
    assert abs(np.mean(vals) - np.mean(ref)) < 0.13
