"""Event-driven simulation of the ranked fragment population.

Each fragment keeps its mass until an exponential clock of rate
model.total_rate rings, then splits by an independent draw from the model.
Fragments evolve independently, so the tree is traversed depth-first with
an explicit stack and per-fragment streams keyed by the genealogical path;
the realization is a pure function of (model, seed) and does not depend on
traversal order.

Fragments whose mass falls below eps_freeze at birth are frozen: they stop
splitting and their mass is tracked in a separate ledger so that
conservation can still be checked and estimator bias bounded.

A run can be instrumented with a barrier slope c (used by the truncated
martingale): every fragment then carries the running maximum of
log-mass + s*c over its completed ancestor reigns, so that after the run
any additive barrier level a can be tested without re-simulating.
"""

from bisect import bisect_left
import math

import numpy as np

from .errors import BudgetExceededError
from .streams import Stream, derive_key

DEFAULT_MAX_FRAGMENTS = 10_000_000


class PopulationSnapshot:
    """State of the live population at one observation time."""

    __slots__ = ("time", "log_masses", "frozen_mass", "frozen_count",
                 "event_count", "eps_freeze", "seed", "barrier_slope",
                 "barrier_stats")

    def __init__(self, time, log_masses, frozen_mass, frozen_count,
                 event_count, eps_freeze, seed, barrier_slope=None,
                 barrier_stats=None):
        self.time = time
        self.log_masses = log_masses          # sorted decreasing
        self.frozen_mass = frozen_mass
        self.frozen_count = frozen_count
        self.event_count = event_count
        self.eps_freeze = eps_freeze
        self.seed = seed
        self.barrier_slope = barrier_slope
        self.barrier_stats = barrier_stats    # aligned with log_masses

    @property
    def n_live(self):
        return len(self.log_masses)

    @property
    def total_mass(self):
        """Mass of the live (non-frozen) population."""
        return float(np.exp(self.log_masses).sum()) if self.n_live else 0.0

    def __repr__(self):
        return (f"PopulationSnapshot(t={self.time}, live={self.n_live}, "
                f"frozen_mass={self.frozen_mass:.3g})")


def simulate(model, t_end, snapshot_times, eps_freeze, seed, *,
             barrier_slope=None, max_fragments=DEFAULT_MAX_FRAGMENTS,
             initial_log_mass=0.0, start_time=0.0, root_key=None):
    """Run one population from a single fragment; returns snapshots in time order.

    eps_freeze is mandatory: without it a conservative model with a long
    horizon would create unboundedly many fragments.  If the run would
    create more than max_fragments fragments, BudgetExceededError is raised
    rather than silently truncating.

    root_key overrides the seed-derived stream key of the root fragment;
    it exists so a caller embedding sub-populations (the spine) can hand
    each shed fragment its own genealogical key.
    """
    if not 0.0 < eps_freeze < 1.0:
        raise ValueError(f"eps_freeze must be in (0, 1), got {eps_freeze}")
    if t_end < start_time:
        raise ValueError(f"t_end {t_end} precedes start time {start_time}")
    snaps = sorted(float(s) for s in snapshot_times)
    if snaps and (snaps[0] < start_time or snaps[-1] > t_end):
        raise ValueError(
            f"snapshot times must lie in [{start_time}, {t_end}], got {snaps}"
        )
    n_snaps = len(snaps)
    live_logs = [[] for _ in range(n_snaps)]
    live_stats = [[] for _ in range(n_snaps)] if barrier_slope is not None else None
    frozen_mass_bucket = [0.0] * (n_snaps + 1)
    frozen_count_bucket = [0] * (n_snaps + 1)
    event_bucket = [0] * (n_snaps + 1)

    log_eps = math.log(eps_freeze)
    rate = model.total_rate
    conservative = model.conservative
    slope = barrier_slope
    log = math.log
    sample_masses = model.sample_masses
    stream = Stream(0)

    if root_key is None:
        root_key = derive_key(seed, 0)
    created = 0
    # stack of (key, log_mass, birth_time, lineage_line_peak)
    stack = [(root_key, initial_log_mass, start_time, -math.inf)]
    if initial_log_mass < log_eps:
        stack.pop()
        created = 1
        i = bisect_left(snaps, start_time)
        frozen_mass_bucket[i] += math.exp(initial_log_mass)
        frozen_count_bucket[i] += 1

    while stack:
        key, lm, birth, peak = stack.pop()
        created += 1
        if created > max_fragments:
            raise BudgetExceededError(
                f"fragment budget {max_fragments} exceeded at t <= {t_end} "
                f"(eps_freeze={eps_freeze})"
            )
        stream.reset(key)
        death = birth + stream.exponential(rate)
        hi = bisect_left(snaps, death) if death <= t_end else n_snaps
        lo = bisect_left(snaps, birth)
        for i in range(lo, hi):
            live_logs[i].append(lm)
            if slope is not None:
                s = lm + snaps[i] * slope
                live_stats[i].append(s if s > peak else peak)
        if death > t_end:
            continue
        masses = sample_masses(stream)
        if conservative:
            total = 0.0
            for m in masses:
                total += m
            if abs(total - 1.0) > 1e-9:
                raise AssertionError(
                    f"conservative model produced split with mass {total}"
                )
        child_peak = peak
        if slope is not None:
            s = lm + death * slope
            if s > child_peak:
                child_peak = s
        spawn = stream.spawn_key
        event_bucket[bisect_left(snaps, death)] += 1
        for j, frac in enumerate(masses):
            clm = lm + log(frac)
            if clm < log_eps:
                created += 1
                i = bisect_left(snaps, death)
                frozen_mass_bucket[i] += math.exp(clm)
                frozen_count_bucket[i] += 1
            else:
                stack.append((spawn(j), clm, death, child_peak))

    out = []
    frozen_mass = 0.0
    frozen_count = 0
    event_count = 0
    for i, t in enumerate(snaps):
        frozen_mass += frozen_mass_bucket[i]
        frozen_count += frozen_count_bucket[i]
        event_count += event_bucket[i]
        lm = np.array(live_logs[i])
        order = np.argsort(-lm, kind="stable")
        lm = lm[order]
        stats = None
        if live_stats is not None:
            stats = np.array(live_stats[i])[order]
        out.append(PopulationSnapshot(
            time=t, log_masses=lm, frozen_mass=frozen_mass,
            frozen_count=frozen_count, event_count=event_count,
            eps_freeze=eps_freeze, seed=seed, barrier_slope=slope,
            barrier_stats=stats,
        ))
    return out


def empirical_moment(snapshot, theta):
    """sum of live masses^theta at the snapshot time.

    Frozen fragments are excluded; for theta > 1 on a conservative model the
    resulting downward bias of the mean is at most
    eps_freeze^(theta-1) * frozen_mass.
    """
    if snapshot.n_live == 0:
        return 0.0
    return float(np.exp(theta * snapshot.log_masses).sum())


def empirical_interval_count(snapshot, x, alpha, beta):
    """Number of live fragments with log-mass in [x + alpha, x + beta]."""
    if beta <= alpha:
        raise ValueError(f"need alpha < beta, got [{alpha}, {beta}]")
    lm = snapshot.log_masses
    return int(np.count_nonzero((lm >= x + alpha) & (lm <= x + beta)))
