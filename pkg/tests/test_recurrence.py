import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurlab import interval_maps as im
from recurlab import recurrence as rc
from recurlab import rng
from recurlab.billiard import default_table
from recurlab.errors import DomainError, EmptySeriesError

TENT = im.TentMap()
GAUSS = im.GaussMap()
TABLE = default_table()


class ScriptedSystem:
    """Plays back a fixed distance sequence, for tracker-level tests."""

    dim_coeff = 1.0

    def __init__(self, distances):
        self.distances = list(distances)

    def advance(self, k):
        return k + 1

    def distance(self, _x, k):
        return self.distances[k - 1]


# ---------------------------------------------------------------------------
# tracker
# ---------------------------------------------------------------------------

def test_tracker_example():
    t = rc.RthMinTracker(2)
    for i, d in enumerate([0.5, 0.2, 0.4, 0.1], start=1):
        t.feed(d, i)
    assert t.kth(2) == 0.2
    assert t.kth(1) == 0.1


def test_tracker_running_minimum():
    t = rc.RthMinTracker(1)
    stream = rng.uniform_block(5, 0, 200)
    for i, d in enumerate(stream, start=1):
        t.feed(float(d), i)
        assert t.kth(1) == stream[:i].min()


def test_tracker_vs_sorting_exhaustive():
    u = rng.uniform_block(7, 0, 10**4)
    # inject duplicates and infinities
    stream = np.where(u < 0.01, 0.25, u)
    stream = np.where(u > 0.995, np.inf, stream)
    for r in (1, 2, 3, 5, 8):
        t = rc.RthMinTracker(r)
        for i, d in enumerate(stream, start=1):
            t.feed(float(d), i)
        finite = np.sort(stream[np.isfinite(stream)])
        assert [e[0] for e in t.entries] == list(finite[:r])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=10, allow_nan=False),
                max_size=60),
       st.integers(min_value=1, max_value=8))
def test_tracker_property(xs, r):
    t = rc.RthMinTracker(r)
    for i, d in enumerate(xs, start=1):
        t.feed(d, i)
    assert [e[0] for e in t.entries] == sorted(xs)[:r]
    times = [e[1] for e in t.entries]
    assert all(xs[k - 1] == e[0] for k, e in zip(times, t.entries))


# ---------------------------------------------------------------------------
# lambda and series
# ---------------------------------------------------------------------------

def test_lambda_arithmetic_example():
    lam = rc.lambda_value(1e-6, 10**4, 1.0)
    want = (abs(math.log(1e-6)) - math.log(1e4)) / math.log(math.log(1e4))
    assert lam == pytest.approx(want, abs=1e-15)
    assert lam == pytest.approx(2.074, abs=1e-3)
    assert rc.lambda_value(0.0, 100, 1.0) == math.inf
    assert math.isnan(rc.lambda_value(math.inf, 100, 1.0))
    assert math.isnan(rc.lambda_value(0.5, 2, 1.0))


def test_geometric_grid():
    g = rc.geometric_grid(100, 10**5)
    assert g[0] == 100 and g[-1] == 10**5
    assert all(b > a for a, b in zip(g, g[1:]))
    with pytest.raises(DomainError):
        rc.geometric_grid(1, 100)


def test_track_scripted_second_minimum():
    sys_ = ScriptedSystem([0.5, 0.2, 0.4, 0.1])
    s = rc.track_hitting(sys_, None, 0, 4, 2, [3, 4])
    assert s.checkpoints[-1] == (4, 0.2, rc.lambda_value(0.2, 4, 1.0))


def test_grid_validation():
    sys_ = ScriptedSystem([0.5] * 10)
    with pytest.raises(DomainError):
        rc.track_hitting(sys_, None, 0, 10, 3, [2, 5])  # below r+1
    with pytest.raises(DomainError):
        rc.track_hitting(sys_, None, 0, 10, 1, [5, 20])  # beyond n_max
    with pytest.raises(DomainError):
        rc.track_hitting(sys_, None, 0, 10, 1, [5, 5])


def test_periodic_tent_recurrence_exact_zero():
    sysT = rc.IntervalSystem(TENT)
    s1 = rc.track_recurrence(sysT, Fraction(2, 5), 10, 1, [2, 6, 10])
    assert [d for (_, d, _) in s1.checkpoints] == [0.0, 0.0, 0.0]
    assert all(lam == math.inf for (_, _, lam) in s1.checkpoints[1:])
    s3 = rc.track_recurrence(sysT, Fraction(2, 5), 10, 3, [4, 6, 10])
    assert s3.checkpoints[0][1] == 0.4  # only two exact returns by n = 4
    assert s3.checkpoints[1][1] == 0.0  # third return at k = 6
    assert s3.checkpoints[2][1] == 0.0


def test_gauss_typical_orbit_positive_nonincreasing():
    sysG = rc.IntervalSystem(GAUSS)
    x0 = float(im.sample_invariant_many(GAUSS, 8, 1)[0])
    grid = rc.geometric_grid(10, 5000)
    s1 = rc.track_recurrence(sysG, x0, 5000, 1, grid)
    s2 = rc.track_recurrence(sysG, x0, 5000, 2, grid)
    d1 = [d for (_, d, _) in s1.checkpoints]
    d2 = [d for (_, d, _) in s2.checkpoints]
    assert all(d > 0 for d in d1)
    assert all(b <= a for a, b in zip(d1, d1[1:]))
    assert all(x2 >= x1 for x1, x2 in zip(d1, d2))  # d^(2) >= d^(1)


def test_lambda_consistency_recomputable():
    sysG = rc.IntervalSystem(GAUSS)
    s = rc.track_recurrence(sysG, 0.537, 3000, 2, rc.geometric_grid(50, 3000))
    for (n, d, lam) in s.checkpoints + s.updates:
        if math.isfinite(lam):
            assert lam == pytest.approx(
                rc.lambda_value(d, n, 1.0), abs=1e-12)


def test_hitting_equals_recurrence_at_same_point():
    sysG = rc.IntervalSystem(GAUSS)
    grid = rc.geometric_grid(10, 2000)
    a = rc.track_recurrence(sysG, 0.3514, 2000, 2, grid)
    b = rc.track_hitting(sysG, 0.3514, 0.3514, 2000, 2, grid)
    assert a.checkpoints == b.checkpoints
    assert a.updates == b.updates


def test_limsup_estimate():
    s = rc.LogLawSeries(r=1, dim_coeff=1.0,
                        checkpoints=[(10, 0.1, 0.3), (20, 0.05, 0.9),
                                     (40, 0.05, 0.7)])
    assert rc.limsup_estimate(s, 10).value == 0.9
    assert rc.limsup_estimate(s, 40).value == 0.7
    with pytest.raises(EmptySeriesError):
        rc.limsup_estimate(s, 100)
    merged = rc.merge_limsups([rc.limsup_estimate(s, 10),
                               rc.limsup_estimate(s, 40)])
    assert merged.value == 0.9 and merged.per_orbit == [0.9, 0.7]


def test_limsup_uses_update_times():
    s = rc.LogLawSeries(r=1, dim_coeff=1.0,
                        checkpoints=[(100, 0.5, 0.1)],
                        updates=[(57, 0.001, 1.4)])
    assert rc.limsup_estimate(s, 10).value == 1.4
    assert rc.limsup_estimate(s, 60).value == 0.1  # update before cutoff


# ---------------------------------------------------------------------------
# return times
# ---------------------------------------------------------------------------

def test_min_return_time_periodic():
    sysT = rc.IntervalSystem(TENT)
    assert rc.min_return_time(sysT, Fraction(2, 5), 0.01, 100) == 2
    assert rc.min_return_time(sysT, Fraction(2, 5), 2.0, 100) == 1  # rho > diam


def _doubling_symbolic_return(x: Fraction, depth: int, n_max: int):
    """Exhaustive oracle: first k with |x - T^k x| < 2^-depth via exact
    rational iteration of the doubling map."""
    y = x
    for k in range(1, n_max + 1):
        y = y * 2 - int(y * 2 >= 1)
        if abs(x - y) < Fraction(1, 2**depth):
            return k
    return None


def test_min_return_doubling_vs_symbolic_oracle():
    sysD = rc.IntervalSystem(im.DoublingMap())
    for den, depth in [(63, 8), (2**9 - 1, 7), (151, 10)]:
        x = Fraction(1, den)
        want = _doubling_symbolic_return(x, depth, 500)
        got = rc.min_return_time(sysD, x, 2.0**-depth, 500)
        assert got == want


def test_diophantine_profile_periodic_slope_zero():
    sysT = rc.IntervalSystem(TENT)
    prof = rc.diophantine_profile(sysT, Fraction(2, 5),
                                  [0.3, 0.1, 0.01, 0.001], 100)
    assert all(tau == 2 for (_, tau) in prof.points)
    assert prof.slope == pytest.approx(0.0, abs=1e-12)


def test_diophantine_profile_single_rho():
    sysT = rc.IntervalSystem(TENT)
    prof = rc.diophantine_profile(sysT, Fraction(2, 5), [0.1], 100)
    assert prof.slope is None and len(prof.points) == 1


def test_diophantine_profile_typical_positive_slope():
    sysG = rc.IntervalSystem(GAUSS)
    x0 = float(im.sample_invariant_many(GAUSS, 77, 1)[0])
    grid = [2.0**-k for k in range(3, 11)]
    prof = rc.diophantine_profile(sysG, x0, grid, 10**5)
    assert prof.slope is not None and prof.slope > 0


def test_diophantine_grid_validation():
    sysT = rc.IntervalSystem(TENT)
    with pytest.raises(DomainError):
        rc.diophantine_profile(sysT, 0.3, [0.1, 0.2], 100)
    with pytest.raises(DomainError):
        rc.diophantine_profile(sysT, 0.3, [0.1, -0.2], 100)


# ---------------------------------------------------------------------------
# ensembles vs scalar paths
# ---------------------------------------------------------------------------

def test_interval_ensemble_matches_scalar_gauss():
    grid = rc.geometric_grid(10, 4000)
    res = rc.interval_ensemble(GAUSS, [0, 1, 2, 3], 999, 4000, [1, 2], grid)
    for orbit in (0, 3):
        seed = rng.split_seed(999, orbit)
        start = float(GAUSS.sample_from_uniform(rng.uniform(seed, 0)))
        ref = rc.track_recurrence(rc.IntervalSystem(GAUSS), start, 4000, 2, grid)
        assert res[orbit][2].checkpoints == ref.checkpoints
        assert res[orbit][2].updates == ref.updates


def test_billiard_ensemble_matches_scalar():
    grid = rc.geometric_grid(10, 300)
    res = rc.billiard_ensemble(TABLE, [0, 1], 4242, 300, [1], grid)
    st = rc._billiard_start(TABLE, rng.split_seed(4242, 1))
    ref = rc.track_recurrence(rc.BilliardSystem(TABLE), st, 300, 1, grid)
    got = res[1][1].checkpoints
    for (n1, d1, l1), (n2, d2, l2) in zip(got, ref.checkpoints):
        assert n1 == n2 and d1 == pytest.approx(d2, abs=1e-12)


def test_ensemble_block_size_invariance():
    grid = rc.geometric_grid(10, 3000)
    seeds = [rng.split_seed(5, i) for i in range(4)]
    a = rc.track_ensemble(
        rc.TapeDistanceStream("tent", seeds, 3000), 3000, [1, 2], 1.0, grid,
        block=64)
    b = rc.track_ensemble(
        rc.TapeDistanceStream("tent", seeds, 3000), 3000, [1, 2], 1.0, grid,
        block=997)
    for o in range(4):
        for r in (1, 2):
            assert a[o][r].checkpoints == b[o][r].checkpoints
            assert a[o][r].updates == b[o][r].updates


def test_hitting_ensemble_uses_fixed_target():
    grid = rc.geometric_grid(10, 2000)
    res = rc.interval_ensemble(GAUSS, [0, 1], 31, 2000, [1], grid,
                               mode="hitting", target=0.25)
    seed = rng.split_seed(31, 0)
    start = float(GAUSS.sample_from_uniform(rng.uniform(seed, 0)))
    ref = rc.track_hitting(rc.IntervalSystem(GAUSS), 0.25, start, 2000, 1, grid)
    assert res[0][1].checkpoints == ref.checkpoints


def test_statistical_log_law_band_quick():
    # mini version of the acceptance band at n = 1e5 with 16 orbits
    grid = rc.geometric_grid(100, 10**5)
    for m in (TENT, GAUSS):
        res = rc.interval_ensemble(m, range(16), 2025, 10**5, [1], grid)
        ratios = [abs(math.log(res[o][1].checkpoints[-1][1])) / math.log(10**5)
                  for o in range(16)]
        assert 0.7 <= float(np.median(ratios)) <= 1.4


def test_streaming_storage_independent_of_n_max():
    # tracker state is r entries; stored rows scale with the checkpoint
    # grid and the (logarithmic) number of record updates, not with n_max
    grid = rc.geometric_grid(100, 10**5)
    res = rc.interval_ensemble(GAUSS, [0], 3, 10**5, [2], grid)
    s = res[0][2]
    assert len(s.checkpoints) == len(grid)
    assert len(s.updates) <= 120
