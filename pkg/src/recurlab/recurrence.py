"""Streaming r-th minimum hitting/recurrence distances and the
logarithm-law statistic lambda_n = (|ln d_n^(r)| - c ln n) / ln ln n.

Works generically over interval maps (c = 1) and billiards (c = 1/2)
through a small system adapter, plus vectorized ensemble drivers used by
the experiment runner.  The statistic is recorded on a sparse checkpoint
grid for storage, and additionally at every tracker-update time, where the
running maximum of lambda over n is attained (between updates d is frozen
and lambda is decreasing for n >= 16, d <= 1).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from operator import itemgetter

import numpy as np

from . import rng as rnglib
from .billiard import (BilliardState, BilliardTable, collide_many,
                       collision_map, phase_distance, phase_distance_many,
                       sample_states)
from .errors import (DomainError, EmptySeriesError, SingularInput,
                     SingularOrbit)
from .interval_maps import IntervalMap, TapeOrbits, evaluate

DEFAULT_GRID_RATIO = 1.25


def lambda_value(d: float, n: int, dim_coeff: float) -> float:
    """The log-law statistic; +inf for exact returns, nan if undefined."""
    if n < 3 or math.isinf(d) or math.isnan(d):
        return math.nan
    if d == 0.0:
        return math.inf
    return (abs(math.log(d)) - dim_coeff * math.log(n)) / math.log(math.log(n))


def _lambda_vec(d: np.ndarray, n: int, dim_coeff: float) -> np.ndarray:
    if n < 3:
        return np.full_like(d, np.nan)
    out = np.full_like(d, np.nan)
    pos = np.isfinite(d) & (d > 0)
    out[pos] = (np.abs(np.log(d[pos])) - dim_coeff * math.log(n)) \
        / math.log(math.log(n))
    out[d == 0.0] = np.inf
    return out


def geometric_grid(n_min: int, n_max: int, ratio: float = DEFAULT_GRID_RATIO):
    """Geometric checkpoint grid ceil(n_min * ratio^i), always ending at n_max."""
    if n_min < 2 or n_max < n_min:
        raise DomainError("need 2 <= n_min <= n_max")
    grid = []
    x = float(n_min)
    while x < n_max:
        n = math.ceil(x)
        if not grid or n > grid[-1]:
            grid.append(n)
        x *= ratio
    if not grid or grid[-1] != n_max:
        grid.append(n_max)
    return grid


class RthMinTracker:
    """The r smallest finite distances seen so far, with their hit times."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DomainError("tracker capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[tuple[float, int]] = []  # ascending by distance

    def feed(self, d: float, t: int):
        """Insert (d, t); returns the insertion rank or None if not kept."""
        if not math.isfinite(d):
            return None
        if len(self.entries) >= self.capacity and d >= self.entries[-1][0]:
            return None
        pos = bisect_right(self.entries, d, key=itemgetter(0))
        self.entries.insert(pos, (d, t))
        if len(self.entries) > self.capacity:
            self.entries.pop()
        return pos

    def kth(self, r: int) -> float:
        if r < 1 or r > self.capacity:
            raise DomainError(f"rank {r} outside capacity {self.capacity}")
        return self.entries[r - 1][0] if len(self.entries) >= r else math.inf

    def __len__(self):
        return len(self.entries)


@dataclass
class LogLawSeries:
    """Checkpointed log-law statistic for one orbit and one r."""

    r: int
    dim_coeff: float
    checkpoints: list = field(default_factory=list)  # (n, d, lambda)
    updates: list = field(default_factory=list)      # same, at update times

    def lambdas(self, n_min: int = 0):
        vals = [lam for (n, _, lam) in self.checkpoints + self.updates
                if n >= n_min and not math.isnan(lam)]
        return vals


@dataclass
class LimsupEstimate:
    value: float
    n_min: int
    per_orbit: list


def limsup_estimate(series: LogLawSeries, n_min: int) -> LimsupEstimate:
    """Finite-n limsup proxy: max lambda over recorded points with n >= n_min."""
    if not any(n >= n_min for (n, _, _) in series.checkpoints):
        raise EmptySeriesError(f"no checkpoint with n >= {n_min}")
    vals = series.lambdas(n_min)
    if not vals:
        raise EmptySeriesError("no finite lambda at qualifying checkpoints")
    v = max(vals)
    return LimsupEstimate(value=v, n_min=n_min, per_orbit=[v])


def merge_limsups(estimates) -> LimsupEstimate:
    per = [v for e in estimates for v in e.per_orbit]
    return LimsupEstimate(value=max(per), n_min=estimates[0].n_min, per_orbit=per)


# ---------------------------------------------------------------------------
# system adapters (scalar paths)
# ---------------------------------------------------------------------------

class IntervalSystem:
    """Scalar orbit adapter; keeps Fraction inputs exact where the map allows.

    The orbit stops (SingularOrbit) only where the map itself has no value;
    merely passing close to the singular set is fine for distance tracking,
    and near the Gauss accumulation point every small x is close to some
    branch endpoint.
    """

    dim_coeff = 1.0

    def __init__(self, m: IntervalMap):
        self.map = m

    def advance(self, x):
        try:
            return evaluate(self.map, x)
        except SingularInput as e:
            raise SingularOrbit(str(e)) from e

    def distance(self, a, b) -> float:
        return float(abs(a - b))


class BilliardSystem:
    dim_coeff = 0.5

    def __init__(self, table: BilliardTable):
        self.table = table

    def advance(self, s: BilliardState) -> BilliardState:
        return collision_map(self.table, s)[0]

    def distance(self, a: BilliardState, b: BilliardState) -> float:
        return phase_distance(self.table, a, b)


def _check_grid(grid, r, n_max):
    grid = list(grid)
    if not grid:
        raise DomainError("empty checkpoint grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("checkpoint grid must be strictly increasing")
    if grid[0] < r + 1 or grid[-1] > n_max:
        raise DomainError(f"checkpoint grid must lie in [{r + 1}, {n_max}]")
    return grid


def track_hitting(system, x, y, n_max: int, r: int, checkpoint_grid) -> LogLawSeries:
    """Feed d(x, T^k y), k = 1..n_max into an r-th minimum tracker.

    Checkpoints before r finite hits record d = +inf and lambda = nan.
    Infinite distances (billiard cross-component) advance time but are not
    fed.  Update-time lambdas are recorded exactly (see module docstring).
    """
    grid = _check_grid(checkpoint_grid, r, n_max)
    tracker = RthMinTracker(r)
    series = LogLawSeries(r=r, dim_coeff=system.dim_coeff)
    gi = 0
    state = y
    for k in range(1, n_max + 1):
        state = system.advance(state)
        d = system.distance(x, state)
        pos = tracker.feed(d, k)
        if pos is not None and pos <= r - 1 and len(tracker) >= r and k >= 3:
            dr = tracker.kth(r)
            series.updates.append((k, dr, lambda_value(dr, k, system.dim_coeff)))
        while gi < len(grid) and grid[gi] == k:
            dr = tracker.kth(r)
            series.checkpoints.append((k, dr, lambda_value(dr, k, system.dim_coeff)))
            gi += 1
    return series


def track_recurrence(system, x, n_max: int, r: int, checkpoint_grid) -> LogLawSeries:
    """track_hitting with y = x: distances d(x, T^k x)."""
    return track_hitting(system, x, x, n_max, r, checkpoint_grid)


def min_return_time(system, x, rho: float, n_max: int):
    """Smallest k <= n_max with d(x, T^k x) < rho; a one-orbit witness that
    upper-bounds the set return time of B(x, rho).  None if no such k."""
    if rho <= 0:
        raise DomainError("rho must be > 0")
    state = x
    for k in range(1, n_max + 1):
        state = system.advance(state)
        if system.distance(x, state) < rho:
            return k
    return None


@dataclass
class DiophantineProfile:
    points: list   # (rho, tau or None)
    slope: float | None  # least-squares slope of tau against |ln rho|


def diophantine_profile(system, x, rho_grid, n_max: int) -> DiophantineProfile:
    """min_return_time for each rho in a decreasing grid, single orbit pass."""
    rhos = list(rho_grid)
    if any(b >= a for a, b in zip(rhos, rhos[1:])) or any(r <= 0 for r in rhos):
        raise DomainError("rho_grid must be strictly decreasing and positive")
    taus = [None] * len(rhos)
    unset = 0  # rhos[0] is largest; all i < unset are set
    state = x
    for k in range(1, n_max + 1):
        if unset >= len(rhos):
            break
        state = system.advance(state)
        d = system.distance(x, state)
        while unset < len(rhos) and d < rhos[unset]:
            taus[unset] = k
            unset += 1
    pts = list(zip(rhos, taus))
    have = [(abs(math.log(r)), t) for r, t in pts if t is not None]
    slope = None
    if len(have) >= 2:
        xs = np.array([a for a, _ in have])
        ys = np.array([t for _, t in have], dtype=float)
        slope = float(np.polyfit(xs, ys, 1)[0])
    return DiophantineProfile(points=pts, slope=slope)


# ---------------------------------------------------------------------------
# ensemble engine
# ---------------------------------------------------------------------------

class TapeDistanceStream:
    """Distances for tent/doubling ensembles via the exact bit-tape orbits."""

    def __init__(self, kind, seeds, n_max, targets=None):
        self.orbits = TapeOrbits(kind, seeds, n_max)
        self.n_orbits = self.orbits.n_orbits
        self.targets = (self.orbits.start() if targets is None
                        else np.asarray(targets, dtype=float))

    def starts(self):
        return self.orbits.start()

    def block(self, k0: int, size: int) -> np.ndarray:
        ks = np.arange(k0 + 1, k0 + 1 + size, dtype=np.int64)
        return np.abs(self.orbits.points(ks) - self.targets[:, None])


class FloatOrbitStream:
    """Sequential float64 map iteration over an orbit ensemble."""

    def __init__(self, m: IntervalMap, starts, targets=None):
        self.map = m
        self.x = np.array(starts, dtype=float)
        self.n_orbits = len(self.x)
        self.targets = (self.x.copy() if targets is None
                        else np.asarray(targets, dtype=float))

    def block(self, k0: int, size: int) -> np.ndarray:
        out = np.empty((self.n_orbits, size))
        x = self.x
        for i in range(size):
            x = self.map.eval_vec(x)
            out[:, i] = np.abs(x - self.targets)
        self.x = x
        return out


class BilliardOrbitStream:
    """Phase distances to fixed targets along billiard orbit ensembles."""

    def __init__(self, table: BilliardTable, sid, r, phi, target=None):
        self.table = table
        self.sid = np.array(sid, dtype=np.int64)
        self.r = np.array(r, dtype=float)
        self.phi = np.array(phi, dtype=float)
        self.n_orbits = len(self.sid)
        if target is None:
            self.t_sid = self.sid.copy()
            self.t_r = self.r.copy()
            self.t_phi = self.phi.copy()
        else:
            ts, tr, tp = target
            self.t_sid = np.broadcast_to(ts, self.sid.shape).copy()
            self.t_r = np.broadcast_to(tr, self.r.shape).copy()
            self.t_phi = np.broadcast_to(tp, self.phi.shape).copy()

    def block(self, k0: int, size: int) -> np.ndarray:
        out = np.empty((self.n_orbits, size))
        for i in range(size):
            self.sid, self.r, self.phi, _ = collide_many(
                self.table, self.sid, self.r, self.phi)
            out[:, i] = phase_distance_many(
                self.table, self.t_sid, self.t_r, self.t_phi,
                self.sid, self.r, self.phi)
        return out


def track_ensemble(stream, n_max: int, rs, dim_coeff: float,
                   checkpoint_grid, block: int = 4096):
    """Run the tracker over an ensemble distance stream.

    Returns a list (per orbit) of {r: LogLawSeries}.  Identical output to
    the scalar path: within each block, update candidates and checkpoints
    are replayed in time order.
    """
    rs = sorted(set(int(r) for r in rs))
    rmax = rs[-1]
    grid = _check_grid(checkpoint_grid, rmax, n_max)
    m = stream.n_orbits
    dist = np.full((m, rmax), np.inf)
    times = np.zeros((m, rmax), dtype=np.int64)
    thr = np.full(m, np.inf)
    out = [{r: LogLawSeries(r=r, dim_coeff=dim_coeff) for r in rs}
           for _ in range(m)]
    gi = 0
    k0 = 0
    while k0 < n_max:
        size = min(block, n_max - k0)
        d = stream.block(k0, size)
        rows, cols = np.nonzero(d < thr[:, None])
        order = np.argsort(cols, kind="stable")
        events = [(k0 + int(cols[i]) + 1, int(rows[i]), float(d[rows[i], cols[i]]))
                  for i in order]

        def apply(ev):
            t, row, val = ev
            drow = dist[row]
            if val >= drow[rmax - 1]:
                return
            pos = int(np.searchsorted(drow, val, side="right"))
            dist[row, pos + 1:] = drow[pos:-1]
            times[row, pos + 1:] = times[row, pos:-1]
            dist[row, pos] = val
            times[row, pos] = t
            thr[row] = dist[row, rmax - 1]
            if t < 3:
                return
            for r in rs:
                if r - 1 >= pos and math.isfinite(dist[row, r - 1]):
                    dr = float(dist[row, r - 1])
                    out[row][r].updates.append(
                        (t, dr, lambda_value(dr, t, dim_coeff)))

        ei = 0
        while gi < len(grid) and grid[gi] <= k0 + size:
            nc = grid[gi]
            while ei < len(events) and events[ei][0] <= nc:
                apply(events[ei])
                ei += 1
            for r in rs:
                col = dist[:, r - 1]
                lam = _lambda_vec(col, nc, dim_coeff)
                for row in range(m):
                    out[row][r].checkpoints.append(
                        (nc, float(col[row]), float(lam[row])))
            gi += 1
        while ei < len(events):
            apply(events[ei])
            ei += 1
        k0 += size
    return out


# ---------------------------------------------------------------------------
# ensemble assembly (per-orbit determinism by orbit index)
# ---------------------------------------------------------------------------

def interval_ensemble(m: IntervalMap, orbit_indices, master_seed: int,
                      n_max: int, rs, checkpoint_grid, mode: str = "recurrence",
                      target: float | None = None):
    """Log-law series for interval-map orbit ensembles.

    Orbit `i` is seeded by split_seed(master_seed, i) regardless of how the
    index list is partitioned across workers.  Tent/doubling use the exact
    bit-tape orbits; other maps iterate float64 from invariant-measure
    starts.  `mode='hitting'` tracks d(target, T^k y) for a fixed target.
    """
    idx = list(orbit_indices)
    seeds = [rnglib.split_seed(master_seed, i) for i in idx]
    if mode == "hitting" and target is None:
        raise DomainError("hitting mode needs a target")
    targets = None if mode == "recurrence" else np.full(len(idx), float(target))
    if m.has_tape:
        stream = TapeDistanceStream(m.tape_kind, seeds, n_max, targets=targets)
    else:
        starts = np.array([
            float(m.sample_from_uniform(rnglib.uniform(s, 0))) for s in seeds])
        stream = FloatOrbitStream(m, starts, targets=targets)
    return track_ensemble(stream, n_max, rs, 1.0, checkpoint_grid)


def billiard_ensemble(table: BilliardTable, orbit_indices, master_seed: int,
                      n_max: int, rs, checkpoint_grid, mode: str = "recurrence",
                      target: BilliardState | None = None):
    """Log-law series for billiard orbit ensembles (dim_coeff = 1/2)."""
    idx = list(orbit_indices)
    sid = np.empty(len(idx), dtype=np.int64)
    r = np.empty(len(idx))
    phi = np.empty(len(idx))
    for j, i in enumerate(idx):
        st = _billiard_start(table, rnglib.split_seed(master_seed, i))
        sid[j], r[j], phi[j] = st.scatterer_id, st.r, st.phi
    tgt = None
    if mode == "hitting":
        if target is None:
            raise DomainError("hitting mode needs a target")
        tgt = (np.int64(target.scatterer_id), float(target.r), float(target.phi))
    stream = BilliardOrbitStream(table, sid, r, phi, target=tgt)
    return track_ensemble(stream, n_max, rs, 0.5, checkpoint_grid)


def _billiard_start(table: BilliardTable, seed: int) -> BilliardState:
    return_sid, return_r, return_phi, _ = sample_states(table, seed, 1)
    return BilliardState(int(return_sid[0]), float(return_r[0]),
                         float(return_phi[0]))
