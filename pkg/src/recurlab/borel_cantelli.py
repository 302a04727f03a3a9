"""Multiple Borel-Cantelli counting machinery.

Shrinking-target schedules rho_n = n^-beta (ln n)^-delta, separation
indices over time tuples (gaps measured from k_0 = 0), the dyadic series
S_r = sum_j 2^{rj} sigma(rho_{2^j})^r with its convergence classification,
block events over dyadic time windows, and Monte Carlo estimators for the
mixing/non-clustering conditions on concrete systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rnglib
from .billiard import (BilliardState, BilliardTable, ball_measure,
                       collide_many, phase_distance_many, sample_states)
from .errors import ConfigError, DomainError, OrderError
from .interval_maps import (IntervalMap, TapeOrbits, interval_ball_measure,
                            sample_invariant_many)

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# schedules and separation configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RhoSchedule:
    """rho_n = n^-beta (ln n)^-delta with the power-law model
    sigma(rho) = rho^sigma_exponent (1 for 1-D interval balls, 2 for
    billiard phase balls)."""

    beta: float
    delta: float = 0.0
    sigma_exponent: float = 1.0

    def __post_init__(self):
        if self.beta <= 0 or self.delta < 0 or self.sigma_exponent <= 0:
            raise ConfigError(
                f"need beta > 0, delta >= 0, sigma_exponent > 0, got "
                f"({self.beta}, {self.delta}, {self.sigma_exponent})")

    def rho(self, n) -> float:
        n = float(n)
        if n < 2:
            raise DomainError("rho_n defined for n >= 2")
        return n ** (-self.beta) * math.log(n) ** (-self.delta)

    def log_sigma(self, n) -> float:
        """ln sigma(rho_n), safe for astronomically large n."""
        n = float(n)
        return -self.sigma_exponent * (
            self.beta * math.log(n) + self.delta * math.log(math.log(n)))

    def sigma(self, n) -> float:
        return math.exp(self.log_sigma(n))

    def sigma_model(self, rho: float) -> float:
        return rho ** self.sigma_exponent

    def poly_witness(self, n_limit: int = 10**7):
        """Constants (u, u0, n0) witnessing n^-u <= rho_n, n^-u <=
        sigma(rho_n) <= n^-u0 for all n >= n0."""
        bs = self.beta * self.sigma_exponent
        u = bs + 1.0
        u0 = bs / 2.0
        ds = self.delta * self.sigma_exponent

        def holds(n):
            ln = math.log(n)
            return (ds * math.log(ln) <= ln                      # sigma >= n^-u
                    and self.delta * math.log(ln) <= (u - self.beta) * ln
                    and -ds * math.log(ln) <= (bs - u0) * ln)    # sigma <= n^-u0

        n0 = 3
        while n0 < n_limit and not holds(n0):
            n0 += max(1, n0 // 8)
        return u, u0, n0


@dataclass(frozen=True)
class SepConfig:
    """Separation functions s(n) = R ln n and s_hat(n) = eps * n; the
    construction enforces eps < (1 - q) / (2r)."""

    R: float
    eps: float
    q: float
    r: int

    def __post_init__(self):
        if not (0 < self.q < 1):
            raise ConfigError(f"q must be in (0,1), got {self.q}")
        if self.r < 1:
            raise ConfigError("r must be >= 1")
        if not (0 < self.eps < (1 - self.q) / (2 * self.r)):
            raise ConfigError(
                f"eps must be in (0, (1-q)/(2r)) = (0, "
                f"{(1 - self.q) / (2 * self.r):.4g}), got {self.eps}")
        if self.R <= 0:
            raise ConfigError("R must be > 0")

    def s(self, n) -> float:
        return self.R * math.log(n)

    def s_hat(self, n) -> float:
        return self.eps * n

    @classmethod
    def default(cls, r: int, R: float = 10.0, q: float = 0.5) -> "SepConfig":
        eps = 0.1 if r <= 2 else (1 - q) / (4 * r)
        return cls(R=R, eps=eps, q=q, r=r)


# ---------------------------------------------------------------------------
# separation indices and tuple counting
# ---------------------------------------------------------------------------

def _check_tuple(ks, n):
    ks = list(ks)
    if not ks:
        raise OrderError("empty time tuple")
    prev = 0
    for k in ks:
        if k <= prev:
            raise OrderError(f"tuple {ks} not strictly increasing from 0")
        prev = k
    if ks[-1] > n:
        raise OrderError(f"k_r = {ks[-1]} exceeds n = {n}")
    return ks


def sep_index(ks, n: int, s_of_n: float) -> int:
    """#{0 <= j <= r-1 : k_{j+1} - k_j >= s(n)} with k_0 = 0."""
    ks = _check_tuple(ks, n)
    prev = 0
    count = 0
    for k in ks:
        if k - prev >= s_of_n:
            count += 1
        prev = k
    return count


def separated_tuple_count(n: int, s_of_n: float, r: int) -> int:
    """#{0 < k_1 < ... < k_r <= n : all gaps from k_0 = 0 are >= ceil(s)}.

    Closed form by the gap-subtraction bijection: C(n - r(g-1), r) with
    g = ceil(s), zero when n - r(g-1) < r.
    """
    if r < 1 or n < 1:
        raise DomainError("need n >= 1 and r >= 1")
    g = max(1, math.ceil(s_of_n))
    m = n - r * (g - 1)
    if m < r:
        return 0
    return math.comb(m, r)


# ---------------------------------------------------------------------------
# the series S_r
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SRResult:
    partial_sum: float
    classification: str  # divergent | convergent | undecided-at-J
    r: int
    J: int


def s_r_partial(schedule: RhoSchedule, r: int, J: int) -> SRResult:
    """Partial sum of S_r = sum_j 2^{rj} sigma(rho_{2^j})^r and its verdict.

    For the power-log family the classification is analytic: with
    beta*sigma_exponent = 1 the terms are (j ln 2)^{-delta*se*r}, a p-series
    divergent iff delta*se*r <= 1; otherwise the geometric factor
    2^{rj(1 - beta*se)} decides.
    """
    if J < 2:
        raise DomainError("need J >= 2")
    if r < 1:
        raise DomainError("need r >= 1")
    js = np.arange(1, J + 1, dtype=float)
    se = schedule.sigma_exponent
    log_terms = r * js * LN2 * (1.0 - schedule.beta * se) \
        - schedule.delta * se * r * np.log(js * LN2)
    with np.errstate(over="ignore"):
        partial = float(np.sum(np.exp(np.minimum(log_terms, 700.0))))
    bs = schedule.beta * se
    if abs(bs - 1.0) < 1e-12:
        classification = ("divergent" if schedule.delta * se * r <= 1.0 + 1e-12
                          else "convergent")
    elif bs < 1.0:
        classification = "divergent"
    else:
        classification = "convergent"
    return SRResult(partial_sum=partial, classification=classification, r=r, J=J)


def classify_partial_sums(schedule: RhoSchedule, r: int, j_max: int = 2**20,
                          tol: float = 0.5 * LN2 * 0.1) -> str:
    """Partial-sum oracle: decide divergence from dyadic block sums.

    Sums B_m = sum_{2^m < j <= 2^{m+1}} term_j for the tail blocks and fits
    the per-block log decay; flat-or-growing blocks (slope above -tol,
    tol = half the decay of the nearest convergent grid case) mean the
    partial sums are unbounded.
    """
    se = schedule.sigma_exponent
    js = np.arange(1, j_max + 1, dtype=float)
    log_terms = r * js * LN2 * (1.0 - schedule.beta * se) \
        - schedule.delta * se * r * np.log(js * LN2)
    terms = np.exp(np.minimum(log_terms, 700.0))
    m_lo, m_hi = 10, int(math.log2(j_max)) - 1
    blocks = []
    for m in range(m_lo, m_hi + 1):
        blocks.append(np.sum(terms[2**m: 2**(m + 1)]))
    blocks = np.asarray(blocks)
    if np.any(blocks <= 0) or blocks[-1] < 1e-250:
        return "convergent"
    slope = np.polyfit(np.arange(len(blocks)), np.log(blocks), 1)[0]
    return "divergent" if slope >= -tol else "convergent"


# ---------------------------------------------------------------------------
# event families and orbit contexts
# ---------------------------------------------------------------------------

class SyntheticOrbit:
    """Latent uniforms U_k of one synthetic-iid orbit, k = 1..n."""

    def __init__(self, seed: int):
        self.seed = seed
        self._u = np.empty(0)

    def values(self, n: int) -> np.ndarray:
        if len(self._u) < n:
            self._u = rnglib.uniform_block(self.seed, 0, n)
        return self._u[:n]


class DynamicalOrbit:
    """Distance stream d_k of one orbit against a fixed target (hitting) or
    its own start (recurrence), extended lazily."""

    def __init__(self, system, start, target=None):
        self.system = system
        self.state = start
        self.target = start if target is None else target
        self._d: list[float] = []

    def values(self, n: int) -> np.ndarray:
        while len(self._d) < n:
            self.state = self.system.advance(self.state)
            self._d.append(self.system.distance(self.target, self.state))
        return np.asarray(self._d[:n])


@dataclass
class EventFamily:
    """Indexed events E^k_{rho_n} with a membership test and sigma(rho_n).

    Membership is monotone in n: E_{rho_{n1}} subset of E_{rho_{n2}} for
    n1 >= n2 since the thresholds shrink.
    """

    kind: str                      # dynamical-hitting | dynamical-recurrence | synthetic-iid
    threshold: object              # n -> comparison threshold for orbit values
    sigma_of: object               # n -> sigma(rho_n)

    def membership(self, ctx, k: int, n: int) -> bool:
        return bool(self.hit_mask(ctx, n, horizon=k)[k - 1])

    def hit_mask(self, ctx, n: int, horizon: int | None = None) -> np.ndarray:
        """Boolean membership of times k = 1..horizon at radius index n."""
        horizon = n if horizon is None else horizon
        vals = ctx.values(horizon)
        if self.kind == "synthetic-iid":
            return vals < self.threshold(n)
        return vals <= self.threshold(n)


def synthetic_iid_family(p=None, schedule: RhoSchedule | None = None,
                         sigma_of=None) -> EventFamily:
    """iid events with exact sigma: fixed p, a schedule, or a custom n->p."""
    if sigma_of is None:
        if schedule is not None:
            sigma_of = schedule.sigma
        elif p is not None:
            sigma_of = lambda n, _p=float(p): _p
        else:
            raise ConfigError("give one of p, schedule, sigma_of")
    return EventFamily(kind="synthetic-iid", threshold=sigma_of, sigma_of=sigma_of)


def hitting_family(schedule: RhoSchedule) -> EventFamily:
    return EventFamily(kind="dynamical-hitting", threshold=schedule.rho,
                       sigma_of=schedule.sigma)


def recurrence_family(schedule: RhoSchedule) -> EventFamily:
    return EventFamily(kind="dynamical-recurrence", threshold=schedule.rho,
                       sigma_of=schedule.sigma)


def count_hits(family: EventFamily, ctx, n: int) -> int:
    """N^n_{rho_n}: #{1 <= k <= n : membership(k, n)}, single radius rho_n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return int(family.hit_mask(ctx, n).sum())


def synthetic_hit_counts(master_seed: int, orbit_indices, n: int,
                         sigma: float, chunk: int = 256) -> np.ndarray:
    """Vectorized N^n over synthetic-iid orbits (same streams as count_hits
    over SyntheticOrbit(split_seed(master, i)))."""
    idx = np.asarray(list(orbit_indices), dtype=np.uint64)
    seeds = rnglib.split_seeds(master_seed, idx)
    counts = np.empty(len(idx), dtype=np.int64)
    ks = np.arange(n, dtype=np.uint64)
    for lo in range(0, len(idx), chunk):
        hi = min(lo + chunk, len(idx))
        z = seeds[lo:hi, None] + (ks[None, :] + np.uint64(1)) * np.uint64(rnglib.GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        counts[lo:hi] = (u < sigma).sum(axis=1)
    return counts


# ---------------------------------------------------------------------------
# dyadic block events (U_m, A_m, D_m, Z_n)
# ---------------------------------------------------------------------------

def separated_subset_size(hits, s_hat: float, r: int) -> int:
    """Largest j <= r such that some j-subset of `hits` has all gaps
    (including from time 0) >= s_hat; greedy earliest-pick is optimal."""
    count = 0
    prev = 0
    for t in hits:
        if t - prev >= s_hat:
            count += 1
            prev = t
            if count >= r:
                break
    return count


def dyadic_block_hits(family: EventFamily, ctx, m: int, sep: SepConfig):
    """(in_Am, in_Dm) for the dyadic block (2^m, 2^{m+1}].

    A_m: at least r membership hits at radius rho_{2^m} among times
    k <= 2^{m+1}.  D_m: the hit times in (2^m, 2^{m+1}] at radius
    rho_{2^{m+1}} contain an r-tuple whose \\hat{Sep} index at scale
    2^{m+1} equals r.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    r = sep.r
    n_lo, n_hi = 2**m, 2**(m + 1)
    mask_lo = family.hit_mask(ctx, n_lo, horizon=n_hi)
    in_am = int(mask_lo.sum()) >= r
    mask_hi = family.hit_mask(ctx, n_hi, horizon=n_hi)
    hit_times = np.nonzero(mask_hi[n_lo:])[0] + n_lo + 1
    in_dm = separated_subset_size(hit_times, sep.s_hat(n_hi), r) >= r
    return in_am, in_dm


def z_count(family: EventFamily, ctx, m_max: int, sep: SepConfig) -> int:
    """Z = sum_{m <= m_max} 1{D_m}."""
    if m_max < 1:
        raise DomainError("m_max must be >= 1")
    return sum(dyadic_block_hits(family, ctx, m, sep)[1]
               for m in range(1, m_max + 1))


@dataclass
class HitCountReport:
    per_orbit: list            # (orbit_id, n, count)
    proxy_hr_fraction: list    # (m, n = 2^m, fraction of orbits with N >= r)
    r: int


def hr_proxy_report(family: EventFamily, ctxs, m_values, r: int,
                    orbit_ids=None) -> HitCountReport:
    """Fraction of orbits with N^{2^m} >= r along dyadic horizons: the
    finite-time proxy for the limsup set (its trend is the observable)."""
    orbit_ids = list(range(len(ctxs))) if orbit_ids is None else list(orbit_ids)
    per_orbit = []
    fractions = []
    for m in m_values:
        n = 2**m
        counts = [count_hits(family, ctx, n) for ctx in ctxs]
        per_orbit.extend((oid, n, c) for oid, c in zip(orbit_ids, counts))
        fractions.append((m, n, sum(c >= r for c in counts) / len(counts)))
    return HitCountReport(per_orbit=per_orbit, proxy_hr_fraction=fractions, r=r)


# ---------------------------------------------------------------------------
# Monte Carlo estimators for the mixing conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GM1Estimate:
    p_hat: float
    se: float
    ratio: float
    sigma_r: float
    hits: int
    M: int
    insufficient: bool  # p_hat * M < 25: estimate unreliable (reported, not thrown)


@dataclass(frozen=True)
class MovEstimate:
    p_hat: float
    se: float
    hits: int
    M: int
    insufficient: bool


def _interval_tuple_hits(m: IntervalMap, target: float, ks, rho: float,
                         M: int, seed: int, extra_zero: bool = False) -> int:
    """Count Monte Carlo points whose orbit is rho-close to target at every
    time in ks (and at time 0 too when extra_zero)."""
    kmax = max(ks)
    hits_total = 0
    chunk = 1 << 17
    for lo in range(0, M, chunk):
        hi = min(lo + chunk, M)
        idx = np.arange(lo, hi, dtype=np.uint64)
        if m.has_tape:
            seeds = rnglib.split_seeds(seed, idx)
            orbits = TapeOrbits(m.tape_kind, seeds, kmax + 2)
            ok = np.ones(hi - lo, dtype=bool)
            if extra_zero:
                ok &= np.abs(orbits.start() - target) <= rho
            pts = orbits.points(np.asarray(ks, dtype=np.int64))
            for j in range(len(ks)):
                ok &= np.abs(pts[:, j] - target) <= rho
        else:
            u = rnglib.uniform(seed, idx)
            x = np.asarray(m.sample_from_uniform(u))
            ok = np.ones(hi - lo, dtype=bool)
            if extra_zero:
                ok &= np.abs(x - target) <= rho
            ks_set = set(int(k) for k in ks)
            for k in range(1, kmax + 1):
                x = m.eval_vec(x)
                if k in ks_set:
                    ok &= np.abs(x - target) <= rho
        hits_total += int(ok.sum())
    return hits_total


def _billiard_tuple_hits(table: BilliardTable, target: BilliardState, ks,
                         rho: float, M: int, seed: int,
                         extra_zero: bool = False) -> int:
    kmax = max(ks)
    ks_set = set(int(k) for k in ks)
    hits_total = 0
    chunk = 1 << 13
    for lo in range(0, M, chunk):
        hi = min(lo + chunk, M)
        sid, r, phi, _ = sample_states(table, rnglib.split_seed(seed, lo), hi - lo)
        ok = np.ones(hi - lo, dtype=bool)
        if extra_zero:
            d = phase_distance_many(table, np.full(hi - lo, target.scatterer_id),
                                    np.full(hi - lo, target.r),
                                    np.full(hi - lo, target.phi), sid, r, phi)
            ok &= d <= rho
        for k in range(1, kmax + 1):
            sid, r, phi, _ = collide_many(table, sid, r, phi)
            if k in ks_set:
                d = phase_distance_many(
                    table, np.full(hi - lo, target.scatterer_id),
                    np.full(hi - lo, target.r), np.full(hi - lo, target.phi),
                    sid, r, phi)
                ok &= d <= rho
        hits_total += int(ok.sum())
    return hits_total


def _sigma_of(system, target, rho: float) -> float:
    if isinstance(system, BilliardTable):
        return ball_measure(system, target, rho)
    return interval_ball_measure(system, target, rho)


def estimate_gm1(system, target, tuple_ks, rho: float, M: int,
                 seed: int) -> GM1Estimate:
    """Monte Carlo P(all of d(target, T^{k_j} omega) <= rho) over M initial
    points from the invariant measure, against sigma(rho)^r from quadrature.

    Whether the tuple is separated is the caller's concern; only strict
    increase is enforced.
    """
    ks = _check_tuple(tuple_ks, max(tuple_ks))
    if M < 1:
        raise DomainError("M must be >= 1")
    if isinstance(system, BilliardTable):
        hits = _billiard_tuple_hits(system, target, ks, rho, M, seed)
    else:
        hits = _interval_tuple_hits(system, target, ks, rho, M, seed)
    p_hat = hits / M
    se = math.sqrt(p_hat * (1 - p_hat) / M)
    sigma_r = _sigma_of(system, target, rho) ** len(ks)
    return GM1Estimate(p_hat=p_hat, se=se, ratio=p_hat / sigma_r,
                       sigma_r=sigma_r, hits=hits, M=M,
                       insufficient=hits < 25)


def estimate_mov(system, kind: str, k: int, rho: float, M: int, seed: int,
                 target=None) -> MovEstimate:
    """(Mov)-style smallness estimators.

    kind='hitting': mu(E_rho cap E^k_rho) with E_rho the target ball;
    kind='recurrence': mu{x : d(x, T^k x) <= rho}.
    """
    if k < 1:
        raise OrderError("k must be >= 1")
    if kind not in ("hitting", "recurrence"):
        raise ConfigError(f"unknown estimate_mov kind {kind!r}")
    if kind == "hitting":
        if target is None:
            raise ConfigError("hitting mode needs a target")
        if isinstance(system, BilliardTable):
            hits = _billiard_tuple_hits(system, target, [k], rho, M, seed,
                                        extra_zero=True)
        else:
            hits = _interval_tuple_hits(system, target, [k], rho, M, seed,
                                        extra_zero=True)
    else:
        hits = _recurrence_pair_hits(system, k, rho, M, seed)
    p_hat = hits / M
    se = math.sqrt(p_hat * (1 - p_hat) / M)
    return MovEstimate(p_hat=p_hat, se=se, hits=hits, M=M,
                       insufficient=hits < 25)


def _recurrence_pair_hits(system, k: int, rho: float, M: int, seed: int) -> int:
    hits_total = 0
    if isinstance(system, BilliardTable):
        chunk = 1 << 13
        for lo in range(0, M, chunk):
            hi = min(lo + chunk, M)
            sid, r, phi, _ = sample_states(system, rnglib.split_seed(seed, lo),
                                           hi - lo)
            s0, r0, p0 = sid.copy(), r.copy(), phi.copy()
            for _ in range(k):
                sid, r, phi, _ = collide_many(system, sid, r, phi)
            d = phase_distance_many(system, s0, r0, p0, sid, r, phi)
            hits_total += int((d <= rho).sum())
        return hits_total
    m = system
    chunk = 1 << 17
    for lo in range(0, M, chunk):
        hi = min(lo + chunk, M)
        idx = np.arange(lo, hi, dtype=np.uint64)
        if m.has_tape:
            orbits = TapeOrbits(m.tape_kind, rnglib.split_seeds(seed, idx), k + 2)
            d = np.abs(orbits.points(np.array([k]))[:, 0] - orbits.start())
        else:
            x0 = np.asarray(m.sample_from_uniform(rnglib.uniform(seed, idx)))
            x = x0
            for _ in range(k):
                x = m.eval_vec(x)
            d = np.abs(x - x0)
        hits_total += int((d <= rho).sum())
    return hits_total


def sigma_bar_mc(system, rho: float, M: int, seed: int) -> float:
    """bar sigma(rho) = (mu x mu)(pairs within rho) = E_x[mu(B(x, rho))]."""
    if isinstance(system, BilliardTable):
        sid, r, phi, _ = sample_states(system, seed, M)
        total = 0.0
        theta = (math.pi / 2) * np.polynomial.legendre.leggauss(64)[0]
        wts = (math.pi / 2) * np.polynomial.legendre.leggauss(64)[1]
        for i in range(M):
            perim = system.perims[sid[i]]
            chord = np.minimum(2.0 * rho * np.cos(theta), perim)
            # clip at |phi| = pi/2: cos < 0 there, so clamp to zero
            integ = chord * np.maximum(np.cos(phi[i] + rho * np.sin(theta)), 0.0) \
                * rho * np.cos(theta)
            total += system.c_mu * float(np.sum(wts * integ))
        return total / M
    xs = sample_invariant_many(system, seed, M)
    return float(np.mean([interval_ball_measure(system, float(x), rho)
                          for x in xs]))


# ---------------------------------------------------------------------------
# independent-case reference
# ---------------------------------------------------------------------------

def binomial_oracle(n: int, p: float, r: int) -> float:
    """Exact P(Binomial(n, p) >= r) by stable one-sided summation."""
    if n < 0 or not 0.0 <= p <= 1.0:
        raise DomainError("need n >= 0 and p in [0,1]")
    if r <= 0:
        return 1.0
    if r > n or p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0

    def log_pmf(k: int) -> float:
        return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                + k * math.log(p) + (n - k) * math.log1p(-p))

    mode = int((n + 1) * p)
    if r > mode:
        # sum the (decreasing) upper tail directly
        terms = []
        for k in range(r, n + 1):
            t = math.exp(log_pmf(k))
            terms.append(t)
            if t < 1e-19 * (sum(terms) + 1e-300) and k > mode:
                break
        return min(1.0, math.fsum(terms))
    # complement: sum the lower tail k < r (decreasing as k drops below mode)
    terms = [math.exp(log_pmf(k)) for k in range(r - 1, -1, -1)]
    return max(0.0, 1.0 - math.fsum(terms))
