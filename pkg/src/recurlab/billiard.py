"""Dispersing billiard on the unit 2-torus with circular scatterers.

Collision coordinates are (scatterer, r, phi): arc length along the circle
(measured counterclockwise from due east) and the angle between the outgoing
velocity and the inward normal (pointing away from the disc), so the
invariant measure is c_mu cos(phi) dr dphi with c_mu = 1/(2 * total
perimeter).  Free flights are resolved by unfolding the ray over lattice
translates and taking the first positive ray-circle intersection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import rng as rnglib
from .errors import (BoundaryBall, BoundaryState, DomainError,
                     GrazingCollision, HorizonExceeded, TableError)

GRAZING_GUARD = 1e-12
ROOT_GUARD = 1e-12  # departing roots below this are the emission point itself
HALF_PI = math.pi / 2
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class Scatterer:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not 0 < self.radius < 0.5:
            raise TableError(f"radius must be in (0, 1/2), got {self.radius}")

    @property
    def perimeter(self) -> float:
        return 2 * math.pi * self.radius


@dataclass(frozen=True)
class BilliardState:
    scatterer_id: int
    r: float
    phi: float


def reverse(s: BilliardState) -> BilliardState:
    """Time-reversal involution phi -> -phi."""
    return BilliardState(s.scatterer_id, s.r, -s.phi)


def _primitive_directions(limit: int = 5):
    dirs = []
    for p in range(0, limit + 1):
        for q in range(-limit, limit + 1):
            if p == 0 and q != 1:
                continue
            if p > 0 and math.gcd(p, abs(q)) != 1:
                continue
            if (p, q) != (0, 1) and p == 0:
                continue
            dirs.append((p, q))
    return dirs


class BilliardTable:
    """Scatterer configuration with validated finite-horizon geometry."""

    def __init__(self, scatterers, horizon_bound: float = 2.0):
        if not scatterers:
            raise TableError("need at least one scatterer")
        self.scatterers = tuple(scatterers)
        self.horizon_bound = float(horizon_bound)
        self.total_perimeter = sum(s.perimeter for s in self.scatterers)
        self.c_mu = 1.0 / (2.0 * self.total_perimeter)
        self._check_disjoint()
        self._check_corridors()
        self._build_candidates()

    def _check_disjoint(self):
        n = len(self.scatterers)
        for i in range(n):
            ci, ri_ = self.scatterers[i].center, self.scatterers[i].radius
            for j in range(i, n):
                cj, rj = self.scatterers[j].center, self.scatterers[j].radius
                for mx in (-1, 0, 1):
                    for my in (-1, 0, 1):
                        if i == j and mx == 0 and my == 0:
                            continue
                        d = math.hypot(ci[0] - cj[0] - mx, ci[1] - cj[1] - my)
                        if d < ri_ + rj - 1e-12:
                            raise TableError(
                                f"scatterers {i} and {j} overlap at translate "
                                f"({mx},{my}): gap {d - ri_ - rj:.3g}")

    def _check_corridors(self):
        """Every lattice direction (p,q), p,q <= 5, must be blocked.

        The lines of direction (p,q) project to a circle of circumference
        1/|(p,q)| along the unit normal; the scatterer shadows must cover it.
        """
        for p, q in _primitive_directions():
            length = math.hypot(p, q)
            spacing = 1.0 / length
            intervals = []
            for s in self.scatterers:
                proj = (-q * s.center[0] + p * s.center[1]) / length
                lo = (proj - s.radius) % spacing
                intervals.append((lo, 2 * s.radius))
            intervals.sort()
            # unroll one wrap and merge
            events = [(lo, lo + w) for lo, w in intervals]
            events += [(lo + spacing, lo + spacing + w) for lo, w in intervals]
            cover = events[0][1]
            start = events[0][0]
            for a, b in events[1:]:
                if a > cover + 1e-12:
                    break
                cover = max(cover, b)
            if cover - start < spacing - 1e-12:
                raise TableError(
                    f"open corridor in direction ({p},{q}): shadows cover "
                    f"{cover - start:.4f} of spacing {spacing:.4f}")

    def _build_candidates(self):
        w = int(math.ceil(self.horizon_bound)) + 1
        centers, radii, sids = [], [], []
        for sid, s in enumerate(self.scatterers):
            for mx in range(-w, w + 1):
                for my in range(-w, w + 1):
                    centers.append((s.center[0] + mx, s.center[1] + my))
                    radii.append(s.radius)
                    sids.append(sid)
        self.cand_centers = np.asarray(centers)
        self.cand_radii = np.asarray(radii)
        self.cand_sids = np.asarray(sids, dtype=np.int64)
        self.radii = np.asarray([s.radius for s in self.scatterers])
        self.centers = np.asarray([s.center for s in self.scatterers])
        self.perims = 2 * math.pi * self.radii

    # -- serialization ------------------------------------------------------
    @classmethod
    def from_json(cls, path: str) -> "BilliardTable":
        with open(path) as fh:
            cfg = json.load(fh)
        scs = [Scatterer(center=tuple(s["center"]), radius=float(s["radius"]))
               for s in cfg["scatterers"]]
        return cls(scs, horizon_bound=float(cfg.get("horizon_bound", 2.0)))

    def to_config(self) -> dict:
        return {
            "scatterers": [{"center": list(s.center), "radius": s.radius}
                           for s in self.scatterers],
            "horizon_bound": self.horizon_bound,
        }


def default_table() -> BilliardTable:
    """Two-disc finite-horizon table: r=0.44 at the origin, r=0.22 at the
    cell center.  Axis corridors are blocked jointly, diagonals by the big
    disc alone (band width 0.88 > 1/sqrt(2))."""
    return BilliardTable([
        Scatterer(center=(0.0, 0.0), radius=0.44),
        Scatterer(center=(0.5, 0.5), radius=0.22),
    ], horizon_bound=2.0)


# ---------------------------------------------------------------------------
# collision dynamics
# ---------------------------------------------------------------------------

def collide_many(table: BilliardTable, sid: np.ndarray, r: np.ndarray,
                 phi: np.ndarray):
    """Vectorized collision map over state arrays.

    Returns (sid', r', phi', free_path); raises GrazingCollision if any
    input is within the grazing guard and HorizonExceeded if a flight does
    not terminate (invalid table).
    """
    sid = np.asarray(sid, dtype=np.int64)
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(HALF_PI - np.abs(phi) < GRAZING_GUARD):
        raise GrazingCollision("|phi| within 1e-12 of pi/2")
    radius = table.radii[sid]
    psi = r / radius
    nx, ny = np.cos(psi), np.sin(psi)
    qx = table.centers[sid, 0] + radius * nx
    qy = table.centers[sid, 1] + radius * ny
    cphi, sphi = np.cos(phi), np.sin(phi)
    vx = cphi * nx - sphi * ny
    vy = cphi * ny + sphi * nx

    dx = table.cand_centers[None, :, 0] - qx[:, None]
    dy = table.cand_centers[None, :, 1] - qy[:, None]
    b = dx * vx[:, None] + dy * vy[:, None]
    c2 = dx * dx + dy * dy - table.cand_radii[None, :] ** 2
    disc = b * b - c2
    with np.errstate(invalid="ignore"):
        s = b - np.sqrt(disc)
    s = np.where(np.isfinite(s) & (s > ROOT_GUARD), s, np.inf)
    jmin = np.argmin(s, axis=1)
    rows = np.arange(len(jmin))
    smin = s[rows, jmin]
    if np.any(smin > table.horizon_bound):
        raise HorizonExceeded(
            f"free path {np.max(smin):.3g} beyond horizon "
            f"{table.horizon_bound}")

    px = qx + smin * vx
    py = qy + smin * vy
    csx = table.cand_centers[jmin, 0]
    csy = table.cand_centers[jmin, 1]
    rad2 = table.cand_radii[jmin]
    ux = (px - csx) / rad2
    uy = (py - csy) / rad2
    dot = vx * ux + vy * uy
    wx = vx - 2.0 * dot * ux
    wy = vy - 2.0 * dot * uy
    psi2 = np.arctan2(uy, ux) % (2 * math.pi)
    r2 = rad2 * psi2
    phi2 = np.arctan2(-wx * uy + wy * ux, wx * ux + wy * uy)
    return table.cand_sids[jmin], r2, phi2, smin


def collision_map(table: BilliardTable, s: BilliardState):
    """Next collision state and the Euclidean free-flight length."""
    sid, r, phi, path = collide_many(
        table, np.array([s.scatterer_id]), np.array([s.r]), np.array([s.phi]))
    return BilliardState(int(sid[0]), float(r[0]), float(phi[0])), float(path[0])


# ---------------------------------------------------------------------------
# invariant measure
# ---------------------------------------------------------------------------

def sample_states(table: BilliardTable, seed: int, n: int):
    """n independent draws from d(mu): scatterer by perimeter, r uniform,
    phi = arcsin(2U - 1).  Grazing draws are resampled (counter returned)."""
    weights = table.perims / table.perims.sum()
    cum = np.cumsum(weights)
    resampled = 0
    out_sid = np.empty(n, dtype=np.int64)
    out_r = np.empty(n)
    out_phi = np.empty(n)
    need = np.arange(n)
    ctr = 0
    while len(need):
        m = len(need)
        u = rnglib.uniform(seed, np.arange(ctr, ctr + 3 * m, dtype=np.uint64))
        ctr += 3 * m
        u1, u2, u3 = u[:m], u[m:2 * m], u[2 * m:]
        sid = np.searchsorted(cum, u1, side="right").clip(0, len(cum) - 1)
        phi = np.arcsin(2.0 * u3 - 1.0)
        ok = HALF_PI - np.abs(phi) >= GRAZING_GUARD
        idx = need[ok]
        out_sid[idx] = sid[ok]
        out_r[idx] = (u2[ok] * table.perims[sid[ok]])
        out_phi[idx] = phi[ok]
        resampled += int((~ok).sum())
        need = need[~ok]
    return out_sid, out_r, out_phi, resampled


def invariant_sample(table: BilliardTable, rng: rnglib.CounterRng) -> BilliardState:
    """One draw from the invariant measure."""
    u1, u2, u3 = rng.uniform(), rng.uniform(), rng.uniform()
    weights = np.cumsum(table.perims / table.perims.sum())
    sid = int(np.searchsorted(weights, u1, side="right").clip(0, len(weights) - 1))
    phi = math.asin(2.0 * u3 - 1.0)
    if HALF_PI - abs(phi) < GRAZING_GUARD:
        return invariant_sample(table, rng)
    return BilliardState(sid, u2 * table.perims[sid], phi)


def phase_distance(table: BilliardTable, a: BilliardState, b: BilliardState) -> float:
    """sqrt(dr^2 + dphi^2) with dr geodesic on the perimeter; +inf across
    different scatterers (cross-component points share no small ball)."""
    if a.scatterer_id != b.scatterer_id:
        return math.inf
    perim = table.perims[a.scatterer_id]
    dr = abs(a.r - b.r)
    dr = min(dr, perim - dr)
    return math.hypot(dr, a.phi - b.phi)


def phase_distance_many(table: BilliardTable, sid_a, r_a, phi_a,
                        sid_b, r_b, phi_b) -> np.ndarray:
    perim = table.perims[np.asarray(sid_a, dtype=np.int64)]
    dr = np.abs(np.asarray(r_a) - np.asarray(r_b))
    dr = np.minimum(dr, perim - dr)
    d = np.hypot(dr, np.asarray(phi_a) - np.asarray(phi_b))
    return np.where(np.asarray(sid_a) == np.asarray(sid_b), d, np.inf)


def ball_measure(table: BilliardTable, x: BilliardState, rho: float) -> float:
    """mu(B(x, rho)) by quadrature of c_mu cos(phi) over the metric ball.

    The r-direction integrates exactly to the chord length, leaving a 1-D
    integral in the phi offset, evaluated by Gauss-Legendre after the
    substitution t = rho sin(theta).
    """
    if rho < 0:
        raise DomainError("rho must be >= 0")
    if rho == 0.0:
        return 0.0
    if rho >= HALF_PI - abs(x.phi):
        raise BoundaryBall(
            f"ball of radius {rho} at phi={x.phi} meets |phi| = pi/2")
    perim = table.perims[x.scatterer_id]
    theta = HALF_PI * _GL_NODES
    weights = HALF_PI * _GL_WEIGHTS
    chord = np.minimum(2.0 * rho * np.cos(theta), perim)
    integrand = chord * np.cos(x.phi + rho * np.sin(theta)) * rho * np.cos(theta)
    return float(table.c_mu * np.sum(weights * integrand))


def homogeneity_index(s: BilliardState, k0: int = 10) -> int:
    """Homogeneity strip index: 0 in the bulk, else the k >= k0 with
    (k+1)^-2 < pi/2 - |phi| <= k^-2, signed by the sign of phi."""
    if k0 < 1:
        raise DomainError("k0 must be >= 1")
    gap = HALF_PI - abs(s.phi)
    if gap <= 0:
        raise BoundaryState("state on |phi| = pi/2")
    if gap >= 1.0 / k0**2:
        return 0
    k = int(1.0 / math.sqrt(gap))
    while gap > 1.0 / k**2:
        k -= 1
    while gap <= 1.0 / (k + 1) ** 2:
        k += 1
    return k if s.phi > 0 else -k


def strip_state(table: BilliardTable, k: int, rng: rnglib.CounterRng) -> BilliardState:
    """A random state inside homogeneity strip k (k >= 1; sign = direction)."""
    if k == 0:
        raise DomainError("strip index 0 is the bulk")
    gap = 1.0 / (abs(k) * (abs(k) + 1))  # strictly inside the strip
    st = invariant_sample(table, rng)
    phi = math.copysign(HALF_PI - gap, k)
    return BilliardState(st.scatterer_id, st.r, phi)


def boundary_expansion_proxy(table: BilliardTable, k: int, seed: int,
                             n_samples: int = 12, h: float = 1e-8) -> float:
    """Finite-difference expansion attached to strip-k states.

    For z in strip k, the collision arriving at z (the map step ending in
    the strip) expands boundary displacements like k^2; measured here as
    |F(w + h e_r) - F(w)| / h at w = F^{-1}(z), with the preimage taken
    through the time-reversal conjugacy F^{-1} = R F R.  Returns the median
    over samples.
    """
    rng = rnglib.CounterRng(seed)
    vals = []
    while len(vals) < n_samples:
        z = strip_state(table, k, rng)
        w1, _ = collision_map(table, reverse(z))
        w = reverse(w1)
        a, _ = collision_map(table, w)
        wp = BilliardState(w.scatterer_id, w.r + h, w.phi)
        bst, _ = collision_map(table, wp)
        d = phase_distance(table, a, bst)
        if math.isfinite(d) and d > 0:
            vals.append(d / h)
    return float(np.median(vals))
