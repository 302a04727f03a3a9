"""Piecewise expanding maps of [0,1]: tent, doubling, Gauss, a Lorenz-like
cusp family, and custom piecewise-polynomial tables.

Each map exposes scalar evaluation (duck-typed over float and Fraction, so
rational orbits stay exact where the arithmetic allows), vectorized
evaluation for ensemble runs, branch bookkeeping for cylinder sets, the
invariant density (closed form where known, transfer-operator fixed point
otherwise), and invariant-measure sampling.

The tent and doubling maps are dyadic: float64 iteration is *exact* and
therefore collapses every double-precision start onto 0 within ~53 steps.
Long-orbit statistics for these two maps must use the bit-tape engine in
`TapeOrbits`, which simulates the orbit of a uniformly random point with
unbounded precision through a sliding window over a seeded bit stream.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import polygamma

from . import rng as rnglib
from .errors import DomainError, SingularInput, SingularOrbit

LN2 = math.log(2.0)
SINGULAR_ORBIT_TOL = 1e-14
GAUSS_BRANCH_CUTOFF = 10**6  # listing cutoff; distance queries are analytic
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class Cylinder:
    """Depth-n cylinder interval: all points sharing `word` for n iterates."""

    left: float
    right: float
    depth: int
    word: tuple

    def __contains__(self, x) -> bool:
        return self.left < x < self.right

    @property
    def length(self) -> float:
        return float(self.right - self.left)


class IntervalMap:
    """Base class; subclasses fill in branch structure and formulas."""

    name: str = "?"
    branch_count: int | None = None  # None means countably many branches
    density_kind: str = "analytic"
    lam_min: float = 1.0
    expansion_iterate: int = 1  # iterate on which |T'| >= lam_min is checked
    has_tape = False
    derivative_bounded = True

    # -- map proper ---------------------------------------------------------
    def eval(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def deriv2(self, x):
        """Second derivative; finite differences of deriv by default."""
        h = 1e-6
        return (self.deriv(x + h) - self.deriv(x - h)) / (2.0 * h)

    def eval_vec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def deriv_vec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- branches -----------------------------------------------------------
    def branch_index(self, x):
        raise NotImplementedError

    def branch_interval(self, j):
        raise NotImplementedError

    def branch_image(self, j):
        return (0.0, 1.0)

    def branch_inverse(self, j, y):
        raise NotImplementedError

    def branch_labels(self, limit: int = 64):
        raise NotImplementedError

    # -- singular set -------------------------------------------------------
    def singular_points(self, limit: int = GAUSS_BRANCH_CUTOFF) -> tuple:
        """Singular set in the paper's descending order 1 = a_0 > ... > 0."""
        raise NotImplementedError

    def distance_to_singular(self, x) -> float:
        raise NotImplementedError

    def eval_defined_at(self, s: float) -> bool:
        """Whether T extends continuously to the singular point s."""
        return True

    def deriv_at_singular(self, s: float):
        """One-sided-consistent derivative at s, +-inf at blowups, None if
        the two sides disagree."""
        return None

    # -- invariant measure ---------------------------------------------------
    def density(self, x):
        raise NotImplementedError

    def sample_many(self, seed: int, n: int, counter: int = 0) -> np.ndarray:
        u = rnglib.uniform_block(seed, counter, n)
        return self.sample_from_uniform(u)

    def sample_from_uniform(self, u):
        raise NotImplementedError

    def measure_interval(self, a: float, b: float) -> float:
        """mu((a,b) cap [0,1]) by Gauss-Legendre quadrature of the density."""
        a = max(0.0, a)
        b = min(1.0, b)
        if b <= a:
            return 0.0
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        xs = mid + half * _GL_NODES
        return float(half * np.sum(_GL_WEIGHTS * self.density(xs)))

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r}>"


class TentMap(IntervalMap):
    name = "tent"
    branch_count = 2
    lam_min = 2.0
    has_tape = True
    tape_kind = "tent"
    exact_rational = True
    _sing = (1.0, 0.5, 0.0)

    def eval(self, x):
        return 2 * x if x <= 0.5 else 2 - 2 * x

    def deriv(self, x):
        return 2.0 if x < 0.5 else -2.0

    def deriv2(self, x):
        return 0.0

    def eval_vec(self, x):
        return np.where(x <= 0.5, 2.0 * x, 2.0 - 2.0 * x)

    def deriv_vec(self, x):
        return np.where(x < 0.5, 2.0, -2.0)

    def branch_index(self, x):
        return 0 if x < 0.5 else 1

    def branch_interval(self, j):
        return (0.0, 0.5) if j == 0 else (0.5, 1.0)

    def branch_inverse(self, j, y):
        return y / 2 if j == 0 else 1 - y / 2

    def branch_labels(self, limit: int = 64):
        return (0, 1)

    def singular_points(self, limit: int = GAUSS_BRANCH_CUTOFF):
        return self._sing

    def distance_to_singular(self, x):
        return float(min(abs(x - s) for s in self._sing))

    def deriv_at_singular(self, s):
        if s == 0.0:
            return 2.0
        if s == 1.0:
            return -2.0
        return None  # slope flips sign at 1/2

    def density(self, x):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def sample_from_uniform(self, u):
        return u


class DoublingMap(IntervalMap):
    name = "doubling"
    branch_count = 2
    lam_min = 2.0
    has_tape = True
    tape_kind = "doubling"
    exact_rational = True
    _sing = (1.0, 0.5, 0.0)

    def eval(self, x):
        return 2 * x if x < 0.5 else 2 * x - 1

    def deriv(self, x):
        return 2.0

    def deriv2(self, x):
        return 0.0

    def eval_vec(self, x):
        return np.where(x < 0.5, 2.0 * x, 2.0 * x - 1.0)

    def deriv_vec(self, x):
        return np.full(np.shape(x), 2.0)

    def branch_index(self, x):
        return 0 if x < 0.5 else 1

    def branch_interval(self, j):
        return (0.0, 0.5) if j == 0 else (0.5, 1.0)

    def branch_inverse(self, j, y):
        return y / 2 if j == 0 else (y + 1) / 2

    def branch_labels(self, limit: int = 64):
        return (0, 1)

    def singular_points(self, limit: int = GAUSS_BRANCH_CUTOFF):
        return self._sing

    def distance_to_singular(self, x):
        return float(min(abs(x - s) for s in self._sing))

    def eval_defined_at(self, s):
        return s == 0.0  # jump at 1/2 and at 1

    def deriv_at_singular(self, s):
        return 2.0

    def density(self, x):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def sample_from_uniform(self, u):
        return u


class GaussMap(IntervalMap):
    """x -> 1/x mod 1, countably many branches accumulating at 0.

    Branch labels are the continued-fraction digits k = floor(1/x) >= 1;
    branch k is (1/(k+1), 1/k).  Uniform expansion holds only for the second
    iterate (|T'| -> 1 as x -> 1), so `lam_min` is declared for T^2.
    """

    name = "gauss"
    branch_count = None
    lam_min = 2.0
    expansion_iterate = 2
    exact_rational = True
    has_tape = False
    derivative_bounded = False
    accumulation_points = (0.0,)

    def eval(self, x):
        inv = 1 / x
        return inv - int(inv)

    def deriv(self, x):
        if x == 0:
            return -math.inf
        return -1 / (x * x)

    def deriv2(self, x):
        return 2 / (x * x * x)

    def eval_vec(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(x > 0, 1.0 / x, 0.0)
        return inv - np.floor(inv)

    def deriv_vec(self, x):
        with np.errstate(divide="ignore"):
            return -1.0 / (x * x)

    def branch_index(self, x):
        return int(1 / x)

    def branch_interval(self, k):
        return (1 / (k + 1), 1 / k)

    def branch_inverse(self, k, y):
        return 1 / (y + k)

    def branch_labels(self, limit: int = 64):
        return tuple(range(1, limit + 1))

    def singular_points(self, limit: int = GAUSS_BRANCH_CUTOFF):
        return tuple(1.0 / k for k in range(1, limit + 1)) + (0.0,)

    def distance_to_singular(self, x):
        if x <= 0:
            return float(abs(x))
        k = int(1 / x)
        if k < 1:
            return float(abs(1.0 - x))
        return float(min(abs(x - 1.0 / k), abs(x - 1.0 / (k + 1))))

    def eval_defined_at(self, s):
        return s == 1.0  # T(1) = 0 one-sidedly; interior 1/k jump, 0 undefined

    def deriv_at_singular(self, s):
        if s == 0.0:
            return -math.inf
        return -1 / (s * s)

    def density(self, x):
        return 1.0 / ((1.0 + x) * LN2)

    def sample_from_uniform(self, u):
        return np.exp2(u) - 1.0 if isinstance(u, np.ndarray) else 2.0**u - 1.0

    def measure_interval(self, a, b):
        a = max(0.0, a)
        b = min(1.0, b)
        if b <= a:
            return 0.0
        return math.log((1.0 + b) / (1.0 + a)) / LN2


class LorenzMap(IntervalMap):
    """Cusp family T(x) = 1 - |2x-1|^alpha with alpha in (1/2, 1).

    Full branches, minimum slope 2*alpha > 1, and a one-over-power
    derivative blowup at the cusp x = 1/2 with exponent 1 - alpha.
    """

    branch_count = 2
    density_kind = "numeric"
    exact_rational = False
    has_tape = False
    derivative_bounded = False
    _sing = (1.0, 0.5, 0.0)

    def __init__(self, alpha: float = 0.75):
        if not 0.5 < alpha < 1.0:
            raise DomainError(f"lorenz alpha must be in (1/2,1), got {alpha}")
        self.alpha = alpha
        self.name = f"lorenz:alpha={alpha:g}"
        self.lam_min = 2.0 * alpha
        self._numeric = None

    def eval(self, x):
        return 1.0 - abs(2.0 * x - 1.0) ** self.alpha

    def deriv(self, x):
        u = 2.0 * x - 1.0
        if u == 0.0:
            return math.inf
        mag = 2.0 * self.alpha * abs(u) ** (self.alpha - 1.0)
        return mag if u < 0 else -mag

    def deriv2(self, x):
        u = abs(2.0 * x - 1.0)
        if u == 0.0:
            return -math.inf
        return -4.0 * self.alpha * (self.alpha - 1.0) * u ** (self.alpha - 2.0) * (-1.0)

    def eval_vec(self, x):
        return 1.0 - np.abs(2.0 * x - 1.0) ** self.alpha

    def deriv_vec(self, x):
        u = 2.0 * x - 1.0
        with np.errstate(divide="ignore"):
            mag = 2.0 * self.alpha * np.abs(u) ** (self.alpha - 1.0)
        return np.where(u < 0, mag, -mag)

    def branch_index(self, x):
        return 0 if x < 0.5 else 1

    def branch_interval(self, j):
        return (0.0, 0.5) if j == 0 else (0.5, 1.0)

    def branch_inverse(self, j, y):
        w = (1.0 - y) ** (1.0 / self.alpha)
        return (1.0 - w) / 2.0 if j == 0 else (1.0 + w) / 2.0

    def branch_labels(self, limit: int = 64):
        return (0, 1)

    def singular_points(self, limit: int = GAUSS_BRANCH_CUTOFF):
        return self._sing

    def distance_to_singular(self, x):
        return float(min(abs(x - s) for s in self._sing))

    def deriv_at_singular(self, s):
        if s == 0.5:
            return math.inf  # magnitude diverges; sign taken from the left
        return self.deriv(s + 1e-9) if s == 0.0 else self.deriv(s - 1e-9)

    def _ensure_numeric(self):
        if self._numeric is None:
            self._numeric = NumericDensity.build(self)
        return self._numeric

    def density(self, x):
        return self._ensure_numeric().density(x)

    def sample_from_uniform(self, u):
        return self._ensure_numeric().sample_from_uniform(u)


class CustomPolyMap(IntervalMap):
    """Piecewise polynomial map from a JSON branch table.

    Schema: {"breakpoints": [0.0, ..., 1.0], "coefficients": [[c0, c1, ...],
    ...]} with ascending-power coefficients, one list per branch.
    """

    density_kind = "numeric"
    exact_rational = False
    has_tape = False

    def __init__(self, breakpoints, coefficients, name="custom"):
        bp = [float(b) for b in breakpoints]
        if len(bp) < 2 or bp[0] != 0.0 or bp[-1] != 1.0 or sorted(bp) != bp:
            raise DomainError("breakpoints must ascend from 0.0 to 1.0")
        if len(coefficients) != len(bp) - 1:
            raise DomainError("need one coefficient list per branch")
        self.name = name
        self.breakpoints = tuple(bp)
        self.coeffs = [np.asarray(c, dtype=float) for c in coefficients]
        self.dcoeffs = [np.polynomial.polynomial.polyder(c) for c in self.coeffs]
        self.branch_count = len(self.coeffs)
        self._numeric = None
        self._images = []
        slopes = []
        for j in range(self.branch_count):
            lo, hi = self.branch_interval(j)
            xs = np.linspace(lo + 1e-9, hi - 1e-9, 257)
            d = self.deriv_vec_branch(j, xs)
            if np.any(d > 0) and np.any(d < 0):
                raise DomainError(f"branch {j} is not monotone")
            ya, yb = self.eval_branch(j, lo), self.eval_branch(j, hi)
            self._images.append((min(ya, yb), max(ya, yb)))
            slopes.append(float(np.min(np.abs(d))))
        self.lam_min = min(slopes)

    @classmethod
    def from_json(cls, path: str):
        with open(path) as fh:
            table = json.load(fh)
        return cls(table["breakpoints"], table["coefficients"],
                   name=f"custom:{path}")

    def eval_branch(self, j, x):
        return float(np.polynomial.polynomial.polyval(x, self.coeffs[j]))

    def deriv_vec_branch(self, j, x):
        return np.polynomial.polynomial.polyval(x, self.dcoeffs[j])

    def eval(self, x):
        return self.eval_branch(self.branch_index(x), x)

    def deriv(self, x):
        return float(self.deriv_vec_branch(self.branch_index(x), x))

    def eval_vec(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j in range(self.branch_count):
            lo, hi = self.branch_interval(j)
            m = (x >= lo) & (x < hi) if j < self.branch_count - 1 else (x >= lo)
            out[m] = np.polynomial.polynomial.polyval(x[m], self.coeffs[j])
        return out

    def deriv_vec(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for j in range(self.branch_count):
            lo, hi = self.branch_interval(j)
            m = (x >= lo) & (x < hi) if j < self.branch_count - 1 else (x >= lo)
            out[m] = self.deriv_vec_branch(j, x[m])
        return out

    def branch_index(self, x):
        j = bisect_right(self.breakpoints, x) - 1
        return min(max(j, 0), self.branch_count - 1)

    def branch_interval(self, j):
        return (self.breakpoints[j], self.breakpoints[j + 1])

    def branch_image(self, j):
        return self._images[j]

    def branch_inverse(self, j, y):
        lo, hi = self.branch_interval(j)
        ylo, yhi = self.eval_branch(j, lo), self.eval_branch(j, hi)
        y = min(max(y, min(ylo, yhi)), max(ylo, yhi))
        increasing = yhi >= ylo
        a, b = lo, hi
        for _ in range(80):  # bisection; branches are strictly monotone
            mid = 0.5 * (a + b)
            if (self.eval_branch(j, mid) < y) == increasing:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    def branch_labels(self, limit: int = 64):
        return tuple(range(self.branch_count))

    def singular_points(self, limit: int = GAUSS_BRANCH_CUTOFF):
        return tuple(sorted(self.breakpoints, reverse=True))

    def distance_to_singular(self, x):
        return float(min(abs(x - s) for s in self.breakpoints))

    def eval_defined_at(self, s):
        js = [j for j in range(self.branch_count)
              if abs(self.breakpoints[j] - s) < 1e-15
              or abs(self.breakpoints[j + 1] - s) < 1e-15]
        vals = [self.eval_branch(j, s) for j in js]
        return max(vals) - min(vals) < 1e-12 if vals else True

    def _ensure_numeric(self):
        if self._numeric is None:
            self._numeric = NumericDensity.build(self)
        return self._numeric

    def density(self, x):
        return self._ensure_numeric().density(x)

    def sample_from_uniform(self, u):
        return self._ensure_numeric().sample_from_uniform(u)


# ---------------------------------------------------------------------------
# transfer operator and numeric densities
# ---------------------------------------------------------------------------

TRANSFER_GRID = 2**12
TRANSFER_ITERATIONS = 200
GAUSS_TRANSFER_BRANCHES = 2000


def apply_transfer(m: IntervalMap, xs: np.ndarray, f: np.ndarray) -> np.ndarray:
    """One application of the transfer operator to grid values `f`.

    (Lf)(y) = sum over preimages x of f(x)/|T'(x)|, evaluated on the grid
    with linear interpolation.  The Gauss map sums branches up to
    GAUSS_TRANSFER_BRANCHES and closes the tail analytically with the
    trigamma function (the tail branches all land next to x = 0).
    """
    out = np.zeros_like(f)
    if isinstance(m, GaussMap):
        ys = xs
        for k in range(1, GAUSS_TRANSFER_BRANCHES + 1):
            pre = 1.0 / (ys + k)
            out += np.interp(pre, xs, f) / (ys + k) ** 2
        out += f[0] * polygamma(1, ys + GAUSS_TRANSFER_BRANCHES + 1)
        return out
    for j in m.branch_labels():
        ylo, yhi = m.branch_image(j)
        sel = (xs >= ylo) & (xs <= yhi)
        ys = xs[sel]
        if isinstance(m, CustomPolyMap):
            pre = np.array([m.branch_inverse(j, y) for y in ys])
        else:
            pre = m.branch_inverse(j, ys)
        with np.errstate(divide="ignore"):
            w = 1.0 / np.abs(m.deriv_vec(pre))
        w[~np.isfinite(w)] = 0.0
        out[sel] += np.interp(pre, xs, f) * w
    return out


class NumericDensity:
    """Invariant density as a transfer-operator fixed point on a grid."""

    def __init__(self, xs: np.ndarray, f: np.ndarray):
        self.xs = xs
        self.f = f
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(xs))])
        self.cdf = cdf / cdf[-1]

    @classmethod
    def build(cls, m: IntervalMap, grid: int = TRANSFER_GRID,
              iterations: int = TRANSFER_ITERATIONS,
              tol: float = 1e-13) -> "NumericDensity":
        xs = np.linspace(0.0, 1.0, grid + 1)
        f = np.ones_like(xs)
        for _ in range(iterations):
            g = apply_transfer(m, xs, f)
            g /= np.trapezoid(g, xs)
            done = np.max(np.abs(g - f)) < tol
            f = g
            if done:
                break
        return cls(xs, np.maximum(f, 0.0))

    def density(self, x):
        return np.interp(x, self.xs, self.f)

    def sample_from_uniform(self, u):
        return np.interp(u, self.cdf, self.xs)


# ---------------------------------------------------------------------------
# map registry
# ---------------------------------------------------------------------------

def get_map(map_id: str) -> IntervalMap:
    """Resolve a map id: tent | doubling | gauss | lorenz[:alpha=a] | custom:<path>."""
    if map_id == "tent":
        return TentMap()
    if map_id == "doubling":
        return DoublingMap()
    if map_id == "gauss":
        return GaussMap()
    if map_id == "lorenz" or map_id.startswith("lorenz:"):
        alpha = 0.75
        if ":" in map_id:
            spec = map_id.split(":", 1)[1]
            if not spec.startswith("alpha="):
                raise DomainError(f"bad lorenz spec {map_id!r}")
            alpha = float(spec[len("alpha="):])
        return LorenzMap(alpha)
    if map_id.startswith("custom:"):
        return CustomPolyMap.from_json(map_id.split(":", 1)[1])
    raise DomainError(f"unknown map id {map_id!r}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _near_singular(m: IntervalMap, x) -> float | None:
    xf = float(x)
    d = m.distance_to_singular(xf)
    # "coincides with a singular point" at the float resolution of x itself:
    # near the Gauss accumulation point the branches are far finer than an
    # absolute tolerance yet still resolved by float64
    if d <= math.ulp(max(abs(xf), 1e-300)):
        k = int(1 / xf) if isinstance(m, GaussMap) and xf > 0 else None
        if k is not None:
            cands = [1.0 / k, 1.0 / (k + 1)]
            return min(cands, key=lambda s: abs(s - xf))
        return min(m.singular_points(limit=4), key=lambda s: abs(s - xf))
    return None


def evaluate(m: IntervalMap, x):
    """T(x); SingularInput where the map has no continuous value."""
    if x < 0 or x > 1:
        raise DomainError(f"x={x} outside [0,1]")
    s = _near_singular(m, x)
    if s is not None:
        if not m.eval_defined_at(s):
            raise SingularInput(f"{m.name}: x={x} is a singular point")
        if isinstance(m, GaussMap):  # continuous only at the endpoint 1
            return 0.0
    return m.eval(x)


def derivative(m: IntervalMap, x):
    """T'(x); signed infinity at derivative blowups, SingularInput where the
    one-sided slopes disagree."""
    if x < 0 or x > 1:
        raise DomainError(f"x={x} outside [0,1]")
    s = _near_singular(m, x)
    if s is not None:
        d = m.deriv_at_singular(s)
        if d is None:
            raise SingularInput(f"{m.name}: slope ambiguous at x={x}")
        return d
    return m.deriv(x)


def sample_invariant(m: IntervalMap, rng: rnglib.CounterRng) -> float:
    """One draw from the map's invariant measure."""
    return float(m.sample_from_uniform(rng.uniform()))


def sample_invariant_many(m: IntervalMap, seed: int, n: int) -> np.ndarray:
    return np.asarray(m.sample_from_uniform(rnglib.uniform_block(seed, 0, n)))


def orbit(m: IntervalMap, x, n: int):
    """x, T(x), ..., T^{n-1}(x); SingularOrbit on close encounters."""
    pts = []
    for _ in range(n):
        if m.distance_to_singular(float(x)) < SINGULAR_ORBIT_TOL:
            raise SingularOrbit(f"{m.name}: orbit hit the singular set at {x}")
        pts.append(x)
        x = m.eval(x)
    return pts


def cylinder(m: IntervalMap, x, n: int) -> Cylinder:
    """The depth-n cylinder containing x, by intersecting branch preimages."""
    if n < 1:
        raise DomainError("cylinder depth must be >= 1")
    pts = orbit(m, x, n)
    word = tuple(m.branch_index(p) for p in pts)
    lo, hi = m.branch_interval(word[-1])
    for k in range(n - 2, -1, -1):
        j = word[k]
        ylo, yhi = m.branch_image(j)
        a = m.branch_inverse(j, max(lo, ylo) if lo > ylo else ylo)
        b = m.branch_inverse(j, min(hi, yhi) if hi < yhi else yhi)
        lo, hi = (a, b) if a < b else (b, a)
    return Cylinder(left=lo, right=hi, depth=n, word=word)


def lyapunov(m: IntervalMap, x, n: int) -> float:
    """Birkhoff average (1/n) sum_{k<n} ln|T'(T^k x)|.

    Continues through near-singular iterates as long as the map still has a
    value there (only genuine jump/undefined points stop the orbit); the
    derivative blowup at such points is integrable.
    """
    if n < 1:
        raise DomainError("lyapunov needs n >= 1")
    total = 0.0
    for _ in range(n):
        d = abs(m.deriv(x))
        if d == 0.0 or not math.isfinite(d):
            raise SingularOrbit(f"{m.name}: orbit hit the singular set")
        total += math.log(d)
        try:
            x = evaluate(m, x)
        except SingularInput as e:
            raise SingularOrbit(str(e)) from e
    return total / n


def interval_ball_measure(m: IntervalMap, x: float, rho: float) -> float:
    """mu(B(x, rho) cap [0,1])."""
    if rho < 0:
        raise DomainError("rho must be >= 0")
    return m.measure_interval(x - rho, x + rho)


def boundary_neighborhood_measure(m: IntervalMap, eps: float) -> float:
    """mu{ x : d(x, S) < eps } via interval union + density quadrature."""
    intervals = []
    if isinstance(m, GaussMap):
        k_max = int(math.ceil(1.0 / math.sqrt(2.0 * eps))) + 2
        intervals = [(1.0 / k - eps, 1.0 / k + eps) for k in range(1, k_max + 1)]
        intervals.append((0.0, 1.0 / (k_max + 1) + eps))
    else:
        intervals = [(s - eps, s + eps) for s in m.singular_points(limit=64)]
    intervals = sorted((max(0.0, a), min(1.0, b)) for a, b in intervals)
    merged = []
    for a, b in intervals:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return float(sum(m.measure_interval(a, b) for a, b in merged))


# ---------------------------------------------------------------------------
# PE-condition validation (report-only)
# ---------------------------------------------------------------------------

@dataclass
class PEReport:
    map_name: str
    branch_monotone: bool
    expansion_iterate: int
    expansion_min: float
    expansion_pass: bool
    pe1_max_ratio: float
    pe1_bounded: bool
    pe2_min_image: float
    pe4_eps: list
    pe4_measures: list
    pe4_gamma: float
    singular_exponents: dict
    tail_exponent: float | None
    distortion_sigma: float | None

    def summary(self) -> str:
        lines = [
            f"map={self.map_name}",
            f"monotone branches: {'pass' if self.branch_monotone else 'FAIL'}",
            f"expansion |T^{self.expansion_iterate}'| >= lam_min: "
            f"min={self.expansion_min:.4g} "
            f"({'pass' if self.expansion_pass else 'FAIL'})",
            f"PE1 sup |T''|/|T'|^2 = {self.pe1_max_ratio:.4g} "
            f"({'bounded' if self.pe1_bounded else 'unbounded'})",
            f"PE2 min branch image length = {self.pe2_min_image:.4g}",
            f"PE4 fitted boundary exponent gamma = {self.pe4_gamma:.3f}",
        ]
        for s, a in self.singular_exponents.items():
            lines.append(f"singular exponent at {s:g}: alpha = {a:.3f}")
        if self.tail_exponent is not None:
            lines.append(f"derivative tail exponent tau = {self.tail_exponent:.3f}")
        return "\n".join(lines)


def _fit_loglog(x: np.ndarray, y: np.ndarray) -> float:
    gd = (np.asarray(x) > 0) & (np.asarray(y) > 0)
    lx, ly = np.log(np.asarray(x)[gd]), np.log(np.asarray(y)[gd])
    return float(np.polyfit(lx, ly, 1)[0])


def _derivative_tail_measure(m: IntervalMap, t: float, blowups) -> float:
    """mu{ |T'| > t } when the derivative blows up only at the given
    (point, side) list: each sublevel boundary |T'(s + side*h)| = t is
    located by bisection in h and the interval measured by quadrature."""
    total = 0.0
    for s, side in blowups:
        lo, hi = 1e-14, 0.2
        if abs(m.deriv(s + side * hi)) > t:
            h = hi
        else:
            for _ in range(80):
                mid = math.sqrt(lo * hi)  # geometric bisection
                if abs(m.deriv(s + side * mid)) > t:
                    lo = mid
                else:
                    hi = mid
            h = math.sqrt(lo * hi)
        a, b = (s, s + h) if side > 0 else (s - h, s)
        total += m.measure_interval(a, b)
    return total


def validate_pe_conditions(m: IntervalMap, grid: int = 4096) -> PEReport:
    """Measure the PE / overline-PE constants on a sample grid.

    Report-only: nothing raises; the caller reads pass flags and fitted
    exponents (branch image lengths, boundary-neighborhood scaling at
    eps = 2^-k for k = 4..16, per-singular-point derivative exponents, and
    the derivative tail exponent for maps with unbounded derivative).
    """
    labels = m.branch_labels(limit=32)

    monotone = True
    images = []
    for j in labels:
        lo, hi = m.branch_interval(j)
        xs = np.linspace(lo, hi, 130)[1:-1]
        d = m.deriv_vec(xs)
        if np.any(d > 0) and np.any(d < 0):
            monotone = False
        ylo, yhi = m.branch_image(j)
        images.append(yhi - ylo)

    xs = np.linspace(0.0, 1.0, grid + 1)[1:-1]
    keep = np.array([m.distance_to_singular(float(x)) > 1e-6 for x in xs])
    xs = xs[keep]
    if m.expansion_iterate == 1:
        expansion = np.abs(m.deriv_vec(xs))
    else:
        prod = np.ones_like(xs)
        y = xs
        for _ in range(m.expansion_iterate):
            prod *= np.abs(m.deriv_vec(y))
            y = m.eval_vec(y)
        expansion = prod
    expansion_min = float(np.min(expansion))

    d1 = np.abs(m.deriv_vec(xs))
    d2 = np.abs(np.array([m.deriv2(float(x)) for x in xs[:: max(1, len(xs) // 512)]]))
    d1s = d1[:: max(1, len(xs) // 512)][: len(d2)]
    ratio = d2 / d1s**2
    pe1_max = float(np.max(ratio))
    pe1_bounded = bool(m.derivative_bounded or isinstance(m, GaussMap))

    eps_grid = [2.0**-k for k in range(4, 17)]
    measures = [boundary_neighborhood_measure(m, e) for e in eps_grid]
    gamma = _fit_loglog(eps_grid, measures)

    exponents = {}
    sigma_hat = None
    blowups = []
    accum = getattr(m, "accumulation_points", ())
    for s in m.singular_points(limit=8):
        if any(abs(s - a) < 1e-15 for a in accum):
            continue  # accumulation point: no single-branch exponent there
        hs = np.logspace(-8, -3, 12)
        for side in (+1, -1):
            pts = s + side * hs
            if np.any(pts <= 0) or np.any(pts >= 1):
                continue
            vals = np.abs(m.deriv_vec(pts))
            if vals[0] < 10.0 * vals[-1]:  # no blowup on this side
                continue
            slope = _fit_loglog(hs, vals)
            exponents[float(s)] = -slope
            blowups.append((float(s), side))
            v2 = np.abs(np.array([m.deriv2(float(p)) for p in pts]))
            sl = _fit_loglog(vals, v2)  # |T''| ~ |T'|^(sigma+2)
            sigma_hat = sl - 2.0
            break

    tail = None
    if not m.derivative_bounded:
        for a in accum:  # one-sided blowup into the accumulation point
            for side in (+1, -1):
                pts = a + side * np.logspace(-8, -3, 6)
                if np.any(pts <= 0) or np.any(pts >= 1):
                    continue
                vals = np.abs(m.deriv_vec(pts))
                if vals[0] > 10.0 * vals[-1]:
                    blowups.append((float(a), side))
        ts = np.logspace(1, 3, 8)
        probs = np.array([_derivative_tail_measure(m, t, blowups) for t in ts])
        if np.all(probs > 0):
            tail = -_fit_loglog(ts, probs)

    return PEReport(
        map_name=m.name,
        branch_monotone=monotone,
        expansion_iterate=m.expansion_iterate,
        expansion_min=expansion_min,
        expansion_pass=expansion_min >= m.lam_min - 1e-9,
        pe1_max_ratio=pe1_max,
        pe1_bounded=pe1_bounded,
        pe2_min_image=float(min(images)),
        pe4_eps=eps_grid,
        pe4_measures=measures,
        pe4_gamma=gamma,
        singular_exponents=exponents,
        tail_exponent=tail,
        distortion_sigma=sigma_hat,
    )


# ---------------------------------------------------------------------------
# exact long orbits for the dyadic maps
# ---------------------------------------------------------------------------

class TapeOrbits:
    """Exact orbits of tent/doubling started at random points, via bit tapes.

    With x = 0.b1 b2 b3 ... the doubling orbit is the bit shift,
    T^k x = 0.b_{k+1} b_{k+2} ...; the tent orbit satisfies
    T^k x = w_k if b_k = 0 else 1 - w_k, with w_k the same shifted window
    (the complementation parity after k steps equals b_k).  Windows are
    truncated to 53 bits, so every reported point carries the full
    float64 resolution of the true infinite-precision orbit.

    Tape words are regenerated from (seed, word index) on demand, so the
    per-orbit state is the seed alone regardless of orbit length.
    """

    def __init__(self, kind: str, seeds, n_max: int = 0):
        if kind not in ("tent", "doubling"):
            raise DomainError(f"no tape representation for {kind!r}")
        self.kind = kind
        self.seeds = np.asarray(seeds, dtype=np.uint64)
        self.n_orbits = len(self.seeds)
        self.n_max = n_max

    def _words(self, w_lo: int, w_hi: int) -> np.ndarray:
        counters = np.arange(w_lo, w_hi, dtype=np.uint64)
        z = self.seeds[:, None] + (counters[None, :] + np.uint64(1)) \
            * np.uint64(rnglib.GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def start(self) -> np.ndarray:
        return rnglib.tape_windows(self._words(0, 3), np.array([0]))[:, 0]

    def points(self, ks: np.ndarray) -> np.ndarray:
        """T^k x for each orbit (rows) and each k in `ks` (columns), k >= 1."""
        ks = np.asarray(ks, dtype=np.int64)
        w_lo = max(int(ks.min()) - 1, 0) >> 6
        w_hi = ((int(ks.max()) + 53) >> 6) + 2
        words = self._words(w_lo, w_hi)
        rel = ks - (w_lo << 6)
        w = rnglib.tape_windows(words, rel)
        if self.kind == "doubling":
            return w
        flip = rnglib.tape_bits(words, rel - 1)
        return np.where(flip == 1, 1.0 - w, w)
