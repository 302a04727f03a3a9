import json
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import ks_2samp

from recurlab import interval_maps as im
from recurlab import rng
from recurlab.errors import DomainError, SingularInput, SingularOrbit

TENT = im.TentMap()
DOUBLING = im.DoublingMap()
GAUSS = im.GaussMap()
LORENZ = im.LorenzMap(0.75)
ALL_MAPS = (TENT, DOUBLING, GAUSS, LORENZ)


# ---------------------------------------------------------------------------
# evaluation and derivatives
# ---------------------------------------------------------------------------

def test_evaluate_examples():
    assert im.evaluate(TENT, 0.25) == 0.5
    assert im.evaluate(GAUSS, 0.4) == pytest.approx(0.5, abs=1e-15)
    # the cusp apex is a singular point of the derivative but the map itself
    # extends continuously there
    assert im.evaluate(LORENZ, 0.5) == 1.0


def test_evaluate_domain_and_singular_errors():
    with pytest.raises(DomainError):
        im.evaluate(TENT, -0.1)
    with pytest.raises(DomainError):
        im.evaluate(TENT, 1.1)
    with pytest.raises(SingularInput):
        im.evaluate(GAUSS, 0.0)
    with pytest.raises(SingularInput):
        im.evaluate(GAUSS, 1.0 / 3.0)  # interior jump point
    with pytest.raises(SingularInput):
        im.evaluate(DOUBLING, 0.5)
    assert im.evaluate(TENT, 0.5) == 1.0  # continuous at the peak
    assert im.evaluate(GAUSS, 1.0) == 0.0  # one-sided endpoint value


def test_derivative_examples():
    assert im.derivative(TENT, 0.25) == 2.0
    assert im.derivative(GAUSS, 0.4) == pytest.approx(-6.25)
    # signed overflow markers at blowups rather than garbage
    assert im.derivative(GAUSS, 0.0) == -math.inf
    assert im.derivative(LORENZ, 0.5) == math.inf
    with pytest.raises(SingularInput):
        im.derivative(TENT, 0.5)  # slope flips sign


def test_lorenz_derivative_blowup_rate():
    for h in (1e-4, 1e-6, 1e-8):
        ratio = abs(im.derivative(LORENZ, 0.5 + h)) * h ** (1 - 0.75)
        # representing 0.5 + h costs ~ulp(0.5)/h in relative accuracy
        assert ratio == pytest.approx(2 * 0.75 * 2.0 ** (0.75 - 1), rel=1e-6)


def test_registry():
    assert isinstance(im.get_map("tent"), im.TentMap)
    assert isinstance(im.get_map("doubling"), im.DoublingMap)
    assert isinstance(im.get_map("gauss"), im.GaussMap)
    m = im.get_map("lorenz:alpha=0.6")
    assert isinstance(m, im.LorenzMap) and m.alpha == 0.6
    with pytest.raises(DomainError):
        im.get_map("circle")
    with pytest.raises(DomainError):
        im.get_map("lorenz:alpha=1.5")


def test_custom_map_roundtrip(tmp_path):
    table = {"breakpoints": [0.0, 0.5, 1.0],
             "coefficients": [[0.0, 2.0], [-1.0, 2.0]]}  # doubling as polys
    path = tmp_path / "doubling.json"
    path.write_text(json.dumps(table))
    m = im.get_map(f"custom:{path}")
    xs = np.linspace(0.01, 0.99, 401)
    assert np.allclose(m.eval_vec(xs), DOUBLING.eval_vec(xs), atol=1e-12)
    assert m.deriv(0.3) == pytest.approx(2.0)
    y = m.branch_inverse(1, 0.62)
    assert m.eval_branch(1, y) == pytest.approx(0.62, abs=1e-12)
    c = im.cylinder(m, 0.3, 4)
    assert c.length == pytest.approx(2.0 ** -4, rel=1e-6)


def test_custom_map_rejects_bad_tables(tmp_path):
    with pytest.raises(DomainError):
        im.CustomPolyMap([0.0, 1.0], [[0.0, 1.0, -1.0]])  # non-monotone x-x^2
    with pytest.raises(DomainError):
        im.CustomPolyMap([0.0, 0.4], [[0.0, 2.0]])


# ---------------------------------------------------------------------------
# invariant measure
# ---------------------------------------------------------------------------

def test_sample_invariant_tent_mean():
    xs = im.sample_invariant_many(TENT, 101, 10**6)
    se = xs.std() / math.sqrt(len(xs))
    assert abs(xs.mean() - 0.5) < 3 * se


def test_sample_invariant_gauss_mean_vs_quadrature():
    # oracle: quadrature of x/((1+x) ln 2); closed form (1 - ln 2)/ln 2
    oracle, err = quad(lambda x: x / ((1 + x) * math.log(2)), 0, 1)
    assert oracle == pytest.approx((1 - math.log(2)) / math.log(2), abs=1e-12)
    xs = im.sample_invariant_many(GAUSS, 11, 10**6)
    se = xs.std() / math.sqrt(len(xs))
    assert abs(xs.mean() - oracle) < 3 * se


@pytest.mark.parametrize("m", ALL_MAPS, ids=lambda m: m.name)
def test_pushforward_invariance_ks(m):
    xs = np.asarray(im.sample_invariant_many(m, 2024, 10**5))
    ys = m.eval_vec(xs)
    assert ks_2samp(xs, ys).statistic <= 0.01


def test_density_normalized_and_nonnegative():
    # 16384 = 4 * 4096: the numeric-density nodes are a subset, so the
    # piecewise-linear integral is reproduced exactly
    grid = np.linspace(0, 1, 2**14 + 1)
    for m in ALL_MAPS:
        dens = np.asarray(m.density(grid), dtype=float)
        assert np.all(dens >= 0)
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-8)


def test_gauss_transfer_operator_recovers_analytic_density():
    nd = im.NumericDensity.build(GAUSS)
    exact = 1.0 / ((1.0 + nd.xs) * math.log(2))
    assert np.max(np.abs(nd.f - exact)) <= 1e-4


def test_lorenz_numeric_density_is_fixed_point():
    nd = LORENZ._ensure_numeric()
    g = im.apply_transfer(LORENZ, nd.xs, nd.f)
    g /= np.trapezoid(g, nd.xs)
    assert np.max(np.abs(g - nd.f)) < 1e-10


def test_interval_ball_measure_matches_analytic_gauss():
    # dual route: quadrature wrapper vs the closed-form log expression
    got = im.interval_ball_measure(GAUSS, 0.3, 0.05)
    want = math.log(1.35 / 1.25) / math.log(2)
    assert got == pytest.approx(want, rel=1e-10)
    assert im.interval_ball_measure(TENT, 0.02, 0.05) == pytest.approx(0.07)


# ---------------------------------------------------------------------------
# cylinders and orbits
# ---------------------------------------------------------------------------

def test_cylinder_examples():
    c = im.cylinder(TENT, 0.3, 2)
    assert (c.left, c.right) == (0.25, 0.5)
    assert c.word == (0, 1)
    c1 = im.cylinder(TENT, 0.3, 1)
    assert (c1.left, c1.right) == (0.0, 0.5)
    for n in (1, 3, 7):
        cd = im.cylinder(DOUBLING, 0.3, n)
        assert cd.length == pytest.approx(2.0 ** -n)


@pytest.mark.parametrize("m", ALL_MAPS, ids=lambda m: m.name)
def test_cylinder_nesting(m):
    xs = im.sample_invariant_many(m, 7, 12)
    for x in xs:
        prev = None
        try:
            for n in range(1, 9):
                c = im.cylinder(m, float(x), n)
                assert c.left < x < c.right
                if prev is not None:
                    assert c.left >= prev.left - 1e-12
                    assert c.right <= prev.right + 1e-12
                prev = c
        except SingularOrbit:
            continue


def test_cylinder_singular_orbit():
    with pytest.raises(SingularOrbit):
        im.cylinder(TENT, 0.25, 3)  # 0.25 -> 0.5 hits the peak


def test_lyapunov_tent_exact():
    # rational start: float tent orbits collapse onto the dyadic singular
    # set within ~53 steps, Fractions iterate exactly
    assert im.lyapunov(TENT, Fraction(2, 7), 10**5) == pytest.approx(
        math.log(2), abs=1e-9)


def test_lyapunov_gauss_matches_quadrature():
    oracle, _ = quad(lambda x: 2 * abs(math.log(x)) / ((1 + x) * math.log(2)),
                     0, 1)
    assert oracle == pytest.approx(math.pi**2 / (6 * math.log(2)), abs=1e-9)
    x0 = float(im.sample_invariant_many(GAUSS, 5, 1)[0])
    assert im.lyapunov(GAUSS, x0, 10**6) == pytest.approx(oracle, abs=0.02)


def test_lyapunov_lorenz_lower_bound():
    x0 = float(im.sample_invariant_many(LORENZ, 9, 1)[0])
    assert im.lyapunov(LORENZ, x0, 2 * 10**5) >= math.log(1.5)


def test_fraction_orbits_exact():
    # tent and gauss arithmetic is closed over rationals
    x = Fraction(2, 5)
    assert im.evaluate(TENT, x) == Fraction(4, 5)
    assert im.evaluate(TENT, Fraction(4, 5)) == Fraction(2, 5)
    assert im.evaluate(GAUSS, Fraction(2, 5)) == Fraction(1, 2)


# ---------------------------------------------------------------------------
# expansion / distortion
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", ALL_MAPS, ids=lambda m: m.name)
def test_branch_monotone_and_expansion(m):
    rep = im.validate_pe_conditions(m, grid=2048)
    assert rep.branch_monotone
    assert rep.expansion_pass, (m.name, rep.expansion_min)


def test_bounded_distortion_linear_maps_exact():
    # |(T^n)'| is constant on tent/doubling: cylinder-mates distort by 1
    for m in (TENT, DOUBLING):
        x = 0.2890625137
        c = im.cylinder(m, x, 20)
        y = c.left + 0.25 * c.length
        z = c.left + 0.75 * c.length
        ly = sum(math.log(abs(m.deriv(p))) for p in im.orbit(m, y, 20))
        lz = sum(math.log(abs(m.deriv(p))) for p in im.orbit(m, z, 20))
        assert ly == lz


def test_bounded_distortion_gauss_stable():
    xs = im.sample_invariant_many(GAUSS, 607, 10)
    per_depth = []
    for n in range(4, 15):
        worst = 0.0
        for x in xs:
            try:
                c = im.cylinder(GAUSS, float(x), n)
            except SingularOrbit:
                continue
            y = c.left + 0.25 * c.length
            z = c.left + 0.75 * c.length
            ly = sum(math.log(abs(GAUSS.deriv(p)))
                     for p in im.orbit(GAUSS, y, n))
            lz = sum(math.log(abs(GAUSS.deriv(p)))
                     for p in im.orbit(GAUSS, z, n))
            worst = max(worst, abs(ly - lz))
        per_depth.append(worst)
    assert max(per_depth) < 1.5         # e^C with a modest C
    # distortion saturates geometrically: deep blocks no worse than shallow
    assert max(per_depth[6:]) <= 1.5 * max(per_depth[:6]) + 0.1


# ---------------------------------------------------------------------------
# PE-condition reports
# ---------------------------------------------------------------------------

def test_pe_report_tent():
    rep = im.validate_pe_conditions(TENT)
    assert rep.pe2_min_image == pytest.approx(1.0)
    assert rep.pe1_max_ratio == 0.0
    assert rep.pe4_gamma == pytest.approx(1.0, abs=0.05)


def test_pe_report_gauss_boundary_exponent_vs_mc_oracle():
    rep = im.validate_pe_conditions(GAUSS)
    # independent oracle: Monte Carlo measure of the eps-neighborhood of
    # {0} u {1/k} under invariant samples
    xs = im.sample_invariant_many(GAUSS, 31337, 2 * 10**5)
    k = np.floor(1 / xs)
    dmin = np.minimum(np.minimum(np.abs(xs - 1 / np.maximum(k, 1)),
                                 np.abs(xs - 1 / (k + 1))), xs)
    eps = np.array(rep.pe4_eps[:-3])  # MC is noisy at the smallest eps
    mc = np.array([np.mean(dmin < e) for e in eps])
    gamma_mc = np.polyfit(np.log(eps), np.log(mc), 1)[0]
    assert rep.pe4_gamma == pytest.approx(gamma_mc, abs=0.08)
    # countable branch crowding near 0 makes the exponent 1/2, not 1
    assert 0.35 <= rep.pe4_gamma <= 0.55
    assert rep.tail_exponent is not None and 0.3 <= rep.tail_exponent <= 0.6


def test_pe_report_lorenz_singular_exponent():
    rep = im.validate_pe_conditions(LORENZ)
    assert rep.singular_exponents[0.5] == pytest.approx(0.25, abs=0.02)
    assert rep.tail_exponent == pytest.approx(4.0, abs=0.5)
    assert rep.distortion_sigma == pytest.approx(3.0, abs=0.1)
    assert not rep.pe1_bounded


def test_pe_report_gauss_expansion_on_second_iterate():
    rep = im.validate_pe_conditions(GAUSS)
    assert rep.expansion_iterate == 2
    assert rep.expansion_min >= 2.0


# ---------------------------------------------------------------------------
# bit tapes
# ---------------------------------------------------------------------------

def test_tape_orbit_one_step_consistency():
    for kind, m in (("tent", TENT), ("doubling", DOUBLING)):
        t = im.TapeOrbits(kind, rng.split_seeds(3, np.arange(8)), 300)
        prev = t.start()
        pts = t.points(np.arange(1, 200))
        for k in range(pts.shape[1]):
            stepped = m.eval_vec(prev)
            assert np.max(np.abs(stepped - pts[:, k])) <= 2.0 ** -52
            prev = pts[:, k]


def test_tape_points_do_not_collapse():
    # float64 iteration of dyadic maps collapses to 0 within ~53 steps; the
    # tape orbits must not
    t = im.TapeOrbits("doubling", [rng.split_seed(1, 0)], 5000)
    pts = t.points(np.arange(4000, 4100))
    assert np.all(pts > 0)
    x = t.start()[0]
    for _ in range(200):
        x = DOUBLING.eval(x)
    assert x == 0.0  # the raw float orbit does collapse


def test_singular_points_listing():
    assert TENT.singular_points() == (1.0, 0.5, 0.0)
    s = GAUSS.singular_points(limit=5)
    assert s[0] == 1.0 and s[-1] == 0.0 and len(s) == 6
    assert GAUSS.distance_to_singular(0.49) == pytest.approx(0.01)
    # near 0 the points 1/k are ~x^2 apart, so the distance collapses but
    # the analytic bound d(x, S) <= x still holds
    assert 0.0 <= GAUSS.distance_to_singular(1e-9) <= 1e-9
