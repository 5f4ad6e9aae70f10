"""Lyapunov estimators, deviation statistics, and the concentration bound."""

import math
import warnings

import numpy as np
import pytest

from hyperloc.errors import ConfigError, DegenerateError
from hyperloc.lyapunov import (
    LyapunovCurve,
    azuma_bound,
    block_average_check,
    deviation_probability,
    estimate_lyapunov,
    exceptional_energies,
    holder_fit,
    ldt_rate_fit,
    lyapunov_curve,
    wilson_interval,
)
from hyperloc.measures import ShiftMeasure
from hyperloc.sampling import LocallyConstantFn, TorusSystem
from hyperloc.symbolic import SftSpec, SymbolWindow

# free chain: L(E) = log((|E| + sqrt(E^2 - 4)) / 2) outside [-2, 2], 0 inside
L_FREE_25 = math.log(2.0)
L_FREE_3 = math.log((3.0 + math.sqrt(5.0)) / 2.0)


@pytest.fixture
def bern():
    return ShiftMeasure.bernoulli((0.5, 0.5))


@pytest.fixture
def free(bern):
    return LocallyConstantFn.constant(bern.spec, 0.0)


@pytest.fixture
def pm_one(bern):
    return LocallyConstantFn.from_site_values(bern.spec, (1.0, -1.0))


class TestEstimate:
    def test_free_chain_hyperbolic_energies(self, bern, free):
        # constant potential makes every replica identical: se is exactly 0
        est, se = estimate_lyapunov(bern, free, 2.5, 2000, 2, 5)
        assert se == 0.0
        assert abs(est - L_FREE_25) < 1e-3
        est3, se3 = estimate_lyapunov(bern, free, 3.0, 2000, 2, 5)
        assert se3 == 0.0
        assert abs(est3 - L_FREE_3) < 1e-3

    def test_free_chain_is_even_in_energy(self, bern, free):
        a, _ = estimate_lyapunov(bern, free, 2.5, 2000, 2, 5)
        b, _ = estimate_lyapunov(bern, free, -2.5, 2000, 2, 5)
        assert a == b

    def test_free_chain_elliptic_energies_vanish(self, bern, free):
        # the matrices cycle, so only rounding noise survives in the logs
        for E in (0.0, 1.0):
            est, se = estimate_lyapunov(bern, free, E, 2004, 2, 5)
            assert abs(est) <= 1e-12
            assert se <= 1e-12

    def test_bernoulli_frozen_value_and_determinism(self, bern, pm_one):
        est, se = estimate_lyapunov(bern, pm_one, 0.5, 2000, 8, 42)
        assert est == 0.13399217759570703
        assert se == 0.0019335416919049506
        est2, se2 = estimate_lyapunov(bern, pm_one, 0.5, 2000, 8, 42)
        assert (est, se) == (est2, se2)

    def test_validation(self, bern, pm_one):
        with pytest.raises(ConfigError, match="replicas"):
            estimate_lyapunov(bern, pm_one, 0.5, 100, 1, 0)
        with pytest.raises(ConfigError, match="n must"):
            estimate_lyapunov(bern, pm_one, 0.5, 0, 4, 0)
        with pytest.raises(ConfigError, match="potential"):
            estimate_lyapunov(bern, None, 0.5, 100, 4, 0)
        golden_f = LocallyConstantFn.constant(SftSpec(2, ((1, 1), (1, 0))), 0.0)
        with pytest.raises(ConfigError, match="different subshifts"):
            estimate_lyapunov(bern, golden_f, 0.5, 100, 4, 0)


class TestCurveAndFlags:
    def test_free_chain_flags_exactly_the_band(self, bern, free):
        grid = np.linspace(-3.0, 3.0, 25)
        curve = lyapunov_curve(bern, free, grid, n=500, replicas=2, seed=1)
        expected = tuple(E for E in grid if abs(E) <= 2.0)
        assert curve.flagged_energies() == expected

    def test_exceptional_energies_are_eta_neighborhoods(self, bern, free):
        curve = lyapunov_curve(bern, free, [0.0, 3.0], n=500, replicas=2, seed=1)
        assert curve.flagged == (True, False)
        assert exceptional_energies(curve, 0.25) == ((-0.25, 0.25),)
        clean = lyapunov_curve(bern, free, [2.5, 3.0], n=500, replicas=2, seed=1)
        assert exceptional_energies(clean) == ()

    def test_flag_floor_override(self, bern, free):
        # with the floor forced to zero the deterministic elliptic point
        # has se == 0 as well, so it is never flagged
        curve = lyapunov_curve(
            bern, free, [0.0], n=500, replicas=2, seed=1, flag_floor=0.0
        )
        assert curve.flagged == (False,)

    def test_curve_validation(self):
        with pytest.raises(ConfigError, match="equal length"):
            LyapunovCurve((0.0, 1.0), (0.1,), (0.0, 0.0), (False, False), 10, 2, 0)
        with pytest.raises(ConfigError, match="nonnegative"):
            LyapunovCurve((0.0,), (-0.1,), (0.0,), (False,), 10, 2, 0)


class TestWilson:
    def test_boundary_counts_pin_exact_endpoints(self):
        lo, hi = wilson_interval(0, 400)
        assert lo == 0.0 and 0.0 < hi < 0.02
        lo, hi = wilson_interval(400, 400)
        assert hi == 1.0 and 0.98 < lo < 1.0

    def test_frozen_values(self):
        assert wilson_interval(5, 10) == (0.236593090512564, 0.7634069094874361)
        assert wilson_interval(1, 400) == (
            0.0004414477868016362,
            0.01402328507582339,
        )

    def test_interval_brackets_the_proportion(self):
        for k in range(0, 21):
            lo, hi = wilson_interval(k, 20)
            assert lo <= k / 20 <= hi
            assert 0.0 <= lo < hi <= 1.0

    def test_rejects_empty_sample(self):
        with pytest.raises(ConfigError):
            wilson_interval(0, 0)


class TestDeviation:
    def test_exactly_monotone_in_epsilon(self, bern, pm_one):
        L_ref, _ = estimate_lyapunov(bern, pm_one, 0.5, 4000, 8, 7)
        prev = 1.1
        for eps in (0.01, 0.02, 0.05, 0.1, 0.2):
            p, (lo, hi) = deviation_probability(
                bern, pm_one, 0.5, 100, eps, L_ref, 400, 3
            )
            assert lo <= p <= hi
            assert p <= prev
            prev = p

    def test_negative_epsilon_rejected(self, bern, pm_one):
        with pytest.raises(ConfigError):
            deviation_probability(bern, pm_one, 0.5, 50, -0.1, 0.13, 10, 0)

    def test_epsilon_zero_is_certain_deviation(self, bern, pm_one):
        p, _ = deviation_probability(bern, pm_one, 0.5, 50, 0.0, 10.0, 20, 0)
        assert p == 1.0


class TestRateFit:
    def test_exact_exponential_recovered(self):
        ns = (50, 100, 200, 400)
        ps = tuple(0.8 * math.exp(-0.01 * n) for n in ns)
        rep = ldt_rate_fit(0.5, 0.1, ns, ps, replicas=10**6)
        assert rep.fitted_c == pytest.approx(0.01, abs=1e-12)
        assert rep.fitted_logC == pytest.approx(math.log(0.8), abs=1e-10)
        assert rep.r_squared == pytest.approx(1.0, abs=1e-12)
        assert not rep.below_resolution
        assert rep.fitted_c_se == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_counts_are_below_resolution(self):
        rep = ldt_rate_fit(0.5, 0.1, (50, 100), (0.0, 0.0), replicas=100)
        assert rep.below_resolution
        assert rep.fitted_c is None
        assert rep.fitted_logC is None
        assert rep.r_squared is None

    def test_zero_floor_keeps_logs_finite(self):
        # the single zero count is lifted to the one-sided 95% upper bound
        rep = ldt_rate_fit(0.5, 0.1, (50, 100, 200), (0.4, 0.1, 0.0), replicas=200)
        assert rep.fitted_c is not None and rep.fitted_c > 0
        assert not rep.below_resolution

    def test_validation(self):
        with pytest.raises(ConfigError, match="align"):
            ldt_rate_fit(0.5, 0.1, (50, 100), (0.1,), replicas=10)
        with pytest.raises(ConfigError, match="two scales"):
            ldt_rate_fit(0.5, 0.1, (50,), (0.1,), replicas=10)
        with pytest.raises(ConfigError, match="strictly increasing"):
            ldt_rate_fit(0.5, 0.1, (100, 50), (0.1, 0.2), replicas=10)
        with pytest.raises(ConfigError, match="p_hats"):
            ldt_rate_fit(0.5, 0.1, (50, 100), (0.1, 1.2), replicas=10)


class TestHolderFit:
    def test_band_edge_exponent_of_the_free_chain(self, bern, free):
        # L(2 + t) ~ sqrt(2 t) near the edge, so beta should sit near 1/2
        energies = 2.0 + np.geomspace(0.0005, 0.05, 6)
        curve = lyapunov_curve(bern, free, energies, n=4000, replicas=2, seed=1)
        C, beta = holder_fit(curve, (energies[0] - 1e-9, energies[-1] + 1e-9))
        assert 0.4 <= beta <= 0.8
        assert 0.0 < C < 5.0

    def test_needs_six_positive_points(self, bern, free):
        curve = lyapunov_curve(bern, free, [2.5, 2.6, 2.7], n=200, replicas=2, seed=1)
        with pytest.raises(ConfigError, match="need >= 6"):
            holder_fit(curve, (2.0, 3.0))

    def test_constant_window_is_degenerate(self):
        curve = LyapunovCurve(
            energies=tuple(float(k) for k in range(6)),
            estimates=(0.5,) * 6,
            std_errors=(0.0,) * 6,
            flagged=(False,) * 6,
            n=100,
            replicas=2,
            seed=0,
        )
        with pytest.raises(DegenerateError, match="constant"):
            holder_fit(curve, (-1.0, 6.0))


class TestBlockAverage:
    def test_free_chain_blocks_match_reference(self, bern, free):
        w = SymbolWindow(0, (1,) * 400)
        d = block_average_check(bern, free, w, 3.0, 100, 4, L_ref=L_FREE_3)
        assert d < 0.01

    def test_short_window_fails_with_bounds(self, bern, free):
        w = SymbolWindow(0, (1,) * 50)
        with pytest.raises(ValueError, match="does not cover"):
            block_average_check(bern, free, w, 3.0, 100, 4, L_ref=L_FREE_3)

    def test_reference_required(self, bern, free):
        w = SymbolWindow(0, (1,) * 400)
        with pytest.raises(ConfigError, match="L_ref"):
            block_average_check(bern, free, w, 3.0, 100, 4)


class TestAzuma:
    def test_closed_form_value(self):
        assert azuma_bound(0.1, 1000) == pytest.approx(math.exp(-5.0), abs=1e-12)
        assert azuma_bound(0.0, 10) == 1.0

    def test_scaling_in_increment_bound(self):
        assert azuma_bound(0.1, 1000, a=2.0) == pytest.approx(
            math.exp(-5.0 / 4.0), abs=1e-12
        )
        assert azuma_bound(0.1, 1000, c=2.0) == pytest.approx(
            math.exp(-10.0), abs=1e-12
        )

    def test_validation(self):
        with pytest.raises(ConfigError):
            azuma_bound(0.1, 0)
        with pytest.raises(ConfigError):
            azuma_bound(-0.1, 10)
        with pytest.raises(ConfigError):
            azuma_bound(0.1, 10, a=0.0)

    def test_simulated_martingale_respects_bound(self):
        # +/-1 increments, so a = 1; the empirical tail must sit under the
        # bound with its whole confidence interval
        rng = np.random.default_rng(12345)
        n, paths, eps = 200, 2000, 0.1
        steps = rng.choice((-1.0, 1.0), size=(paths, n))
        means = np.abs(steps.mean(axis=1))
        hits = int(np.count_nonzero(means > eps))
        lo, hi = wilson_interval(hits, paths)
        assert hi < azuma_bound(eps, n, a=1.0)


class TestTorusSystems:
    def test_doubling_map_runs_deterministically(self):
        dbl = TorusSystem(
            "doubling", lambda x: math.cos(2.0 * math.pi * x), name="cos_angle"
        )
        a = estimate_lyapunov(dbl, None, 3.0, 1000, 8, 2)
        b = estimate_lyapunov(dbl, None, 3.0, 1000, 8, 2)
        assert a == b
        est, se = a
        assert est > 0.5
        assert se > 0.0

    def test_cat_orbit_warns_past_float_cap(self):
        cat = TorusSystem(
            "cat",
            lambda xy: math.cos(2.0 * math.pi * xy[0]),
            name="cos_first",
        )
        with pytest.warns(UserWarning, match="rounding-amplification"):
            estimate_lyapunov(cat, None, 3.0, 1001, 2, 2)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            estimate_lyapunov(cat, None, 3.0, 500, 2, 2)

    def test_unknown_base_system_rejected(self):
        with pytest.raises(ConfigError, match="base system"):
            estimate_lyapunov(object(), None, 3.0, 100, 2, 0)
