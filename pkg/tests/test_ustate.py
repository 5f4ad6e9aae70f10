"""Projective u-state machinery: fixed points, integrals, orbit averages."""

import math

import numpy as np
import pytest

from hyperloc.errors import ConfigError, DegenerateError, NotConvergedError
from hyperloc.measures import ShiftMeasure
from hyperloc.sampling import LocallyConstantFn
from hyperloc.symbolic import SftSpec, SymbolWindow, admissible_words
from hyperloc.ustate import (
    ProjectiveMeasure,
    ProjectivePoint,
    approximate_u_state,
    cesaro_orbit_average,
    class_mass,
    furstenberg_integral,
    oseledets_directions,
    projective_action,
    push_forward_once,
)

FULL2 = SftSpec(2, ((1, 1), (1, 1)))
GOLDEN = SftSpec(2, ((1, 1), (1, 0)))

HYPERBOLIC = np.array([[2.0, 1.0], [1.0, 1.0]])
LAMBDA_TOP = (3.0 + math.sqrt(5.0)) / 2.0
THETA_UNSTABLE = math.atan2((math.sqrt(5.0) - 1.0) / 2.0, 1.0)


def _const_map(word):
    return HYPERBOLIC


@pytest.fixture
def bern():
    return ShiftMeasure.bernoulli((0.5, 0.5))


@pytest.fixture
def pm_one(bern):
    return LocallyConstantFn.from_site_values(bern.spec, (1.0, -1.0))


class TestProjectivePoint:
    def test_angle_wraps_into_half_open_interval(self):
        assert ProjectivePoint(math.pi).theta == 0.0
        assert ProjectivePoint(-0.1).theta == pytest.approx(math.pi - 0.1)
        assert ProjectivePoint(0.3).theta == 0.3

    def test_vector_round_trip(self):
        p = ProjectivePoint(1.234)
        q = ProjectivePoint.from_vector(3.7 * p.vector())
        assert q.theta == pytest.approx(p.theta, abs=1e-14)
        # opposite representative lands on the same projective point
        r = ProjectivePoint.from_vector(-p.vector())
        assert r.theta == pytest.approx(p.theta, abs=1e-14)

    def test_from_vector_rejects_zero(self):
        with pytest.raises(DegenerateError):
            ProjectivePoint.from_vector((0.0, 0.0))

    def test_projective_action_rotation(self):
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        p = projective_action(rot, ProjectivePoint(0.2))
        assert p.theta == pytest.approx(0.2 + math.pi / 2, abs=1e-14)

    def test_projective_action_singular_direction(self):
        # (1, 0) is exactly in the kernel of this nilpotent matrix
        proj = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(DegenerateError):
            projective_action(proj, ProjectivePoint(0.0))


class TestProjectiveMeasureValidation:
    def test_wrong_word_length_rejected(self):
        vec = np.full(4, 0.25)
        with pytest.raises(ConfigError, match="length"):
            ProjectiveMeasure(FULL2, 3, 4, {(1, 2): vec})

    def test_inadmissible_class_rejected(self):
        vec = np.full(4, 0.25)
        with pytest.raises(ConfigError, match="not admissible"):
            ProjectiveMeasure(GOLDEN, 2, 4, {(2, 2): vec})

    def test_negative_weights_rejected(self):
        vec = np.array([1.5, -0.5, 0.0, 0.0])
        with pytest.raises(ConfigError):
            ProjectiveMeasure(FULL2, 1, 4, {(1,): vec})

    def test_unnormalized_weights_rejected(self):
        vec = np.array([0.5, 0.2, 0.0, 0.0])
        with pytest.raises(ConfigError, match="sum"):
            ProjectiveMeasure(FULL2, 1, 4, {(1,): vec})

    def test_classes_sorted(self):
        vec = np.full(4, 0.25)
        mu = ProjectiveMeasure(FULL2, 1, 4, {(2,): vec, (1,): vec})
        assert mu.classes == [(1,), (2,)]


class TestTvDistance:
    def test_point_mass_vs_uniform(self):
        g = 16
        uni = ProjectiveMeasure.uniform(FULL2, 1, g)
        pt = ProjectiveMeasure.point_mass(FULL2, 1, g, ProjectivePoint(0.0))
        assert uni.tv_distance(pt) == pytest.approx(1.0 - 1.0 / g, abs=1e-15)
        assert uni.tv_distance(uni) == 0.0

    def test_class_weighted_aggregation(self):
        g = 8
        uni = ProjectiveMeasure.uniform(FULL2, 1, g)
        mixed = ProjectiveMeasure(
            FULL2,
            1,
            g,
            {(1,): np.full(g, 1.0 / g), (2,): ProjectivePoint(0.0).vector()[:1].repeat(g) * 0 + np.eye(g)[0]},
        )
        # all the disagreement sits in class (2,)
        d_uniform = uni.tv_distance(mixed)
        d_tilted = uni.tv_distance(mixed, class_weights={(1,): 0.9, (2,): 0.1})
        per = 1.0 - 1.0 / g
        assert d_uniform == pytest.approx(0.5 * per)
        assert d_tilted == pytest.approx(0.1 * per)

    def test_mismatched_classes_rejected(self):
        uni1 = ProjectiveMeasure.uniform(FULL2, 1, 8)
        sub = ProjectiveMeasure(FULL2, 1, 8, {(1,): np.full(8, 0.125)})
        with pytest.raises(ValueError, match="class sets"):
            uni1.tv_distance(sub)
        with pytest.raises(ValueError, match="grids"):
            uni1.tv_distance(ProjectiveMeasure.uniform(FULL2, 1, 16))


def test_class_mass_partitions_unity():
    m = ShiftMeasure.markov(np.array([[0.5, 0.5], [1.0, 0.0]]), spec=GOLDEN)
    for depth in (1, 2, 3, 4):
        total = sum(class_mass(m, w) for w in admissible_words(GOLDEN, depth))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestFixedPoint:
    def test_constant_hyperbolic_map_gives_point_mass(self, bern):
        mu = approximate_u_state(bern, None, 0.0, depth=3, grid_size=720, matrix_map=_const_map)
        # binned dynamics collapse exactly, so the defect is literally zero
        assert mu.residual == 0.0
        for vec in mu.weights.values():
            top = int(np.argmax(vec))
            assert vec[top] == pytest.approx(1.0, abs=1e-12)
            assert abs(mu.bin_centers[top] - THETA_UNSTABLE) < math.pi / 720

    def test_constant_map_furstenberg_matches_eigenvalue(self, bern):
        mu = approximate_u_state(bern, None, 0.0, depth=3, grid_size=720, matrix_map=_const_map)
        F = furstenberg_integral(mu, bern, None, 0.0, matrix_map=_const_map)
        assert F == pytest.approx(math.log(LAMBDA_TOP), abs=1e-4)

    def test_free_rotation_keeps_uniform(self, bern):
        f0 = LocallyConstantFn.constant(bern.spec, 0.0)
        mu = approximate_u_state(bern, f0, 0.0, depth=2, grid_size=360)
        assert mu.residual == 0.0
        for vec in mu.weights.values():
            assert np.abs(vec - 1.0 / 360).max() == 0.0
        assert abs(furstenberg_integral(mu, bern, f0, 0.0)) < 1e-12

    def test_elliptic_energy_raises_not_converged(self, bern):
        f0 = LocallyConstantFn.constant(bern.spec, 0.0)
        with pytest.raises(NotConvergedError) as exc:
            approximate_u_state(bern, f0, 1.0, depth=2, grid_size=360, iters=60)
        assert exc.value.achieved > 0.0

    def test_bernoulli_state_is_operator_fixed_point(self, bern, pm_one):
        mu = approximate_u_state(bern, pm_one, 0.5)
        assert mu.residual is not None and mu.residual < 1e-8
        pushed = push_forward_once(mu, bern, pm_one, 0.5)
        assert set(pushed.weights) == set(mu.weights)
        for vec in pushed.weights.values():
            assert vec.sum() == pytest.approx(1.0, abs=1e-12)
        assert mu.tv_distance(pushed) < 1e-8

    def test_bernoulli_furstenberg_frozen_values(self, bern, pm_one):
        mu = approximate_u_state(bern, pm_one, 0.5)
        F = furstenberg_integral(mu, bern, pm_one, 0.5)
        assert F == pytest.approx(0.13272055272612232, abs=1e-9)
        # independent Monte Carlo Birkhoff estimate: 0.132401 +/- 0.0005
        assert abs(F - 0.132401) < 4e-3

    def test_shallow_depth_rejected_for_wide_radius(self, bern):
        f1 = LocallyConstantFn(
            bern.spec,
            1,
            {w: float(sum(w)) for w in admissible_words(bern.spec, 3)},
        )
        with pytest.raises(ConfigError, match="depth"):
            approximate_u_state(bern, f1, 0.5, depth=3)

    def test_state_cell_cap(self, bern, pm_one):
        with pytest.raises(ConfigError, match="cap"):
            approximate_u_state(bern, pm_one, 0.5, depth=18, grid_size=720)


class TestCesaro:
    def test_in_bin_start_concentrates_fast(self, bern):
        w0 = SymbolWindow(-4, (1, 1, 1, 1, 1))
        start = ProjectivePoint(THETA_UNSTABLE + 0.001)
        res = cesaro_orbit_average(
            bern, None, 0.0, (w0, start), n=50, samples=100, seed=7,
            depth=3, grid_size=720, matrix_map=_const_map,
        )
        marg = res.measure.angle_marginal({w: 1.0 for w in res.measure.weights})
        assert marg.max() > 0.98

    def test_generic_start_concentrates_eventually(self, bern):
        w0 = SymbolWindow(-4, (1, 1, 1, 1, 1))
        res = cesaro_orbit_average(
            bern, None, 0.0, (w0, ProjectivePoint(1.2)), n=400, samples=100, seed=7,
            depth=3, grid_size=720, matrix_map=_const_map,
        )
        marg = res.measure.angle_marginal({w: 1.0 for w in res.measure.weights})
        k = int(np.argmax(marg))
        assert marg[k] > 0.985
        assert abs(res.measure.bin_centers[k] - THETA_UNSTABLE) < math.pi / 720

    def test_cylinder_frequencies_match_chain(self, bern):
        w0 = SymbolWindow(-4, (1, 2, 1, 1, 1))
        res = cesaro_orbit_average(
            bern, None, 0.0, (w0, ProjectivePoint(1.2)), n=400, samples=200, seed=3,
            depth=3, grid_size=180, matrix_map=_const_map,
        )
        assert res.cylinder_frequencies
        for cf in res.cylinder_frequencies:
            slack = 5.0 * cf.std_error + 1e-3
            assert abs(cf.observed - cf.expected) < slack, cf

    def test_sampled_state_approaches_fixed_point(self, bern, pm_one):
        # Agreement is weak-*: the conditionals are too rough for bin-level
        # TV, so compare marginal CDFs and the smooth log-norm pairing.
        mu = approximate_u_state(bern, pm_one, 0.5, depth=3, grid_size=180)
        w0 = SymbolWindow(-2, (1, 1, 1))
        res = cesaro_orbit_average(
            bern, pm_one, 0.5, (w0, ProjectivePoint(1.0)), n=400, samples=4000,
            seed=11, depth=3, grid_size=180,
        )
        masses = {w: class_mass(bern, w) for w in mu.weights}
        ma = mu.angle_marginal(masses)
        mb = res.measure.angle_marginal(masses)
        assert np.abs(np.cumsum(ma) - np.cumsum(mb)).max() < 0.05
        F_fixed = furstenberg_integral(mu, bern, pm_one, 0.5)
        F_orbit = furstenberg_integral(res.measure, bern, pm_one, 0.5)
        assert abs(F_fixed - F_orbit) < 0.01

    def test_initial_validation(self, bern):
        good = SymbolWindow(-4, (1, 1, 1, 1, 1))
        with pytest.raises(ConfigError, match="end at coordinate 0"):
            cesaro_orbit_average(
                bern, None, 0.0, (SymbolWindow(0, (1, 1)), ProjectivePoint(0.1)),
                n=10, samples=5, seed=0, depth=2, matrix_map=_const_map,
            )
        with pytest.raises(ConfigError, match="cover"):
            cesaro_orbit_average(
                bern, None, 0.0, (SymbolWindow(-1, (1, 1)), ProjectivePoint(0.1)),
                n=10, samples=5, seed=0, depth=4, matrix_map=_const_map,
            )
        with pytest.raises(ConfigError, match="positive"):
            cesaro_orbit_average(
                bern, None, 0.0, (good, ProjectivePoint(0.1)),
                n=0, samples=5, seed=0, depth=3, matrix_map=_const_map,
            )

    def test_deterministic_under_seed(self, bern, pm_one):
        w0 = SymbolWindow(-2, (1, 2, 1))
        kw = dict(n=60, samples=50, depth=3, grid_size=90)
        a = cesaro_orbit_average(bern, pm_one, 0.5, (w0, ProjectivePoint(0.4)), seed=9, **kw)
        b = cesaro_orbit_average(bern, pm_one, 0.5, (w0, ProjectivePoint(0.4)), seed=9, **kw)
        assert a.measure.tv_distance(b.measure) == 0.0
        c = cesaro_orbit_average(bern, pm_one, 0.5, (w0, ProjectivePoint(0.4)), seed=10, **kw)
        assert c.measure.tv_distance(a.measure) > 0.0


class TestOseledets:
    def test_constant_map_recovers_eigendirections(self):
        w0 = SymbolWindow(-4, (1, 1, 1, 1, 1))
        o = oseledets_directions(None, w0, 0.0, 30, matrix_map=_const_map)
        theta_stable = math.atan2(-(1.0 + math.sqrt(5.0)) / 2.0, 1.0) % math.pi
        assert o.unstable.theta == pytest.approx(THETA_UNSTABLE, abs=1e-9)
        assert o.stable.theta == pytest.approx(theta_stable, abs=1e-9)
        assert o.finite_scale_exponent == pytest.approx(math.log(LAMBDA_TOP), abs=1e-12)
        assert o.stable_increment == 0.0
        assert o.unstable_increment == 0.0

    def test_rotation_cannot_be_split(self, bern):
        f0 = LocallyConstantFn.constant(bern.spec, 0.0)
        w0 = SymbolWindow(-10, (1,) * 21)
        with pytest.warns(UserWarning, match="close to zero"):
            with pytest.raises(DegenerateError, match="singular values"):
                oseledets_directions(f0, w0, 0.0, 4)

    def test_needs_two_scales(self):
        w0 = SymbolWindow(-4, (1, 1, 1, 1, 1))
        with pytest.raises(ConfigError, match="at least 2"):
            oseledets_directions(None, w0, 0.0, 1, matrix_map=_const_map)
