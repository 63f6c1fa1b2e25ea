import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from driftscan import (
    DegenerateMomentsError,
    InsufficientTailError,
    TailCorrection,
    benjamini_hochberg,
    fit_beta_moments,
)
from driftscan.correction import regularized_incomplete_beta


class TestBenjaminiHochberg:
    def test_single_value(self):
        assert benjamini_hochberg([0.03]) == pytest.approx([0.03])

    def test_all_equal(self):
        assert benjamini_hochberg([0.2] * 5) == pytest.approx([0.2] * 5)

    def test_step_up_example(self):
        got = benjamini_hochberg([0.01, 0.02, 0.03, 0.04])
        assert got == pytest.approx([0.04, 0.04, 0.04, 0.04])

    def test_adjusted_at_least_raw(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0, 1, 1000)
        assert np.all(benjamini_hochberg(p) >= p)

    @given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=40))
    def test_permutation_equivariance(self, values):
        p = np.asarray(values)
        adjusted = benjamini_hochberg(p)
        perm = np.random.default_rng(0).permutation(len(p))
        assert benjamini_hochberg(p[perm]) == pytest.approx(adjusted[perm])

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            benjamini_hochberg([])
        with pytest.raises(ValueError):
            benjamini_hochberg([0.5, 1.5])


class TestIncompleteBeta:
    def test_endpoints(self):
        assert regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0
        assert regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0

    def test_uniform_case(self):
        x = np.linspace(0, 1, 11)
        assert regularized_incomplete_beta(x, 1.0, 1.0) == pytest.approx(x, abs=1e-14)

    def test_symmetric_midpoint_vs_quadrature(self):
        got = regularized_incomplete_beta(0.5, 2.0, 2.0)
        want, err = quad(lambda u: 6 * u * (1 - u), 0, 0.5)
        assert got == pytest.approx(0.5, abs=1e-12)
        assert got == pytest.approx(want, abs=max(err, 1e-10))

    def test_reflection_identity(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, 200)
        a = rng.uniform(0.1, 8, 200)
        b = rng.uniform(0.1, 8, 200)
        left = regularized_incomplete_beta(x, a, b)
        right = 1.0 - regularized_incomplete_beta(1.0 - x, b, a)
        assert np.max(np.abs(left - right)) <= 1e-10

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            regularized_incomplete_beta(0.5, 0.0, 1.0)


class TestFitBetaMoments:
    def test_uniform_sample(self):
        rng = np.random.default_rng(3)
        a, b = fit_beta_moments(rng.uniform(0, 1, 200_000))
        assert a == pytest.approx(1.0, abs=0.02)
        assert b == pytest.approx(1.0, abs=0.02)

    def test_moment_formula(self):
        x = np.asarray([0.2, 0.4, 0.45, 0.5, 0.5, 0.55, 0.6, 0.7, 0.65, 0.45])
        m, v = x.mean(), x.var(ddof=1)
        c = m * (1 - m) / v - 1
        a, b = fit_beta_moments(x)
        assert a == pytest.approx(m * c, rel=1e-12)
        assert b == pytest.approx((1 - m) * c, rel=1e-12)

    def test_target_parameters(self):
        # mean 0.5 and variance 0.05 correspond to Beta(2, 2)
        rng = np.random.default_rng(4)
        a, b = fit_beta_moments(rng.beta(2, 2, 300_000))
        assert a == pytest.approx(2.0, abs=0.03)
        assert b == pytest.approx(2.0, abs=0.03)

    def test_degenerate(self):
        with pytest.raises(DegenerateMomentsError):
            fit_beta_moments(np.full(50, 0.3))
        with pytest.raises(DegenerateMomentsError):
            fit_beta_moments([0.0, 1.0] * 25)  # v >= m(1-m)
        with pytest.raises(DegenerateMomentsError):
            fit_beta_moments([0.5] * 5)


class TestTailCorrection:
    def test_uniform_nulls_near_identity(self):
        rng = np.random.default_rng(5)
        model = TailCorrection(z=0.05).fit(rng.uniform(0, 1, 400_000))
        assert model.alpha_a_ == pytest.approx(1.0, abs=0.1)
        assert model.beta_a_ == pytest.approx(1.0, abs=0.1)
        p = np.logspace(-5, 0, 200)
        assert np.allclose(model.transform(p), p, rtol=0.35, atol=1e-6)

    def test_pass_through_above_z(self):
        rng = np.random.default_rng(6)
        model = TailCorrection(z=0.05).fit(rng.uniform(0, 1, 100_000))
        p = np.asarray([0.05, 0.2, 0.77, 1.0])
        assert np.array_equal(model.transform(p), p)

    def test_monotone_and_continuous(self):
        rng = np.random.default_rng(7)
        skewed = rng.beta(0.4, 1.0, 300_000)  # excess of small p-values
        model = TailCorrection(z=0.05).fit(skewed)
        grid = np.concatenate([np.logspace(-8, 0, 4001),
                               [model.s_ * (1 - 1e-9), model.s_,
                                model.z * (1 - 1e-12), model.z]])
        grid.sort()
        out = model.transform(grid)
        assert np.all(np.diff(out) >= -1e-12)
        # continuity across the inner threshold and at z
        below = model.transform(np.asarray([model.z - 1e-13]))[0]
        assert below == pytest.approx(model.z, abs=1e-6)

    def test_round_trip_calibration(self):
        rng = np.random.default_rng(8)
        first, second = rng.uniform(0, 1, (2, 300_000))
        model = TailCorrection(z=0.05).fit(first)
        corrected = model.transform(second)
        grid = np.linspace(0, 1, 2001)
        ecdf = np.searchsorted(np.sort(corrected), grid) / corrected.size
        assert np.max(np.abs(ecdf - grid)) <= 0.01

    def test_delta_equals_inner_threshold(self):
        rng = np.random.default_rng(9)
        model = TailCorrection(z=0.05).fit(rng.uniform(0, 1, 100_000))
        assert model.delta_ == model.s_ == pytest.approx(0.005)

    def test_insufficient_tail(self):
        with pytest.raises(InsufficientTailError):
            TailCorrection(z=0.01).fit(np.linspace(0.5, 1.0, 5000))

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        model = TailCorrection(z=0.05).fit(rng.beta(0.5, 1.0, 200_000))
        path = tmp_path / "model.txt"
        model.save(path)
        loaded = TailCorrection.load(path)
        p = np.logspace(-6, 0, 500)
        assert np.array_equal(loaded.transform(p), model.transform(p))

    def test_get_params_sklearn_surface(self):
        model = TailCorrection(z=0.04, s=0.008)
        assert model.get_params() == {"z": 0.04, "s": 0.008}
        model.set_params(z=0.1)
        assert model.z == 0.1

    def test_corrects_inflated_tail(self):
        # nulls that hold the z-level globally but whose sub-z tail is
        # badly inflated (the situation the correction exists for): the
        # shape within [0, z] gets mapped back to uniform
        def draw(rng, n, z=0.05):
            small = rng.random(n) < z
            p = rng.uniform(z, 1.0, n)
            p[small] = z * rng.beta(0.35, 1.0, int(small.sum()))
            return p

        rng = np.random.default_rng(11)
        model = TailCorrection(z=0.05).fit(draw(rng, 500_000))
        fresh = draw(rng, 500_000)
        corrected = model.transform(fresh)
        for c in (1e-2, 1e-3):
            raw = np.mean(fresh < c)
            fixed = np.mean(corrected < c)
            assert raw > 2 * c  # the distortion is real
            assert 0.5 * c <= fixed <= 2 * c
