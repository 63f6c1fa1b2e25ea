import numpy as np
import pytest

from driftscan import (
    SimConfig,
    drift_variance,
    empirical_fdr_cutoff,
    sample_and_pool,
    simulate_experiment,
    simulate_trajectory,
    step_selection,
)
from driftscan.simulate import BLOCK_SIZE, iter_blocks


class TestStepSelection:
    def test_neutral_identity(self):
        p = np.linspace(0, 1, 11)
        assert np.allclose(step_selection(p, 0.0, 0.5), p)

    def test_fixation_absorbing(self):
        assert step_selection(1.0, 0.3, 0.5) == 1.0
        assert step_selection(0.0, 0.3, 0.5) == 0.0

    def test_direct_value(self):
        # (0.25*1.1 + 0.25*1.05) / 1.05
        assert step_selection(0.5, 0.1, 0.5) == pytest.approx(0.511905, abs=5e-7)

    def test_positive_s_increases(self):
        p = np.linspace(0.05, 0.95, 10)
        assert np.all(step_selection(p, 0.08, 0.5) > p)


class TestTrajectory:
    def test_huge_ne_nearly_deterministic(self):
        rng = np.random.default_rng(1)
        out = simulate_trajectory(np.full(100, 0.37), 10**8, (0, 20), 0.0, 0.5, rng)
        assert np.max(np.abs(out[-1] - 0.37)) < 1e-3

    def test_absorbing_boundaries(self):
        rng = np.random.default_rng(2)
        out = simulate_trajectory(np.array([0.0, 1.0]), 50, (0, 10, 40), 0.0, 0.5, rng)
        assert np.all(out[:, 0] == 0.0) and np.all(out[:, 1] == 1.0)

    def test_absorption_is_permanent(self):
        rng = np.random.default_rng(3)
        out = simulate_trajectory(np.full(4000, 0.05), 30,
                                  tuple(range(0, 101, 10)), 0.0, 0.5, rng)
        for boundary in (0.0, 1.0):
            mask = out == boundary
            first = np.argmax(mask, axis=0)
            ever = mask.any(axis=0)
            for t in range(out.shape[0]):
                rows = ever & (first <= t)
                assert np.all(out[t, rows] == boundary)

    def test_drift_variance_law(self):
        rng = np.random.default_rng(4)
        out = simulate_trajectory(np.full(100_000, 0.5), 300, (0, 60), 0.0, 0.5, rng)
        assert np.var(out[-1]) == pytest.approx(drift_variance(0.5, 300, 60), rel=0.03)

    def test_martingale_mean(self):
        rng = np.random.default_rng(5)
        out = simulate_trajectory(np.full(20_000, 0.5), 300, (0, 60), 0.0, 0.5, rng)
        se = np.std(out[-1]) / np.sqrt(out.shape[1])
        assert abs(np.mean(out[-1]) - 0.5) < 4 * se

    def test_selection_raises_mean(self):
        rng = np.random.default_rng(6)
        out = simulate_trajectory(np.full(20_000, 0.5), 300,
                                  tuple(range(0, 61, 10)), 0.1, 0.5, rng)
        means = out.mean(axis=1)
        assert np.all(np.diff(means) > 0)


class TestSampleAndPool:
    def test_boundaries(self):
        rng = np.random.default_rng(7)
        sc, reads, cov = sample_and_pool(np.zeros(50), 1000, "fixed:80", rng)
        assert np.all(sc == 0) and np.all(reads == 0) and np.all(cov == 80)
        sc, reads, cov = sample_and_pool(np.ones(50), 1000, "fixed:80", rng)
        assert np.all(sc == 1000) and np.all(reads == cov)

    def test_read_frequency_variance(self):
        rng = np.random.default_rng(8)
        _, reads, cov = sample_and_pool(np.full(20_000, 0.3), 1000, "fixed:80", rng)
        want = 0.3 * 0.7 * (1 + 79 / 1000) / 80
        assert np.var(reads / cov) == pytest.approx(want, rel=0.05)

    def test_poisson_coverage_never_zero(self):
        rng = np.random.default_rng(9)
        _, _, cov = sample_and_pool(np.full(20_000, 0.5), 100, "poisson:3", rng)
        assert np.all(cov >= 1)


class TestExperiment:
    CFG = dict(n_loci=5000, ne=300, generations=(0, 30, 60), replicates=2,
               sample_size=1000, coverage="poisson:80", seed=77)

    def test_determinism(self):
        a = simulate_experiment(SimConfig(**self.CFG))
        b = simulate_experiment(SimConfig(**self.CFG))
        assert np.array_equal(a.read_count, b.read_count)
        assert np.array_equal(a.sample_count, b.sample_count)
        assert np.array_equal(a.true_freq, b.true_freq)
        assert np.array_equal(a.s, b.s)

    def test_blocks_match_full_run(self):
        cfg = SimConfig(**{**self.CFG, "n_loci": BLOCK_SIZE + 123})
        full = simulate_experiment(cfg)
        parts = list(iter_blocks(cfg))
        assert len(parts) == 2
        joined = np.concatenate([p.read_count for p in parts], axis=2)
        assert np.array_equal(joined, full.read_count)

    def test_empty(self):
        data = simulate_experiment(SimConfig(n_loci=0, ne=300, generations=(0, 60)))
        assert data.n_loci == 0 and data.read_count.shape == (1, 2, 0)

    def test_shapes_and_bounds(self):
        data = simulate_experiment(SimConfig(**self.CFG))
        assert data.read_count.shape == (2, 3, 5000)
        assert np.all(data.read_count <= data.coverage)
        assert np.all(data.sample_count <= 1000)
        assert np.all((data.true_freq >= 0) & (data.true_freq <= 1))

    def test_neutral_mean_preserved(self):
        data = simulate_experiment(SimConfig(n_loci=20_000, ne=300,
                                             generations=(0, 60), seed=5))
        start = data.true_freq[0, 0]
        final = data.true_freq[0, -1]
        se = np.std(final) / np.sqrt(final.size)
        assert abs(final.mean() - start.mean()) < 4 * se

    def test_selected_labelling(self):
        cfg = SimConfig(n_loci=1000, ne=300, generations=(0, 10),
                        selected_fraction=0.1, selection="exp:0.1", seed=1)
        data = simulate_experiment(cfg)
        assert data.selected.sum() == 100
        assert np.all(data.s[data.selected] > 0)
        assert np.all(data.s[~data.selected] == 0)


class TestEmpiricalFdrCutoff:
    def test_uniform_quantile(self):
        rng = np.random.default_rng(11)
        cut = empirical_fdr_cutoff(rng.uniform(0, 1, 10_000), 0.02)
        assert cut == pytest.approx(0.02, abs=0.005)

    def test_degenerate(self):
        assert empirical_fdr_cutoff(np.full(100, 0.5), 0.02) == 0.5

    def test_invalid_target(self):
        with pytest.raises(ValueError):
            empirical_fdr_cutoff([0.1, 0.2], 1.0)
        with pytest.raises(ValueError):
            empirical_fdr_cutoff([], 0.05)
