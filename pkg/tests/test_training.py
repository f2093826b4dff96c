import math

import numpy as np
import pytest

from wkpi.images import GridSpec, PersistenceImage
from wkpi.kernel import WkpiParams, total_cost_direct
from wkpi.training import TrainConfig, train_metric
from wkpi.weights import GaussianMixtureWeight

from oracles import random_images, random_mixture


def separable_instance(rng, n_per_class=8, y_res=2):
    """Two classes whose images differ in the first pixels and agree elsewhere."""
    grid = GridSpec(0.0, 1.0, 0.0, 1.0, y_resolution=y_res)
    images, labels = [], []
    half = grid.size // 2
    for cls in (0, 1):
        for _ in range(n_per_class):
            pix = 0.05 * rng.random(grid.size)
            pix[:half] += 2.0 * cls
            images.append(PersistenceImage(grid, pix))
            labels.append(cls)
    return grid, images, np.array(labels)


class TestTermination:
    def test_single_class_stops_after_one_iteration(self):
        rng = np.random.default_rng(0)
        grid = GridSpec(0.0, 1.0, 0.0, 1.0, y_resolution=2)
        images = random_images(rng, 6, grid)
        init = random_mixture(rng, 2)
        cfg = TrainConfig(rng_seed=0)
        p = WkpiParams(kernel_sigma=0.5, weight=init)
        result = train_metric(images, [0] * 6, init, cfg, p)
        assert len(result.trace) == 1
        assert result.initial_tc == pytest.approx(1.0)
        assert result.final_tc == pytest.approx(1.0)

    def test_infinite_tolerance_stops_after_one_iteration(self):
        rng = np.random.default_rng(1)
        grid, images, labels = separable_instance(rng, n_per_class=4)
        init = random_mixture(rng, 2)
        cfg = TrainConfig(cost_tolerance=math.inf, rng_seed=0)
        p = WkpiParams(kernel_sigma=0.5, weight=init)
        result = train_metric(images, labels, init, cfg, p)
        assert len(result.trace) == 1

    def test_iteration_cap(self):
        rng = np.random.default_rng(2)
        grid, images, labels = separable_instance(rng, n_per_class=4)
        init = random_mixture(rng, 2)
        cfg = TrainConfig(max_iterations=3, cost_tolerance=1e-300, rng_seed=0)
        p = WkpiParams(kernel_sigma=0.5, weight=init)
        result = train_metric(images, labels, init, cfg, p)
        assert result.iterations <= 3


class TestFullBatch:
    def test_trace_non_increasing_and_cost_drops(self):
        rng = np.random.default_rng(3)
        grid, images, labels = separable_instance(rng)
        init = GaussianMixtureWeight(
            [(0.3, 0.3), (0.7, 0.7)], [0.4, 0.4], [1.0, 1.0]
        )
        cfg = TrainConfig(rng_seed=0, max_iterations=200)
        p = WkpiParams(kernel_sigma=0.5, weight=init)
        result = train_metric(images, labels, init, cfg, p)
        assert np.all(np.diff(result.trace) <= 1e-12)
        assert result.final_tc < result.initial_tc
        # the returned weight achieves the best observed objective
        final_p = WkpiParams(kernel_sigma=0.5, weight=result.weight)
        tc = total_cost_direct(images, labels, final_p)
        pen = cfg.penalty_constant * np.exp(-result.weight.coefficients).sum()
        assert tc + pen == pytest.approx(result.best_objective, rel=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        grid, images, labels = separable_instance(rng, n_per_class=5)
        init = random_mixture(rng, 3)
        cfg = TrainConfig(rng_seed=7, max_iterations=50)
        p = WkpiParams(kernel_sigma=0.4, weight=init)
        r1 = train_metric(images, labels, init, cfg, p)
        r2 = train_metric(images, labels, init, cfg, p)
        assert np.array_equal(r1.trace, r2.trace)
        assert np.array_equal(r1.weight.as_parameters(), r2.weight.as_parameters())

    def test_coefficients_stay_non_negative(self):
        rng = np.random.default_rng(5)
        grid, images, labels = separable_instance(rng, n_per_class=5)
        init = random_mixture(rng, 3)
        cfg = TrainConfig(rng_seed=0, max_iterations=100, penalty_constant=0.0)
        p = WkpiParams(kernel_sigma=0.3, weight=init)
        result = train_metric(images, labels, init, cfg, p)
        assert np.all(result.weight.coefficients >= 0.0)
        assert np.all(result.weight.spreads > 0.0)


class TestMinibatch:
    def test_runs_and_is_deterministic(self):
        rng = np.random.default_rng(6)
        grid, images, labels = separable_instance(rng, n_per_class=15)
        init = random_mixture(rng, 2)
        cfg = TrainConfig(minibatch_size=8, max_iterations=60, rng_seed=3)
        p = WkpiParams(kernel_sigma=0.5, weight=init)
        r1 = train_metric(images, labels, init, cfg, p)
        r2 = train_metric(images, labels, init, cfg, p)
        assert np.array_equal(r1.trace, r2.trace)
        assert np.array_equal(r1.weight.as_parameters(), r2.weight.as_parameters())
        assert len(r1.trace) >= 25  # minibatch mode keeps iterating between full passes

    def test_improves_cost(self):
        rng = np.random.default_rng(7)
        grid, images, labels = separable_instance(rng, n_per_class=15)
        init = GaussianMixtureWeight([(0.2, 0.6), (0.8, 0.4)], [0.5, 0.5], [1.0, 1.0])
        cfg = TrainConfig(minibatch_size=10, max_iterations=120, rng_seed=5)
        p = WkpiParams(kernel_sigma=0.5, weight=init)
        result = train_metric(images, labels, init, cfg, p)
        assert result.final_tc <= result.initial_tc + 1e-9


class TestAltVariantTraining:
    def test_full_batch_improves(self):
        rng = np.random.default_rng(8)
        grid, images, labels = separable_instance(rng, n_per_class=5)
        init = GaussianMixtureWeight([(0.3, 0.5), (0.7, 0.5)], [0.5, 0.5], [1.0, 1.0])
        # no penalty: the trace is exactly the total cost
        cfg = TrainConfig(rng_seed=0, max_iterations=60, penalty_constant=0.0)
        p = WkpiParams(kernel_sigma=0.5, weight=init, kernel_variant="alt-wkpi")
        result = train_metric(images, labels, init, cfg, p)
        assert np.all(np.diff(result.trace) <= 1e-12)
        assert result.final_tc <= result.initial_tc
