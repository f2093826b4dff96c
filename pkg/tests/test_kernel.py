import math

import numpy as np
import pytest

from wkpi.images import GridSpec, PersistenceImage
from wkpi.kernel import (
    CostModel,
    DegenerateClassError,
    GridMismatchError,
    WkpiParams,
    alt_wkpi_kernel,
    build_cost_matrices,
    cost_gradient,
    gram_matrix,
    image_matrix,
    squared_distance_matrix,
    total_cost_direct,
    total_cost_matrix,
    wkpi_distance,
    wkpi_kernel,
)
from wkpi.weights import GaussianMixtureWeight, eval_weight

from oracles import (
    finite_difference_gradient,
    random_images,
    random_labels,
    random_mixture,
)


def unit_grid(y_res=2):
    return GridSpec(0.0, 1.0, 0.0, 1.0, y_resolution=y_res)


def single_pixel_grid():
    return GridSpec(0.0, 1.0, 0.0, 1.0, y_resolution=1)


def uniform_weight(value=1.0, center=(0.5, 0.5), spread=1e6):
    # effectively constant weight across any finite grid
    return GaussianMixtureWeight([center], [spread], [value])


class TestEvalWeight:
    def test_center_value(self):
        w = GaussianMixtureWeight([(1.0, 2.0)], [0.7], [3.5])
        assert eval_weight(w, (1.0, 2.0)) == pytest.approx(3.5)

    def test_one_spread_out(self):
        w = GaussianMixtureWeight([(0.0, 0.0)], [0.5], [2.0])
        assert eval_weight(w, (0.5, 0.0)) == pytest.approx(2.0 * math.exp(-1.0))

    def test_two_components_sum(self):
        w1 = GaussianMixtureWeight([(0.0, 0.0)], [1.0], [1.0])
        w2 = GaussianMixtureWeight([(1.0, 1.0)], [2.0], [0.5])
        both = GaussianMixtureWeight(
            [(0.0, 0.0), (1.0, 1.0)], [1.0, 2.0], [1.0, 0.5]
        )
        z = (0.3, -0.4)
        assert eval_weight(both, z) == pytest.approx(
            eval_weight(w1, z) + eval_weight(w2, z)
        )

    def test_spread_denominator_has_no_factor_two(self):
        w = GaussianMixtureWeight([(0.0, 0.0)], [1.0], [1.0])
        # at squared distance 1 the exponent is exactly -1
        assert eval_weight(w, (1.0, 0.0)) == pytest.approx(math.exp(-1.0))


class TestKernels:
    def test_self_kernel_is_weight_sum(self):
        grid = unit_grid()
        rng = np.random.default_rng(0)
        img = random_images(rng, 1, grid)[0]
        w = random_mixture(rng, 3)
        p = WkpiParams(kernel_sigma=0.8, weight=w)
        assert wkpi_kernel(img, img, p) == pytest.approx(
            eval_weight(w, grid.centers).sum()
        )

    def test_single_pixel_value(self):
        grid = single_pixel_grid()
        sigma = 0.7
        a = PersistenceImage(grid, np.array([0.2]))
        b = PersistenceImage(grid, np.array([0.2 + sigma]))
        p = WkpiParams(kernel_sigma=sigma, weight=uniform_weight(1.0))
        assert wkpi_kernel(a, b, p) == pytest.approx(math.exp(-0.5), rel=1e-6)

    def test_zero_weight_gives_zero(self):
        grid = unit_grid()
        rng = np.random.default_rng(1)
        a, b = random_images(rng, 2, grid)
        w = GaussianMixtureWeight([(0.5, 0.5)], [1.0], [0.0])
        p = WkpiParams(kernel_sigma=1.0, weight=w)
        assert wkpi_kernel(a, b, p) == 0.0

    def test_symmetry(self):
        grid = unit_grid()
        rng = np.random.default_rng(2)
        a, b = random_images(rng, 2, grid)
        p = WkpiParams(kernel_sigma=0.5, weight=random_mixture(rng, 2))
        assert wkpi_kernel(a, b, p) == pytest.approx(wkpi_kernel(b, a, p))

    def test_grid_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        a = random_images(rng, 1, unit_grid())[0]
        b = random_images(rng, 1, GridSpec(0.0, 2.0, 0.0, 1.0, 2))[0]
        p = WkpiParams(kernel_sigma=1.0, weight=uniform_weight())
        with pytest.raises(GridMismatchError):
            wkpi_kernel(a, b, p)


class TestAltKernel:
    def test_self_kernel_is_pixel_count(self):
        grid = unit_grid()
        rng = np.random.default_rng(4)
        img = random_images(rng, 1, grid)[0]
        p = WkpiParams(kernel_sigma=1.0, weight=random_mixture(rng, 2), kernel_variant="alt-wkpi")
        assert alt_wkpi_kernel(img, img, p) == pytest.approx(grid.size)

    def test_zero_weight_gives_pixel_count(self):
        grid = unit_grid()
        rng = np.random.default_rng(5)
        a, b = random_images(rng, 2, grid)
        w = GaussianMixtureWeight([(0.5, 0.5)], [1.0], [0.0])
        p = WkpiParams(kernel_sigma=1.0, weight=w, kernel_variant="alt-wkpi")
        assert alt_wkpi_kernel(a, b, p) == pytest.approx(grid.size)

    def test_single_pixel_weight_two(self):
        grid = single_pixel_grid()
        sigma = 0.6
        a = PersistenceImage(grid, np.array([1.0]))
        b = PersistenceImage(grid, np.array([1.0 + sigma]))
        p = WkpiParams(
            kernel_sigma=sigma, weight=uniform_weight(2.0), kernel_variant="alt-wkpi"
        )
        assert alt_wkpi_kernel(a, b, p) == pytest.approx(math.exp(-1.0), rel=1e-6)


class TestDistance:
    def test_self_distance_zero(self):
        grid = unit_grid()
        rng = np.random.default_rng(6)
        img = random_images(rng, 1, grid)[0]
        p = WkpiParams(kernel_sigma=0.4, weight=random_mixture(rng, 2))
        assert wkpi_distance(img, img, p) == 0.0

    def test_single_pixel_value(self):
        grid = single_pixel_grid()
        sigma = 0.9
        a = PersistenceImage(grid, np.array([0.0]))
        b = PersistenceImage(grid, np.array([sigma]))
        p = WkpiParams(kernel_sigma=sigma, weight=uniform_weight(1.0))
        d2 = 2.0 * (1.0 - math.exp(-0.5))
        assert wkpi_distance(a, b, p) ** 2 == pytest.approx(d2, rel=1e-6)
        assert wkpi_distance(a, b, p) == pytest.approx(0.887095, abs=1e-5)

    def test_symmetric(self):
        grid = unit_grid()
        rng = np.random.default_rng(7)
        a, b = random_images(rng, 2, grid)
        p = WkpiParams(kernel_sigma=0.7, weight=random_mixture(rng, 3))
        assert wkpi_distance(a, b, p) == pytest.approx(wkpi_distance(b, a, p))

    def test_matches_kernel_combination(self):
        grid = unit_grid(3)
        rng = np.random.default_rng(8)
        a, b = random_images(rng, 2, grid)
        for variant, kfun in (("wkpi", wkpi_kernel), ("alt-wkpi", alt_wkpi_kernel)):
            p = WkpiParams(kernel_sigma=0.6, weight=random_mixture(rng, 2), kernel_variant=variant)
            d2 = kfun(a, a, p) + kfun(b, b, p) - 2.0 * kfun(a, b, p)
            assert wkpi_distance(a, b, p) == pytest.approx(math.sqrt(max(d2, 0.0)))

    def test_pseudo_metric_triangle(self):
        grid = unit_grid(3)
        rng = np.random.default_rng(9)
        for _ in range(20):
            a, b, c = random_images(rng, 3, grid)
            p = WkpiParams(kernel_sigma=0.5, weight=random_mixture(rng, 2))
            dab = wkpi_distance(a, b, p)
            dbc = wkpi_distance(b, c, p)
            dac = wkpi_distance(a, c, p)
            assert dac <= dab + dbc + 1e-10


class TestGram:
    def test_single_image(self):
        grid = unit_grid()
        rng = np.random.default_rng(10)
        img = random_images(rng, 1, grid)[0]
        w = random_mixture(rng, 2)
        p = WkpiParams(kernel_sigma=1.0, weight=w)
        gram = gram_matrix([img], p)
        assert gram.shape == (1, 1)
        assert gram[0, 0] == pytest.approx(eval_weight(w, grid.centers).sum())

    def test_symmetric_and_diagonal(self):
        grid = unit_grid(3)
        rng = np.random.default_rng(11)
        imgs = random_images(rng, 6, grid)
        w = random_mixture(rng, 3)
        p = WkpiParams(kernel_sigma=0.3, weight=w)
        gram = gram_matrix(imgs, p)
        assert np.allclose(gram, gram.T)
        assert np.allclose(np.diag(gram), eval_weight(w, grid.centers).sum())

    def test_psd_random(self):
        rng = np.random.default_rng(12)
        grid = unit_grid(3)
        for variant in ("wkpi", "alt-wkpi"):
            for _ in range(10):
                imgs = random_images(rng, 8, grid)
                p = WkpiParams(
                    kernel_sigma=float(rng.uniform(0.1, 2.0)),
                    weight=random_mixture(rng, int(rng.integers(1, 4))),
                    kernel_variant=variant,
                )
                gram = gram_matrix(imgs, p)
                min_eig = np.linalg.eigvalsh(gram).min()
                assert min_eig >= -1e-8 * max(1.0, np.abs(gram).max())


class TestCostMatrices:
    def test_two_point_one_class(self):
        grid = single_pixel_grid()
        a = PersistenceImage(grid, np.array([0.0]))
        b = PersistenceImage(grid, np.array([0.5]))
        p = WkpiParams(kernel_sigma=1.0, weight=uniform_weight(1.0))
        d2 = wkpi_distance(a, b, p) ** 2
        cm = build_cost_matrices([a, b], [0, 0], p)
        assert np.allclose(cm.lambda_, [[0.0, d2], [d2, 0.0]])
        assert np.allclose(cm.g, np.diag([d2, d2]))
        expected_h = np.full((1, 2), 1.0 / math.sqrt(2.0 * d2))
        assert np.allclose(cm.h, expected_h)
        hgh = cm.h @ cm.g @ cm.h.T
        assert np.allclose(hgh, np.eye(1), atol=1e-12)

    def test_laplacian_rows_sum_zero(self):
        rng = np.random.default_rng(13)
        grid = unit_grid()
        imgs = random_images(rng, 7, grid)
        labels = random_labels(rng, 7, 3)
        p = WkpiParams(kernel_sigma=0.5, weight=random_mixture(rng, 2))
        cm = build_cost_matrices(imgs, labels, p)
        assert np.allclose(cm.l.sum(axis=1), 0.0, atol=1e-10)

    def test_laplacian_quadratic_form(self):
        rng = np.random.default_rng(14)
        grid = unit_grid()
        for _ in range(10):
            n = int(rng.integers(3, 9))
            imgs = random_images(rng, n, grid)
            labels = random_labels(rng, n, 2)
            p = WkpiParams(kernel_sigma=0.5, weight=random_mixture(rng, 2))
            cm = build_cost_matrices(imgs, labels, p)
            v = rng.normal(size=n)
            direct = v @ cm.l @ v
            pairwise = 0.5 * sum(
                cm.lambda_[i, j] * (v[i] - v[j]) ** 2
                for i in range(n)
                for j in range(n)
            )
            assert direct == pytest.approx(pairwise, rel=1e-9, abs=1e-12)

    def test_constraint_identity(self):
        rng = np.random.default_rng(15)
        grid = unit_grid()
        for _ in range(10):
            n = int(rng.integers(4, 10))
            k = int(rng.integers(1, 4))
            imgs = random_images(rng, n, grid)
            labels = random_labels(rng, n, k)
            p = WkpiParams(kernel_sigma=0.7, weight=random_mixture(rng, 2))
            cm = build_cost_matrices(imgs, labels, p)
            hgh = cm.h @ cm.g @ cm.h.T
            assert np.abs(hgh - np.eye(k)).max() <= 1e-8

    def test_degenerate_class_detected(self):
        grid = single_pixel_grid()
        imgs = [PersistenceImage(grid, np.array([0.3])) for _ in range(3)]
        p = WkpiParams(kernel_sigma=1.0, weight=uniform_weight(1.0))
        with pytest.raises(DegenerateClassError):
            build_cost_matrices(imgs, [0, 0, 1], p)


class TestTotalCost:
    def test_one_class_is_one(self):
        rng = np.random.default_rng(16)
        grid = unit_grid()
        imgs = random_images(rng, 5, grid)
        p = WkpiParams(kernel_sigma=0.5, weight=random_mixture(rng, 2))
        assert total_cost_direct(imgs, [0] * 5, p) == pytest.approx(1.0)
        cm = build_cost_matrices(imgs, [0] * 5, p)
        assert total_cost_matrix(cm, 1) == pytest.approx(1.0)

    def test_two_singletons_zero(self):
        grid = single_pixel_grid()
        a = PersistenceImage(grid, np.array([0.0]))
        b = PersistenceImage(grid, np.array([1.0]))
        p = WkpiParams(kernel_sigma=1.0, weight=uniform_weight(1.0))
        assert total_cost_direct([a, b], [0, 1], p) == pytest.approx(0.0)
        cm = build_cost_matrices([a, b], [0, 1], p)
        assert np.trace(cm.h @ cm.l @ cm.h.T) == pytest.approx(2.0)
        assert total_cost_matrix(cm, 2) == pytest.approx(0.0, abs=1e-12)

    def test_direct_matches_matrix_form(self):
        rng = np.random.default_rng(17)
        grid = unit_grid(3)
        for variant in ("wkpi", "alt-wkpi"):
            for _ in range(15):
                n = int(rng.integers(4, 16))
                k = int(rng.integers(1, 5))
                imgs = random_images(rng, n, grid)
                labels = random_labels(rng, n, k)
                p = WkpiParams(
                    kernel_sigma=float(rng.uniform(0.2, 1.5)),
                    weight=random_mixture(rng, int(rng.integers(1, 4))),
                    kernel_variant=variant,
                )
                direct = total_cost_direct(imgs, labels, p)
                cm = build_cost_matrices(imgs, labels, p)
                matrix = total_cost_matrix(cm, k)
                assert abs(direct - matrix) <= 1e-8 * max(1.0, direct)
                assert 0.0 <= direct <= k + 1e-12

    def test_cost_model_agrees_with_direct(self):
        rng = np.random.default_rng(18)
        grid = unit_grid(3)
        for variant in ("wkpi", "alt-wkpi"):
            imgs = random_images(rng, 9, grid)
            labels = random_labels(rng, 9, 3)
            w = random_mixture(rng, 3)
            p = WkpiParams(kernel_sigma=0.4, weight=w, kernel_variant=variant)
            pixmat, grid_ = image_matrix(imgs)
            model = CostModel(pixmat, labels, grid_.centers, 0.4, variant)
            assert model.total_cost(w) == pytest.approx(total_cost_direct(imgs, labels, p))

    def test_coefficient_scaling_leaves_cost_invariant(self):
        rng = np.random.default_rng(19)
        grid = unit_grid()
        imgs = random_images(rng, 8, grid)
        labels = random_labels(rng, 8, 2)
        w = random_mixture(rng, 3)
        for lam in (0.25, 3.0, 17.5):
            scaled = GaussianMixtureWeight(
                w.centers, w.spreads, lam * w.coefficients
            )
            p1 = WkpiParams(kernel_sigma=0.5, weight=w)
            p2 = WkpiParams(kernel_sigma=0.5, weight=scaled)
            tc1 = total_cost_direct(imgs, labels, p1)
            tc2 = total_cost_direct(imgs, labels, p2)
            assert abs(tc1 - tc2) <= 1e-10
            # squared distances scale linearly
            lam1 = squared_distance_matrix(imgs, p1)
            lam2 = squared_distance_matrix(imgs, p2)
            assert np.allclose(lam2, lam * lam1, rtol=1e-10)


class TestStabilityBound:
    def test_distance_bounded_by_image_norm(self):
        rng = np.random.default_rng(20)
        grid = unit_grid(3)
        for _ in range(200):
            a, b = random_images(rng, 2, grid, scale=float(rng.uniform(0.5, 3.0)))
            w = random_mixture(rng, int(rng.integers(1, 4)))
            sigma = float(rng.uniform(0.2, 2.0))
            p = WkpiParams(kernel_sigma=sigma, weight=w)
            d2 = wkpi_distance(a, b, p) ** 2
            c_omega = eval_weight(w, grid.centers).max()
            bound = 2.0 * c_omega / sigma**2 * np.sum((a.pixels - b.pixels) ** 2)
            assert d2 <= bound + 1e-12


class TestGradient:
    def _random_instance(self, rng, variant="wkpi"):
        grid = unit_grid()
        n = int(rng.integers(4, 10))
        k = int(rng.integers(2, 4))
        imgs = random_images(rng, n, grid)
        labels = random_labels(rng, n, k)
        m = int(rng.integers(1, 4))
        w = random_mixture(rng, m, max_coeff=2.0)
        # keep coefficients away from 0 so finite differences stay smooth
        w = GaussianMixtureWeight(w.centers, w.spreads, w.coefficients + 0.5)
        sigma = float(rng.uniform(0.3, 1.2))
        return imgs, labels, WkpiParams(kernel_sigma=sigma, weight=w, kernel_variant=variant)

    def test_single_class_tc_gradient_zero(self):
        rng = np.random.default_rng(21)
        grid = unit_grid()
        imgs = random_images(rng, 5, grid)
        w = random_mixture(rng, 2)
        p = WkpiParams(kernel_sigma=0.5, weight=w)
        grad = cost_gradient(imgs, [0] * 5, p, penalty_c=0.0)
        assert np.allclose(grad, 0.0, atol=1e-10)

    def test_penalty_gradient_closed_form(self):
        rng = np.random.default_rng(22)
        grid = unit_grid()
        imgs = random_images(rng, 5, grid)
        w = random_mixture(rng, 3)
        p = WkpiParams(kernel_sigma=0.5, weight=w)
        c = 2.5
        grad = cost_gradient(imgs, [0] * 5, p, penalty_c=c)
        expected = np.zeros(12)
        expected[3::4] = -c * np.exp(-w.coefficients)
        assert np.allclose(grad, expected, atol=1e-10)

    @pytest.mark.parametrize("variant", ["wkpi", "alt-wkpi"])
    def test_matches_finite_differences(self, variant):
        rng = np.random.default_rng(23)
        grid = unit_grid()
        for _ in range(10):
            imgs, labels, p = self._random_instance(rng, variant)
            c = 1.0
            grad = cost_gradient(imgs, labels, p, penalty_c=c)

            def objective(flat):
                w = GaussianMixtureWeight.from_parameters(flat)
                pw = WkpiParams(p.kernel_sigma, w, p.kernel_variant)
                tc = total_cost_direct(imgs, labels, pw)
                return tc + c * np.exp(-w.coefficients).sum()

            fd = finite_difference_gradient(objective, p.weight.as_parameters())
            # the 1e-6 floor only matters where both gradients sit at the
            # finite-difference noise floor (~1e-11 for eps = 1e-5)
            denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
            assert np.all(np.abs(grad - fd) / denom <= 1e-4)
