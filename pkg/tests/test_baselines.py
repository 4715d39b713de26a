"""Greedy descent and noisy-channel relaxation."""

import numpy as np
import pytest

from damap import baselines as bl
from damap import numerics as nx
from damap import objective as obj
from damap.errors import ConfigurationError


@pytest.fixture(scope="module")
def problem():
    src = nx.build_source_model(0.9, 1.0, 1.0, 32, 5.0)
    noise = nx.build_noise_model(0.1, 7, 4.0)
    return src, (noise, noise)


GREEDY_KW = dict(n_outputs=48, golden_iters=20, max_sweeps=40)


class TestGreedyDescend:
    def test_monotone_within_every_sweep(self, problem):
        src, noises = problem
        rng = np.random.default_rng(4)
        for _ in range(3):
            v1 = rng.uniform(0.4, 1.6) * src.x_grid_1 + 0.2 * rng.standard_normal(32)
            v2 = rng.uniform(0.4, 1.6) * src.x_grid_2 + 0.2 * rng.standard_normal(32)
            res = bl.greedy_descend(v1, v2, src, noises, obj.LagrangeWeights.total(0.02), tol=1e-4, **GREEDY_KW)
            for pre, post in res.sweep_trail:
                assert post <= pre + 1e-12 * abs(pre)

    def test_huge_multiplier_collapses_encoders(self, problem):
        src, noises = problem
        res = bl.greedy_descend(
            src.x_grid_1.copy(),
            src.x_grid_2.copy(),
            src,
            noises,
            obj.LagrangeWeights.total(1e6),
            tol=1e-6,
            **GREEDY_KW,
        )
        assert res.costs.power1 + res.costs.power2 <= 1e-3

    def test_stationary_at_brute_force_linear_optimum(self, problem):
        # Alternating golden-section scans over the two slopes (intercepts
        # zero by symmetry), with the decoder refreshed per evaluation, give
        # the best linear system; an uncorrelated pair leaves greedy nothing
        # meaningful to improve pointwise.
        src = nx.build_source_model(0.0, 1.0, 1.0, 32, 5.0)
        noise = nx.build_noise_model(0.1, 7, 4.0)
        noises = (noise, noise)
        weights = obj.LagrangeWeights.total(0.05)

        def cost(a1, a2):
            v1 = a1 * src.x_grid_1
            v2 = a2 * src.x_grid_2
            grid = nx.build_output_grid((v1, v2), noises, 48, 0.05)
            decoder = obj.compute_decoder(src, noise, noise, v1, v2, grid)
            tensor = obj.compute_distortion_tensor(src, noise, noise, v1, v2, decoder)
            d = obj.expected_distortion(tensor, src, v1, v2)
            p1 = float(np.dot(src.q_marg_1, v1**2))
            p2 = float(np.dot(src.q_marg_2, v2**2))
            return d + weights.lambda1 * p1 + weights.lambda2 * p2

        golden = (np.sqrt(5.0) - 1.0) / 2.0
        slopes = [1.0, 1.0]
        for _ in range(6):
            for i in (0, 1):
                lo, hi = slopes[i] - 0.4, slopes[i] + 0.4
                c, d = hi - golden * (hi - lo), lo + golden * (hi - lo)
                args = lambda s: (s, slopes[1]) if i == 0 else (slopes[0], s)
                fc, fd = cost(*args(c)), cost(*args(d))
                for _ in range(30):
                    if fc < fd:
                        hi, d, fd = d, c, fc
                        c = hi - golden * (hi - lo)
                        fc = cost(*args(c))
                    else:
                        lo, c, fc = c, d, fd
                        d = lo + golden * (hi - lo)
                        fd = cost(*args(d))
                slopes[i] = 0.5 * (lo + hi)

        v1 = slopes[0] * src.x_grid_1
        v2 = slopes[1] * src.x_grid_2
        res = bl.greedy_descend(v1, v2, src, noises, weights, tol=1e-9, max_sweeps=1,
                                n_outputs=48, golden_iters=20)
        pre, post = res.sweep_trail[0]
        assert abs(post - pre) <= 1e-4 * abs(pre)

    def test_chosen_values_reproduce_stored_minimum(self, problem):
        src, noises = problem
        noise1, noise2 = noises
        v1 = src.x_grid_1.copy()
        v2 = src.x_grid_2.copy()
        grid = nx.build_output_grid((v1, v2), noises, 48, 0.05)
        decoder = obj.compute_decoder(src, noise1, noise2, v1, v2, grid)
        vals, costs = bl._update_side(
            src, noise1, noise2, decoder, 1, v1, v2, 0.02, 33, 2.0, 20
        )
        scorer = obj.NodeCostEvaluator(src, noise1, noise2, decoder, 1, v2)
        recomputed = scorer.costs(vals[None, :])[0] + 0.02 * vals**2
        assert np.abs(recomputed - costs).max() < 1e-12

    def test_mismatched_lengths_rejected(self, problem):
        src, noises = problem
        with pytest.raises(ConfigurationError):
            bl.greedy_descend(np.zeros(8), np.zeros(32), src, noises, obj.LagrangeWeights.total(0.01))


class TestNcr:
    def test_degenerate_schedule_equals_plain_greedy(self, problem):
        src, noises = problem
        weights = obj.LagrangeWeights.total(0.02)
        init = (src.x_grid_1.copy(), src.x_grid_2.copy())
        cfg = bl.NcrConfig(sigma2_start=noises[0].var, ncr_alpha=0.5, stages=1)
        res_ncr = bl.ncr(cfg, src, noises, weights, init, tol=1e-4, **GREEDY_KW)
        res_greedy = bl.greedy_descend(init[0], init[1], src, noises, weights, tol=1e-4, **GREEDY_KW)
        assert np.array_equal(res_ncr.values1, res_greedy.values1)
        assert res_ncr.lagrangian == res_greedy.lagrangian

    def test_matches_manual_stage_composition(self, problem):
        # The final stage must run at the true variance regardless of how
        # the geometric schedule rounds.
        src, noises = problem
        weights = obj.LagrangeWeights.total(0.02)
        init = (src.x_grid_1.copy(), src.x_grid_2.copy())
        cfg = bl.NcrConfig(sigma2_start=0.4, ncr_alpha=0.9, stages=3)
        res = bl.ncr(cfg, src, noises, weights, init, tol=1e-4, **GREEDY_KW)

        v1, v2 = init
        for var in (0.4, 0.36, noises[0].var):
            noise = nx.build_noise_model(var, 7, 4.0)
            stage = bl.greedy_descend(v1, v2, src, (noise, noise), weights, tol=1e-4, **GREEDY_KW)
            v1, v2 = stage.values1, stage.values2
        assert np.array_equal(res.values1, v1)
        assert np.array_equal(res.values2, v2)

    def test_start_below_true_variance_rejected(self, problem):
        src, noises = problem
        cfg = bl.NcrConfig(sigma2_start=0.01, ncr_alpha=0.5, stages=2)
        with pytest.raises(ConfigurationError):
            bl.ncr(cfg, src, noises, obj.LagrangeWeights.total(0.01), (src.x_grid_1, src.x_grid_2))

    def test_slow_schedule_not_worse_than_single_stage(self, problem):
        src, noises = problem
        weights = obj.LagrangeWeights.total(0.02)
        init = (src.x_grid_1.copy(), src.x_grid_2.copy())
        slow = bl.ncr(
            bl.NcrConfig(sigma2_start=0.8, ncr_alpha=0.8, stages=10),
            src, noises, weights, init, tol=1e-5, **GREEDY_KW,
        )
        single = bl.greedy_descend(init[0], init[1], src, noises, weights, tol=1e-5, **GREEDY_KW)
        assert slow.lagrangian <= single.lagrangian * (1 + 1e-5) + 1e-12
