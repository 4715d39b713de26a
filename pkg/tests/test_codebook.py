"""Encoder/decoder representations: evaluation, hardening, interpolation, power."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damap import numerics as nx
from damap.codebook import (
    DecoderTable,
    decode,
    decode_many,
    encoder_from_dict,
    encoder_power,
    encoder_power_gradient,
    encoder_to_dict,
    eval_model,
    harden,
    make_encoder,
    model_outputs,
    one_hot_assoc,
)
from damap.numerics import OutputGrid


def uniform_encoder(models, grid):
    k = len(models)
    return make_encoder(models, np.full((len(grid), k), 1.0 / k), grid)


class TestEvalModel:
    def test_direct(self):
        enc = uniform_encoder([(2.0, 0.0)], np.linspace(-1, 1, 8))
        assert eval_model(enc, 0, 1.0) == pytest.approx(2.0)

    def test_constant_model(self):
        enc = uniform_encoder([(0.0, 3.0)], np.linspace(-1, 1, 8))
        for x in (-5.0, 0.0, 2.5):
            assert eval_model(enc, 0, x) == pytest.approx(3.0)

    def test_affine(self):
        enc = uniform_encoder([(1.0, -1.0)], np.linspace(-1, 1, 8))
        assert eval_model(enc, 0, 1.0) == pytest.approx(0.0)

    def test_bad_index(self):
        enc = uniform_encoder([(1.0, 0.0)], np.linspace(-1, 1, 8))
        with pytest.raises(IndexError):
            eval_model(enc, 1, 0.0)


class TestHarden:
    def test_argmax_selection(self):
        grid = np.array([2.0])
        enc = make_encoder([(1.0, 0.0), (-1.0, 0.0)], np.array([[0.9, 0.1]]), grid)
        values, winners = harden(enc)
        assert winners[0] == 0
        assert values[0] == pytest.approx(2.0)

    def test_tie_breaks_low_index(self):
        grid = np.array([2.0])
        enc = make_encoder([(1.0, 0.0), (-1.0, 0.0)], np.array([[0.5, 0.5]]), grid)
        _, winners = harden(enc)
        assert winners[0] == 0

    def test_coincident_models_same_values(self):
        grid = np.linspace(-1, 1, 16)
        enc = uniform_encoder([(1.5, 0.2)] * 3, grid)
        values, _ = harden(enc)
        assert np.abs(values - (1.5 * grid + 0.2)).max() == 0.0

    def test_idempotent_on_one_hot(self):
        grid = np.linspace(-2, 2, 12)
        winners = np.arange(12) % 2
        enc = make_encoder([(1.0, 0.0), (0.5, 1.0)], one_hot_assoc(winners, 2), grid)
        values, again = harden(enc)
        assert np.array_equal(again, winners)
        expected = model_outputs(enc)[np.arange(12), winners]
        assert np.array_equal(values, expected)


def linear_table(n=16, lo=-4.0, hi=4.0, coeff=(0.5, 0.25)):
    y1 = np.linspace(lo, hi, n)
    y2 = np.linspace(lo, hi, n)
    grid = OutputGrid(y_grid_1=y1, y_grid_2=y2)
    xh1 = coeff[0] * y1[:, None] + coeff[1] * y2[None, :]
    xh2 = coeff[1] * y1[:, None] + coeff[0] * y2[None, :]
    return DecoderTable(grid=grid, xhat1=xh1, xhat2=xh2)


class TestDecode:
    def test_node_identity(self):
        table = linear_table()
        y1 = table.grid.y_grid_1[3]
        y2 = table.grid.y_grid_2[7]
        xh1, xh2 = decode(table, y1, y2)
        assert xh1 == pytest.approx(table.xhat1[3, 7], abs=1e-14)
        assert xh2 == pytest.approx(table.xhat2[3, 7], abs=1e-14)

    def test_constant_patch(self):
        grid = OutputGrid(np.linspace(0, 1, 4), np.linspace(0, 1, 4))
        table = DecoderTable(grid=grid, xhat1=np.full((4, 4), 2.5), xhat2=np.zeros((4, 4)))
        xh1, _ = decode(table, 0.5, 0.5)
        assert xh1 == pytest.approx(2.5, abs=1e-14)

    def test_clamps_out_of_range(self):
        table = linear_table()
        hi = table.grid.y_grid_1[-1]
        inside, _ = decode(table, hi, 0.0)
        outside, _ = decode(table, hi + 10.0, 0.0)
        assert outside == pytest.approx(inside, abs=1e-14)

    def test_exact_on_linear_tables(self):
        # Bilinear interpolation reproduces a bilinear function exactly.
        table = linear_table()
        rng = np.random.default_rng(0)
        y1 = rng.uniform(-4, 4, 64)
        y2 = rng.uniform(-4, 4, 64)
        xh1, xh2 = decode_many(table, y1, y2)
        assert np.abs(xh1 - (0.5 * y1 + 0.25 * y2)).max() < 1e-12
        assert np.abs(xh2 - (0.25 * y1 + 0.5 * y2)).max() < 1e-12

    def test_refinement_halves_error(self):
        # On a smooth nonlinear table the interpolation error drops about
        # quadratically with node spacing.
        def build(n):
            y = np.linspace(-2, 2, n)
            grid = OutputGrid(y, y)
            f = np.tanh(y)[:, None] * np.cos(0.5 * y)[None, :]
            return DecoderTable(grid=grid, xhat1=f, xhat2=f)

        rng = np.random.default_rng(1)
        q1 = rng.uniform(-2, 2, 256)
        q2 = rng.uniform(-2, 2, 256)
        exact = np.tanh(q1) * np.cos(0.5 * q2)
        errors = []
        for n in (17, 33, 65):
            xh1, _ = decode_many(build(n), q1, q2)
            errors.append(np.abs(xh1 - exact).max())
        assert errors[1] <= errors[0] / 2.0
        assert errors[2] <= errors[1] / 2.0


class TestEncoderPower:
    def test_identity_power_matches_grid_variance(self):
        src = nx.build_source_model(0.0, 1.0, 1.0, 64, 5.0)
        enc = uniform_encoder([(1.0, 0.0)], src.x_grid_1)
        power = encoder_power(enc, src.q_marg_1)
        assert abs(power - 1.0) < 0.005

    def test_zero_encoder(self):
        src = nx.build_source_model(0.0, 1.0, 1.0, 32, 5.0)
        enc = uniform_encoder([(0.0, 0.0)], src.x_grid_1)
        assert encoder_power(enc, src.q_marg_1) == 0.0

    def test_slope_two_quadruples(self):
        src = nx.build_source_model(0.0, 1.0, 1.0, 64, 5.0)
        enc = uniform_encoder([(2.0, 0.0)], src.x_grid_1)
        assert abs(encoder_power(enc, src.q_marg_1) - 4.0) < 0.005 * 4.0

    def test_one_hot_equals_hardened_power(self):
        src = nx.build_source_model(0.0, 1.0, 1.0, 32, 5.0)
        winners = (np.arange(32) > 16).astype(int)
        enc = make_encoder([(1.0, 0.0), (0.3, -1.0)], one_hot_assoc(winners, 2), src.x_grid_1)
        values, _ = harden(enc)
        direct = float(np.dot(src.q_marg_1, values**2))
        assert abs(encoder_power(enc, src.q_marg_1) - direct) < 1e-12

    def test_mismatched_grid_rejected(self):
        enc = uniform_encoder([(1.0, 0.0)], np.linspace(-1, 1, 8))
        with pytest.raises(ValueError):
            encoder_power(enc, np.ones(9) / 9)

    def test_analytic_gradient_matches_finite_difference(self):
        src = nx.build_source_model(0.0, 1.0, 1.0, 48, 5.0)
        rng = np.random.default_rng(5)
        assoc = rng.uniform(0.2, 1.0, (48, 3))
        assoc /= assoc.sum(axis=1, keepdims=True)
        enc = make_encoder([(1.2, 0.1), (0.7, -0.4), (1.9, 0.8)], assoc, src.x_grid_1)
        d_a, d_b = encoder_power_gradient(enc, src.q_marg_1)
        h = 1e-6
        for k in range(3):
            for which, grad in (("a", d_a[k]), ("b", d_b[k])):
                up = enc.with_params(
                    enc.slopes + (h if which == "a" else 0) * (np.arange(3) == k),
                    enc.intercepts + (h if which == "b" else 0) * (np.arange(3) == k),
                )
                dn = enc.with_params(
                    enc.slopes - (h if which == "a" else 0) * (np.arange(3) == k),
                    enc.intercepts - (h if which == "b" else 0) * (np.arange(3) == k),
                )
                fd = (encoder_power(up, src.q_marg_1) - encoder_power(dn, src.q_marg_1)) / (2 * h)
                assert abs(fd - grad) < 1e-6 * max(1.0, abs(grad))


class TestSerialization:
    def test_round_trip(self):
        grid = np.linspace(-2, 2, 10)
        rng = np.random.default_rng(2)
        assoc = rng.uniform(0.1, 1.0, (10, 2))
        assoc /= assoc.sum(axis=1, keepdims=True)
        enc = make_encoder([(1.3, -0.2), (0.4, 0.9)], assoc, grid)
        clone = encoder_from_dict(encoder_to_dict(enc))
        assert np.abs(clone.slopes - enc.slopes).max() == 0.0
        assert np.abs(clone.assoc - enc.assoc).max() == 0.0
        assert np.abs(clone.x_grid - enc.x_grid).max() == 0.0


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=2, max_value=20),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_harden_values_follow_argmax(k, n, seed):
    rng = np.random.default_rng(seed)
    grid = np.sort(rng.uniform(-3, 3, n))
    assoc = rng.uniform(0.0, 1.0, (n, k)) + 1e-9
    assoc /= assoc.sum(axis=1, keepdims=True)
    enc = make_encoder(list(zip(rng.uniform(-2, 2, k), rng.uniform(-2, 2, k))), assoc, grid)
    values, winners = harden(enc)
    outputs = model_outputs(enc)
    assert np.array_equal(values, outputs[np.arange(n), winners])
    assert np.all(assoc[np.arange(n), winners] >= assoc.max(axis=1) - 1e-15)
