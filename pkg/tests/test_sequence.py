import numpy as np
import pytest

from hgtul.errors import SequenceError
from hgtul.sequence import (
    LstmParams,
    PaddedBatch,
    init_lstm_params,
    lstm_final,
    lstm_final_backward,
    pad_sequences,
)

from gradcheck import max_rel_error, numerical_grad
from oracles import lstm_reference


def _random_params(rng, d, scale=0.5):
    return LstmParams(
        wx=rng.normal(size=(d, 4 * d)) * scale,
        wh=rng.normal(size=(d, 4 * d)) * scale,
        bias=rng.normal(size=4 * d) * 0.1,
    )


class TestForward:
    def test_zero_params_zero_output(self):
        d = 3
        params = LstmParams(np.zeros((d, 4 * d)), np.zeros((d, 4 * d)), np.zeros(4 * d))
        batch = pad_sequences([np.random.default_rng(0).normal(size=(4, d))])
        h, _ = lstm_final(batch, params)
        np.testing.assert_array_equal(h, np.zeros((1, d)))

    def test_length_one_single_step(self):
        rng = np.random.default_rng(1)
        d = 3
        params = _random_params(rng, d)
        seq = rng.normal(size=(1, d))
        h, _ = lstm_final(pad_sequences([seq]), params)
        np.testing.assert_allclose(
            h[0], lstm_reference(seq, params.wx, params.wh, params.bias), atol=1e-14
        )

    def test_matches_scalar_oracle_mixed_lengths(self):
        rng = np.random.default_rng(2)
        d = 4
        params = _random_params(rng, d)
        seqs = [rng.normal(size=(ln, d)) for ln in (1, 3)]
        h, _ = lstm_final(pad_sequences(seqs), params)
        for i, seq in enumerate(seqs):
            expect = lstm_reference(seq, params.wx, params.wh, params.bias)
            np.testing.assert_allclose(h[i], expect, atol=1e-12, rtol=0)

    def test_padding_never_changes_output(self):
        rng = np.random.default_rng(3)
        d = 3
        params = _random_params(rng, d)
        seq = rng.normal(size=(4, d))
        alone = pad_sequences([seq])
        padded = PaddedBatch(
            data=np.concatenate([alone.data, np.zeros((1, 6, d))], axis=1),
            lengths=alone.lengths,
        )
        h1, _ = lstm_final(alone, params)
        h2, _ = lstm_final(padded, params)
        np.testing.assert_array_equal(h1, h2)

    def test_batch_invariance_bitwise(self):
        rng = np.random.default_rng(4)
        d = 5
        params = _random_params(rng, d)
        seqs = [rng.normal(size=(ln, d)) for ln in (2, 7, 1, 5)]
        together, _ = lstm_final(pad_sequences(seqs), params)
        for i, seq in enumerate(seqs):
            alone, _ = lstm_final(pad_sequences([seq]), params)
            np.testing.assert_array_equal(alone[0], together[i])

    def test_forget_bias_init(self):
        params = init_lstm_params(8, np.random.default_rng(0))
        np.testing.assert_array_equal(params.bias[8:16], np.ones(8))
        assert np.all(np.abs(params.wx) <= 1 / np.sqrt(8))

    def test_empty_batch_rejected(self):
        with pytest.raises(SequenceError):
            pad_sequences([])


class TestBackward:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        d = 4
        params = _random_params(rng, d)
        seqs = [rng.normal(size=(3, d)), rng.normal(size=(2, d))]
        batch = pad_sequences(seqs)
        w_proj = rng.normal(size=(2, d))

        def loss():
            h, _ = lstm_final(batch, params)
            return float(np.sum(h * w_proj))

        h, cache = lstm_final(batch, params)
        dx, dwx, dwh, db = lstm_final_backward(w_proj.copy(), batch, params, cache)
        for tensor, analytic in (
            (params.wx, dwx),
            (params.wh, dwh),
            (params.bias, db),
            (batch.data, dx),
        ):
            numeric = numerical_grad(loss, tensor)
            assert max_rel_error(analytic, numeric) < 1e-6

    def test_padded_positions_get_zero_gradient(self):
        rng = np.random.default_rng(6)
        d = 3
        params = _random_params(rng, d)
        batch = pad_sequences([rng.normal(size=(2, d)), rng.normal(size=(4, d))])
        h, cache = lstm_final(batch, params)
        dx, _, _, _ = lstm_final_backward(np.ones_like(h), batch, params, cache)
        np.testing.assert_array_equal(dx[0, 2:], np.zeros((2, d)))
