import math

import numpy as np
import pytest

from src.model.experts import fourier_layer, route
from src.model.layers import grouped_attention, rope_rotate
from src.model.schemas import ForwardContext, ModelConfig
from src.tensor import ops
from src.tensor.random import make_generator
from src.tensor.tensor import Tensor


def test_rope_position_zero_is_identity(float64):
    x = make_generator(0, 'test').standard_normal((1, 8))
    np.testing.assert_allclose(rope_rotate(Tensor(x)).data, x)


def test_rope_rotates_first_pair_by_one_radian():
    y = rope_rotate(Tensor([[1.0, 0.0]]), offset=1)
    np.testing.assert_allclose(y.data, [[0.5403, 0.8415]], atol=1e-4)


def test_rope_preserves_norm(float64):
    x = make_generator(1, 'test').standard_normal((6, 16))
    y = rope_rotate(Tensor(x)).data
    np.testing.assert_allclose(
        np.linalg.norm(y, axis=-1), np.linalg.norm(x, axis=-1)
    )


def test_rope_scores_depend_on_relative_position(float64):
    rng = make_generator(2, 'test')
    q, k = rng.standard_normal((1, 8)), rng.standard_normal((1, 8))

    def score(m: int, n: int) -> float:
        rq = rope_rotate(Tensor(q), offset=m).data
        rk = rope_rotate(Tensor(k), offset=n).data
        return float(np.sum(rq * rk))

    assert score(5, 2) == pytest.approx(score(13, 10))
    assert score(0, 7) == pytest.approx(score(20, 27))


def _attention_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    d, kv = config.d_model, config.kv_heads * config.head_dim
    shapes = {
        'wq': (d, d),
        'bq': (d,),
        'wk': (d, kv),
        'bk': (kv,),
        'wv': (d, kv),
        'bv': (kv,),
        'wo': (d, d),
    }
    return {
        f'attn.{name}': Tensor(0.2 * rng.standard_normal(shape))
        for name, shape in shapes.items()
    }


def _repeat_heads(
    params: dict[str, Tensor], config: ModelConfig
) -> dict[str, Tensor]:
    """Expand key/value heads so every query head has its own copy."""
    dh, group = config.head_dim, config.group_size
    columns = np.concatenate(
        [
            np.arange(h // group * dh, (h // group + 1) * dh)
            for h in range(config.q_heads)
        ]
    )
    expanded = dict(params)
    for name in ('wk', 'wv', 'bk', 'bv'):
        key = f'attn.{name}'
        expanded[key] = Tensor(params[key].data[..., columns])
    return expanded


def test_grouped_attention_matches_full_multi_head(float64):
    gqa = ModelConfig.from_preset(
        'tiny', lookback=32, n_variates=1, n_covariates=0, dropout=0.0
    )
    mha = gqa.updated(kv_heads=gqa.q_heads)
    rng = make_generator(3, 'test')
    params = _attention_params(gqa, rng)
    tokens = Tensor(rng.standard_normal((2, 4, gqa.d_model)))

    grouped = grouped_attention(
        tokens, tokens, params, 'attn', gqa, ForwardContext()
    )
    repeated = _repeat_heads(params, gqa)
    full = grouped_attention(
        tokens, tokens, repeated, 'attn', mha, ForwardContext()
    )
    np.testing.assert_allclose(grouped.data, full.data, atol=1e-10)


def test_attention_rows_are_distributions(float64):
    config = ModelConfig.from_preset(
        'tiny', lookback=32, n_variates=1, n_covariates=0
    )
    rng = make_generator(4, 'test')
    params = _attention_params(config, rng)
    queries = Tensor(rng.standard_normal((3, 4, config.d_model)))
    keys = Tensor(rng.standard_normal((3, 6, config.d_model)))
    ctx = ForwardContext(record_attention=True)
    out = grouped_attention(queries, keys, params, 'attn', config, ctx)
    assert out.shape == (3, 4, config.d_model)
    weights = ctx.attention[0]
    assert weights.shape == (3, config.q_heads, 4, 6)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0)


def test_attention_ignores_key_value_order(float64):
    config = ModelConfig.from_preset(
        'tiny', lookback=32, n_variates=1, n_covariates=0
    )
    rng = make_generator(6, 'test')
    params = _attention_params(config, rng)
    queries = rng.standard_normal((2, 4, config.d_model))
    keys = rng.standard_normal((2, 6, config.d_model))

    def attend(q: np.ndarray, kv: np.ndarray) -> np.ndarray:
        out = grouped_attention(
            Tensor(q),
            Tensor(kv),
            params,
            'attn',
            config,
            ForwardContext(),
            rotate=False,
        )
        return out.data

    base = attend(queries, keys)
    kv_order, q_order = rng.permutation(6), rng.permutation(4)
    np.testing.assert_allclose(
        attend(queries, keys[:, kv_order]), base, atol=1e-10
    )
    np.testing.assert_allclose(
        attend(queries[:, q_order], keys), base[:, q_order], atol=1e-10
    )


def test_unpatching_is_local_to_each_token(float64):
    patch, n_tokens, width = 4, 3, 8
    rng = make_generator(7, 'test')
    kernel = Tensor(rng.standard_normal((width, width, patch)))
    tokens = rng.standard_normal((2, width, n_tokens))
    base = ops.transpose_conv1d(Tensor(tokens), kernel, patch).data
    for s in range(n_tokens):
        bumped = tokens.copy()
        bumped[..., s] += 1.0
        out = ops.transpose_conv1d(Tensor(bumped), kernel, patch).data
        changed = np.flatnonzero(np.any(out != base, axis=(0, 1)))
        assert changed.tolist() == list(range(s * patch, (s + 1) * patch))


def test_route_ties_split_evenly():
    scores, indices, gates = route(
        Tensor([[1.0]]), Tensor([[0.0, 0.0, 0.0, 0.0]]), top_k=2
    )
    assert indices.tolist() == [[0, 1]]
    np.testing.assert_allclose(gates.data, [[0.25, 0.25, 0.0, 0.0]])


def test_route_gates_are_unrenormalized_scores():
    scores, indices, gates = route(
        Tensor([[1.0]]), Tensor([[2.0, 1.0, 0.0, -1.0]]), top_k=2
    )
    np.testing.assert_allclose(
        gates.data, [[0.6439, 0.2369, 0.0, 0.0]], atol=1e-4
    )
    selected = gates.data[0, indices[0]]
    np.testing.assert_array_equal(selected, scores.data[0, indices[0]])
    assert gates.data.sum() < 1.0


def test_route_with_all_experts_keeps_full_softmax():
    scores, _, gates = route(
        Tensor([[1.0]]), Tensor([[2.0, 1.0, 0.0, -1.0]]), top_k=4
    )
    np.testing.assert_array_equal(gates.data, scores.data)


def test_route_selects_exactly_k_per_token(float64):
    rng = make_generator(5, 'test')
    tokens = Tensor(rng.standard_normal((1000, 16)))
    _, indices, gates = route(tokens, Tensor(rng.standard_normal((16, 8))), 2)
    assert indices.shape == (1000, 2)
    assert np.all((gates.data > 0).sum(axis=-1) == 2)


def test_fourier_layer_layout():
    d_in, d_out = 6, 8
    params = {
        'fc.w_p': Tensor(np.zeros((d_in, d_out // 4))),
        'fc.w_pbar': Tensor(np.zeros((d_in, d_out // 2))),
        'fc.b_pbar': Tensor(np.zeros(d_out // 2)),
    }
    y = fourier_layer(Tensor(np.ones((3, d_in))), params, 'fc').data
    assert y.shape == (3, d_out)
    np.testing.assert_allclose(y[:, :2], 1.0)
    np.testing.assert_allclose(y[:, 2:], 0.0)


def test_fourier_layer_is_periodic_in_its_projection():
    params = {
        'fc.w_p': Tensor([[1.0]]),
        'fc.w_pbar': Tensor([[0.0, 0.0]]),
        'fc.b_pbar': Tensor([0.0, 0.0]),
    }
    a = fourier_layer(Tensor([[0.3]]), params, 'fc').data
    b = fourier_layer(Tensor([[0.3 + 2 * math.pi]]), params, 'fc').data
    np.testing.assert_allclose(a, b, atol=1e-5)
