import numpy as np
import pytest

from core.exceptions import DimensionError
from core.parameters import ParameterStore
from core.tensor import DiffTensor
from modules.prompts.cap import ConcatProjectFusion, NoFusion
from modules.prompts.mcp import (
    McpState,
    MultiViewPrompter,
    fovea_attention,
    generate_prompts,
    grid_to_tokens,
    tokens_to_grid,
)

from conftest import tiny_config


@pytest.fixture
def prompter(rng):
    store = ParameterStore()
    block = MultiViewPrompter(0, tiny_config())
    block.init_params(store, rng)
    return block, store


def test_grid_round_trip_is_row_major():
    tokens = np.arange(8.0).reshape(4, 2)
    grid = tokens_to_grid(DiffTensor(tokens)).data
    assert grid.shape == (2, 2, 2)
    assert grid[0, 0, 1] == tokens[1, 0]
    assert grid[1, 1, 0] == tokens[2, 1]
    np.testing.assert_array_equal(grid_to_tokens(DiffTensor(grid)).data, tokens)


def test_non_square_token_count():
    with pytest.raises(DimensionError):
        tokens_to_grid(DiffTensor(np.zeros((3, 2))))


def test_fovea_map_sums_to_lambda(rng):
    mh = DiffTensor(rng.standard_normal((2, 3, 4, 4)))
    weights = fovea_attention(mh, DiffTensor(np.array(2.5))).data
    np.testing.assert_allclose(weights.sum(axis=(-2, -1)), 2.5)


def test_fresh_prompter_emits_zero(prompter, rng):
    block, store = prompter
    tokens = DiffTensor(rng.standard_normal((2, 3, 4, 8)))
    landmarks = DiffTensor(rng.standard_normal((2, 3, 4, 8)))
    prompts = block.prompts(store, tokens, landmarks)
    assert prompts.shape == (2, 3, 4, 8)
    assert np.all(prompts.data == 0.0)


def test_prompt_matches_closed_form(prompter, rng):
    _, store = prompter
    state = McpState.from_store(store, "mcp.0")
    state.g3_weight.data[...] = rng.standard_normal(state.g3_weight.shape)
    h = rng.standard_normal((4, 8))
    a = rng.standard_normal((4, 8))
    out = generate_prompts(DiffTensor(h), DiffTensor(a), state).data

    mh = state.g1_weight.data @ h.T + state.g1_bias.data[:, None]
    ma = state.g2_weight.data @ a.T + state.g2_bias.data[:, None]
    soft = np.exp(mh - mh.max(axis=1, keepdims=True))
    soft /= soft.sum(axis=1, keepdims=True)
    fused = mh * state.lam.data * soft + ma
    expected = (state.g3_weight.data @ fused + state.g3_bias.data[:, None]).T
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_view_shape_mismatch(prompter, rng):
    block, store = prompter
    with pytest.raises(DimensionError):
        block.prompts(store, DiffTensor(np.zeros((4, 8))), DiffTensor(np.zeros((9, 8))))


def test_parameter_names(prompter):
    _, store = prompter
    assert store.names("mcp.0") == [
        "mcp.0.g1.weight", "mcp.0.g1.bias", "mcp.0.g2.weight", "mcp.0.g2.bias",
        "mcp.0.g3.weight", "mcp.0.g3.bias", "mcp.0.lam",
    ]
    assert store["mcp.0.lam"].shape == ()


def test_no_fusion_contributes_nothing():
    block = NoFusion(1, tiny_config())
    assert block.prompts(ParameterStore(), DiffTensor(np.zeros((4, 8))), DiffTensor(np.zeros((4, 8)))) is None
    assert not block.uses_landmarks


def test_concat_project_starts_at_zero(rng):
    store = ParameterStore()
    block = ConcatProjectFusion(0, tiny_config())
    block.init_params(store, rng)
    out = block.prompts(store, DiffTensor(rng.standard_normal((3, 4, 8))), DiffTensor(rng.standard_normal((3, 4, 8))))
    assert out.shape == (3, 4, 8)
    assert np.all(out.data == 0.0)
