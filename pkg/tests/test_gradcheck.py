import numpy as np
import pytest

from core.config import gradcheck_config
from core.exceptions import ContractError
from core.gradcheck import full_model_gradcheck, randomize_zero_weights, relative_error
from core.parameters import ParameterStore


def test_full_loss_gradients_match_central_differences():
    report = full_model_gradcheck(gradcheck_config(), seed=0)
    assert report.passed, [(c.name, c.max_error) for c in report.failures]
    assert report.max_error <= 1e-4
    checked = {c.name for c in report.checks if not c.skipped}
    assert any(name.startswith("mcp.") for name in checked)
    assert any(".t_msa." in name for name in checked)
    assert "classifier.weight" in checked
    assert all(name.startswith(("backbone.", "landmark_embed.")) for name in report.skipped)


def test_needs_double_precision():
    with pytest.raises(ContractError):
        full_model_gradcheck(gradcheck_config().with_overrides({"dtype": "float32"}))


def test_randomize_only_touches_zero_matrices(rng):
    store = ParameterStore()
    store.add("zero_matrix", np.zeros((2, 3)))
    store.add("zero_bias", np.zeros(3))
    store.add("full", np.ones((2, 2)))
    assert randomize_zero_weights(store, rng) == ["zero_matrix"]
    assert np.any(store["zero_matrix"].data)
    assert not np.any(store["zero_bias"].data)


def test_relative_error_scale():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
