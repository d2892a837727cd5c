import json
from pathlib import Path

import pytest

from core.config import RunConfig, gradcheck_config
from core.exceptions import ConfigurationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_defaults_validate():
    config = RunConfig().validate()
    assert config.num_classes == 6
    assert config.backbone.num_patches == 16
    assert config.optim.lr == pytest.approx(1e-3)


def test_desk_file_matches_defaults():
    raw = json.loads((CONFIGS / "desk.json").read_text(encoding="utf-8"))
    loaded = RunConfig.from_dict(raw)
    assert loaded.diff(RunConfig()) == {"mcp.bottleneck_dim": (8, None)}
    assert loaded.mcp.resolved_bottleneck(32) == RunConfig().mcp.resolved_bottleneck(32)


def test_gradcheck_file_matches_builder():
    raw = json.loads((CONFIGS / "gradcheck.json").read_text(encoding="utf-8"))
    assert RunConfig.from_dict(raw).validate() == gradcheck_config()


def test_json_round_trip():
    config = RunConfig().with_overrides({"tma.adapter": "vanilla", "optim.batch_size": 16})
    assert RunConfig.from_dict(json.loads(config.to_json())) == config
    assert config.optim.lr == pytest.approx(2e-3)


def test_overrides_reject_unknown_keys():
    with pytest.raises(ConfigurationError, match="Unknown config key"):
        RunConfig().with_overrides({"optim.momentum": 0.9})
    with pytest.raises(ConfigurationError, match="Unknown config section"):
        RunConfig().with_overrides({"seed.value": 1})


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigurationError, match="unknown keys"):
        RunConfig.from_dict({"backbone": {"depth": 3}})


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"backbone.heads": 3}, "not divisible by heads"),
        ({"backbone.patch_size": 5}, "not divisible by patch_size"),
        ({"mcp.fusion": "film"}, "mcp.fusion"),
        ({"tma.gamma": 0.3}, "gamma*D"),
        ({"data.frames": 32}, "frames <= sequence_length"),
        ({"data.image_size": 16}, "do not match backbone"),
        ({"sdl.label_smoothing": 1.0}, "label_smoothing"),
        ({"mode": "video"}, "mode must be one of"),
    ],
)
def test_invalid_values_are_reported(overrides, fragment):
    with pytest.raises(ConfigurationError) as info:
        RunConfig().with_overrides(overrides).validate()
    assert fragment in str(info.value)


def test_diff_lists_changed_keys():
    a = RunConfig()
    b = a.with_overrides({"seed": 4, "data.occlusion": True})
    assert a.diff(b) == {"data.occlusion": (False, True), "seed": (0, 4)}
