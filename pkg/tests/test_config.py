import copy

import pytest

from safeagc.config import ConfigError, _load_yaml, load_config


def raw():
    return copy.deepcopy(_load_yaml("default"))


def test_default_loads(cfg):
    assert cfg.model.n == 15
    assert cfg.safety.F == 0.4 and cfg.safety.alpha == (1.0, 1.0) and cfg.safety.ts_pred == 0.5
    assert cfg.reward.r1 == (2.0, 2.0) and cfg.reward.r6 == 1e5
    assert cfg.training.episodes >= 2000


def test_mode_override():
    assert load_config("default", mode="rectify").safety.mode == "rectify"
    assert load_config("default", mode="unfiltered").safety.mode == "off"


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["plant"]["areas"][0]["generators"][0].update(droop=-1), "plant.areas[0].generators[0]"),
        (lambda d: d["plant"]["areas"][1]["generators"][1].update(colour="red"), "plant.areas[1].generators[1].colour"),
        (lambda d: d["safety"].update(F=0), "safety"),
        (lambda d: d["safety"].update(alpha=[1.0]), "safety.alpha"),
        (lambda d: d["reward"].update(r3=-2), "reward"),
        (lambda d: d.pop("reward"), "reward"),
        (lambda d: d["agent"].update(gamma=1.5), "agent"),
        (lambda d: d["training"].update(episodes=0), "training"),
        (lambda d: d["plant"]["ties"][0].update(to_area=5), "plant.ties"),
    ],
)
def test_errors_name_the_field(mutate, field):
    d = raw()
    mutate(d)
    with pytest.raises(ConfigError) as info:
        load_config(d)
    assert info.value.field == field


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("plant: [unclosed\n")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.field == "config"
