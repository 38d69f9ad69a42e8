import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypsam.config import DEFAULTS, RunConfig, parse_overrides
from hypsam.errors import ConfigInvalid


def test_published_defaults():
    cfg = RunConfig()
    assert cfg.train.epochs == 50 and cfg.train.batch == 8
    assert cfg.train.lr_backbone == 5e-3 and cfg.train.lr_head == 5e-2
    assert cfg.data.resolution == 384
    assert cfg.p2rnet.tau == 0.01 and cfg.p2rnet.theta == 0.85
    assert cfg.model.channels == 64 and cfg.model.kernels == 4
    cfg.validate()


def test_roundtrip_fixed_point():
    cfg = RunConfig({"train": {"epochs": 3, "lr_head": 0.1}, "p2rnet": {"strategy": "add", "use_points": True}})
    text = cfg.to_ini()
    again = RunConfig.from_ini(text)
    assert again == cfg
    assert again.to_ini() == text


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 500), st.integers(1, 64),
    st.floats(1e-6, 1.0, allow_nan=False), st.floats(0, 1, allow_nan=False), st.booleans(),
)
def test_roundtrip_property(epochs, batch, lr, tau, flag):
    cfg = RunConfig({"train": {"epochs": epochs, "batch": batch, "lr_backbone": lr},
                     "p2rnet": {"tau": tau, "use_mask": flag}})
    assert RunConfig.from_ini(cfg.to_ini()) == cfg


def test_overrides():
    ov = parse_overrides(["--p2rnet.tau", "0.02", "--train.epochs=3"])
    assert ov == {"p2rnet.tau": "0.02", "train.epochs": "3"}
    cfg = RunConfig()
    for k, v in ov.items():
        cfg.set(k, v)
    assert cfg.p2rnet.tau == 0.02 and cfg.train.epochs == 3
    assert cfg.explicit == {"p2rnet.tau", "train.epochs"}


@pytest.mark.parametrize("tokens", [["--nope.key", "1"], ["--train.epochs"], ["positional"]])
def test_bad_overrides(tokens):
    with pytest.raises(ConfigInvalid):
        parse_overrides(tokens)


@pytest.mark.parametrize("key,value", [
    ("train.epochs", "0"), ("train.batch", "0"), ("train.lr_head", "0"), ("p2rnet.tau", "2"),
    ("p2rnet.strategy", "crf"), ("model.backbone", "vgg"), ("data.resolution", "100"), ("eval.thresholds", "100"),
])
def test_validation(key, value):
    cfg = RunConfig()
    cfg.set(key, value)
    with pytest.raises(ConfigInvalid):
        cfg.validate()


def test_type_errors_and_sections(tmp_path):
    with pytest.raises(ConfigInvalid):
        RunConfig().set("train.epochs", "many")
    with pytest.raises(ConfigInvalid):
        RunConfig().set("p2rnet.use_mask", "maybe")
    with pytest.raises(ConfigInvalid):
        RunConfig.from_ini("[bogus]\nx = 1\n")
    with pytest.raises(ConfigInvalid):
        RunConfig.from_ini("no section header")
    with pytest.raises(ConfigInvalid):
        RunConfig.load(tmp_path / "missing.ini")


def test_hash_changes_with_values():
    a, b = RunConfig(), RunConfig({"train": {"seed": 1}})
    assert a.hash() != b.hash() and a.hash() == RunConfig().hash()
    assert set(DEFAULTS) == {"train", "model", "p2rnet", "data", "eval"}
