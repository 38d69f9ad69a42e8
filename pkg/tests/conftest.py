import pytest


def make_tiny_sam(seed: int = 0):
    """Randomly initialised SAM with a 128 px input and an 8x8 embedding grid."""
    import torch
    from transformers import SamConfig, SamModel
    from transformers.models.sam.configuration_sam import (
        SamMaskDecoderConfig,
        SamPromptEncoderConfig,
        SamVisionConfig,
    )

    torch.manual_seed(seed)
    vision = SamVisionConfig(hidden_size=32, num_hidden_layers=1, num_attention_heads=2, image_size=128,
                             patch_size=16, output_channels=32, mlp_dim=64, global_attn_indexes=[0],
                             window_size=0, num_pos_feats=16)
    prompt = SamPromptEncoderConfig(hidden_size=32, image_size=128, patch_size=16, mask_input_channels=4)
    decoder = SamMaskDecoderConfig(hidden_size=32, num_hidden_layers=2, num_attention_heads=2, mlp_dim=64,
                                   iou_head_hidden_dim=32)
    cfg = SamConfig(vision_config=vision.to_dict(), prompt_encoder_config=prompt.to_dict(),
                    mask_decoder_config=decoder.to_dict())
    return SamModel(cfg)


@pytest.fixture(scope="session")
def tiny_sam():
    pytest.importorskip("transformers")
    return make_tiny_sam()


# One summary line per acceptance criterion, whatever the outcome.
_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.skipped or rep.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.skipped:
        status = "SKIP"
        detail = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
        detail = detail.removeprefix("Skipped: ")
    else:
        status = "FAIL" if rep.failed else "PASS"
    results = item.config.stash[_CRITERIA]
    if results.get(number, ("PASS",))[0] != "FAIL":
        results[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, detail = results[number]
        terminalreporter.write_line(f"{status} criterion {number}: {title}" + (f" ({detail})" if detail else ""))
