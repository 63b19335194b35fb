from pathlib import Path

import pytest

from mmforge.backends.types import ConditioningMode, StageKind
from mmforge.config import OUTPUT_ROOT_ENV, PipelineConfig, config_from_mapping, load_config
from mmforge.errors import ConfigInvalid

FULL = """
output_root = "out"
annotations = "ann/instances.json"
conditioning_mode = "text_only"
num_frames = 8
fps = 4
seed = 11
audio_enabled = true
max_workers = 2

[endpoints]
base_url = "http://models:8000"
max_retries = 5

[endpoints.video]
timeout = 900
base_url = "http://gpu:9000/"
"""


def write(tmp_path, text, name="mmforge.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_full_config(tmp_path):
    cfg = load_config(write(tmp_path, FULL), env={})
    assert cfg.output_root == tmp_path / "out"
    assert cfg.annotations == tmp_path / "ann" / "instances.json"
    assert cfg.conditioning_mode is ConditioningMode.TEXT_ONLY
    assert (cfg.num_frames, cfg.fps, cfg.seed, cfg.max_workers) == (8, 4, 11, 2)
    assert cfg.audio_enabled
    assert set(cfg.endpoints) == set(StageKind)
    cap = cfg.endpoints[StageKind.CAPTION]
    assert (cap.base_url, cap.max_retries, cap.timeout) == ("http://models:8000", 5, 60.0)
    vid = cfg.endpoints[StageKind.VIDEO]
    assert (vid.timeout, vid.max_retries) == (900, 5)
    assert vid.url == "http://gpu:9000/v1/video"
    cfg.validate()


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.num_frames, cfg.fps, cfg.max_workers, cfg.seed) == (16, 8, 4, 0)
    assert cfg.conditioning_mode is ConditioningMode.BOTH
    assert not cfg.audio_enabled


def test_absolute_paths_kept(tmp_path):
    cfg = load_config(write(tmp_path, 'output_root = "/abs/out"\n'), env={})
    assert cfg.output_root == Path("/abs/out")


def test_env_overrides_output_root(tmp_path):
    cfg = load_config(write(tmp_path, 'output_root = "out"\n'), env={OUTPUT_ROOT_ENV: "/elsewhere"})
    assert cfg.output_root == Path("/elsewhere")


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    'conditioning_mode = "telepathy"\n',
    "[endpoints]\nbase_url = 'http://x'\nretries = 2\n",
    "[endpoints.teleport]\nbase_url = 'http://x'\n",
    "[endpoints.video]\ntimeout = 5\n",
    "[endpoints]\nbase_url = 'http://x'\ntimeout = -1\n",
    "not toml at all [",
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigInvalid):
        load_config(write(tmp_path, text), env={})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "absent.toml")


@pytest.mark.parametrize("changes", [
    {"max_workers": 0}, {"num_frames": 0}, {"fps": 0}, {"frame_width": 0}, {"num_variants": 2},
])
def test_validate_rejects(changes):
    with pytest.raises(ConfigInvalid):
        PipelineConfig(mock=True, **changes).validate()


def test_validate_requires_endpoints_unless_mock():
    with pytest.raises(ConfigInvalid, match="no endpoint"):
        PipelineConfig().validate()
    PipelineConfig(mock=True).validate()
    partial = config_from_mapping({"endpoints": {"caption": {"base_url": "http://x"}}})
    assert set(partial.endpoints) == {StageKind.CAPTION}
    with pytest.raises(ConfigInvalid):
        partial.validate()


def test_audio_adds_required_stage():
    assert StageKind.AUDIO not in PipelineConfig().required_stages()
    assert StageKind.AUDIO in PipelineConfig(audio_enabled=True).required_stages()


def test_with_overrides_skips_none():
    cfg = PipelineConfig(seed=3).with_overrides(seed=None, max_workers=9)
    assert (cfg.seed, cfg.max_workers) == (3, 9)
