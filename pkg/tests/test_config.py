import dataclasses

import pytest

from gmmmap.core import CameraIntrinsics
from gmmmap.config import ConfigError, RunConfig
from gmmmap.free_space import FgbgMode
from gmmmap.segmentation import SlopeMode


def test_defaults_map_to_module_params():
    cfg = RunConfig()
    bp = cfg.build_params()
    assert bp.fgbg_mode == FgbgMode.DIRECT and bp.stride == 16 and bp.tau_fuse == 0.4
    assert cfg.seg_params().slope_mode == SlopeMode.DELAYED4
    assert cfg.quant_config().enabled is False
    intr = cfg.intrinsics()
    assert intr == CameraIntrinsics.default(160, 120)
    assert RunConfig(fx=99.0).intrinsics().fx == 99.0


def test_text_round_trip():
    cfg = RunConfig(quant=True, batch_size=4, fgbg_mode="baseline", fx=100.0)
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_file_format(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\n\nquant = yes   # inline\nbatch_size=8\nslope_mode=exact\n")
    cfg = RunConfig.load(p)
    assert cfg.quant is True and cfg.batch_size == 8 and cfg.slope_mode == "exact"


@pytest.mark.parametrize("text", ["nope=1\n", "batch_size=abc\n", "quant=maybe\n",
                                  "fgbg_mode=fast\n", "tau_fuse=1.5\n", "batch_size=0\n",
                                  "just a line\n"])
def test_rejects(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_overrides_layer():
    base = RunConfig.from_text("batch_size=8\nseed=3\n")
    cfg = RunConfig.from_mapping({"seed": "9"}, base)
    assert cfg.batch_size == 8 and cfg.seed == 9


def test_every_key_settable():
    for f in dataclasses.fields(RunConfig):
        v = getattr(RunConfig(), f.name)
        assert RunConfig.from_mapping({f.name: str(v).lower() if isinstance(v, bool) else str(v)}) == RunConfig()
