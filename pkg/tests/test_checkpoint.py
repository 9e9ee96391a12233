import dataclasses

import pytest
import torch

from robustdense import RobustDenseNet, ValidationError, load_checkpoint, save_checkpoint
from robustdense.checkpoint import checkpoint_digest, parameter_names, read_header


@pytest.fixture
def model(tiny_cfg):
    torch.manual_seed(0)
    return RobustDenseNet(tiny_cfg)


def test_roundtrip_is_bit_exact(model, tmp_path):
    path = save_checkpoint(model, tmp_path / "m.rdn", extra={"step": 3})
    loaded, header = load_checkpoint(path)
    for (name, a), (name2, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert name == name2
        assert torch.equal(a, b), name
    assert header["extra"] == {"step": 3}


def test_save_load_save_produces_identical_bytes(model, tmp_path):
    p1 = save_checkpoint(model, tmp_path / "a.rdn")
    loaded, _ = load_checkpoint(p1)
    p2 = save_checkpoint(loaded, tmp_path / "b.rdn")
    assert p1.read_bytes() == p2.read_bytes()


def test_header_carries_config_and_manifest(model, tmp_path):
    path = save_checkpoint(model, tmp_path / "m.rdn")
    header = read_header(path)
    assert header["format_version"] == 1
    assert header["model_config"]["channel_schedule"] == [4, 8, 8, 8, 16, 16]
    state = model.state_dict()
    offsets = set()
    for entry in header["params"]:
        assert entry["dtype"] == "float32"
        assert tuple(entry["shape"]) == tuple(state[entry["name"]].shape)
        assert entry["offset"] not in offsets
        offsets.add(entry["offset"])
    assert len(header["params"]) == len(state)


def test_loaded_model_reproduces_outputs(model, tmp_path):
    model.eval()
    path = save_checkpoint(model, tmp_path / "m.rdn")
    loaded, _ = load_checkpoint(path)
    loaded.eval()
    torch.manual_seed(1)
    spectral, dsm = torch.randn(1, 4, 32, 32), torch.randn(1, 1, 32, 32)
    assert torch.equal(model(spectral, dsm), loaded(spectral, dsm))


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.rdn"
    path.write_bytes(b"NOTACKPT" + b"\0" * 64)
    with pytest.raises(ValidationError, match="magic"):
        load_checkpoint(path)


def test_ablation_manifests_differ_only_by_ablated_blocks(tiny_cfg, tmp_path):
    torch.manual_seed(0)
    full = save_checkpoint(RobustDenseNet(tiny_cfg), tmp_path / "full.rdn")
    torch.manual_seed(0)
    no_semix_cfg = dataclasses.replace(tiny_cfg, use_semix=False)
    ablated = save_checkpoint(RobustDenseNet(no_semix_cfg), tmp_path / "nosemix.rdn")
    full_names = set(parameter_names(full))
    ablated_names = set(parameter_names(ablated))
    assert ablated_names < full_names
    assert all(n.startswith(("semix.", "dsm_branch.")) for n in full_names - ablated_names)


def test_digest_is_stable(model, tmp_path):
    path = save_checkpoint(model, tmp_path / "m.rdn")
    assert checkpoint_digest(path) == checkpoint_digest(path)
    assert len(checkpoint_digest(path)) == 16
