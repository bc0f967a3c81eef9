import json

import numpy as np
import pytest

from costate.autodiff import file_digest, load_tensors, save_tensors
from costate.config import EncoderConfig
from costate.model import ModelParams
from costate.utils.exceptions import CheckpointError, ChecksumError


def test_parameters_survive_save_and_load(tmp_path):
    params = ModelParams.initialize(4, EncoderConfig(hidden_size=5, latent_size=3), seed=2)
    params.save(tmp_path / "ckpt.json")
    loaded = ModelParams.load(tmp_path / "ckpt.json")
    assert loaded.cfg == params.cfg
    for name, tensor in params.tensors.items():
        assert loaded.tensors[name].data.tobytes() == tensor.data.tobytes()


def test_file_hash_stable(tmp_path):
    cfg = EncoderConfig(hidden_size=3, latent_size=2)
    first = ModelParams.initialize(2, cfg, seed=9).save(tmp_path / "a.json")
    second = ModelParams.initialize(2, cfg, seed=9).save(tmp_path / "b.json")
    assert first == second
    assert file_digest(tmp_path / "a.json") == file_digest(tmp_path / "b.json")


def test_corrupted_file_fails_checksum(tmp_path):
    path = tmp_path / "ckpt.json"
    save_tensors(path, {"w": np.arange(4.0)}, kind="encoder")
    document = json.loads(path.read_text(encoding="utf-8"))
    document["tensors"]["w"]["data"][0] = 99.0
    path.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(ChecksumError):
        load_tensors(path)


def test_truncated_file_fails(tmp_path):
    path = tmp_path / "ckpt.json"
    save_tensors(path, {"w": np.arange(4.0)}, kind="encoder")
    path.write_text(path.read_text(encoding="utf-8")[:-10], encoding="utf-8")
    with pytest.raises(ChecksumError):
        load_tensors(path)


def test_shape_header_mismatch(tmp_path):
    path = tmp_path / "ckpt.json"
    save_tensors(path, {"w": np.zeros((2, 3))}, kind="encoder")
    with pytest.raises(CheckpointError, match="w"):
        load_tensors(path, expected_shapes={"w": (3, 2)})


def test_wrong_kind(tmp_path):
    path = tmp_path / "ckpt.json"
    save_tensors(path, {"w": np.zeros(2)}, kind="vae")
    with pytest.raises(CheckpointError):
        ModelParams.load(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_tensors(tmp_path / "absent.json")
