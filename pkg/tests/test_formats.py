from facespace.api.synthdata import generate_world
from facespace.autodiff import Tensor
from facespace.errors import CheckpointError, ContractError, PathError
from facespace.objects import WorldSpec
from facespace.utils.checkpoint import (
    decode_records,
    encode_records,
    read_records,
    write_records,
)
from facespace.utils.formats import (
    load_basis,
    load_dataset,
    save_basis,
    save_dataset,
    write_table,
)
from facespace.utils.optim import Adam, Sgd, make_optimizer

import numpy as np
import pandas as pd
import pytest

DIGEST = bytes(range(32))


def test_basis_export(tmp_path):
    """The basis export keeps every bit of the matrix."""
    matrix = np.random.default_rng(0).normal(size=(5, 12))
    path = tmp_path / "basis.txt"
    save_basis(path, matrix)
    assert path.read_text().splitlines()[0] == "5 12"
    assert np.array_equal(load_basis(path), matrix)


def test_basis_export_checks_shape(tmp_path):
    """A header that disagrees with the rows is rejected."""
    path = tmp_path / "basis.txt"
    path.write_text("3 2\n1 2\n3 4\n")
    with pytest.raises(ContractError):
        load_basis(path)
    with pytest.raises(ContractError):
        save_basis(path, np.zeros(4))


def test_dataset_export(tmp_path):
    """An exported world reads back sample for sample."""
    samples = generate_world(
        WorldSpec(num_identities=3, frames_per_identity=2, dim_zid=2, dim_zm=3, m=6)
    )
    path = tmp_path / "world.csv"
    save_dataset(path, samples)
    loaded = load_dataset(path)
    assert len(loaded) == 6
    for a, b in zip(samples, loaded):
        assert a.identity_label == b.identity_label
        assert np.array_equal(a.observation, b.observation)
        assert np.array_equal(a.z_id, b.z_id)
        assert np.array_equal(a.z_m, b.z_m)


def test_dataset_import_rejects_other_files(tmp_path):
    """Files without the dataset header are refused."""
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ContractError):
        load_dataset(path)
    with pytest.raises(ContractError):
        save_dataset(path, [])
    with pytest.raises(PathError):
        load_dataset(tmp_path / "missing.csv")


def test_write_table(tmp_path):
    """Report rows become a CSV with the first row's columns."""
    rows = [{"level": "base", "value": 0.5}, {"level": "semantics", "value": 0.25}]
    frame = write_table(tmp_path / "t.csv", rows)
    assert frame.shape == (2, 2)
    assert pd.read_csv(tmp_path / "t.csv").equals(frame)
    with pytest.raises(PathError):
        write_table(tmp_path / "no" / "such" / "t.csv", rows)


def test_record_codec():
    """Records keep order, shape and value; re-encoding is byte identical."""
    records = {
        "basis.raw": np.arange(6.0).reshape(2, 3),
        "train/step": np.array(4.0),
        "rng/stream": np.array([0.0, 7.0, 4.0]),
    }
    blob = encode_records(DIGEST, records)
    assert blob[:4] == b"SDSP"
    digest, decoded = decode_records(blob)
    assert digest == DIGEST
    assert list(decoded) == list(records)
    for name, value in records.items():
        assert decoded[name].shape == value.shape
        assert np.array_equal(decoded[name], value)
    assert encode_records(digest, decoded) == blob


def test_record_codec_rejects_bad_input():
    """Wrong magic, version, digest size or a truncated record are errors."""
    blob = encode_records(DIGEST, {"x": np.ones(3)})
    with pytest.raises(CheckpointError):
        decode_records(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        decode_records(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
    with pytest.raises(CheckpointError):
        decode_records(blob[:-1])
    with pytest.raises(CheckpointError):
        decode_records(blob[:10])
    with pytest.raises(CheckpointError):
        encode_records(b"short", {})


def test_record_files(tmp_path):
    """Record files read back; unreadable paths raise PathError."""
    path = tmp_path / "r.ckpt"
    write_records(path, DIGEST, {"x": np.ones((2, 2))})
    digest, records = read_records(path)
    assert digest == DIGEST and np.array_equal(records["x"], np.ones((2, 2)))
    with pytest.raises(PathError):
        read_records(tmp_path / "missing.ckpt")
    with pytest.raises(PathError):
        write_records(tmp_path / "no" / "r.ckpt", DIGEST, {})


def test_adam_state_round_trip():
    """A second Adam loaded with the first one's state takes the same step."""
    grads = np.random.default_rng(1).normal(size=(3, 2, 2))

    def tensor():
        return Tensor(np.ones((2, 2)), requires_grad=True)

    a, b = tensor(), tensor()
    first = Adam({"w": a}, lr=0.1)
    for g in grads[:2]:
        a.grad = g.copy()
        first.step()
    b.data[...] = a.data
    second = Adam({"w": b}, lr=0.1)
    second.load_state_arrays(first.state_arrays())
    for opt, t in ((first, a), (second, b)):
        t.grad = grads[2].copy()
        opt.step()
    assert np.array_equal(a.data, b.data)
    assert first.state_arrays()["w/step"] == 3.0


def test_optimizer_state_contracts():
    """Stateless or mismatched optimizer state is rejected."""
    t = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(CheckpointError):
        Sgd({"w": t}, 0.1).load_state_arrays({"w/m": np.zeros(2)})
    with pytest.raises(CheckpointError):
        Adam({"w": t}).load_state_arrays({"w/m": np.zeros(2)})
    with pytest.raises(CheckpointError):
        Adam({"w": t}).load_state_arrays(
            {"w/m": np.zeros(3), "w/v": np.zeros(3), "w/step": np.array(1.0)}
        )
    assert isinstance(make_optimizer("sgd", {"w": t}, 0.1), Sgd)


def test_sgd_step():
    """SGD moves against the gradient; parameters without one stay put."""
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    still = Tensor(np.array([5.0]), requires_grad=True)
    w.grad = np.array([0.5, -1.0])
    Sgd({"w": w, "still": still}, 0.1).step()
    assert np.allclose(w.data, [0.95, 2.1])
    assert still.data.tolist() == [5.0]
