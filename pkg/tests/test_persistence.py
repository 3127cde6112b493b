import struct

import numpy as np
import pytest

from csen.config import ExperimentConfig
from csen.data import generate_synthetic
from csen.errors import PersistenceError
from csen.evaluation import fit_method
from csen.pipeline import FORMAT_VERSION, MAGIC, load_model, read_header, save_model

QUICK = dict(atoms_per_class=4, csen_epochs=1, mlp_epochs=1, mlp_hidden=(8, 4))


@pytest.fixture(scope="module")
def data():
    ds = generate_synthetic(3, 30, 16, 5.0, seed=21)
    idx = np.arange(ds.n_samples)
    return ds.subset(idx >= 10), ds.subset(idx < 10)


@pytest.mark.parametrize("method", ["csen1", "csen2", "reconnet", "mlp", "crc", "src", "knn"])
def test_round_trip_predictions_identical(tmp_path, data, method):
    train, probe = data
    art = fit_method(train, ExperimentConfig(method=method, **QUICK))
    path = tmp_path / f"{method}.mdl"
    save_model(art, path)
    back = load_model(path)
    p1, s1 = art.predict(probe.features)
    p2, s2 = back.predict(probe.features)
    assert np.array_equal(p1, p2)
    assert np.array_equal(s1, s2)
    assert back.class_names == art.class_names
    assert back.settings == art.settings


def test_csen1_file_carries_parameter_count(tmp_path, data):
    art = fit_method(data[0], ExperimentConfig(method="csen1", **QUICK))
    save_model(art, tmp_path / "m")
    header, tensors = read_header(tmp_path / "m")
    assert header["network"]["param_count"] == 11089
    total = sum(v.size for k, v in tensors.items() if k.startswith("network."))
    assert total == 11089


def test_container_prefix(tmp_path, data):
    save_model(fit_method(data[0], ExperimentConfig(method="crc")), tmp_path / "m")
    raw = (tmp_path / "m").read_bytes()
    assert raw[:8] == MAGIC
    assert struct.unpack_from("<I", raw, 8)[0] == FORMAT_VERSION


@pytest.fixture()
def saved(tmp_path, data):
    path = tmp_path / "m"
    save_model(fit_method(data[0], ExperimentConfig(method="knn")), path)
    return path, path.read_bytes()


def test_corrupted_magic(saved):
    path, raw = saved
    path.write_bytes(b"XSENMDL\0" + raw[8:])
    with pytest.raises(PersistenceError, match="magic"):
        load_model(path)


def test_wrong_version(saved):
    path, raw = saved
    path.write_bytes(raw[:8] + struct.pack("<I", 99) + raw[12:])
    with pytest.raises(PersistenceError, match="version"):
        load_model(path)


@pytest.mark.parametrize("cut", [4, 20, -8])
def test_truncation(saved, cut):
    path, raw = saved
    path.write_bytes(raw[:cut])
    with pytest.raises(PersistenceError):
        load_model(path)


def test_trailing_bytes(saved):
    path, raw = saved
    path.write_bytes(raw + b"\0" * 8)
    with pytest.raises(PersistenceError, match="trailing"):
        load_model(path)


def test_corrupt_header_json(saved):
    path, raw = saved
    hlen = struct.unpack_from("<I", raw, 12)[0]
    path.write_bytes(raw[:16] + b"{" * hlen + raw[16 + hlen:])
    with pytest.raises(PersistenceError, match="header"):
        load_model(path)
