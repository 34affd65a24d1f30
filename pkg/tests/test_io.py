import json
import os
import struct

import numpy as np
import pytest

from evigrid.dataset import read_dataset, write_dataset
from evigrid.errors import FormatError, IoError
from evigrid.grid import DynamicMask, Eogm, GridConfig, Ogm, Pose2, Rgm, Sgm
from evigrid.io import (
    KIND_BINARY,
    KIND_CLASS,
    KIND_MASS,
    KIND_PROB,
    decode_cloud,
    decode_grid,
    decode_model,
    encode_cloud,
    encode_grid,
    encode_model,
    read_cloud,
    read_grid,
    read_grid_file,
    read_model,
    write_grid,
)
from evigrid.representation import PointCloud
from evigrid.segmentation import SegModel, n_weights
from evigrid.sim import Agent, Sensor, Trajectory, Wall, WorldSpec, simulate, Dataset

CFG = GridConfig(7, 5, 0.25)
POSE = Pose2(1.5, -2.25, 0.75)


def grids(rng):
    o = (rng.random(CFG.shape) * 0.5).astype(np.float32).astype(float)
    f = (rng.random(CFG.shape) * 0.5).astype(np.float32).astype(float)
    return [
        Sgm(CFG, rng.integers(0, 3, CFG.shape), POSE, 1.25),
        DynamicMask(CFG, rng.integers(0, 2, CFG.shape), POSE, 1.25),
        Eogm(CFG, np.stack([o, f], axis=-1), POSE, 1.25),
        Ogm(CFG, rng.random(CFG.shape).astype(np.float32).astype(float), POSE, 1.25),
    ]


# --- EGRD -------------------------------------------------------------------------------

def test_egrd_header_layout(rng):
    data = encode_grid(grids(rng)[0])
    assert data[:4] == b"EGRD" and data[4] == 1 and data[5] == KIND_CLASS
    w, h, res, ts, x, y, hd = struct.unpack_from("<IIfd3d", data, 6)
    assert (w, h, res, ts, (x, y, hd)) == (7, 5, 0.25, 1.25, POSE.as_tuple())
    assert len(data) == 6 + 4 + 4 + 4 + 8 + 24 + 35


def test_egrd_kinds_and_sizes(rng):
    kinds = [KIND_CLASS, KIND_BINARY, KIND_MASS, KIND_PROB]
    sizes = [35, 35, 35 * 8, 35 * 4]
    for g, kind, size in zip(grids(rng), kinds, sizes):
        data = encode_grid(g)
        assert data[5] == kind and len(data) == 50 + size


def test_egrd_roundtrip(rng, tmp_path):
    for i, g in enumerate(grids(rng)):
        p = tmp_path / f"g{i}.egrd"
        write_grid(p, g)
        back = read_grid(p)
        assert type(back) is type(g)
        assert back.config == g.config and back.pose == g.pose and back.timestamp == g.timestamp
        assert np.array_equal(back.cells, g.cells)
        assert encode_grid(back) == encode_grid(g)


def test_egrd_rgm_as_binary(rng, tmp_path):
    r = Rgm(CFG, rng.integers(0, 2, CFG.shape))
    write_grid(tmp_path / "r.egrd", r)
    back = read_grid(tmp_path / "r.egrd", binary_as=Rgm)
    assert isinstance(back, Rgm) and np.array_equal(back.cells, r.cells)


def test_egrd_resolution_decimal():
    g = Sgm.occluded(GridConfig(4, 4, 0.33))
    assert decode_grid(encode_grid(g)).config.resolution == 0.33


def test_egrd_mass_closure_after_f32(rng):
    o = rng.random(CFG.shape)
    cells = np.stack([o, 1.0 - o], axis=-1)
    back = decode_grid(encode_grid(Eogm(CFG, cells)))
    assert np.all(back.data[..., 0].astype(float) + back.data[..., 1].astype(float) <= 1.0)


def test_egrd_bad_magic(rng):
    data = bytearray(encode_grid(grids(rng)[0]))
    data[0:4] = b"XGRD"
    with pytest.raises(FormatError) as exc:
        decode_grid(bytes(data))
    assert exc.value.offset == 0


def test_egrd_bad_version(rng):
    data = bytearray(encode_grid(grids(rng)[0]))
    data[4] = 2
    with pytest.raises(FormatError) as exc:
        decode_grid(bytes(data))
    assert exc.value.offset == 4


def test_egrd_unknown_kind(rng):
    data = bytearray(encode_grid(grids(rng)[0]))
    data[5] = 9
    with pytest.raises(FormatError):
        decode_grid(bytes(data))


def test_egrd_truncated(rng):
    data = encode_grid(grids(rng)[2])
    with pytest.raises(FormatError) as exc:
        decode_grid(data[:-3])
    assert exc.value.offset == len(data) - 3
    assert str(len(data) - 3) in str(exc.value)


def test_egrd_bad_cell_code(rng):
    data = bytearray(encode_grid(grids(rng)[0]))
    data[50 + 4] = 7
    with pytest.raises(FormatError) as exc:
        decode_grid(bytes(data))
    assert exc.value.offset == 54


def test_egrd_trailing_bytes(rng):
    with pytest.raises(FormatError):
        decode_grid(encode_grid(grids(rng)[0]) + b"\0")


def test_read_grid_file_exposes_kind(rng, tmp_path):
    write_grid(tmp_path / "m.egrd", grids(rng)[2])
    assert read_grid_file(tmp_path / "m.egrd").kind == KIND_MASS


# --- EPCD --------------------------------------------------------------------------------

def cloud(rng, n=17):
    return PointCloud(rng.normal(size=(n, 3)).astype(np.float32).astype(float), 0.7, POSE)


def test_epcd_layout_and_roundtrip(rng, tmp_path):
    c = cloud(rng)
    data = encode_cloud(c)
    assert data[:4] == b"EPCD" and data[4] == 1
    count, ts = struct.unpack_from("<Id", data, 5)
    assert (count, ts) == (17, 0.7)
    assert len(data) == 4 + 1 + 4 + 8 + 24 + 17 * 12
    back = decode_cloud(data)
    assert back == c


def test_epcd_empty():
    c = PointCloud(np.zeros((0, 3)), 0.0, Pose2())
    assert len(decode_cloud(encode_cloud(c))) == 0


def test_epcd_truncated(rng):
    data = encode_cloud(cloud(rng))
    with pytest.raises(FormatError) as exc:
        decode_cloud(data[:-5])
    assert exc.value.offset == len(data) - 5
    with pytest.raises(FormatError) as exc:
        decode_cloud(data[:10])
    assert exc.value.offset == 10


# --- ESEG --------------------------------------------------------------------------------

def test_eseg_roundtrip(rng, tmp_path):
    m = SegModel(2, rng.normal(size=n_weights(2)))
    data = encode_model(m)
    assert data[:4] == b"ESEG" and data[4] == 1
    assert struct.unpack_from("<II", data, 5) == (2, n_weights(2))
    assert len(data) == 13 + 8 * n_weights(2)
    from evigrid.io import write_model

    write_model(tmp_path / "m.eseg", m)
    assert read_model(tmp_path / "m.eseg") == m


def test_eseg_count_mismatch(rng):
    data = bytearray(encode_model(SegModel(1, np.zeros(n_weights(1)))))
    struct.pack_into("<I", data, 9, 5)
    with pytest.raises(FormatError):
        decode_model(bytes(data))


# --- filesystem errors ---------------------------------------------------------------------

def test_missing_file_is_format_error(tmp_path):
    with pytest.raises(FormatError) as exc:
        read_cloud(tmp_path / "nope.epcd")
    assert "nope.epcd" in str(exc.value)


def test_unwritable_path_is_io_error(rng, tmp_path):
    with pytest.raises(IoError):
        write_grid(tmp_path / "no" / "such" / "dir.egrd", grids(rng)[0])


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores file permissions")
def test_unreadable_file_is_io_error(rng, tmp_path):
    p = tmp_path / "g.egrd"
    write_grid(p, grids(rng)[0])
    p.chmod(0)
    with pytest.raises(IoError):
        read_grid(p)


def test_directory_as_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        read_grid(tmp_path)


# --- datasets --------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_dataset():
    from evigrid.representation import RepresentationConfig

    cfg = RepresentationConfig(grid=GridConfig(48, 48, 0.33))
    spec = WorldSpec(walls=(Wall((-8.0, 6.0), (8.0, 6.0)),),
                     agents=(Agent((2.0, 1.0), Trajectory(((-5.0, 3.0), (5.0, 3.0)), ((0.0, 3.0),))),),
                     sensor=Sensor(beams=360), seed=4)
    seqs = [simulate(spec, 3, 0.1, cfg), simulate(spec, 2, 0.1, cfg)]
    return Dataset(seqs, cfg, seed=4, spec_hash=spec.digest(), names=["a", "b"])


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_dataset_roundtrip_byte_exact(small_dataset, tmp_path):
    write_dataset(small_dataset, tmp_path / "a")
    back = read_dataset(tmp_path / "a")
    assert back == small_dataset
    write_dataset(back, tmp_path / "b")
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_dataset_manifest_schema(small_dataset, tmp_path):
    write_dataset(small_dataset, tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert {"version", "seed", "grid", "frame_dt", "sequences"} <= set(doc)
    assert doc["grid"] == {"width": 48, "height": 48, "resolution": 0.33}
    assert [len(s["frames"]) for s in doc["sequences"]] == [3, 2]


def test_dataset_missing_frame_file(small_dataset, tmp_path):
    write_dataset(small_dataset, tmp_path)
    (tmp_path / "a" / "cloud_001.epcd").unlink()
    with pytest.raises(FormatError) as exc:
        read_dataset(tmp_path)
    assert "a/cloud_001.epcd" in str(exc.value)


def test_dataset_truncated_cloud(small_dataset, tmp_path):
    write_dataset(small_dataset, tmp_path)
    p = tmp_path / "b" / "cloud_000.epcd"
    data = p.read_bytes()
    p.write_bytes(data[:-7])
    with pytest.raises(FormatError) as exc:
        read_dataset(tmp_path)
    assert exc.value.offset == len(data) - 7


def test_dataset_bad_manifest_json(tmp_path):
    (tmp_path / "manifest.json").write_text('{"version": 1,\n  "sequences": [}')
    with pytest.raises(FormatError) as exc:
        read_dataset(tmp_path)
    assert "line 2" in str(exc.value)


def test_dataset_missing_manifest(tmp_path):
    with pytest.raises(FormatError):
        read_dataset(tmp_path)
