import numpy as np
import pytest

from pvcodec import codec, pcio, samples
from pvcodec.errors import FormatError
from .conftest import random_cloud


def test_single_point_cloud_dump(tmp_path):
    pc = pcio.PointCloud([[0, 0, 0]], 1)
    path = tmp_path / "s.pvs"
    count = samples.dump_samples(path, pc, 1, k=4)
    assert count == 8
    meta, recs = samples.read_samples(path)
    assert meta == {"precision": 1, "depth": 1, "k": 4, "count": 8}
    # first sample: nothing coded yet, so the whole in-bounds window is unknown
    assert set(np.unique(recs["vox"][0])) <= {-1, 0}
    # labels follow the Morton stream of the single occupied child
    assert recs["label"].tolist() == [1, 0, 0, 0, 0, 0, 0, 0]
    # later samples see the first child's coded state (+1)
    assert (recs["vox"][1:] == 1).any()


def test_sample_count_equals_symbol_count(tmp_path):
    rng = np.random.default_rng(101)
    pc = random_cloud(rng, max_points=150, max_precision=5)
    _, report = codec.encode(pc, pc.precision, __import__("pvcodec").UniformModel())
    count = samples.dump_samples(tmp_path / "s.pvs", pc, pc.precision, k=8)
    assert count == report.symbol_count


def test_dump_matches_replay(tmp_path):
    rng = np.random.default_rng(102)
    pc = random_cloud(rng, max_points=80, max_precision=4)
    path = tmp_path / "s.pvs"
    samples.dump_samples(path, pc, pc.precision, k=4)
    _, recs = samples.read_samples(path)
    for rec, (ctx, bit) in zip(recs, codec.replay_contexts(pc, pc.precision, k=4)):
        np.testing.assert_array_equal(rec["vox"], ctx.vox.flat())
        np.testing.assert_array_equal(rec["pc"], ctx.pc.neighbors)
        np.testing.assert_array_equal(rec["coord"], ctx.coord.values)
        assert rec["label"] == bit


def test_reload_equals_dump_bytes(tmp_path):
    rng = np.random.default_rng(103)
    pc = random_cloud(rng, max_points=60, max_precision=4)
    p1, p2 = tmp_path / "a.pvs", tmp_path / "b.pvs"
    samples.dump_samples(p1, pc, pc.precision, k=4)
    samples.dump_samples(p2, pc, pc.precision, k=4)
    assert p1.read_bytes() == p2.read_bytes()


def test_corrupt_dump_rejected(tmp_path):
    p = tmp_path / "bad.pvs"
    p.write_bytes(b"PVSX" + b"\x00" * 30)
    with pytest.raises(FormatError, match="magic"):
        samples.read_samples(p)
    pc = pcio.PointCloud([[0, 0, 0]], 1)
    samples.dump_samples(p, pc, 1, k=2)
    data = p.read_bytes()
    p.write_bytes(data[:-3])
    with pytest.raises(FormatError, match="expected"):
        samples.read_samples(p)
