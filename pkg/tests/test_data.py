import dataclasses
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cda import data
from cda.data import (
    LabeledDataset,
    PairedBatch,
    UnlabeledDataset,
    batches,
    colorize_shift,
    gen_blobs,
    gen_two_moons,
    load_idx,
    read_csv,
    write_csv,
    write_idx_images,
    write_idx_labels,
)


# ------------------------------------------------------------------ two moons


def test_two_moons_deterministic():
    a = gen_two_moons(200, 0.1, 0, (0, 0), seed=4)
    b = gen_two_moons(200, 0.1, 0, (0, 0), seed=4)
    assert a.X.tobytes() == b.X.tobytes() and a.Y.tobytes() == b.Y.tobytes()
    assert a.N == 2 and set(a.Y.tolist()) == {0, 1}


def test_two_moons_full_turn():
    a = gen_two_moons(300, 0.1, 0, seed=1)
    b = gen_two_moons(300, 0.1, 360, seed=1)
    np.testing.assert_allclose(a.X, b.X, atol=1e-9, rtol=0)


def test_two_moons_class0_on_unit_upper_arc():
    ds = gen_two_moons(1000, noise_sd=0.0, seed=3)
    upper = ds.X[ds.Y == 0]
    assert np.all(np.abs(np.hypot(upper[:, 0], upper[:, 1]) - 1.0) <= 1e-9)
    assert np.all(upper[:, 1] >= -1e-12)
    lower = ds.X[ds.Y == 1]
    assert np.all(np.abs(np.hypot(lower[:, 0] - 1, lower[:, 1] - 0.5) - 1.0) <= 1e-9)


def test_two_moons_rotation_and_translation():
    a = gen_two_moons(50, 0.0, 0, seed=2)
    b = gen_two_moons(50, 0.0, 90, (1.0, -2.0), seed=2)
    # A +90 degree rotation maps (x, y) to (-y, x).
    np.testing.assert_allclose(b.X, np.column_stack([-a.X[:, 1], a.X[:, 0]]) + [1.0, -2.0], atol=1e-12)


@pytest.mark.parametrize("kw", [{"n": 1}, {"n": 10, "noise_sd": -0.1}])
def test_two_moons_rejects_bad_args(kw):
    with pytest.raises(ValueError):
        gen_two_moons(**kw)


# ---------------------------------------------------------------------- blobs

CENTERS = [((0.0, 0.0), 0.5), ((3.0, 1.0), 0.3), ((-2.0, 4.0), 0.8)]


def test_blobs_means_within_clt_bound():
    n = 3000
    ds = gen_blobs(n, CENTERS, (0, 0), seed=11)
    for i, (mean, sd) in enumerate(CENTERS):
        rows = ds.X[ds.Y == i]
        bound = 4 * sd / np.sqrt(len(rows))
        assert np.all(np.abs(rows.mean(axis=0) - mean) < bound)


def test_blobs_shift_is_exact_translation():
    a = gen_blobs(600, CENTERS, (0, 0), seed=11)
    b = gen_blobs(600, CENTERS, (5, 0), seed=11)
    np.testing.assert_allclose(b.X - a.X, np.tile([5.0, 0.0], (600, 1)), atol=1e-12)
    for i in range(3):
        d = b.X[b.Y == i].mean(0) - a.X[a.Y == i].mean(0)
        np.testing.assert_allclose(d, [5.0, 0.0], atol=1e-12)


def test_blobs_deterministic_and_validated():
    assert gen_blobs(90, CENTERS, seed=1).X.tobytes() == gen_blobs(90, CENTERS, seed=1).X.tobytes()
    with pytest.raises(ValueError):
        gen_blobs(10, CENTERS[:1])


# ------------------------------------------------------------------ datasets


def test_labeled_dataset_requires_every_class():
    with pytest.raises(ValueError, match=r"\[2\]"):
        LabeledDataset(np.zeros((3, 2)), [0, 1, 1], 3)


def test_labeled_dataset_rejects_nan_and_is_read_only():
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.nan], [0.0]]), [0, 1], 2)
    ds = LabeledDataset(np.zeros((2, 1)), [0, 1], 2)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


# ------------------------------------------------------------------------ IDX


def _fixture(tmp_path, images, labels=None):
    ip = tmp_path / "img.idx"
    write_idx_images(ip, images)
    lp = None
    if labels is not None:
        lp = tmp_path / "lab.idx"
        write_idx_labels(lp, labels)
    return ip, lp


def test_idx_hand_built_fixture(tmp_path):
    # Header bytes written by hand: magic 0x00000803, dims 2, 2, 2.
    ip = tmp_path / "hand.idx"
    ip.write_bytes(bytes.fromhex("00000803 00000002 00000002 00000002") + bytes([0, 255, 255, 0, 255, 255, 0, 0]))
    lp = tmp_path / "hand_lab.idx"
    lp.write_bytes(bytes.fromhex("00000801 00000002") + bytes([1, 0]))
    ds = load_idx(ip, lp, num_classes=2)
    np.testing.assert_array_equal(ds.X, [[0, 1, 1, 0], [1, 1, 0, 0]])
    np.testing.assert_array_equal(ds.Y, [1, 0])
    assert set(np.unique(ds.X).tolist()) == {0.0, 1.0}


def test_idx_limit_zero_is_empty(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1])
    with pytest.raises(ValueError, match="empty dataset"):
        load_idx(ip, lp, limit=0, num_classes=2)


def test_idx_limit_takes_front(tmp_path):
    imgs = np.arange(5 * 4, dtype=np.uint8).reshape(5, 2, 2)
    ip, _ = _fixture(tmp_path, imgs)
    ds = load_idx(ip, limit=3)
    np.testing.assert_array_equal(ds.X, imgs[:3].reshape(3, 4) / 255.0)


def test_idx_without_labels_is_unlabeled(tmp_path):
    ip, _ = _fixture(tmp_path, np.zeros((2, 2, 2), np.uint8))
    ds = load_idx(ip, None)
    assert isinstance(ds, UnlabeledDataset) and ds.hidden_Y is None


def test_idx_bad_magic(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1])
    raw = bytearray(ip.read_bytes())
    raw[3] = 0x02
    ip.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="not an IDX file"):
        load_idx(ip, lp, num_classes=2)
    with pytest.raises(ValueError, match="not an IDX file"):
        load_idx(lp)  # label file where images are expected


def test_idx_count_mismatch(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((3, 2, 2), np.uint8), [0, 1])
    with pytest.raises(ValueError, match="mismatch"):
        load_idx(ip, lp, num_classes=2)


@pytest.mark.parametrize("cut", [2, 10, 15, 19])
def test_idx_truncated(tmp_path, cut):
    ip, _ = _fixture(tmp_path, np.ones((2, 2, 2), np.uint8))
    ip.write_bytes(ip.read_bytes()[:cut])
    with pytest.raises(ValueError):
        load_idx(ip)


def test_idx_dims_disagree_with_payload(tmp_path):
    ip, _ = _fixture(tmp_path, np.ones((2, 2, 2), np.uint8))
    raw = bytearray(ip.read_bytes())
    raw[4:8] = struct.pack(">I", 1)  # header claims one image, payload holds two
    ip.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="longer"):
        load_idx(ip)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), side=st.integers(1, 5))
def test_idx_round_trip(tmp_path_factory, seed, n, side):
    tmp = tmp_path_factory.mktemp("idx")
    rng = np.random.default_rng(seed)
    imgs = rng.integers(0, 256, (n, side, side), dtype=np.uint8)
    labels = rng.integers(0, 10, n)
    ip, lp = _fixture(tmp, imgs, labels)
    ds = load_idx(ip, lp, num_classes=10) if len(set(labels.tolist())) == 10 else None
    X = load_idx(ip).X
    np.testing.assert_array_equal(X, imgs.reshape(n, -1) / 255.0)
    # Writing the loaded features back reproduces the original bytes.
    ip2 = tmp / "again.idx"
    write_idx_images(ip2, np.rint(X * 255).astype(np.uint8).reshape(n, side, side))
    assert ip2.read_bytes() == ip.read_bytes()
    if ds is not None:
        np.testing.assert_array_equal(ds.Y, labels)


def test_idx_labeled_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (20, 3, 3), dtype=np.uint8)
    labels = np.arange(20) % 10
    ip, lp = _fixture(tmp_path, imgs, labels)
    ds = load_idx(ip, lp)
    ip2, lp2 = tmp_path / "i2", tmp_path / "l2"
    write_idx_images(ip2, np.rint(ds.X * 255).astype(np.uint8).reshape(20, 3, 3))
    write_idx_labels(lp2, ds.Y)
    ds2 = load_idx(ip2, lp2)
    assert ds2.X.tobytes() == ds.X.tobytes() and ds2.Y.tobytes() == ds.Y.tobytes()


# ------------------------------------------------------------------ colorize


def _gray(n=12, side=4, seed=0):
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.uniform(0, 1, (n, side * side)), np.arange(n) % 3, 3)


def test_colorize_contract():
    ds = _gray()
    out = colorize_shift(ds, seed=1)
    np.testing.assert_array_equal(out.Y, ds.Y)
    assert out.in_dim == 3 * ds.in_dim
    assert out.X.min() >= 0.0 and out.X.max() <= 1.0


def test_colorize_range_exhaustive_on_extremes():
    X = np.array([[0.0, 1.0, 0.5, 0.25], [1.0, 1.0, 0.0, 0.0]])
    out = colorize_shift(LabeledDataset(X, [0, 1], 2), seed=5, opacity=1.0)
    assert np.all((out.X >= 0) & (out.X <= 1))
    # White ink stays white in every channel.
    assert np.all(out.X.reshape(2, 3, 4)[0, :, 1] == 1.0)


def test_colorize_zero_opacity_replicates_channels():
    ds = _gray()
    out = colorize_shift(ds, seed=2, opacity=0.0)
    np.testing.assert_array_equal(out.X.reshape(len(ds), 3, -1), np.repeat(ds.X[:, None, :], 3, axis=1))


def test_colorize_rejects_non_grayscale():
    with pytest.raises(ValueError, match="grayscale"):
        colorize_shift(LabeledDataset(np.zeros((2, 3)), [0, 1], 2))
    with pytest.raises(ValueError):
        colorize_shift(LabeledDataset(np.full((2, 4), 2.0), [0, 1], 2))


# ------------------------------------------------------------------- batching


def _pair(n_s=100, n_t=100):
    src = gen_two_moons(n_s, seed=1)
    tgt = gen_two_moons(n_t, rotation_deg=30, seed=2).unlabeled()
    return src, tgt


def test_batches_floor_count():
    src, tgt = _pair()
    bs = batches(src, tgt, 32, seed=0, epoch=1)
    assert len(bs) == 3
    assert all(b.x_s.shape == (32, 2) and b.x_t.shape == (32, 2) and b.y_s.shape == (32,) for b in bs)


def test_batches_deterministic_per_seed_epoch():
    src, tgt = _pair()
    a = batches(src, tgt, 32, seed=7, epoch=3)
    b = batches(src, tgt, 32, seed=7, epoch=3)
    c = batches(src, tgt, 32, seed=7, epoch=4)
    assert all(x.x_s.tobytes() == y.x_s.tobytes() and x.x_t.tobytes() == y.x_t.tobytes() for x, y in zip(a, b))
    assert any(x.x_s.tobytes() != y.x_s.tobytes() for x, y in zip(a, c))


def test_batches_source_indices_distinct():
    # Unique coordinates identify source rows.
    X = np.column_stack([np.arange(100.0), np.zeros(100)])
    src = LabeledDataset(X, np.arange(100) % 2, 2)
    tgt = UnlabeledDataset(X.copy())
    seen = np.concatenate([b.x_s[:, 0] for b in batches(src, tgt, 32, seed=3, epoch=1)])
    assert len(seen) == 96 and len(set(seen.tolist())) == 96
    t_seen = np.concatenate([b.t_index for b in batches(src, tgt, 32, seed=3, epoch=1)])
    assert len(set(t_seen.tolist())) == 96


def test_shorter_stream_bounds_epoch():
    src, tgt = _pair(100, 70)
    assert len(batches(src, tgt, 16, 0, 1)) == 4


@pytest.mark.parametrize("bs", [1, 101])
def test_batches_rejects_bad_size(bs):
    src, tgt = _pair()
    with pytest.raises(ValueError):
        batches(src, tgt, bs, 0, 1)


def test_paired_batch_never_exposes_target_labels():
    names = {f.name for f in dataclasses.fields(PairedBatch)}
    assert names == {"x_s", "y_s", "x_t", "t_index"}
    src, tgt = _pair()
    b = batches(src, tgt, 32, 0, 1)[0]
    assert not any(np.shares_memory(getattr(b, n), tgt.hidden_Y) for n in names)


# ------------------------------------------------------------------------ CSV


def test_csv_round_trip(tmp_path):
    ds = gen_two_moons(40, seed=9)
    p = tmp_path / "m.csv"
    assert write_csv(p, ds) == 40
    back = read_csv(p)
    assert back.X.tobytes() == ds.X.tobytes() and back.Y.tobytes() == ds.Y.tobytes()
    assert p.read_text().splitlines()[0] == "f0,f1,label"


def test_csv_unlabeled(tmp_path):
    p = tmp_path / "u.csv"
    write_csv(p, gen_two_moons(10, seed=9), hide_labels=True)
    assert all(line.endswith(",-1") for line in p.read_text().splitlines()[1:])
    assert isinstance(read_csv(p), UnlabeledDataset)


def test_generators_are_pure():
    # Calling generators must not disturb numpy's global RNG.
    np.random.seed(0)
    before = np.random.random()
    np.random.seed(0)
    gen_two_moons(50, seed=1)
    gen_blobs(50, CENTERS, seed=1)
    assert np.random.random() == before
    assert data.epoch_rng(1, 2, 0).random() == data.epoch_rng(1, 2, 0).random()
