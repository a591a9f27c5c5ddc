import numpy as np
import pytest

from dataset import (
    BlobSpec,
    LabeledDataset,
    LabelSet,
    blob_centers,
    build_overlap_label_sets,
    load_dataset,
    resolve_dataset_ref,
    save_dataset,
    shard,
    split_by_labels,
    synth_gaussian_blobs,
)
from errors import DatasetFormatError, ParameterError


def _indexed_dataset(n, num_classes=3, seed=0):
    # the single feature is the row index, so rows can be traced through shuffles
    y = np.random.default_rng(seed).integers(0, num_classes, size=n)
    return LabeledDataset(np.arange(n, dtype=float).reshape((-1, 1)), y, num_classes)


def test_label_set_sorted_unique():
    labels = LabelSet.of([3, 1, 3, 2])
    assert labels.members == (1, 2, 3)
    assert 2 in labels and 0 not in labels
    assert str(labels) == "1,2,3"
    with pytest.raises(ParameterError):
        labels.check(3)
    with pytest.raises(ParameterError):
        LabelSet.of([-1])


def test_labeled_dataset_validation():
    with pytest.raises(ParameterError):
        LabeledDataset(np.zeros((2, 1)), np.array([0, 3]), 3)
    with pytest.raises(ParameterError):
        LabeledDataset(np.zeros((3, 1)), np.array([0, 1]), 3)
    empty = LabeledDataset(np.zeros((0, 0)), np.zeros(0), 2)
    assert empty.size == 0


def test_blobs_noise_free_limit():
    dat = synth_gaussian_blobs(BlobSpec(num_classes=2, dim=1, samples_per_class=1, center_scale=1.0, noise_sigma=1e-12, seed=5))
    assert dat.y.tolist() == [0, 1]
    np.testing.assert_allclose(np.abs(dat.x), 1.0, atol=1e-9)
    np.testing.assert_allclose(dat.x[0], -dat.x[1], atol=1e-9)


def test_blobs_deterministic():
    spec = BlobSpec(num_classes=4, dim=3, samples_per_class=10, seed=11)
    assert synth_gaussian_blobs(spec) == synth_gaussian_blobs(spec)
    other = synth_gaussian_blobs(BlobSpec(num_classes=4, dim=3, samples_per_class=10, seed=12))
    assert not np.array_equal(synth_gaussian_blobs(spec).x, other.x)


def test_blobs_shape_and_centers():
    spec = BlobSpec(num_classes=10, dim=20, samples_per_class=50, center_scale=4.0, seed=0)
    dat = synth_gaussian_blobs(spec)
    assert dat.size == 500 and dat.dim == 20
    assert np.bincount(dat.y).tolist() == [50] * 10
    means = np.array([dat.x[dat.y == k].mean(axis=0) for k in range(10)])
    np.testing.assert_allclose(np.linalg.norm(means, axis=1), 4.0, atol=0.6)


def test_blobs_ring_layout():
    spec = BlobSpec(num_classes=4, dim=6, samples_per_class=1, center_scale=3.0, seed=2, neighbor_weight=0.5)
    centers = blob_centers(spec)
    np.testing.assert_allclose(np.linalg.norm(centers, axis=1), 3.0)
    own_axes = np.argmax(centers, axis=1)
    assert len(set(own_axes.tolist())) == 4
    for k in range(4):
        neighbours = [own_axes[(k - 1) % 4], own_axes[(k + 1) % 4]]
        assert set(np.flatnonzero(centers[k]).tolist()) == {own_axes[k]} | set(neighbours)
        np.testing.assert_allclose(centers[k, neighbours], 0.5 * centers[k, own_axes[k]])
    # too few axes for a ring: antipodal pairs instead
    pairs = blob_centers(BlobSpec(num_classes=4, dim=2, seed=2))
    np.testing.assert_allclose(pairs[0], -pairs[1])


@pytest.mark.parametrize("spec", [
    BlobSpec(num_classes=1),
    BlobSpec(dim=0),
    BlobSpec(samples_per_class=0),
    BlobSpec(noise_sigma=0.0),
    BlobSpec(neighbor_weight=1.0),
])
def test_blobs_invalid_spec(spec):
    with pytest.raises(ParameterError):
        synth_gaussian_blobs(spec)


def test_split_by_labels_example():
    dat = LabeledDataset(np.arange(4.0).reshape((-1, 1)), np.array([0, 1, 0, 2]), 3)
    d_f, d_r = split_by_labels(dat, LabelSet.of([0]))
    assert d_f.x.ravel().tolist() == [0.0, 2.0]
    assert d_r.x.ravel().tolist() == [1.0, 3.0]


def test_split_by_labels_edge_cases():
    dat = _indexed_dataset(20)
    d_f, d_r = split_by_labels(dat, LabelSet())
    assert d_f.size == 0 and d_r == dat
    d_f, d_r = split_by_labels(dat, LabelSet.of(range(3)))
    assert d_r.size == 0 and d_f == dat
    with pytest.raises(ParameterError):
        split_by_labels(dat, LabelSet.of([3]))


def test_split_keeps_rows():
    rng = np.random.default_rng(1)
    for _ in range(50):
        dat = _indexed_dataset(int(rng.integers(1, 40)), num_classes=4, seed=int(rng.integers(1000)))
        c_f = LabelSet.of(rng.choice(4, size=int(rng.integers(0, 5)), replace=False).tolist())
        d_f, d_r = split_by_labels(dat, c_f)
        assert d_f.size + d_r.size == dat.size
        assert all(label in c_f for label in d_f.y)
        assert not any(label in c_f for label in d_r.y)
        rows = sorted(zip(np.concatenate([d_f.x.ravel(), d_r.x.ravel()]), np.concatenate([d_f.y, d_r.y])))
        assert rows == sorted(zip(dat.x.ravel(), dat.y))


def test_shard_examples():
    shards = shard(_indexed_dataset(10), 5, seed=0)
    assert [s.size for s in shards] == [2] * 5
    assert sorted(np.concatenate([s.x.ravel() for s in shards]).tolist()) == list(range(10))

    single = shard(_indexed_dataset(10), 1, seed=0)
    assert sorted(single[0].x.ravel().tolist()) == list(range(10))

    assert sorted(s.size for s in shard(_indexed_dataset(7), 3, seed=0)) == [2, 2, 3]

    with pytest.raises(ParameterError):
        shard(_indexed_dataset(3), 4, seed=0)


def test_shard_partition_property():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(1, 60))
        k = int(rng.integers(1, n + 1))
        seed = int(rng.integers(10000))
        shards = shard(_indexed_dataset(n), k, seed)
        idxs = np.concatenate([s.x.ravel() for s in shards])
        assert sorted(idxs.tolist()) == list(range(n))
        sizes = [s.size for s in shards]
        assert max(sizes) - min(sizes) <= 1
        again = shard(_indexed_dataset(n), k, seed)
        assert all(a == b for a, b in zip(shards, again))


def test_overlap_half():
    sets = build_overlap_label_sets(10, per_node=4, num_nodes=2, overlap_fraction=0.5, seed=0)
    assert [len(s) for s in sets] == [4, 4]
    assert len(set(sets[0]) & set(sets[1])) == 2


def test_overlap_extremes():
    disjoint = build_overlap_label_sets(12, per_node=4, num_nodes=3, overlap_fraction=0.0, seed=1)
    assert len(set().union(*[set(s) for s in disjoint])) == 12
    same = build_overlap_label_sets(12, per_node=4, num_nodes=3, overlap_fraction=1.0, seed=1)
    assert same[0] == same[1] == same[2]


@pytest.mark.parametrize("fraction,core", [(0.6, 3), (0.4, 2), (0.2, 1), (0.0, 0)])
def test_overlap_core_sizes(fraction, core):
    sets = build_overlap_label_sets(13, per_node=5, num_nodes=2, overlap_fraction=fraction, seed=4)
    assert len(set(sets[0]) & set(sets[1])) == core


def test_overlap_property():
    rng = np.random.default_rng(3)
    for _ in range(300):
        per_node = int(rng.integers(1, 6))
        num_nodes = int(rng.integers(1, 5))
        core = int(rng.integers(0, per_node + 1))
        fraction = core / per_node
        total = core + num_nodes * (per_node - core) + int(rng.integers(0, 3))
        sets = build_overlap_label_sets(total, per_node, num_nodes, fraction, seed=int(rng.integers(1000)))
        assert all(len(s) == per_node for s in sets)
        common = set.intersection(*[set(s) for s in sets])
        assert len(common) == (per_node if num_nodes == 1 else core)
        others = [label for s in sets for label in s if label not in common]
        assert len(others) == len(set(others))


def test_overlap_infeasible():
    with pytest.raises(ParameterError):
        build_overlap_label_sets(8, per_node=5, num_nodes=2, overlap_fraction=0.0, seed=0)
    with pytest.raises(ParameterError):
        build_overlap_label_sets(8, per_node=2, num_nodes=2, overlap_fraction=1.5, seed=0)


def test_load_csv_example(tmp_path):
    path = tmp_path / "dat.csv"
    path.write_text("0,1.5,2.0\n1,0.0,-1.0\n")
    dat = load_dataset(str(path), "csv")
    assert dat.size == 2 and dat.dim == 2
    assert dat.y.tolist() == [0, 1]
    np.testing.assert_array_equal(dat.x, [[1.5, 2.0], [0.0, -1.0]])


def test_load_csv_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert load_dataset(str(path), "csv").size == 0


def test_load_csv_inconsistent_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1.0,2.0\n1,1.0,2.0,3.0\n")
    with pytest.raises(DatasetFormatError) as e:
        load_dataset(str(path), "csv")
    assert e.value.row == 2


def test_load_csv_bad_labels(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("0,1.0\n3,2.0\n")
    with pytest.raises(DatasetFormatError) as e:
        load_dataset(str(path), "csv", num_classes=3)
    assert e.value.row == 2

    path.write_text("0,1.0\n0.5,2.0\n")
    with pytest.raises(DatasetFormatError) as e:
        load_dataset(str(path), "csv")
    assert e.value.row == 2

    path.write_text("0,1.0\n1,abc\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(str(path), "csv")


def test_raw_f32_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((25, 4)).astype(np.float32).astype(float)
    dat = LabeledDataset(x, rng.integers(0, 5, size=25), 5)
    path = str(tmp_path / "dat.bin")
    save_dataset(dat, path, "raw-f32")
    assert load_dataset(path, "raw-f32") == dat


def test_raw_f32_errors(tmp_path):
    dat = LabeledDataset(np.ones((3, 2)), np.array([0, 1, 1]), 2)
    path = tmp_path / "dat.bin"
    save_dataset(dat, str(path), "raw-f32")
    blob = path.read_bytes()
    path.write_bytes(blob[:-2])
    with pytest.raises(DatasetFormatError):
        load_dataset(str(path), "raw-f32")
    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(DatasetFormatError):
        load_dataset(str(path), "raw-f32")
    path.write_bytes(blob)
    with pytest.raises(DatasetFormatError):
        load_dataset(str(path), "raw-f32", num_classes=1)


def test_csv_roundtrip_values(tmp_path):
    dat = LabeledDataset(np.array([[0.25, -1.5], [3.0, 4.125]]), np.array([1, 0]), 2)
    path = str(tmp_path / "dat.csv")
    save_dataset(dat, path, "csv")
    assert load_dataset(path, "csv", num_classes=2) == dat


def test_resolve_dataset_ref():
    dat = _indexed_dataset(30, num_classes=4)
    assert resolve_dataset_ref("all", dat, 0) == dat
    assert set(resolve_dataset_ref("labels=1:3", dat, 0).y.tolist()) <= {1, 2}
    assert 0 not in resolve_dataset_ref("exclude=0", dat, 0).y
    first = resolve_dataset_ref("shard=0/3", dat, 7)
    assert first == shard(dat, 3, 7)[0]
    combined = resolve_dataset_ref("shard=1/2;exclude=0,1", dat, 7)
    assert set(combined.y.tolist()) <= {2, 3}
    for bad in ["shard=3/3", "shard=x", "labels=2", "nonsense=1"]:
        with pytest.raises(ParameterError):
            resolve_dataset_ref(bad, dat, 0)
