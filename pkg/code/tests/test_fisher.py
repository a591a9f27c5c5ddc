import time

import numpy as np
import pytest
import scipy.special

from dataset import BlobSpec, LabeledDataset, synth_gaussian_blobs
from errors import CheckpointFormatError, FimInvariantError, ParameterError
from fisher import DampenConfig, DiagonalFim, compute_fim, dampen, load_fim, merge_fims, save_fim
from softmax_model import LinearSoftmaxModel, TrainConfig, train


def _random_fim(rng, length):
    return DiagonalFim(rng.exponential(size=length) * (rng.random(length) > 0.2), int(rng.integers(1, 50)))


def _fd_fim(model, dat, step=1e-5):
    """
    Brute force: finite difference gradient of each row's log likelihood, squared and averaged
    """
    flat = model.flat_params()
    total = np.zeros(flat.size)
    for x, y in zip(dat.x, dat.y):
        grad = np.zeros(flat.size)
        for idx in range(flat.size):
            delta = np.zeros(flat.size)
            delta[idx] = step
            plus = LinearSoftmaxModel.from_flat(flat + delta, model.num_classes, model.dim)
            minus = LinearSoftmaxModel.from_flat(flat - delta, model.num_classes, model.dim)
            grad[idx] = (
                scipy.special.log_softmax(plus.logits(x))[y]
                - scipy.special.log_softmax(minus.logits(x))[y]) / (2 * step)
        total += grad ** 2
    return total / dat.size


def test_fim_single_sample():
    dat = LabeledDataset(np.array([[1.0]]), np.array([0]), 2)
    fim = compute_fim(LinearSoftmaxModel.zeros(2, 1), dat)
    np.testing.assert_allclose(fim.values, [0.25, 0.25, 0.25, 0.25])
    assert fim.sample_count == 1


def test_fim_duplicate_rows():
    rng = np.random.default_rng(0)
    model = LinearSoftmaxModel(rng.normal(size=(3, 2)), rng.normal(size=3))
    one = LabeledDataset(np.array([[0.5, -1.0]]), np.array([2]), 3)
    two = LabeledDataset(np.array([[0.5, -1.0], [0.5, -1.0]]), np.array([2, 2]), 3)
    np.testing.assert_allclose(compute_fim(model, two).values, compute_fim(model, one).values, rtol=1e-15)


def test_fim_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(100):
        num_classes, dim, n = int(rng.integers(2, 6)), int(rng.integers(1, 9)), int(rng.integers(1, 33))
        model = LinearSoftmaxModel(rng.uniform(-2, 2, size=(num_classes, dim)), rng.uniform(-2, 2, size=num_classes))
        dat = LabeledDataset(rng.uniform(-1, 1, size=(n, dim)), rng.integers(0, num_classes, size=n), num_classes)
        np.testing.assert_allclose(compute_fim(model, dat).values, _fd_fim(model, dat), rtol=1e-5, atol=1e-9)


def test_fim_chunking_and_workers():
    rng = np.random.default_rng(2)
    model = LinearSoftmaxModel(rng.normal(size=(4, 6)), rng.normal(size=4))
    dat = LabeledDataset(rng.normal(size=(1000, 6)), rng.integers(0, 4, size=1000), 4)
    reference = compute_fim(model, dat, n_jobs=1, chunk_size=64)
    for n_jobs in [2, 8]:
        assert compute_fim(model, dat, n_jobs=n_jobs, chunk_size=64) == reference
    np.testing.assert_allclose(compute_fim(model, dat, chunk_size=1000).values, reference.values, rtol=1e-12)


def test_fim_errors():
    model = LinearSoftmaxModel.zeros(2, 3)
    with pytest.raises(ParameterError):
        compute_fim(model, LabeledDataset(np.zeros((0, 3)), np.zeros(0), 2))
    with pytest.raises(ParameterError):
        compute_fim(model, LabeledDataset(np.zeros((2, 2)), np.zeros(2), 2))
    with pytest.raises(FimInvariantError):
        DiagonalFim(np.array([0.1, -0.2]), 1)
    with pytest.raises(FimInvariantError):
        DiagonalFim(np.array([np.nan]), 1)


def test_merge_example():
    merged = merge_fims([DiagonalFim([1.0, 5.0, 3.0], 2), DiagonalFim([4.0, 2.0, 3.0], 3)])
    np.testing.assert_array_equal(merged.values, [4.0, 5.0, 3.0])
    assert merged.sample_count == 5


def test_merge_single_is_identity():
    fim = _random_fim(np.random.default_rng(3), 12)
    merged = merge_fims([fim])
    assert merged == fim
    assert merged.values is not fim.values


def test_merge_errors():
    with pytest.raises(ParameterError):
        merge_fims([])
    with pytest.raises(ParameterError):
        merge_fims([DiagonalFim([1.0], 1), DiagonalFim([1.0, 2.0], 1)])


def test_merge_algebra():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        length = int(rng.integers(1, 20))
        a, b, c = [_random_fim(rng, length) for _ in range(3)]
        ab = merge_fims([a, b])
        np.testing.assert_array_equal(ab.values, merge_fims([b, a]).values)
        np.testing.assert_array_equal(
            merge_fims([a, merge_fims([b, c])]).values,
            merge_fims([merge_fims([a, b]), c]).values)
        np.testing.assert_array_equal(merge_fims([a, a]).values, a.values)
        abc = merge_fims([a, b, c])
        for fim in (a, b, c):
            assert np.all(abc.values >= fim.values)


def _two_by_one_model(value=2.0):
    return LinearSoftmaxModel.from_flat(np.full(4, value), 2, 1)


def test_dampen_branches():
    model = _two_by_one_model()
    model_fim = DiagonalFim([0.5, 0.5, 0.0, 0.0], 1)
    merged_fim = DiagonalFim([1.0, 0.4, 0.3, 0.0], 1)
    new_model, triggered = dampen(model, model_fim, merged_fim, DampenConfig())
    np.testing.assert_allclose(new_model.flat_params(), [0.2, 2.0, 0.0, 2.0])
    assert triggered.tolist() == [0, 2]
    np.testing.assert_array_equal(model.flat_params(), np.full(4, 2.0))


def test_dampen_tie_untriggered():
    model = _two_by_one_model()
    fim = DiagonalFim([0.5] * 4, 1)
    new_model, triggered = dampen(model, fim, fim, DampenConfig())
    assert new_model == model
    assert triggered.size == 0


def test_dampen_factor_below_eta():
    model = _two_by_one_model()
    model_fim = DiagonalFim([0.5] * 4, 1)
    merged_fim = DiagonalFim([10.0] * 4, 1)
    new_model, _ = dampen(model, model_fim, merged_fim, DampenConfig(eta=1.0))
    np.testing.assert_allclose(new_model.flat_params(), 2.0 * 0.05)


def test_dampen_errors():
    model = _two_by_one_model()
    with pytest.raises(ParameterError):
        dampen(model, DiagonalFim([1.0] * 3, 1), DiagonalFim([1.0] * 4, 1), DampenConfig())
    fim = DiagonalFim([1.0] * 4, 1)
    fim.values[1] = -1.0
    with pytest.raises(FimInvariantError):
        dampen(model, fim, DiagonalFim([1.0] * 4, 1), DampenConfig())
    with pytest.raises(ParameterError):
        DampenConfig(eta=1.5)
    with pytest.raises(ParameterError):
        DampenConfig(tau=-1.0)


def test_dampen_properties():
    rng = np.random.default_rng(5)
    cfg = DampenConfig()
    for _ in range(500):
        num_classes, dim = int(rng.integers(2, 5)), int(rng.integers(1, 6))
        model = LinearSoftmaxModel(rng.normal(size=(num_classes, dim)), rng.normal(size=num_classes))
        model_fim = _random_fim(rng, model.num_params)
        merged_fim = _random_fim(rng, model.num_params)
        new_model, triggered = dampen(model, model_fim, merged_fim, cfg)
        old_params, new_params = model.flat_params(), new_model.flat_params()
        assert np.all(np.abs(new_params) <= np.abs(old_params))
        untouched = np.setdiff1d(np.arange(old_params.size), triggered)
        np.testing.assert_array_equal(new_params[untouched], old_params[untouched])
        nonzero = triggered[old_params[triggered] != 0]
        factors = new_params[nonzero] / old_params[nonzero]
        assert np.all((factors >= 0) & (factors <= cfg.eta + 1e-15))

        zero_fim = DiagonalFim(np.zeros(model.num_params), 0)
        assert dampen(model, model_fim, zero_fim, cfg)[0] == model


def test_fim_file_roundtrip(tmp_path):
    fim = _random_fim(np.random.default_rng(6), 30)
    path = tmp_path / "node.fim"
    save_fim(fim, str(path))
    assert load_fim(str(path)) == fim
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(CheckpointFormatError):
        load_fim(str(path))


def test_fim_time_linear_in_samples():
    dat = synth_gaussian_blobs(BlobSpec(num_classes=10, dim=20, samples_per_class=16000, seed=0))
    model = train(None, dat.subset_idxs(np.arange(0, dat.size, 40)), TrainConfig(epochs=2))
    timings = []
    for n in [40000, 80000, 160000]:
        subset = dat.subset_idxs(np.arange(n))
        best = np.inf
        for _ in range(5):
            st_time = time.perf_counter()
            compute_fim(model, subset)
            best = min(best, time.perf_counter() - st_time)
        timings.append(best)
    ratios = np.array(timings[1:]) / np.array(timings[:-1])
    assert np.all((ratios >= 1.5) & (ratios <= 2.5)), timings
