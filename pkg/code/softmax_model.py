"""
Last-layer linear softmax classifiers: training, evaluation, log-likelihood gradients and checkpoints
"""
import json
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.special
from sklearn.metrics import accuracy_score

from dataset import LabeledDataset, LabelSet
from errors import ParameterError, CheckpointFormatError

MODEL_MAGIC = b"FIUM"
MODEL_HEADER = np.dtype([("magic", "S4"), ("num_classes", "<u4"), ("dim", "<u4")])


class LinearSoftmaxModel:
    """
    logits = W x + b over precomputed features; every other layer is frozen and folded into the features.
    The flat parameter order is W row-major followed by b, and parameter index l refers to this order
    everywhere (gradients, FIMs, dampening).
    """
    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        weights = np.array(weights, dtype=float)
        bias = np.array(bias, dtype=float).reshape(-1)
        if weights.ndim != 2 or weights.shape[0] != bias.size:
            raise ParameterError("weights %s do not match bias %s" % (weights.shape, bias.shape))
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ParameterError("model parameters must be finite")
        self.weights = weights
        self.bias = bias

    @staticmethod
    def zeros(num_classes: int, dim: int):
        return LinearSoftmaxModel(np.zeros((num_classes, dim)), np.zeros(num_classes))

    @staticmethod
    def from_flat(flat: np.ndarray, num_classes: int, dim: int):
        flat = np.asarray(flat, dtype=float)
        if flat.size != num_classes * dim + num_classes:
            raise ParameterError("expected %d parameters, got %d" % (num_classes * dim + num_classes, flat.size))
        return LinearSoftmaxModel(flat[: num_classes * dim].reshape((num_classes, dim)), flat[num_classes * dim:])

    @property
    def num_classes(self):
        return self.bias.size

    @property
    def dim(self):
        return self.weights.shape[1]

    @property
    def num_params(self):
        return self.weights.size + self.bias.size

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def copy(self):
        return LinearSoftmaxModel(self.weights.copy(), self.bias.copy())

    def _check_dim(self, x: np.ndarray):
        if x.shape[-1] != self.dim:
            raise ParameterError("expected %d features, got %d" % (self.dim, x.shape[-1]))

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_dim(x)
        return x @ self.weights.T + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        # scipy's softmax subtracts the max logit before exponentiating
        return scipy.special.softmax(self.logits(x), axis=-1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax keeps the lowest class index on ties
        return np.argmax(self.logits(x), axis=-1)

    def __eq__(self, other):
        return (
            isinstance(other, LinearSoftmaxModel)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )

    def __repr__(self):
        return "LinearSoftmaxModel(K=%d, d=%d)" % (self.num_classes, self.dim)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.epochs < 1:
            raise ParameterError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be at least 1")
        if self.optimizer != "sgd":
            raise ParameterError("only sgd is supported, got %s" % self.optimizer)


def predict_proba(model: LinearSoftmaxModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ParameterError("predict_proba takes a single feature vector")
    return model.predict_proba(x)


def _check_compatible(model: LinearSoftmaxModel, dat: LabeledDataset):
    if dat.size and dat.dim != model.dim:
        raise ParameterError("model expects %d features, dataset has %d" % (model.dim, dat.dim))
    if dat.num_classes > model.num_classes:
        raise ParameterError("model has %d classes, dataset %d" % (model.num_classes, dat.num_classes))


def _sgd_epochs(model: LinearSoftmaxModel, dat: LabeledDataset, cfg: TrainConfig, ascent: bool = False):
    weights = model.weights.copy()
    bias = model.bias.copy()
    onehot = np.eye(model.num_classes)[dat.y]
    step = -cfg.learning_rate if ascent else cfg.learning_rate
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(dat.size)
        for start in range(0, dat.size, cfg.batch_size):
            batch_idxs = perm[start: start + cfg.batch_size]
            batch_x = dat.x[batch_idxs]
            probs = scipy.special.softmax(batch_x @ weights.T + bias, axis=1)
            # gradient of the mean cross-entropy
            resid = (probs - onehot[batch_idxs]) / batch_idxs.size
            weights -= step * (resid.T @ batch_x)
            bias -= step * resid.sum(axis=0)
        logging.debug("epoch %d done", epoch)
    return LinearSoftmaxModel(weights, bias)


def train(init: LinearSoftmaxModel, dat: LabeledDataset, cfg: TrainConfig) -> LinearSoftmaxModel:
    """
    Minimize the mean cross-entropy by mini-batch SGD with a seeded shuffle schedule
    @param init: starting parameters; zeros when None
    """
    if dat.size == 0:
        raise ParameterError("cannot train on an empty dataset")
    if init is None:
        init = LinearSoftmaxModel.zeros(dat.num_classes, dat.dim)
    _check_compatible(init, dat)
    return _sgd_epochs(init, dat, cfg)


def gradient_ascent(model: LinearSoftmaxModel, forget_dat: LabeledDataset, cfg: TrainConfig, epochs: int) -> LinearSoftmaxModel:
    """
    Sign-flipped SGD on the data to forget, for a fixed number of epochs
    """
    if epochs < 0:
        raise ParameterError("gradient ascent epochs must be non-negative")
    if epochs == 0 or forget_dat.size == 0:
        return model.copy()
    _check_compatible(model, forget_dat)
    ascent_cfg = TrainConfig(cfg.learning_rate, epochs, cfg.batch_size, cfg.seed, cfg.optimizer)
    return _sgd_epochs(model, forget_dat, ascent_cfg, ascent=True)


def accuracy(model: LinearSoftmaxModel, dat: LabeledDataset, restrict: LabelSet = None) -> float:
    """
    @param restrict: if given, dat must only hold labels from this set (split first)
    @return fraction of rows whose argmax prediction equals the label; 0 for empty data
    """
    if restrict is not None and dat.size and not set(np.unique(dat.y).tolist()) <= set(restrict.members):
        raise ParameterError("dataset holds labels outside %s" % restrict)
    if dat.size == 0:
        return 0.0
    _check_compatible(model, dat)
    return float(accuracy_score(dat.y, model.predict(dat.x)))


def loglik_grad_last_layer(model: LinearSoftmaxModel, x: np.ndarray, y: int) -> np.ndarray:
    """
    @return gradient of ln p(y | x) in flat parameter order: (onehot(y) - p) x^T row-major, then onehot(y) - p
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ParameterError("expected a single feature vector")
    if not 0 <= y < model.num_classes:
        raise ParameterError("label %d out of range for %d classes" % (y, model.num_classes))
    resid = -model.predict_proba(x)
    resid[y] += 1
    return np.concatenate([np.outer(resid, x).ravel(), resid])


def average_models(models: List[LinearSoftmaxModel]) -> LinearSoftmaxModel:
    """
    Unweighted parameter mean, used by aggregation nodes
    """
    if not models:
        raise ParameterError("nothing to average")
    return LinearSoftmaxModel(
        np.mean([mdl.weights for mdl in models], axis=0),
        np.mean([mdl.bias for mdl in models], axis=0),
    )


def save_model(model: LinearSoftmaxModel, path):
    header = np.array([(MODEL_MAGIC, model.num_classes, model.dim)], dtype=MODEL_HEADER)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())


def load_model(path) -> LinearSoftmaxModel:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < MODEL_HEADER.itemsize:
        raise CheckpointFormatError("%s: truncated header" % path)
    header = np.frombuffer(blob, dtype=MODEL_HEADER, count=1)[0]
    if header["magic"] != MODEL_MAGIC:
        raise CheckpointFormatError("%s: not a model checkpoint" % path)
    num_classes, dim = int(header["num_classes"]), int(header["dim"])
    num_params = num_classes * dim + num_classes
    if len(blob) != MODEL_HEADER.itemsize + 8 * num_params:
        raise CheckpointFormatError("%s: expected %d parameters" % (path, num_params))
    flat = np.frombuffer(blob, dtype="<f8", count=num_params, offset=MODEL_HEADER.itemsize)
    return LinearSoftmaxModel.from_flat(flat.astype(float), num_classes, dim)


def export_model_json(model: LinearSoftmaxModel, path):
    with open(path, "w") as f:
        json.dump({
            "num_classes": model.num_classes,
            "dim": model.dim,
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
        }, f, indent=1)


def import_model_json(path) -> LinearSoftmaxModel:
    with open(path) as f:
        doc = json.load(f)
    weights = np.array(doc["weights"], dtype=float).reshape((doc["num_classes"], doc["dim"]))
    return LinearSoftmaxModel(weights, doc["bias"])
