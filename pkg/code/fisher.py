"""
Diagonal empirical Fisher information of the last layer, merging of unlearning FIMs
and the importance-ratio dampening update
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.special
from joblib import Parallel, delayed

from dataset import LabeledDataset
from errors import ParameterError, FimInvariantError, CheckpointFormatError
from softmax_model import LinearSoftmaxModel

FIM_MAGIC = b"FIUF"
FIM_HEADER = np.dtype([("magic", "S4"), ("length", "<u8"), ("sample_count", "<u8")])
FIM_CHUNK_SIZE = 4096


class DiagonalFim:
    """
    Per-parameter importance, aligned with LinearSoftmaxModel.flat_params()
    Used as the model FIM of a node, the unlearning FIM of a discovery node and the merged FIM
    """
    def __init__(self, values: np.ndarray, sample_count: int):
        values = np.array(values, dtype=float).reshape(-1)
        if np.any(np.isnan(values)) or np.any(values < 0):
            raise FimInvariantError("FIM entries must be non-negative")
        self.values = values
        self.sample_count = int(sample_count)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return (
            isinstance(other, DiagonalFim)
            and self.sample_count == other.sample_count
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return "DiagonalFim(len=%d, n=%d)" % (self.values.size, self.sample_count)


@dataclass(frozen=True)
class DampenConfig:
    """
    tau scales the dampening factor, gamma is the trigger threshold on the importance ratio,
    eta caps the factor (eta=1 gives the uncapped-below-one behaviour of plain SSD)
    """
    tau: float = 1.0
    gamma: float = 1.0
    eta: float = 0.1

    def __post_init__(self):
        if self.tau < 0 or self.gamma < 0:
            raise ParameterError("tau and gamma must be non-negative")
        if not 0 <= self.eta <= 1:
            raise ParameterError("eta must lie in [0, 1]")


def _squared_grad_sums(model: LinearSoftmaxModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # einsum keeps the reduction order independent of BLAS threading
    probs = scipy.special.softmax(np.einsum("nd,kd->nk", x, model.weights) + model.bias, axis=1)
    resid = -probs
    resid[np.arange(y.size), y] += 1
    sq_resid = resid ** 2
    weight_part = np.einsum("nk,nd->kd", sq_resid, x ** 2)
    return np.concatenate([weight_part.ravel(), sq_resid.sum(axis=0)])


def compute_fim(model: LinearSoftmaxModel, dat: LabeledDataset, n_jobs: int = 1, chunk_size: int = FIM_CHUNK_SIZE) -> DiagonalFim:
    """
    Entry l is the mean over rows of the squared l-th component of the log-likelihood gradient
    at the observed label. On a discovery node's forget rows this is its unlearning FIM; on a
    node's full training data it is the model FIM.

    Rows are cut into fixed chunks whose partial sums are added in chunk order, so the
    result does not depend on n_jobs.
    """
    if dat.size == 0:
        raise ParameterError("cannot compute a FIM over an empty dataset")
    if dat.dim != model.dim or dat.num_classes > model.num_classes:
        raise ParameterError("dataset (%d features, %d classes) does not match %s" % (dat.dim, dat.num_classes, model))
    bounds = [(start, min(start + chunk_size, dat.size)) for start in range(0, dat.size, chunk_size)]
    partials = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_squared_grad_sums)(model, dat.x[start:stop], dat.y[start:stop])
        for start, stop in bounds
    )
    total = partials[0]
    for partial in partials[1:]:
        total = total + partial
    return DiagonalFim(total / dat.size, dat.size)


def merge_fims(fims: List[DiagonalFim]) -> DiagonalFim:
    """
    Element-wise maximum of the unlearning FIMs an inherited node traces back to
    """
    if not fims:
        raise ParameterError("nothing to merge")
    length = len(fims[0])
    if any(len(fim) != length for fim in fims):
        raise ParameterError("cannot merge FIMs of lengths %s" % sorted(set(len(fim) for fim in fims)))
    if len(fims) == 1:
        return DiagonalFim(fims[0].values.copy(), fims[0].sample_count)
    return DiagonalFim(
        np.maximum.reduce([fim.values for fim in fims]),
        sum(fim.sample_count for fim in fims),
    )


def dampen(
        model: LinearSoftmaxModel,
        model_fim: DiagonalFim,
        merged_fim: DiagonalFim,
        cfg: DampenConfig) -> Tuple[LinearSoftmaxModel, np.ndarray]:
    """
    Parameter l is triggered iff merged_l / model_l > gamma, and is then scaled by
    min(tau * model_l / merged_l, eta). A zero model entry counts as an infinite ratio
    when merged_l > 0 and as no evidence when merged_l == 0.
    @return updated copy of the model, sorted flat indices of the triggered parameters
    """
    params = model.flat_params()
    model_vals = model_fim.values
    merged_vals = merged_fim.values
    if model_vals.size != params.size or merged_vals.size != params.size:
        raise ParameterError("FIM lengths %d/%d do not match %d parameters" % (model_vals.size, merged_vals.size, params.size))
    if np.any(model_vals < 0) or np.any(merged_vals < 0):
        raise FimInvariantError("negative FIM entry")

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            model_vals > 0,
            merged_vals / model_vals,
            np.where(merged_vals > 0, np.inf, 0.0))
    triggered = np.flatnonzero(ratio > cfg.gamma)
    factor = np.minimum(cfg.tau * model_vals[triggered] / merged_vals[triggered], cfg.eta)

    new_params = params.copy()
    new_params[triggered] = factor * params[triggered]
    logging.debug("dampened %d of %d parameters", triggered.size, params.size)
    return LinearSoftmaxModel.from_flat(new_params, model.num_classes, model.dim), triggered


def save_fim(fim: DiagonalFim, path):
    header = np.array([(FIM_MAGIC, len(fim), fim.sample_count)], dtype=FIM_HEADER)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(fim.values, dtype="<f8").tobytes())


def load_fim(path) -> DiagonalFim:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < FIM_HEADER.itemsize:
        raise CheckpointFormatError("%s: truncated header" % path)
    header = np.frombuffer(blob, dtype=FIM_HEADER, count=1)[0]
    if header["magic"] != FIM_MAGIC:
        raise CheckpointFormatError("%s: not a FIM file" % path)
    length = int(header["length"])
    if len(blob) != FIM_HEADER.itemsize + 8 * length:
        raise CheckpointFormatError("%s: expected %d entries" % (path, length))
    values = np.frombuffer(blob, dtype="<f8", count=length, offset=FIM_HEADER.itemsize)
    return DiagonalFim(values.astype(float), int(header["sample_count"]))
