import numpy as np
import pytest

from dataset import BlobSpec, LabeledDataset, synth_gaussian_blobs
from node import ModelNode
from softmax_model import LinearSoftmaxModel
from train_graph import NodeDataRegistry
from umig import Umig


@pytest.fixture
def separable_blobs():
    return synth_gaussian_blobs(BlobSpec(num_classes=3, dim=5, samples_per_class=200, center_scale=8.0, noise_sigma=1.0, seed=3))


@pytest.fixture
def three_class_case():
    """
    One row per class: class 0 at (1, 0), class 1 at (0, 1), class 2 at the origin.
    The model gets every row right; unlearning class 0 dampens exactly W[0, 0], W[1, 0] and W[2, 0]
    by 0.1, after which the class 0 row falls back to class 2.
    """
    dat = LabeledDataset(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), np.array([0, 1, 2]), 3)
    model = LinearSoftmaxModel(np.array([[4.0, 0.0], [0.0, 4.0], [0.0, 0.0]]), np.array([0.0, 0.0, 1.0]))
    return model, dat


def one_hot_case(num_onehot: int, labels):
    """
    Classes 0..num_onehot-1 sit at the unit vectors, class num_onehot at the origin.
    The model scores its own unit vector with 4 and the fallback class with bias 1.
    """
    num_classes = num_onehot + 1
    x = np.vstack([np.eye(num_onehot), np.zeros((1, num_onehot))])
    y = np.arange(num_classes)
    keep = np.isin(y, list(labels))
    weights = np.vstack([4 * np.eye(num_onehot), np.zeros((1, num_onehot))])
    bias = np.zeros(num_classes)
    bias[-1] = 1
    return LinearSoftmaxModel(weights, bias), LabeledDataset(x[keep], y[keep], num_classes)


def build_graph(edges, models, datasets, from_parents=()):
    """
    @return trained graph and its data registry, without published model FIMs
    """
    umig = Umig()
    for node_id, dat in datasets.items():
        umig.add_node(ModelNode(node_id, model=models[node_id], train_labels=dat.labels_present()))
    for parent, child in edges:
        umig.add_edge(parent, child)
    return umig, NodeDataRegistry.from_datasets(datasets, from_parents)


@pytest.fixture
def graph_builder():
    return build_graph


@pytest.fixture
def one_hot_builder():
    return one_hot_case
