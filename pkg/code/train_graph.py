"""
Materializes each node's training data and trains the models of a graph skeleton in inheritance order
"""
import logging
import time
from dataclasses import replace
from typing import Dict, List

import progressbar

from dataset import LabeledDataset, resolve_dataset_ref
from errors import ConfigurationError
from experiment_config import derive_seed
from fisher import compute_fim
from softmax_model import LinearSoftmaxModel, TrainConfig, average_models, train
from umig import Umig


class NodeDataRegistry:
    """
    Training data D_j of every node. Nodes without a dataset reference (aggregation nodes)
    get the union of their parents' data, in sorted parent order, and are flagged.
    """
    def __init__(self, umig: Umig, base_dat: LabeledDataset, shard_seed: int):
        self.num_classes = base_dat.num_classes
        self.dim = base_dat.dim
        self.datasets: Dict[str, LabeledDataset] = {}
        self.from_parents = set()
        for node_id in umig.topological_order():
            node = umig.node(node_id)
            if node.dataset_ref is not None:
                self.datasets[node_id] = resolve_dataset_ref(node.dataset_ref, base_dat, shard_seed)
            else:
                parents = umig.parents(node_id)
                if not parents:
                    raise ConfigurationError("root node %s has no dataset" % node_id)
                self.datasets[node_id] = LabeledDataset.merge([self.datasets[p] for p in parents])
                self.from_parents.add(node_id)

    @staticmethod
    def from_datasets(datasets: Dict[str, LabeledDataset], from_parents=()):
        """
        Registry over data that is already materialized, e.g. hand-built test graphs
        """
        registry = NodeDataRegistry.__new__(NodeDataRegistry)
        registry.datasets = dict(datasets)
        registry.from_parents = set(from_parents)
        first = next(iter(datasets.values()))
        registry.num_classes = first.num_classes
        registry.dim = first.dim
        return registry

    def get(self, node_id: str) -> LabeledDataset:
        if node_id not in self.datasets:
            raise ConfigurationError("no dataset for node %s" % node_id)
        return self.datasets[node_id]

    def __contains__(self, node_id):
        return node_id in self.datasets


def node_train_config(train_cfg: TrainConfig, node_id: str) -> TrainConfig:
    return replace(train_cfg, seed=derive_seed(train_cfg.seed, "train:%s" % node_id))


def init_from_parents(parent_models: List[LinearSoftmaxModel], num_classes: int, dim: int) -> LinearSoftmaxModel:
    if parent_models:
        return average_models(parent_models)
    return LinearSoftmaxModel.zeros(num_classes, dim)


def train_graph(
        umig: Umig,
        registry: NodeDataRegistry,
        train_cfg: TrainConfig,
        n_jobs: int = 1,
        show_progress: bool = False) -> Umig:
    """
    Visit nodes in topological order. A node starts from the mean of its parents' models
    (zeros for roots); nodes with their own data are then trained on it, aggregation nodes
    keep the mean. The model FIM over D_j is computed right after and published with the model.
    @return new graph; the skeleton is not modified
    """
    order = umig.topological_order()
    trained = {}
    bar = progressbar.ProgressBar(maxval=len(order)).start() if show_progress else None
    for idx, node_id in enumerate(order):
        node = umig.node(node_id)
        dat = registry.get(node_id)
        if dat.size == 0:
            raise ConfigurationError("node %s has no training data" % node_id)
        st_time = time.perf_counter()
        model = init_from_parents(
            [trained[p].model for p in umig.parents(node_id)], registry.num_classes, registry.dim)
        if node_id not in registry.from_parents:
            model = train(model, dat, node_train_config(train_cfg, node_id))
        model_fim = compute_fim(model, dat, n_jobs=n_jobs)
        trained[node_id] = node.replace(model=model, train_labels=dat.labels_present(), model_fim=model_fim)
        logging.debug("trained %s on %d rows (labels %s) in %.3fs", node_id, dat.size, trained[node_id].train_labels, time.perf_counter() - st_time)
        if bar is not None:
            bar.update(idx + 1)
    if bar is not None:
        bar.finish()
    logging.info("trained %d nodes", len(order))
    return umig.with_nodes(trained)
