"""
Generators for the learning frameworks that map onto a model inheritance graph.
Every generator returns an untrained skeleton: nodes carry a dataset reference
(see dataset.resolve_dataset_ref) and, where it is fixed by the topology, their label set.
"""
import logging
from typing import Dict

import numpy as np

from dataset import LabelSet
from errors import ParameterError
from node import ModelNode
from umig import Umig, validate_acyclic

TOPOLOGY_DEFAULTS = {
    "fl_star": {"clients": 5, "rounds": 1},
    "fl_multilayer": {"clients": 4, "groups": 2, "rounds": 1},
    "dag_fl": {"clients": 4, "rounds": 3, "parents_per_node": 2},
    "ddpl": {"subtasks": 2, "iterations": 2, "num_classes": 10},
    "il_chain": {"steps": 3, "base_labels": 4, "labels_per_step": 2},
    "tl_chain": {"steps": 3, "base_labels": 4, "labels_per_step": 2},
    "binary_tree": {"depth": 3},
    "multi_root": {"roots": 2, "depth": 1},
}
TOPOLOGIES = list(TOPOLOGY_DEFAULTS.keys())


def _label_range_node(node_id: str, lo: int, hi: int, shard_ref: str = None) -> ModelNode:
    # shard before the label filter, so steps with different label ranges never share rows
    ref = "labels=%d:%d" % (lo, hi)
    if shard_ref:
        ref = "%s;%s" % (shard_ref, ref)
    return ModelNode(node_id, train_labels=LabelSet.of(range(lo, hi)), dataset_ref=ref)


def _fl_star(umig: Umig, clients: int, rounds: int, rng):
    prev_agg = None
    for round_idx in range(rounds):
        agg_id = "r%d_agg" % round_idx
        umig.add_node(ModelNode(agg_id))
        for client_idx in range(clients):
            client_id = "r%d_c%d" % (round_idx, client_idx)
            umig.add_node(ModelNode(client_id, dataset_ref="shard=%d/%d" % (client_idx, clients)))
            if prev_agg is not None:
                umig.add_edge(prev_agg, client_id)
            umig.add_edge(client_id, agg_id)
        prev_agg = agg_id


def _fl_multilayer(umig: Umig, clients: int, groups: int, rounds: int, rng):
    if groups > clients:
        raise ParameterError("cannot split %d clients into %d groups" % (clients, groups))
    group_of_client = np.array_split(np.arange(clients), groups)
    prev_agg = None
    for round_idx in range(rounds):
        global_id = "r%d_global" % round_idx
        umig.add_node(ModelNode(global_id))
        for group_idx, client_idxs in enumerate(group_of_client):
            edge_id = "r%d_g%d" % (round_idx, group_idx)
            umig.add_node(ModelNode(edge_id))
            umig.add_edge(edge_id, global_id)
            for client_idx in client_idxs:
                client_id = "r%d_c%d" % (round_idx, client_idx)
                umig.add_node(ModelNode(client_id, dataset_ref="shard=%d/%d" % (client_idx, clients)))
                if prev_agg is not None:
                    umig.add_edge(prev_agg, client_id)
                umig.add_edge(client_id, edge_id)
        prev_agg = global_id


def _dag_fl(umig: Umig, clients: int, rounds: int, parents_per_node: int, rng):
    """
    No central server: every new model averages a random choice of models from the previous round
    """
    prev_ids = []
    for round_idx in range(rounds):
        curr_ids = []
        for client_idx in range(clients):
            node_id = "r%d_c%d" % (round_idx, client_idx)
            umig.add_node(ModelNode(node_id, dataset_ref="shard=%d/%d" % (client_idx, clients)))
            if prev_ids:
                num_parents = min(parents_per_node, len(prev_ids))
                for parent in sorted(rng.choice(prev_ids, size=num_parents, replace=False)):
                    umig.add_edge(str(parent), node_id)
            curr_ids.append(node_id)
        prev_ids = curr_ids


def _ddpl(umig: Umig, subtasks: int, iterations: int, num_classes: int, rng):
    if subtasks > num_classes:
        raise ParameterError("%d subtasks need at least as many classes, got %d" % (subtasks, num_classes))
    label_blocks = np.array_split(np.arange(num_classes), subtasks)
    prev_agg = None
    for iter_idx in range(iterations):
        agg_id = "i%d_agg" % iter_idx
        umig.add_node(ModelNode(agg_id))
        for task_idx, block in enumerate(label_blocks):
            task_id = "i%d_t%d" % (iter_idx, task_idx)
            umig.add_node(_label_range_node(task_id, int(block[0]), int(block[-1]) + 1))
            if prev_agg is not None:
                umig.add_edge(prev_agg, task_id)
            umig.add_edge(task_id, agg_id)
        prev_agg = agg_id


def _il_chain(umig: Umig, steps: int, base_labels: int, labels_per_step: int, rng):
    # each step sees all samples of a growing label range
    for step in range(steps):
        node_id = "s%d" % step
        umig.add_node(_label_range_node(node_id, 0, base_labels + step * labels_per_step))
        if step > 0:
            umig.add_edge("s%d" % (step - 1), node_id)


def _tl_chain(umig: Umig, steps: int, base_labels: int, labels_per_step: int, rng):
    # each step is a new task on fresh samples
    for step in range(steps):
        node_id = "s%d" % step
        umig.add_node(_label_range_node(
            node_id, 0, base_labels + step * labels_per_step, shard_ref="shard=%d/%d" % (step, steps)))
        if step > 0:
            umig.add_edge("s%d" % (step - 1), node_id)


def _binary_tree(umig: Umig, depth: int, rng):
    # heap numbering: node i has children 2i and 2i + 1
    num_nodes = 2 ** depth - 1
    for idx in range(1, num_nodes + 1):
        node_id = "t%d" % idx
        umig.add_node(ModelNode(node_id, dataset_ref="all" if idx == 1 else "shard=%d/%d" % (idx - 2, num_nodes - 1)))
        if idx > 1:
            umig.add_edge("t%d" % (idx // 2), node_id)


def _multi_root(umig: Umig, roots: int, depth: int, rng):
    """
    Several roots feeding one shared chain of inherited nodes
    """
    for root_idx in range(roots):
        umig.add_node(ModelNode("root%d" % root_idx, dataset_ref="all"))
    for level in range(1, depth + 1):
        node_id = "inh%d" % level
        umig.add_node(ModelNode(node_id, dataset_ref="all"))
        if level == 1:
            for root_idx in range(roots):
                umig.add_edge("root%d" % root_idx, node_id)
        else:
            umig.add_edge("inh%d" % (level - 1), node_id)


GENERATORS = {
    "fl_star": _fl_star,
    "fl_multilayer": _fl_multilayer,
    "dag_fl": _dag_fl,
    "ddpl": _ddpl,
    "il_chain": _il_chain,
    "tl_chain": _tl_chain,
    "binary_tree": _binary_tree,
    "multi_root": _multi_root,
}


def gen_topology(kind: str, params: Dict[str, int] = None, seed: int = 0) -> Umig:
    """
    @param params: overrides for TOPOLOGY_DEFAULTS[kind]; every value must be a positive integer
    @return deterministic graph skeleton with untrained nodes
    """
    if kind not in GENERATORS:
        raise ParameterError("unknown topology %s, options are %s" % (kind, TOPOLOGIES))
    full_params = dict(TOPOLOGY_DEFAULTS[kind])
    for key, value in (params or {}).items():
        if key not in full_params:
            raise ParameterError("topology %s has no parameter %s" % (kind, key))
        full_params[key] = value
    for key, value in full_params.items():
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ParameterError("topology parameter %s must be a positive integer, got %r" % (key, value))

    umig = Umig()
    GENERATORS[kind](umig, rng=np.random.default_rng(seed), **full_params)
    assert validate_acyclic(umig) is None
    logging.info("topology %s %s: %d nodes, %d edges", kind, full_params, len(umig), len(umig.edges))
    return umig
