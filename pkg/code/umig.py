"""
Unified model inheritance graph: a DAG whose nodes are model states and whose edges are
parameter or task inheritance. Locates discovery nodes and unlearning subgraphs.
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Set

import networkx as nx

from dataset import LabeledDataset, LabelSet
from errors import ParameterError
from fisher import load_fim
from node import ModelNode
from softmax_model import accuracy, load_model

DISCOVERY_MODES = ["metadata", "accuracy"]


class Umig:
    def __init__(self):
        self.graph = nx.DiGraph()

    def add_node(self, node: ModelNode):
        if node.node_id in self.graph:
            raise ParameterError("duplicate node %s" % node.node_id)
        self.graph.add_node(node.node_id, node=node)

    def add_edge(self, parent: str, child: str, weight: float = None):
        """
        @param weight: optional edge weight, carried as metadata only
        """
        for node_id in (parent, child):
            if node_id not in self.graph:
                raise ParameterError("unknown node %s" % node_id)
        self.graph.add_edge(parent, child, weight=weight)
        cycle = validate_acyclic(self)
        if cycle is not None:
            self.graph.remove_edge(parent, child)
            raise ParameterError("edge %s -> %s closes the cycle %s" % (parent, child, cycle))

    def node(self, node_id: str) -> ModelNode:
        if node_id not in self.graph:
            raise ParameterError("unknown node %s" % node_id)
        return self.graph.nodes[node_id]["node"]

    @property
    def node_ids(self) -> List[str]:
        return list(self.graph.nodes)

    @property
    def edges(self):
        return list(self.graph.edges)

    def __len__(self):
        return self.graph.number_of_nodes()

    def __contains__(self, node_id):
        return node_id in self.graph

    def parents(self, node_id: str) -> List[str]:
        return sorted(self.graph.predecessors(node_id))

    def children(self, node_id: str) -> List[str]:
        return sorted(self.graph.successors(node_id))

    def roots(self) -> List[str]:
        return sorted(n for n, deg in self.graph.in_degree() if deg == 0)

    def topological_order(self) -> List[str]:
        return list(nx.lexicographical_topological_sort(self.graph))

    def depth(self, node_id: str) -> int:
        """
        @return length of the longest path from a root to this node
        """
        if node_id not in self.graph:
            raise ParameterError("unknown node %s" % node_id)
        lineage = nx.ancestors(self.graph, node_id) | {node_id}
        return nx.dag_longest_path_length(self.graph.subgraph(lineage), weight=None)

    def copy(self) -> "Umig":
        new_umig = Umig()
        new_umig.graph = self.graph.copy()
        return new_umig

    def with_nodes(self, replacements: Dict[str, ModelNode]) -> "Umig":
        """
        @return copy of the graph where the given nodes are swapped in; this graph is untouched
        """
        new_umig = self.copy()
        for node_id, node in replacements.items():
            assert node.node_id == node_id
            new_umig.graph.nodes[node_id]["node"] = node
        return new_umig

    def subgraph(self, node_ids) -> "Umig":
        sub = Umig()
        sub.graph = self.graph.subgraph(node_ids).copy()
        return sub

    def to_json(self, path, model_paths: Dict[str, str] = None, fim_paths: Dict[str, str] = None, extra: dict = None):
        """
        Write the graph file: nodes with their metadata and artifact paths, and parent -> child edges
        """
        model_paths = model_paths or {}
        fim_paths = fim_paths or {}
        doc = dict(extra or {})
        doc["nodes"] = []
        for node_id in self.node_ids:
            node = self.node(node_id)
            entry = {
                "id": node_id,
                "train_labels": list(node.train_labels.members),
                "dataset_ref": node.dataset_ref,
            }
            if node_id in model_paths:
                entry["model_path"] = model_paths[node_id]
            if node_id in fim_paths:
                entry["fim_path"] = fim_paths[node_id]
            doc["nodes"].append(entry)
        doc["edges"] = []
        for parent, child, weight in self.graph.edges(data="weight"):
            edge = {"parent": parent, "child": child}
            if weight is not None:
                edge["weight"] = weight
            doc["edges"].append(edge)
        with open(path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)

    @staticmethod
    def from_json(path, load_artifacts: bool = True):
        """
        @return (graph, full json document); model and FIM paths are resolved relative to the file
        """
        with open(path) as f:
            doc = json.load(f)
        base_dir = os.path.dirname(os.path.abspath(path))
        umig = Umig()
        for entry in doc.get("nodes", []):
            model = fim = None
            if load_artifacts and entry.get("model_path"):
                model = load_model(os.path.join(base_dir, entry["model_path"]))
            if load_artifacts and entry.get("fim_path"):
                fim = load_fim(os.path.join(base_dir, entry["fim_path"]))
            umig.add_node(ModelNode(
                entry["id"],
                model=model,
                train_labels=LabelSet.of(entry.get("train_labels", [])),
                dataset_ref=entry.get("dataset_ref"),
                model_fim=fim))
        for edge in doc.get("edges", []):
            umig.add_edge(edge["parent"], edge["child"], weight=edge.get("weight"))
        return umig, doc


@dataclass(frozen=True)
class UnlearningGraph:
    """
    Union of the subgraphs rooted at the discovery nodes of one unlearning request
    """
    subgraph: Umig
    discovery_ids: FrozenSet[str]


def validate_acyclic(umig: Umig):
    """
    @return None if the graph is a DAG, otherwise one cycle as a closed path [a, b, ..., a]
    """
    try:
        cycle_edges = nx.find_cycle(umig.graph)
    except nx.NetworkXNoCycle:
        return None
    return [edge[0] for edge in cycle_edges] + [cycle_edges[-1][1]]


def find_discovery_nodes(
        umig: Umig,
        c_f: LabelSet,
        mode: str = "metadata",
        threshold: float = 0.5,
        probe_data: LabeledDataset = None) -> Set[str]:
    """
    Breadth-first over the DAG from its roots. A node is a discovery node if it is the first
    on every path to hit the unlearned labels:
      metadata mode -- its train_labels intersect c_f
      accuracy mode -- its accuracy on probe_data (rows with labels in c_f) exceeds threshold
    """
    if len(c_f) == 0:
        raise ParameterError("the unlearned label set is empty")
    if mode == "metadata":
        def is_hit(node):
            return node.train_labels.intersects(c_f)
    elif mode == "accuracy":
        if probe_data is None:
            raise ParameterError("accuracy discovery needs rows of the labels to unlearn")

        def is_hit(node):
            if node.model is None:
                raise ParameterError("node %s has no model to score" % node.node_id)
            return accuracy(node.model, probe_data) > threshold
    else:
        raise ParameterError("unknown discovery mode %s" % mode)

    tainted = {}
    discovery = set()
    for generation in nx.topological_generations(umig.graph):
        for node_id in sorted(generation):
            hit = is_hit(umig.node(node_id))
            inherited = any(tainted[p] for p in umig.graph.predecessors(node_id))
            tainted[node_id] = hit or inherited
            if hit and not inherited:
                discovery.add(node_id)
    logging.info("discovery nodes for labels %s (%s): %s", c_f, mode, sorted(discovery))
    return discovery


def unlearning_subgraph(umig: Umig, discovery) -> UnlearningGraph:
    """
    @return discovery nodes, all their descendants and the induced edges
    """
    node_ids = set()
    for node_id in discovery:
        if node_id not in umig:
            raise ParameterError("unknown discovery node %s" % node_id)
        node_ids.add(node_id)
        node_ids |= nx.descendants(umig.graph, node_id)
    return UnlearningGraph(umig.subgraph(node_ids), frozenset(discovery))


def reachable_discovery(ugraph: UnlearningGraph, node_id: str) -> Set[str]:
    """
    @return discovery nodes that node_id traces back to (itself included) within the unlearning graph
    """
    if node_id not in ugraph.subgraph:
        raise ParameterError("node %s is not in the unlearning graph" % node_id)
    ancestors = nx.ancestors(ugraph.subgraph.graph, node_id) | {node_id}
    return set(ancestors & ugraph.discovery_ids)
