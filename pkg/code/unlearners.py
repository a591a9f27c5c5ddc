"""
Unlearning methods over a model inheritance graph.

FIUn dampens every node of the unlearning graph independently and in parallel. The baselines
(re-training, fine-tuning, gradient ascent) walk the unlearning graph in inheritance order.
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np
from joblib import Parallel, delayed

from dataset import LabeledDataset, LabelSet, split_by_labels
from errors import ConfigurationError, ParameterError
from fisher import DampenConfig, DiagonalFim, compute_fim, dampen, merge_fims
from softmax_model import LinearSoftmaxModel, TrainConfig, gradient_ascent, train
from train_graph import NodeDataRegistry, init_from_parents, node_train_config
from umig import (
    Umig,
    UnlearningGraph,
    find_discovery_nodes,
    reachable_discovery,
    unlearning_subgraph,
)
from unlearn_report import UnlearnReport, evaluate, with_timing

MERGE_STRATEGIES = ["max", "sequential"]
BASELINES = ["retrain", "finetune", "ga"]


@dataclass(frozen=True)
class UnlearnRequest:
    """
    @param c_f: labels to unlearn
    @param merge_strategy: "max" dampens once with the element-wise max of the reachable unlearning FIMs,
        "sequential" dampens once per reachable unlearning FIM
    @param recompute_model_fims: ignore model FIMs published with the nodes
    @param finetune_epochs: epochs of the fine-tuning baseline
    @param ga_epochs: epochs of the gradient ascent baseline
    """
    c_f: LabelSet
    dampen_cfg: DampenConfig = field(default_factory=DampenConfig)
    discovery_mode: str = "metadata"
    discovery_threshold: float = 0.5
    probe_data: LabeledDataset = None
    merge_strategy: str = "max"
    recompute_model_fims: bool = False
    finetune_epochs: int = 5
    ga_epochs: int = 5

    def __post_init__(self):
        if len(self.c_f) == 0:
            raise ParameterError("the unlearned label set is empty")
        if self.merge_strategy not in MERGE_STRATEGIES:
            raise ParameterError("unknown merge strategy %s" % self.merge_strategy)
        if self.finetune_epochs < 1:
            raise ParameterError("finetune_epochs must be at least 1")
        if self.ga_epochs < 0:
            raise ParameterError("ga_epochs must be non-negative")


def _check_models(umig: Umig, node_ids):
    for node_id in node_ids:
        if umig.node(node_id).model is None:
            raise ConfigurationError("node %s has no model" % node_id)


def _locate(umig: Umig, request: UnlearnRequest) -> Tuple[UnlearningGraph, float]:
    st_time = time.perf_counter()
    discovery = find_discovery_nodes(
        umig,
        request.c_f,
        mode=request.discovery_mode,
        threshold=request.discovery_threshold,
        probe_data=request.probe_data)
    ugraph = unlearning_subgraph(umig, discovery)
    return ugraph, time.perf_counter() - st_time


def _timed(func, *args, **kwargs):
    st_time = time.perf_counter()
    res = func(*args, **kwargs)
    return res, time.perf_counter() - st_time


def _unlearning_fim(model: LinearSoftmaxModel, forget_dat: LabeledDataset, n_jobs: int) -> DiagonalFim:
    if forget_dat.size == 0:
        # only reachable in accuracy discovery mode
        return DiagonalFim(np.zeros(model.num_params), 0)
    return compute_fim(model, forget_dat, n_jobs=n_jobs)


def _dampen_node(
        model: LinearSoftmaxModel,
        model_fim: DiagonalFim,
        unlearn_fims: List[DiagonalFim],
        cfg: DampenConfig,
        merge_strategy: str):
    """
    @return updated model, triggered indices, number of dampen passes, merge seconds, dampen seconds
    """
    if merge_strategy == "max":
        merged_fim, merge_time = _timed(merge_fims, unlearn_fims)
        (new_model, triggered), dampen_time = _timed(dampen, model, model_fim, merged_fim, cfg)
        return new_model, triggered, 1, merge_time, dampen_time

    st_time = time.perf_counter()
    new_model = model
    all_triggered = []
    for fim in unlearn_fims:
        new_model, triggered = dampen(new_model, model_fim, fim, cfg)
        all_triggered.append(triggered)
    triggered = np.unique(np.concatenate(all_triggered))
    return new_model, triggered, len(unlearn_fims), 0.0, time.perf_counter() - st_time


class Unlearner:
    name = None

    def __init__(self, n_jobs: int = 1):
        self.n_jobs = n_jobs

    def unlearn(self, umig: Umig, request: UnlearnRequest, registry: NodeDataRegistry) -> Tuple[Umig, UnlearnReport]:
        raise NotImplementedError()

    def _empty_result(self, umig: Umig, request: UnlearnRequest, locate_time: float):
        logging.info("%s: no node was trained on labels %s", self.name, request.c_f)
        return umig.copy(), UnlearnReport(
            self.name, request.c_f, [], {}, phase_times={"discovery": locate_time})


class FIUnUnlearner(Unlearner):
    """
    Fisher inheritance unlearning: one unlearning FIM per discovery node, then every node of the
    unlearning graph merges the FIMs it traces back to and dampens its own parameters.
    No node waits for another, so the result is the same for every worker count.
    """
    name = "fiun"

    def unlearn(self, umig: Umig, request: UnlearnRequest, registry: NodeDataRegistry) -> Tuple[Umig, UnlearnReport]:
        ugraph, locate_time = _locate(umig, request)
        sub = ugraph.subgraph
        if len(sub) == 0:
            return self._empty_result(umig, request, locate_time)
        node_ids = sorted(sub.node_ids)
        _check_models(umig, node_ids)
        pool = Parallel(n_jobs=self.n_jobs, prefer="threads")

        # unlearning FIMs of the discovery nodes
        st_time = time.perf_counter()
        discovery_ids = sorted(ugraph.discovery_ids)
        inner_jobs = self.n_jobs if len(discovery_ids) == 1 else 1
        fim_results = pool(
            delayed(_timed)(
                _unlearning_fim,
                umig.node(d).model,
                split_by_labels(registry.get(d), request.c_f)[0],
                inner_jobs)
            for d in discovery_ids)
        unlearn_fims = {d: fim for d, (fim, _) in zip(discovery_ids, fim_results)}
        unlearn_fim_times = {d: t for d, (_, t) in zip(discovery_ids, fim_results)}
        unlearn_fim_phase = time.perf_counter() - st_time
        for d in discovery_ids:
            logging.info("unlearning FIM %s: %d samples, %.4fs", d, unlearn_fims[d].sample_count, unlearn_fim_times[d])

        # model FIMs, unless published with the nodes
        st_time = time.perf_counter()
        missing = [n for n in node_ids if request.recompute_model_fims or umig.node(n).model_fim is None]
        model_fim_results = pool(
            delayed(_timed)(compute_fim, umig.node(n).model, registry.get(n), 1)
            for n in missing)
        model_fims = {n: umig.node(n).model_fim for n in node_ids}
        model_fim_times = {n: 0.0 for n in node_ids}
        for n, (fim, elapsed) in zip(missing, model_fim_results):
            model_fims[n] = fim
            model_fim_times[n] = elapsed
        model_fim_phase = time.perf_counter() - st_time

        # merge and dampen every node
        st_time = time.perf_counter()
        reachable = {n: sorted(reachable_discovery(ugraph, n)) for n in node_ids}
        dampen_results = pool(
            delayed(_dampen_node)(
                umig.node(n).model,
                model_fims[n],
                [unlearn_fims[d] for d in reachable[n]],
                request.dampen_cfg,
                request.merge_strategy)
            for n in node_ids)
        dampen_phase = time.perf_counter() - st_time

        replacements = {}
        triggered = {}
        passes = {}
        times = {}
        for n, (new_model, node_triggered, num_passes, merge_time, dampen_time) in zip(node_ids, dampen_results):
            # the published model FIM no longer describes the dampened model
            replacements[n] = umig.node(n).replace(model=new_model, model_fim=None)
            triggered[n] = node_triggered
            passes[n] = num_passes
            times[n] = (
                max(unlearn_fim_times[d] for d in reachable[n])
                + model_fim_times[n] + merge_time + dampen_time)
            logging.info("node %s: %d passes, %d parameters dampened", n, num_passes, node_triggered.size)
        new_umig = umig.with_nodes(replacements)

        before = evaluate(umig, request.c_f, registry, node_ids)
        metrics = with_timing(
            evaluate(new_umig, request.c_f, registry, node_ids),
            times,
            {n: int(t.size) for n, t in triggered.items()},
            passes)
        report = UnlearnReport(
            self.name,
            request.c_f,
            discovery_ids,
            metrics,
            phase_times={
                "discovery": locate_time,
                "unlearning_fim": unlearn_fim_phase,
                "model_fim": model_fim_phase,
                "merge_dampen": dampen_phase,
            },
            triggered={n: t.tolist() for n, t in triggered.items()},
            before=before)
        logging.info("fiun phases %s", report.phase_times)
        return new_umig, report


class SequentialBaseline(Unlearner):
    """
    Visits the unlearning graph in topological order; a node can only start once its parents are done.
    A node's cumulative time is its own time plus the largest cumulative time among its parents.
    """
    def __init__(self, train_cfg: TrainConfig, n_jobs: int = 1):
        super().__init__(n_jobs)
        self.train_cfg = train_cfg

    def _update_node(self, umig: Umig, new_models: Dict[str, LinearSoftmaxModel], node_id: str, request: UnlearnRequest, registry: NodeDataRegistry) -> LinearSoftmaxModel:
        raise NotImplementedError()

    def unlearn(self, umig: Umig, request: UnlearnRequest, registry: NodeDataRegistry) -> Tuple[Umig, UnlearnReport]:
        ugraph, locate_time = _locate(umig, request)
        sub = ugraph.subgraph
        if len(sub) == 0:
            return self._empty_result(umig, request, locate_time)
        node_ids = sorted(sub.node_ids)
        _check_models(umig, node_ids)

        st_time = time.perf_counter()
        new_models = {}
        cumulative = {}
        for node_id in sub.topological_order():
            new_models[node_id], own_time = _timed(self._update_node, umig, new_models, node_id, request, registry)
            cumulative[node_id] = own_time + max((cumulative[p] for p in sub.parents(node_id)), default=0.0)
            logging.debug("%s %s: %.4fs own, %.4fs cumulative", self.name, node_id, own_time, cumulative[node_id])
        unlearn_phase = time.perf_counter() - st_time

        new_umig = umig.with_nodes({
            n: umig.node(n).replace(model=new_models[n], model_fim=None) for n in node_ids})
        report = UnlearnReport(
            self.name,
            request.c_f,
            sorted(ugraph.discovery_ids),
            with_timing(evaluate(new_umig, request.c_f, registry, node_ids), cumulative),
            phase_times={"discovery": locate_time, "unlearn": unlearn_phase},
            before=evaluate(umig, request.c_f, registry, node_ids))
        logging.info("%s phases %s", self.name, report.phase_times)
        return new_umig, report


class RetrainUnlearner(SequentialBaseline):
    """
    Rebuild every model of the unlearning graph without the unlearned data: start from the mean of
    the parents (already retrained when they are in the unlearning graph, zeros for roots) and train
    on the node's retained data. Aggregation nodes keep the mean, as when the graph was first trained.
    """
    name = "retrain"

    def _update_node(self, umig, new_models, node_id, request, registry):
        parent_models = [new_models.get(p, umig.node(p).model) for p in umig.parents(node_id)]
        model = init_from_parents(parent_models, registry.num_classes, registry.dim)
        if node_id in registry.from_parents:
            return model
        _, d_r = split_by_labels(registry.get(node_id), request.c_f)
        if d_r.size == 0:
            return model
        return train(model, d_r, node_train_config(self.train_cfg, node_id))


class FinetuneUnlearner(SequentialBaseline):
    name = "finetune"

    def _update_node(self, umig, new_models, node_id, request, registry):
        model = umig.node(node_id).model
        _, d_r = split_by_labels(registry.get(node_id), request.c_f)
        if d_r.size == 0:
            return model.copy()
        cfg = replace(node_train_config(self.train_cfg, node_id), epochs=request.finetune_epochs)
        return train(model, d_r, cfg)


class GradientAscentUnlearner(SequentialBaseline):
    name = "ga"

    def _update_node(self, umig, new_models, node_id, request, registry):
        d_f, _ = split_by_labels(registry.get(node_id), request.c_f)
        return gradient_ascent(
            umig.node(node_id).model, d_f, node_train_config(self.train_cfg, node_id), request.ga_epochs)


def get_unlearner(method: str, train_cfg: TrainConfig = None, n_jobs: int = 1) -> Unlearner:
    if method == "fiun":
        return FIUnUnlearner(n_jobs)
    if train_cfg is None:
        raise ParameterError("baseline %s needs a training config" % method)
    if method == "retrain":
        return RetrainUnlearner(train_cfg, n_jobs)
    elif method == "finetune":
        return FinetuneUnlearner(train_cfg, n_jobs)
    elif method in ("ga", "gradient_ascent"):
        return GradientAscentUnlearner(train_cfg, n_jobs)
    raise ParameterError("unknown unlearning method %s" % method)


def run_fiun(umig: Umig, request: UnlearnRequest, registry: NodeDataRegistry, n_jobs: int = 1) -> Tuple[Umig, UnlearnReport]:
    return FIUnUnlearner(n_jobs).unlearn(umig, request, registry)


def run_baseline(umig: Umig, request: UnlearnRequest, kind: str, train_cfg: TrainConfig, registry: NodeDataRegistry) -> Tuple[Umig, UnlearnReport]:
    if kind not in BASELINES and kind != "gradient_ascent":
        raise ParameterError("unknown baseline %s, options are %s" % (kind, BASELINES))
    return get_unlearner(kind, train_cfg).unlearn(umig, request, registry)
