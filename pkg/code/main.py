#!/usr/bin/env python
# -*- coding: utf-8 -*-

import sys, os
import argparse
import logging
import time
from typing import Dict, List

import pandas as pd

from dataset import LabeledDataset, LabelSet, load_dataset, split_by_labels, synth_gaussian_blobs, build_overlap_label_sets
from errors import ConfigurationError, StageError
from experiment_config import ExperimentConfig, METHODS, derive_seed, parse_config, with_overrides, config_to_dict
from fisher import save_fim
from softmax_model import save_model, export_model_json
from topologies import gen_topology
from train_graph import NodeDataRegistry, train_graph
from umig import Umig
from unlearn_report import UnlearnReport, evaluate, speedup
from unlearners import UnlearnRequest, get_unlearner

COMMANDS = ["gen-topo", "train", "unlearn", "evaluate", "compare", "run"]
GRAPH_FILE = "graph.json"


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="simulate unlearning over a graph of inherited models")
    parser.add_argument("command", type=str, choices=COMMANDS)
    parser.add_argument("--config", type=str, default=None, help="experiment config (JSON)")
    parser.add_argument("--workers", type=int, default=None, help="worker threads; defaults to the number of CPUs")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--labels", type=str, default=None, help="labels to unlearn, e.g. 1,2")
    parser.add_argument("--method", type=str, default=None, help="comma separated subset of %s" % ",".join(METHODS))
    parser.add_argument("--seed", type=int, default=None, help="global seed")
    parser.add_argument("--graph", type=str, default=None, help="graph to evaluate; defaults to the trained graph in --out")
    parser.add_argument("--reports", type=str, default=None, help="comma separated report JSONs to compare, first one is the reference")
    parser.add_argument("--log-file", type=str, default=None, help="defaults to <out>/log.txt")
    args = parser.parse_args(argv)
    if args.labels is not None:
        args.labels = [int(label) for label in args.labels.split(",") if label]
    if args.method is not None:
        args.method = args.method.split(",")
    if args.reports is not None:
        args.reports = args.reports.split(",")
    return args


def load_base_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if cfg.dataset.path is not None:
        return load_dataset(cfg.dataset.path, cfg.dataset.format, cfg.dataset.num_classes)
    return synth_gaussian_blobs(cfg.dataset.blobs.to_spec(derive_seed(cfg.seed, "dataset")))


def write_graph(umig: Umig, out_dir: str, extra: dict):
    """
    Graph JSON plus one checkpoint (binary and JSON export) and one FIM file per node
    """
    for sub_dir in ("models", "fims"):
        os.makedirs(os.path.join(out_dir, sub_dir), exist_ok=True)
    model_paths = {}
    fim_paths = {}
    for node_id in umig.node_ids:
        node = umig.node(node_id)
        if node.model is not None:
            model_paths[node_id] = "models/%s.bin" % node_id
            save_model(node.model, os.path.join(out_dir, model_paths[node_id]))
            export_model_json(node.model, os.path.join(out_dir, "models/%s.json" % node_id))
        if node.model_fim is not None:
            fim_paths[node_id] = "fims/%s.fim" % node_id
            save_fim(node.model_fim, os.path.join(out_dir, fim_paths[node_id]))
    umig.to_json(os.path.join(out_dir, GRAPH_FILE), model_paths, fim_paths, extra)


def gen_topo_stage(cfg: ExperimentConfig, base_dat: LabeledDataset):
    """
    Builds the skeleton. With an overlap setting, root i is given the labels of the i-th
    overlapping label set and none of the other roots' unlearned labels.
    """
    umig = gen_topology(cfg.topology.kind, cfg.topology.params, derive_seed(cfg.seed, "topology"))
    c_f = cfg.unlearn.label_set
    overlap = cfg.unlearn.overlap
    if overlap is not None:
        roots = umig.roots()
        label_sets = build_overlap_label_sets(
            base_dat.num_classes, overlap.per_node, len(roots), overlap.fraction, derive_seed(cfg.seed, "overlap"))
        c_f = LabelSet()
        for label_set in label_sets:
            c_f = c_f.union(label_set)
        replacements = {}
        for root_id, label_set in zip(roots, label_sets):
            node = umig.node(root_id)
            excluded = [label for label in c_f if label not in label_set]
            ref = node.dataset_ref or "all"
            if excluded:
                ref = "%s;exclude=%s" % (ref, ",".join(str(label) for label in excluded))
            replacements[root_id] = node.replace(dataset_ref=ref)
            logging.info("root %s unlearns labels %s", root_id, label_set)
        umig = umig.with_nodes(replacements)
    c_f.check(base_dat.num_classes)
    extra = {
        "num_classes": base_dat.num_classes,
        "dim": base_dat.dim,
        "c_f": list(c_f.members),
        "topology": cfg.topology.kind,
        "seed": cfg.seed,
    }
    os.makedirs(cfg.out_dir, exist_ok=True)
    umig.to_json(os.path.join(cfg.out_dir, GRAPH_FILE), extra=extra)
    return umig, extra


def _read_graph(path):
    if not os.path.exists(path):
        raise ConfigurationError("no graph at %s, run the previous stage first" % path)
    return Umig.from_json(path)


def _extra_fields(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k not in ("nodes", "edges")}


def train_stage(cfg: ExperimentConfig, base_dat: LabeledDataset, show_progress: bool = False):
    skeleton, doc = _read_graph(os.path.join(cfg.out_dir, GRAPH_FILE))
    registry = NodeDataRegistry(skeleton, base_dat, derive_seed(cfg.seed, "shards"))
    st_time = time.perf_counter()
    trained = train_graph(skeleton, registry, cfg.train.to_train_config(cfg.seed), n_jobs=cfg.n_jobs, show_progress=show_progress)
    logging.info("training took %.2fs", time.perf_counter() - st_time)
    write_graph(trained, cfg.out_dir, _extra_fields(doc))
    return trained


def _unlearn_labels(cfg: ExperimentConfig, doc: dict) -> LabelSet:
    if cfg.unlearn.labels is not None:
        return LabelSet.of(cfg.unlearn.labels)
    return LabelSet.of(doc["c_f"])


def unlearn_stage(cfg: ExperimentConfig, base_dat: LabeledDataset) -> Dict[str, UnlearnReport]:
    trained, doc = _read_graph(os.path.join(cfg.out_dir, GRAPH_FILE))
    registry = NodeDataRegistry(trained, base_dat, derive_seed(cfg.seed, "shards"))
    c_f = _unlearn_labels(cfg, doc)
    c_f.check(base_dat.num_classes)
    request = UnlearnRequest(
        c_f,
        dampen_cfg=cfg.unlearn.dampen.to_dampen_config(),
        discovery_mode=cfg.unlearn.discovery_mode,
        discovery_threshold=cfg.unlearn.discovery_threshold,
        probe_data=split_by_labels(base_dat, c_f)[0] if cfg.unlearn.discovery_mode == "accuracy" else None,
        merge_strategy=cfg.unlearn.merge_strategy,
        recompute_model_fims=cfg.unlearn.recompute_model_fims,
        finetune_epochs=cfg.unlearn.finetune_epochs,
        ga_epochs=cfg.unlearn.ga_epochs)
    train_cfg = cfg.train.to_train_config(cfg.seed)

    reports = {}
    for method in cfg.methods:
        unlearner = get_unlearner(method, train_cfg, n_jobs=cfg.n_jobs)
        new_umig, report = unlearner.unlearn(trained, request, registry)
        method_dir = os.path.join(cfg.out_dir, method)
        write_graph(new_umig, method_dir, dict(_extra_fields(doc), c_f=list(c_f.members), method=method))
        report.to_json(os.path.join(method_dir, "report.json"))
        report.to_csv(os.path.join(method_dir, "report.csv"))
        logging.info("%s done, max cumulative time %.4fs", method, report.max_cumulative_time)
        reports[method] = report
    pd.concat([r.to_dataframe() for r in reports.values()]).to_csv(os.path.join(cfg.out_dir, "report.csv"), index=False)
    return reports


def evaluate_stage(cfg: ExperimentConfig, base_dat: LabeledDataset, graph_path: str = None) -> pd.DataFrame:
    graph_path = graph_path or os.path.join(cfg.out_dir, GRAPH_FILE)
    umig, doc = _read_graph(graph_path)
    registry = NodeDataRegistry(umig, base_dat, derive_seed(cfg.seed, "shards"))
    c_f = _unlearn_labels(cfg, doc)
    for node_id in umig.node_ids:
        if umig.node(node_id).model is None:
            raise ConfigurationError("node %s in %s has no model" % (node_id, graph_path))
    metrics = evaluate(umig, c_f, registry)
    df = pd.DataFrame([{
        "node": node_id,
        "num_cf": len(c_f),
        "ad_f": m.ad_f,
        "ad_r": m.ad_r,
        "delta_acc": m.delta_acc,
        "empty_f": m.empty_f,
        "empty_r": m.empty_r,
    } for node_id, m in sorted(metrics.items())])
    out_csv = os.path.join(os.path.dirname(os.path.abspath(graph_path)), "evaluate.csv")
    df.to_csv(out_csv, index=False)
    logging.info("evaluation written to %s", out_csv)
    return df


def compare_stage(report_paths: List[str], out_dir: str) -> pd.DataFrame:
    """
    Speedup of the first report over each of the others
    """
    if not report_paths or len(report_paths) < 2:
        raise ConfigurationError("compare needs at least two reports")
    reports = [UnlearnReport.from_json(path) for path in report_paths]
    reference = reports[0]
    df = pd.DataFrame([{
        "method": reference.method,
        "baseline": other.method,
        "time_s": reference.max_cumulative_time,
        "baseline_time_s": other.max_cumulative_time,
        "speedup": speedup(reference, other),
    } for other in reports[1:]])
    os.makedirs(out_dir, exist_ok=True)
    df.to_csv(os.path.join(out_dir, "speedup.csv"), index=False)
    return df


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except (ValueError, OSError) as e:
        raise StageError(name, e)


def run_experiment(cfg: ExperimentConfig, show_progress: bool = False) -> int:
    """
    gen-topo, train, unlearn with every configured method, evaluate and compare
    @return exit status, 0 iff every stage succeeded
    """
    try:
        base_dat = _stage("dataset", load_base_dataset, cfg)
        _stage("gen-topo", gen_topo_stage, cfg, base_dat)
        _stage("train", train_stage, cfg, base_dat, show_progress=show_progress)
        reports = _stage("unlearn", unlearn_stage, cfg, base_dat)
        _stage("evaluate", evaluate_stage, cfg, base_dat)
        if len(reports) > 1:
            _stage("compare", compare_stage, [os.path.join(cfg.out_dir, m, "report.json") for m in cfg.methods], cfg.out_dir)
    except StageError as e:
        logging.error(str(e))
        print(str(e), file=sys.stderr)
        return 1
    return 0


def run_command(args) -> int:
    if args.command == "compare":
        out_dir = args.out or "_output"
        try:
            df = compare_stage(args.reports, out_dir)
        except (ValueError, OSError) as e:
            print(str(StageError("compare", e)), file=sys.stderr)
            return 1
        print(df)
        return 0

    if args.config is None:
        print("%s needs --config" % args.command, file=sys.stderr)
        return 2
    try:
        cfg = with_overrides(
            parse_config(args.config),
            workers=args.workers,
            out_dir=args.out,
            labels=args.labels,
            methods=args.method,
            seed=args.seed)
    except (ValueError, OSError) as e:
        print(str(StageError("config", e)), file=sys.stderr)
        return 1
    os.makedirs(cfg.out_dir, exist_ok=True)
    logging.basicConfig(
        format="%(message)s", filename=args.log_file or os.path.join(cfg.out_dir, "log.txt"), level=logging.INFO
    )
    logging.info(args)
    logging.info(config_to_dict(cfg))

    if args.command == "run":
        return run_experiment(cfg, show_progress=True)
    try:
        base_dat = _stage("dataset", load_base_dataset, cfg)
        if args.command == "gen-topo":
            _stage("gen-topo", gen_topo_stage, cfg, base_dat)
        elif args.command == "train":
            _stage("train", train_stage, cfg, base_dat, show_progress=True)
        elif args.command == "unlearn":
            _stage("unlearn", unlearn_stage, cfg, base_dat)
        elif args.command == "evaluate":
            print(_stage("evaluate", evaluate_stage, cfg, base_dat, args.graph))
    except StageError as e:
        logging.error(str(e))
        print(str(e), file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    args = parse_args(argv)
    sys.exit(run_command(args))


if __name__ == "__main__":
    main()
