#!/usr/bin/env python
# -*- coding: utf-8 -*-

import sys, os
import argparse
import json

from experiment_config import METHODS, config_from_dict
from topologies import TOPOLOGIES


def parse_args():
    parser = argparse.ArgumentParser(description="create an experiment config")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--data-file", type=str, default=None, help="dataset file; synthetic blobs if not given")
    parser.add_argument("--data-format", type=str, default="raw-f32", choices=["csv", "raw-f32"])
    parser.add_argument("--num-classes", type=int, default=10)
    parser.add_argument("--dim", type=int, default=20)
    parser.add_argument("--samples-per-class", type=int, default=1000)
    parser.add_argument("--topology", type=str, default="fl_star", choices=TOPOLOGIES)
    parser.add_argument("--topology-params", type=str, default="", help="e.g. clients=5,rounds=1")
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--labels", type=str, default=None, help="labels to unlearn, e.g. 0,1")
    parser.add_argument("--overlap-fraction", type=float, default=None, help="build one overlapping label set per root")
    parser.add_argument("--per-node", type=int, default=5, help="size of each overlapping label set")
    parser.add_argument("--eta", type=float, default=0.1)
    parser.add_argument("--methods", type=str, default="fiun,retrain", help="subset of %s" % ",".join(METHODS))
    parser.add_argument("--out-dir", type=str, default="_output")
    parser.add_argument("--out-file", type=str, default="_output/config.json")
    args = parser.parse_args()
    return args


def main():
    args = parse_args()

    topology_params = {}
    for item in filter(None, args.topology_params.split(",")):
        key, value = item.split("=")
        topology_params[key] = int(value)

    unlearn = {"dampen": {"eta": args.eta}}
    if args.overlap_fraction is not None:
        unlearn["overlap"] = {"per_node": args.per_node, "fraction": args.overlap_fraction}
    elif args.labels is not None:
        unlearn["labels"] = [int(label) for label in args.labels.split(",")]

    if args.data_file is not None:
        dataset = {"path": args.data_file, "format": args.data_format, "num_classes": args.num_classes}
    else:
        dataset = {"blobs": {
            "num_classes": args.num_classes,
            "dim": args.dim,
            "samples_per_class": args.samples_per_class,
        }}
    doc = {
        "seed": args.seed,
        "dataset": dataset,
        "topology": {"kind": args.topology, "params": topology_params},
        "train": {"epochs": args.epochs},
        "unlearn": unlearn,
        "methods": args.methods.split(","),
        "out_dir": args.out_dir,
    }
    # fail here rather than in the experiment
    config_from_dict(doc)
    with open(args.out_file, "w") as f:
        json.dump(doc, f, indent=1)


if __name__ == "__main__":
    main()
