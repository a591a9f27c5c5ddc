#!/usr/bin/env python
# -*- coding: utf-8 -*-
import re
import sys, os
import glob
import argparse
import logging

import numpy as np
import pandas as pd
import seaborn as sns
from matplotlib import pyplot as plt


def parse_args():
    parser = argparse.ArgumentParser(description="Summarize unlearning reports across inheritance depths")
    parser.add_argument("--result-dir", type=str, default="_output/simulation_depth")
    parser.add_argument("--plot-file", type=str, default="_output/depth.png")
    parser.add_argument("--out-csv", type=str, default="_output/depth.csv")
    parser.add_argument("--log-file", type=str, default="_output/log.txt")
    args = parser.parse_args()
    return args


def node_depth(node_id: str) -> int:
    # binary tree nodes are heap numbered t1, t2, ...
    return int(np.floor(np.log2(int(node_id[1:])))) + 1


def main():
    args = parse_args()
    logging.basicConfig(
        format="%(message)s", filename=args.log_file, level=logging.INFO
    )

    all_res = []
    for res_file in sorted(glob.glob(os.path.join(args.result_dir, "seed_*", "depth_*", "report.csv"))):
        res = pd.read_csv(res_file)
        res["seed"] = int(re.findall(r"seed_(\d+)", res_file)[0])
        res["tree_depth"] = int(re.findall(r"depth_(\d+)", res_file)[0])
        all_res.append(res)
    logging.info("Number of runs: %d", len(all_res))
    all_res = pd.concat(all_res)
    all_res["node_depth"] = all_res.node.map(node_depth)

    summary = all_res.groupby(["method", "node_depth"])[["delta_acc", "time_s"]].agg(["mean", "std"])
    logging.info(summary)
    print(summary)
    summary.to_csv(args.out_csv)

    plot_df = pd.melt(
        all_res,
        id_vars=["method", "node_depth", "seed", "node"],
        value_vars=["delta_acc", "time_s"],
    )
    plot_df["Measure"] = plot_df.variable.map({"delta_acc": "Accuracy difference", "time_s": "Cumulative time (s)"})
    sns.set_context("paper", font_scale=2)
    rel_plt = sns.relplot(
        data=plot_df,
        x="node_depth",
        y="value",
        hue="method",
        col="Measure",
        kind="line",
        style="method",
        facet_kws={"sharey": False, "sharex": True},
        linewidth=3,
    )
    rel_plt.set_titles("{col_name}")
    plt.savefig(args.plot_file)
    print("Fig", args.plot_file)


if __name__ == "__main__":
    main()
