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
    parser = argparse.ArgumentParser(description="Summarize unlearning reports across label overlap settings")
    parser.add_argument("--result-dir", type=str, default="_output/simulation_overlap")
    parser.add_argument("--plot-file", type=str, default="_output/overlap.png")
    parser.add_argument("--out-csv", type=str, default="_output/overlap.csv")
    parser.add_argument("--log-file", type=str, default="_output/log.txt")
    args = parser.parse_args()
    return args


def main():
    args = parse_args()
    logging.basicConfig(
        format="%(message)s", filename=args.log_file, level=logging.INFO
    )

    all_res = []
    for res_file in sorted(glob.glob(os.path.join(args.result_dir, "seed_*", "overlap_*", "report.csv"))):
        res = pd.read_csv(res_file)
        res["seed"] = int(re.findall(r"seed_(\d+)", res_file)[0])
        res["overlap"] = float(re.findall(r"overlap_([\d.]+)", res_file)[0])
        all_res.append(res)
    logging.info("Number of runs: %d", len(all_res))
    all_res = pd.concat(all_res)

    # The shared inherited node is the one affected by both roots
    inherited = all_res[all_res.node.str.startswith("inh")]
    summary = inherited.groupby(["method", "overlap"])[["ad_f", "ad_r", "delta_acc", "time_s"]].agg(["mean", "std"])
    logging.info(summary)
    print(summary)
    summary.to_csv(args.out_csv)

    plot_df = pd.melt(
        inherited,
        id_vars=["method", "overlap", "seed", "node"],
        value_vars=["ad_f", "ad_r", "time_s"],
    )
    plot_df["Measure"] = plot_df.variable.map({"ad_f": "AD_f", "ad_r": "AD_r", "time_s": "Cumulative time (s)"})
    sns.set_context("paper", font_scale=2)
    rel_plt = sns.relplot(
        data=plot_df,
        x="overlap",
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
