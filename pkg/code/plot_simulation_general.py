#!/usr/bin/env python
# -*- coding: utf-8 -*-
import re
import os
import glob
import argparse
import logging

import pandas as pd
import seaborn as sns
from matplotlib import pyplot as plt

MEASURES = {
    "ad_f": "AD_f",
    "ad_r": "AD_r",
    "delta_acc": "Accuracy difference",
    "time_s": "Cumulative time (s)",
}


def parse_args():
    parser = argparse.ArgumentParser(description="Tabulate unlearning reports across topologies and forget set sizes")
    parser.add_argument("--result-dir", type=str, default="_output/simulation_general")
    parser.add_argument("--plot-file", type=str, default="_output/general.png")
    parser.add_argument("--out-csv", type=str, default="_output/general.csv")
    parser.add_argument("--log-file", type=str, default="_output/log.txt")
    args = parser.parse_args()
    return args


def load_reports(result_dir: str) -> pd.DataFrame:
    all_res = []
    pattern = os.path.join(result_dir, "seed_*", "topology_*", "num_cf_*", "report.csv")
    for res_file in sorted(glob.glob(pattern)):
        res = pd.read_csv(res_file)
        res["seed"] = int(re.findall(r"seed_(\d+)", res_file)[0])
        res["topology"] = re.findall(r"topology_(\w+?)/", res_file.replace(os.sep, "/"))[0]
        all_res.append(res)
    logging.info("Number of runs: %d", len(all_res))
    return pd.concat(all_res)


def summarize(all_res: pd.DataFrame) -> pd.DataFrame:
    """
    One row per (topology, num_cf, method): accuracies averaged over the affected nodes of each run,
    time as the largest cumulative time in the run, then mean and std across seeds
    """
    keys = ["topology", "num_cf", "method", "seed"]
    per_run = all_res.groupby(keys).agg(
        ad_f=("ad_f", "mean"),
        ad_r=("ad_r", "mean"),
        delta_acc=("delta_acc", "mean"),
        time_s=("time_s", "max"),
    ).reset_index()
    return per_run.groupby(keys[:-1])[list(MEASURES)].agg(["mean", "std"])


def main():
    args = parse_args()
    logging.basicConfig(
        format="%(message)s", filename=args.log_file, level=logging.INFO
    )

    all_res = load_reports(args.result_dir)
    summary = summarize(all_res)
    logging.info(summary)
    print(summary)
    summary.to_csv(args.out_csv)

    plot_df = pd.melt(
        all_res,
        id_vars=["topology", "num_cf", "method", "seed", "node"],
        value_vars=list(MEASURES),
    )
    plot_df["Measure"] = plot_df.variable.map(MEASURES)
    sns.set_context("paper", font_scale=1.5)
    cat_plt = sns.catplot(
        data=plot_df,
        x="num_cf",
        y="value",
        hue="method",
        col="Measure",
        row="topology",
        kind="bar",
        sharey=False,
    )
    cat_plt.set_titles("{row_name}: {col_name}")
    plt.savefig(args.plot_file)
    print("Fig", args.plot_file)


if __name__ == "__main__":
    main()
