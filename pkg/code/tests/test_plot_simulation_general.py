import math

import pandas as pd
import pytest

from dataset import LabelSet
from plot_simulation_general import MEASURES, load_reports, summarize
from unlearn_report import NodeMetrics, UnlearnReport


def _write_run(result_dir, seed, topology, times, ad_f=0.25):
    run_dir = result_dir / ("seed_%d" % seed) / ("topology_%s" % topology) / "num_cf_1"
    run_dir.mkdir(parents=True)
    reports = []
    for method, method_times in times.items():
        nodes = {
            node_id: NodeMetrics(ad_f=ad_f, ad_r=0.75, unlearn_time=t) for node_id, t in method_times.items()
        }
        reports.append(UnlearnReport(method, LabelSet.of([0]), ["a"], nodes))
    pd.concat([r.to_dataframe() for r in reports]).to_csv(run_dir / "report.csv", index=False)


def test_general_summary_table(tmp_path):
    _write_run(tmp_path, 0, "fl_star", {"fiun": {"a": 1.0, "b": 3.0}, "retrain": {"a": 4.0, "b": 9.0}})
    _write_run(tmp_path, 1, "fl_star", {"fiun": {"a": 2.0, "b": 5.0}, "retrain": {"a": 4.0, "b": 11.0}})
    _write_run(tmp_path, 0, "tl_chain", {"fiun": {"a": 1.0}}, ad_f=0.0)

    all_res = load_reports(str(tmp_path))
    assert set(all_res.topology) == {"fl_star", "tl_chain"}
    assert set(all_res.seed) == {0, 1}

    summary = summarize(all_res)
    assert list(summary.columns.get_level_values(0).unique()) == list(MEASURES)
    assert len(summary) == 3

    fiun = summary.loc[("fl_star", 1, "fiun")]
    # cumulative time is the largest node time of each run
    assert fiun[("time_s", "mean")] == pytest.approx(4.0)
    assert fiun[("time_s", "std")] == pytest.approx(math.sqrt(2))
    assert fiun[("ad_f", "mean")] == pytest.approx(0.25)
    assert fiun[("delta_acc", "mean")] == pytest.approx(0.5)
    assert summary.loc[("fl_star", 1, "retrain")][("time_s", "mean")] == pytest.approx(10.0)

    chain = summary.loc[("tl_chain", 1, "fiun")]
    assert chain[("delta_acc", "mean")] == pytest.approx(0.75)
    assert math.isnan(chain[("time_s", "std")])
