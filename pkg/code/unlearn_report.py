"""
Per-node unlearning metrics and their JSON/CSV reports
"""
import json
import math
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, Iterable, List

import pandas as pd

from dataset import LabelSet, split_by_labels
from errors import ConfigurationError, ParameterError
from softmax_model import accuracy
from umig import Umig

REPORT_COLUMNS = ["method", "node", "num_cf", "ad_f", "ad_r", "delta_acc", "time_s"]


@dataclass(frozen=True)
class NodeMetrics:
    """
    ad_f: accuracy on the node's rows with unlearned labels; ad_r: accuracy on the remaining rows.
    An empty split has accuracy 0 and sets the matching empty flag.
    """
    ad_f: float
    ad_r: float
    unlearn_time: float = 0.0
    triggered_param_count: int = 0
    dampen_passes: int = 0
    empty_f: bool = False
    empty_r: bool = False
    data_from_parents: bool = False

    @property
    def delta_acc(self) -> float:
        return self.ad_r - self.ad_f


@dataclass
class UnlearnReport:
    method: str
    c_f: LabelSet
    discovery_ids: List[str]
    nodes: Dict[str, NodeMetrics]
    phase_times: Dict[str, float] = field(default_factory=dict)
    triggered: Dict[str, List[int]] = field(default_factory=dict)
    before: Dict[str, NodeMetrics] = field(default_factory=dict)

    @property
    def max_cumulative_time(self) -> float:
        return max((m.unlearn_time for m in self.nodes.values()), default=0.0)

    def to_dataframe(self) -> pd.DataFrame:
        rows = [{
            "method": self.method,
            "node": node_id,
            "num_cf": len(self.c_f),
            "ad_f": metrics.ad_f,
            "ad_r": metrics.ad_r,
            "delta_acc": metrics.delta_acc,
            "time_s": metrics.unlearn_time,
        } for node_id, metrics in sorted(self.nodes.items())]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def to_csv(self, path):
        self.to_dataframe().to_csv(path, index=False)

    def to_dict(self, include_timing: bool = True) -> dict:
        def _metrics(metrics: NodeMetrics):
            d = asdict(metrics)
            d["delta_acc"] = metrics.delta_acc
            if not include_timing:
                d.pop("unlearn_time")
            return d
        doc = {
            "method": self.method,
            "c_f": list(self.c_f.members),
            "discovery_ids": sorted(self.discovery_ids),
            "nodes": {k: _metrics(v) for k, v in sorted(self.nodes.items())},
            "before": {k: _metrics(v) for k, v in sorted(self.before.items())},
            "triggered": {k: list(v) for k, v in sorted(self.triggered.items())},
        }
        if include_timing:
            doc["phase_times"] = dict(self.phase_times)
        return doc

    def to_json(self, path, include_timing: bool = True):
        with open(path, "w") as f:
            json.dump(self.to_dict(include_timing), f, indent=1, sort_keys=True)

    @staticmethod
    def from_json(path) -> "UnlearnReport":
        with open(path) as f:
            doc = json.load(f)

        def _metrics(d):
            d = dict(d)
            d.pop("delta_acc", None)
            return NodeMetrics(**d)
        return UnlearnReport(
            method=doc["method"],
            c_f=LabelSet.of(doc["c_f"]),
            discovery_ids=doc["discovery_ids"],
            nodes={k: _metrics(v) for k, v in doc["nodes"].items()},
            phase_times=doc.get("phase_times", {}),
            triggered=doc.get("triggered", {}),
            before={k: _metrics(v) for k, v in doc.get("before", {}).items()},
        )


def evaluate(umig: Umig, c_f: LabelSet, registry, node_ids: Iterable[str] = None) -> Dict[str, NodeMetrics]:
    """
    Accuracy of each node's model on its own training data, split into the rows with
    labels in c_f (AD_f) and the rest (AD_r)
    @param registry: NodeDataRegistry holding each node's data
    @param node_ids: nodes to evaluate, all by default
    """
    num_classes = registry.num_classes
    c_r = LabelSet.of(label for label in range(num_classes) if label not in c_f)
    metrics = {}
    for node_id in (node_ids if node_ids is not None else umig.node_ids):
        model = umig.node(node_id).model
        if model is None:
            raise ConfigurationError("node %s has no model to evaluate" % node_id)
        d_f, d_r = split_by_labels(registry.get(node_id), c_f)
        metrics[node_id] = NodeMetrics(
            ad_f=accuracy(model, d_f, restrict=c_f),
            ad_r=accuracy(model, d_r, restrict=c_r),
            empty_f=d_f.size == 0,
            empty_r=d_r.size == 0,
            data_from_parents=node_id in registry.from_parents,
        )
    return metrics


def with_timing(metrics: Dict[str, NodeMetrics], times: Dict[str, float], triggered: Dict[str, int] = None, passes: Dict[str, int] = None):
    triggered = triggered or {}
    passes = passes or {}
    return {
        node_id: replace(
            m,
            unlearn_time=times.get(node_id, 0.0),
            triggered_param_count=triggered.get(node_id, 0),
            dampen_passes=passes.get(node_id, 0))
        for node_id, m in metrics.items()
    }


def speedup(report_a: UnlearnReport, report_b: UnlearnReport) -> float:
    """
    @return max cumulative time of report_b over that of report_a; inf if only report_a's is zero
    """
    if set(report_a.nodes) != set(report_b.nodes):
        raise ParameterError("reports cover different nodes")
    time_a = report_a.max_cumulative_time
    time_b = report_b.max_cumulative_time
    if time_a == 0:
        return 1.0 if time_b == 0 else math.inf
    return time_b / time_a
