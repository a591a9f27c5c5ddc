"""
Experiment configuration: one JSON document merged onto an OmegaConf schema built from the dataclasses below
"""
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from omegaconf import OmegaConf
from omegaconf.errors import ConfigKeyError, MissingMandatoryValue, OmegaConfBaseException, ValidationError

from dataset import BlobSpec, LabelSet
from errors import ConfigurationError
from fisher import DampenConfig
from softmax_model import TrainConfig

METHODS = ["fiun", "retrain", "finetune", "ga"]
DISCOVERY_MODES = ["metadata", "accuracy"]
MERGE_STRATEGIES = ["max", "sequential"]


def derive_seed(seed: int, label: str) -> int:
    """
    Seed of one experiment component, e.g. derive_seed(seed, "train:r0_c1")
    """
    digest = hashlib.sha256(("%d:%s" % (seed, label)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class BlobConfig:
    num_classes: int = 10
    dim: int = 20
    samples_per_class: int = 1000
    center_scale: float = 30.0
    noise_sigma: float = 1.0
    neighbor_weight: float = 0.25

    def to_spec(self, seed: int) -> BlobSpec:
        return BlobSpec(
            self.num_classes, self.dim, self.samples_per_class, self.center_scale, self.noise_sigma, seed,
            neighbor_weight=self.neighbor_weight)


@dataclass
class DatasetConfig:
    """
    Either a dataset file (path + format) or synthetic blobs when path is null
    """
    path: Optional[str] = None
    format: str = "csv"
    num_classes: Optional[int] = None
    blobs: BlobConfig = field(default_factory=BlobConfig)

    def __post_init__(self):
        if self.format not in ("csv", "raw-f32"):
            raise ConfigurationError("format must be csv or raw-f32, got %s" % self.format)


@dataclass
class TopologyConfig:
    kind: str
    params: Dict[str, int] = field(default_factory=dict)


@dataclass
class TrainSection:
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 64
    optimizer: str = "sgd"

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, seed, self.optimizer)


@dataclass
class OverlapConfig:
    """
    Unlearned label sets for the roots of the graph, sharing a core of ceil(fraction * per_node) labels
    """
    per_node: int
    fraction: float


@dataclass
class DampenSection:
    tau: float = 1.0
    gamma: float = 1.0
    eta: float = 0.1

    def to_dampen_config(self) -> DampenConfig:
        return DampenConfig(self.tau, self.gamma, self.eta)


@dataclass
class UnlearnSection:
    labels: Optional[List[int]] = None
    overlap: Optional[OverlapConfig] = None
    dampen: DampenSection = field(default_factory=DampenSection)
    discovery_mode: str = "metadata"
    discovery_threshold: float = 0.5
    merge_strategy: str = "max"
    recompute_model_fims: bool = False
    finetune_epochs: int = 5
    ga_epochs: int = 5

    def __post_init__(self):
        if self.labels is not None and self.overlap is not None:
            raise ConfigurationError("give either labels or overlap, not both")
        if self.discovery_mode not in DISCOVERY_MODES:
            raise ConfigurationError("discovery_mode must be one of %s" % DISCOVERY_MODES)
        if self.merge_strategy not in MERGE_STRATEGIES:
            raise ConfigurationError("merge_strategy must be one of %s" % MERGE_STRATEGIES)
        try:
            self.dampen.to_dampen_config()
        except ValueError as e:
            raise ConfigurationError("unlearn.dampen: %s" % e)

    @property
    def label_set(self) -> LabelSet:
        return LabelSet.of(self.labels if self.labels is not None else [0])


@dataclass
class ExperimentConfig:
    seed: int
    dataset: DatasetConfig
    topology: TopologyConfig
    train: TrainSection = field(default_factory=TrainSection)
    unlearn: UnlearnSection = field(default_factory=UnlearnSection)
    methods: List[str] = field(default_factory=lambda: ["fiun"])
    out_dir: str = "_output"
    workers: Optional[int] = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigurationError("methods must name at least one of %s" % METHODS)
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError("unknown methods %s, options are %s" % (unknown, METHODS))
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    @property
    def n_jobs(self) -> int:
        return self.workers if self.workers is not None else (os.cpu_count() or 1)


def _schema_error(e: OmegaConfBaseException) -> ConfigurationError:
    key = getattr(e, "full_key", None) or "config"
    if isinstance(e, ConfigKeyError):
        return ConfigurationError("unknown key %s" % key)
    if isinstance(e, MissingMandatoryValue):
        return ConfigurationError("missing key %s" % key)
    # omegaconf appends the key and object type on later lines
    first_line = str(e).split("\n")[0]
    if isinstance(e, ValidationError):
        return ConfigurationError("%s: invalid value (%s)" % (key, first_line))
    return ConfigurationError("%s: %s" % (key, first_line))


def config_from_dict(doc: dict) -> ExperimentConfig:
    """
    Unknown keys, missing required keys and values of the wrong type are rejected with the key path
    """
    if not isinstance(doc, dict):
        raise ConfigurationError("config: expected an object")
    try:
        merged = OmegaConf.merge(OmegaConf.structured(ExperimentConfig), doc)
        cfg = OmegaConf.to_object(merged)
    except OmegaConfBaseException as e:
        raise _schema_error(e)
    if cfg.dataset.path is not None and not os.path.exists(cfg.dataset.path):
        raise ConfigurationError("dataset.path: no such file %s" % cfg.dataset.path)
    return cfg


def parse_config(path) -> ExperimentConfig:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError("%s: invalid JSON (%s)" % (path, e))
    return config_from_dict(doc)


def with_overrides(
        cfg: ExperimentConfig,
        workers: int = None,
        out_dir: str = None,
        labels: List[int] = None,
        methods: List[str] = None,
        seed: int = None) -> ExperimentConfig:
    """
    Command line flags take precedence over the file
    """
    changes = {}
    if workers is not None:
        changes["workers"] = workers
    if out_dir is not None:
        changes["out_dir"] = out_dir
    if methods is not None:
        changes["methods"] = methods
    if seed is not None:
        changes["seed"] = seed
    if labels is not None:
        changes["unlearn"] = dataclasses.replace(cfg.unlearn, labels=labels, overlap=None)
    return dataclasses.replace(cfg, **changes)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return OmegaConf.to_container(OmegaConf.structured(cfg))
