import logging
import math
import re
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np
import pandas as pd

from errors import ParameterError, DatasetFormatError

RAW_F32_MAGIC = b"FIUD"
RAW_F32_HEADER = np.dtype([("magic", "S4"), ("n", "<u4"), ("dim", "<u4"), ("num_classes", "<u4")])


@dataclass(frozen=True)
class LabelSet:
    """
    Sorted set of unique class indices, e.g. the unlearned labels C_f
    """
    members: Tuple[int, ...] = ()

    def __post_init__(self):
        members = tuple(sorted(set(int(m) for m in self.members)))
        if any(m < 0 for m in members):
            raise ParameterError("negative label in %s" % (members,))
        object.__setattr__(self, "members", members)

    @staticmethod
    def of(labels: Iterable[int]) -> "LabelSet":
        return LabelSet(tuple(labels))

    def check(self, num_classes: int):
        if self.members and self.members[-1] >= num_classes:
            raise ParameterError("label %d out of range for %d classes" % (self.members[-1], num_classes))

    def union(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(self.members + other.members)

    def intersects(self, other: "LabelSet") -> bool:
        return bool(set(self.members) & set(other.members))

    def __contains__(self, label) -> bool:
        return int(label) in self.members

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __str__(self):
        return ",".join(str(m) for m in self.members)


class LabeledDataset:
    """
    Feature matrix x (N x d) with integer class labels y in [0, num_classes)
    """
    def __init__(self, x, y, num_classes: int):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if x.ndim != 2:
            x = x.reshape((y.size, -1)) if y.size else x.reshape((0, 0))
        if x.shape[0] != y.size:
            raise ParameterError("features have %d rows but there are %d labels" % (x.shape[0], y.size))
        if y.size and (y.min() < 0 or y.max() >= num_classes):
            raise ParameterError("labels must lie in [0, %d)" % num_classes)
        if y.size and x.shape[1] < 1:
            raise ParameterError("non-empty dataset needs at least one feature")
        self.x = x
        self.y = y
        self.num_classes = int(num_classes)

    @property
    def size(self):
        return self.y.size

    @property
    def dim(self):
        return self.x.shape[1]

    def labels_present(self) -> LabelSet:
        return LabelSet.of(np.unique(self.y).tolist())

    def subset_idxs(self, selected_idxs):
        return LabeledDataset(self.x[selected_idxs, :], self.y[selected_idxs], self.num_classes)

    @staticmethod
    def merge(datasets: List["LabeledDataset"]):
        """
        @return rows of all datasets stacked in the given order
        """
        assert datasets
        num_classes = max(dat.num_classes for dat in datasets)
        return LabeledDataset(
            x=np.vstack([dat.x for dat in datasets]),
            y=np.concatenate([dat.y for dat in datasets]),
            num_classes=num_classes,
        )

    def __eq__(self, other):
        return (
            isinstance(other, LabeledDataset)
            and self.num_classes == other.num_classes
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class BlobSpec:
    """
    Synthetic stand-in for penultimate-layer features. With 3 <= num_classes <= dim every class
    owns one feature axis and also excites the axes of its two ring neighbours k - 1 and k + 1
    with relative strength neighbor_weight; otherwise centers are antipodal pairs along a random basis.
    """
    num_classes: int = 10
    dim: int = 20
    samples_per_class: int = 1000
    center_scale: float = 30.0
    noise_sigma: float = 1.0
    seed: int = 0
    neighbor_weight: float = 0.25

    def validate(self):
        if self.num_classes < 2:
            raise ParameterError("need at least two classes")
        if self.dim < 1:
            raise ParameterError("dim must be positive")
        if self.samples_per_class < 1:
            raise ParameterError("samples_per_class must be positive")
        if not self.noise_sigma > 0:
            raise ParameterError("noise_sigma must be positive")
        if not 0 <= self.neighbor_weight < 1:
            raise ParameterError("neighbor_weight must lie in [0, 1)")

    @property
    def ring_layout(self) -> bool:
        return 3 <= self.num_classes <= self.dim


def _ring_centers(spec: BlobSpec, rng) -> np.ndarray:
    axes = rng.permutation(spec.dim)[: spec.num_classes]
    centers = np.zeros((spec.num_classes, spec.dim))
    for k in range(spec.num_classes):
        centers[k, axes[k]] = 1
        centers[k, axes[(k - 1) % spec.num_classes]] = spec.neighbor_weight
        centers[k, axes[(k + 1) % spec.num_classes]] = spec.neighbor_weight
    return spec.center_scale * centers / np.linalg.norm(centers, axis=1, keepdims=True)


def _antipodal_centers(spec: BlobSpec, rng) -> np.ndarray:
    # any two of the first 2d centers sit at least center_scale * sqrt(2) apart
    basis, r = np.linalg.qr(rng.standard_normal((spec.dim, spec.dim)))
    basis = basis * np.sign(np.diag(r))
    directions = []
    for i in range(spec.dim):
        directions += [basis[:, i], -basis[:, i]]
    num_extra = max(0, spec.num_classes - len(directions))
    if num_extra:
        extra = rng.standard_normal((num_extra, spec.dim))
        directions += list(extra / np.linalg.norm(extra, axis=1, keepdims=True))
    return spec.center_scale * np.array(directions[: spec.num_classes])


def blob_centers(spec: BlobSpec) -> np.ndarray:
    """
    @return num_classes x dim matrix of class centers, each of norm center_scale
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return _ring_centers(spec, rng) if spec.ring_layout else _antipodal_centers(spec, rng)


def synth_gaussian_blobs(spec: BlobSpec) -> LabeledDataset:
    """
    @return samples_per_class rows per class, class k drawn from an isotropic gaussian
            around a seed-determined center of norm center_scale
    """
    centers = blob_centers(spec)
    # offset keeps the noise stream apart from the center draw
    rng = np.random.default_rng([spec.seed, 1])
    x = np.vstack([
        centers[k] + spec.noise_sigma * rng.standard_normal((spec.samples_per_class, spec.dim))
        for k in range(spec.num_classes)
    ])
    y = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    logging.info(
        "blobs: %d classes, dim %d, %d rows, %s layout",
        spec.num_classes, spec.dim, y.size, "ring" if spec.ring_layout else "antipodal")
    return LabeledDataset(x, y, spec.num_classes)


def split_by_labels(dat: LabeledDataset, c_f: LabelSet) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    @return (rows with labels in c_f, remaining rows), both in input order
    """
    c_f.check(dat.num_classes)
    forget_mask = np.isin(dat.y, np.array(c_f.members, dtype=np.int64))
    return dat.subset_idxs(forget_mask), dat.subset_idxs(~forget_mask)


def shard(dat: LabeledDataset, num_shards: int, seed: int) -> List[LabeledDataset]:
    """
    Random IID partition into num_shards disjoint parts whose sizes differ by at most one
    """
    if num_shards < 1 or num_shards > dat.size:
        raise ParameterError("cannot split %d rows into %d shards" % (dat.size, num_shards))
    perm = np.random.default_rng(seed).permutation(dat.size)
    return [dat.subset_idxs(idxs) for idxs in np.array_split(perm, num_shards)]


def build_overlap_label_sets(
        total_classes: int,
        per_node: int,
        num_nodes: int,
        overlap_fraction: float,
        seed: int) -> List[LabelSet]:
    """
    @param overlap_fraction: share of each set taken from a core common to all sets
    @return num_nodes label sets of size per_node; non-core labels never repeat across sets
    """
    if not 0 <= overlap_fraction <= 1:
        raise ParameterError("overlap_fraction must lie in [0, 1]")
    if per_node < 1 or num_nodes < 1:
        raise ParameterError("per_node and num_nodes must be positive")
    # small slack so that e.g. 0.7 * 10 does not round up to 8
    core_size = min(per_node, math.ceil(overlap_fraction * per_node - 1e-9))
    needed = core_size + num_nodes * (per_node - core_size)
    if needed > total_classes:
        raise ParameterError(
            "%d label sets of size %d with core %d need %d classes, only %d available"
            % (num_nodes, per_node, core_size, needed, total_classes))
    perm = np.random.default_rng(seed).permutation(total_classes)
    core = perm[:core_size].tolist()
    rest = perm[core_size:]
    own_size = per_node - core_size
    return [
        LabelSet.of(core + rest[i * own_size: (i + 1) * own_size].tolist())
        for i in range(num_nodes)
    ]


def _load_csv(path, num_classes: int = None) -> LabeledDataset:
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        return LabeledDataset(np.zeros((0, 0)), np.zeros(0), num_classes or 0)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetFormatError(int(match.group(1)) if match else 0, "inconsistent number of features")

    short_rows = np.where(raw.isna().any(axis=1).to_numpy())[0]
    if short_rows.size:
        raise DatasetFormatError(int(short_rows[0]) + 1, "inconsistent number of features")
    if raw.shape[1] < 2:
        raise DatasetFormatError(1, "expected label,f1,...,fd")

    numeric = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce")).to_numpy(dtype=float)
    bad_rows = np.where(np.isnan(numeric).any(axis=1))[0]
    if bad_rows.size:
        raise DatasetFormatError(int(bad_rows[0]) + 1, "non-numeric field")

    labels = numeric[:, 0]
    for row_idx, label in enumerate(labels):
        if label != np.floor(label) or label < 0:
            raise DatasetFormatError(row_idx + 1, "label %s is not a class index" % raw.iloc[row_idx, 0])
        if num_classes is not None and label >= num_classes:
            raise DatasetFormatError(row_idx + 1, "label %d >= %d classes" % (label, num_classes))
    labels = labels.astype(np.int64)
    num_classes = num_classes if num_classes is not None else int(labels.max()) + 1
    return LabeledDataset(numeric[:, 1:], labels, num_classes)


def _load_raw_f32(path, num_classes: int = None) -> LabeledDataset:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) == 0:
        return LabeledDataset(np.zeros((0, 0)), np.zeros(0), num_classes or 0)
    if len(blob) < RAW_F32_HEADER.itemsize:
        raise DatasetFormatError(0, "truncated header")
    header = np.frombuffer(blob, dtype=RAW_F32_HEADER, count=1)[0]
    if header["magic"] != RAW_F32_MAGIC:
        raise DatasetFormatError(0, "bad magic %r" % header["magic"])
    n, dim, file_classes = int(header["n"]), int(header["dim"]), int(header["num_classes"])
    expected = RAW_F32_HEADER.itemsize + 4 * n * dim + 4 * n
    if len(blob) != expected:
        raise DatasetFormatError(0, "expected %d bytes, found %d" % (expected, len(blob)))
    offset = RAW_F32_HEADER.itemsize
    x = np.frombuffer(blob, dtype="<f4", count=n * dim, offset=offset).reshape((n, dim))
    y = np.frombuffer(blob, dtype="<i4", count=n, offset=offset + 4 * n * dim)
    num_classes = file_classes if num_classes is None else num_classes
    bad = np.where((y < 0) | (y >= num_classes))[0]
    if bad.size:
        raise DatasetFormatError(int(bad[0]) + 1, "label %d out of range for %d classes" % (y[bad[0]], num_classes))
    return LabeledDataset(x.astype(float), y, num_classes)


def load_dataset(path, fmt: str, num_classes: int = None) -> LabeledDataset:
    """
    @param fmt: "csv" (rows label,f1,...,fd, no header) or "raw-f32"
    @param num_classes: K, if known; otherwise taken from the file (raw-f32) or max label + 1 (csv)
    """
    if fmt == "csv":
        return _load_csv(path, num_classes)
    elif fmt == "raw-f32":
        return _load_raw_f32(path, num_classes)
    raise ParameterError("unknown dataset format %s" % fmt)


def save_dataset(dat: LabeledDataset, path, fmt: str):
    if fmt == "csv":
        df = pd.DataFrame(dat.x)
        df.insert(0, "label", dat.y)
        df.to_csv(path, header=False, index=False)
    elif fmt == "raw-f32":
        header = np.array([(RAW_F32_MAGIC, dat.size, dat.dim if dat.size else 0, dat.num_classes)], dtype=RAW_F32_HEADER)
        with open(path, "wb") as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(dat.x, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(dat.y, dtype="<i4").tobytes())
    else:
        raise ParameterError("unknown dataset format %s" % fmt)


def resolve_dataset_ref(ref: str, base_dat: LabeledDataset, shard_seed: int) -> LabeledDataset:
    """
    Materialize a node's training data from the experiment's base dataset
    @param ref: ";"-joined clauses among "all", "shard=i/k", "labels=a:b" (half open), "exclude=l1,l2"
    """
    dat = base_dat
    for clause in ref.split(";"):
        clause = clause.strip()
        if clause in ("", "all"):
            continue
        key, _, value = clause.partition("=")
        try:
            if key == "shard":
                idx, num_shards = (int(v) for v in value.split("/"))
                if not 0 <= idx < num_shards:
                    raise ParameterError("shard index %d outside 0..%d" % (idx, num_shards - 1))
                dat = shard(dat, num_shards, shard_seed)[idx]
            elif key == "labels":
                lo, hi = (int(v) for v in value.split(":"))
                dat = dat.subset_idxs((dat.y >= lo) & (dat.y < hi))
            elif key == "exclude":
                excluded = LabelSet.of(int(v) for v in value.split(",") if v)
                _, dat = split_by_labels(dat, excluded)
            else:
                raise ParameterError("unknown dataset clause %s" % clause)
        except ValueError as e:
            if isinstance(e, ParameterError):
                raise
            raise ParameterError("cannot parse dataset clause %s" % clause)
    return dat
