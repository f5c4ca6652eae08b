"""Flow ingestion, per-entity partitioning, validation splits and round batches.

Records are held column-wise in :class:`FlowSet` (a feature matrix plus
label / entity / provenance vectors); iterating a ``FlowSet`` yields
:class:`FlowRecord` views for callers that want one flow at a time.
Labels are encoded with malicious = 1 (positive class), benign = 0.
"""
from __future__ import annotations

import csv
import ipaddress
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, EmptyFileError, SchemaError

BENIGN = 0
MALICIOUS = 1

# The 28 statistical columns emitted by DoHLyzer. Duration, IPs, ports and
# the timestamp are kept as side metadata and never reach a model.
DOHLYZER_FEATURES = (
    "FlowBytesSent",
    "FlowSentRate",
    "FlowBytesReceived",
    "FlowReceivedRate",
    "PacketLengthVariance",
    "PacketLengthStandardDeviation",
    "PacketLengthMean",
    "PacketLengthMedian",
    "PacketLengthMode",
    "PacketLengthSkewFromMedian",
    "PacketLengthSkewFromMode",
    "PacketLengthCoefficientofVariation",
    "PacketTimeVariance",
    "PacketTimeStandardDeviation",
    "PacketTimeMean",
    "PacketTimeMedian",
    "PacketTimeMode",
    "PacketTimeSkewFromMedian",
    "PacketTimeSkewFromMode",
    "PacketTimeCoefficientofVariation",
    "ResponseTimeTimeVariance",
    "ResponseTimeTimeStandardDeviation",
    "ResponseTimeTimeMean",
    "ResponseTimeTimeMedian",
    "ResponseTimeTimeMode",
    "ResponseTimeTimeSkewFromMedian",
    "ResponseTimeTimeSkewFromMode",
    "ResponseTimeTimeCoefficientofVariation",
)
DOHLYZER_METADATA = (
    "SourceIP",
    "DestinationIP",
    "SourcePort",
    "DestinationPort",
    "TimeStamp",
    "Duration",
)

_LABEL_WORDS = {
    "malicious": MALICIOUS,
    "benign": BENIGN,
    "1": MALICIOUS,
    "0": BENIGN,
}


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class FlowRecord:
    features: np.ndarray
    label: int
    entity_id: int
    source_row: int


@dataclass
class FlowSet:
    """A column-oriented collection of flows sharing one feature dimension."""

    X: np.ndarray
    y: np.ndarray
    source_row: np.ndarray
    entity_id: np.ndarray
    feature_names: tuple[str, ...] = ()
    meta: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        n = self.X.shape[0]
        self.y = np.asarray(self.y, dtype=np.int64).reshape(n)
        self.source_row = np.asarray(self.source_row, dtype=np.int64).reshape(n)
        self.entity_id = np.asarray(self.entity_id, dtype=np.int64).reshape(n)
        if not np.isin(self.y, (BENIGN, MALICIOUS)).all():
            raise DataError("labels must be 0 (benign) or 1 (malicious)")
        for key, col in self.meta.items():
            if len(col) != n:
                raise DataError(f"metadata column {key!r} has {len(col)} rows, expected {n}")

    @classmethod
    def empty(cls, dimension: int, feature_names: Sequence[str] = ()) -> "FlowSet":
        return cls(
            np.empty((0, dimension)),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            tuple(feature_names),
        )

    @classmethod
    def concat(cls, parts: Sequence["FlowSet"]) -> "FlowSet":
        if not parts:
            raise DataError("nothing to concatenate")
        dims = {p.dimension for p in parts}
        if len(dims) != 1:
            raise DataError(f"cannot concatenate flow sets of dimensions {sorted(dims)}")
        keys = set(parts[0].meta)
        for p in parts[1:]:
            keys &= set(p.meta)
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.source_row for p in parts]),
            np.concatenate([p.entity_id for p in parts]),
            parts[0].feature_names,
            {k: np.concatenate([p.meta[k] for p in parts]) for k in sorted(keys)},
        )

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[FlowRecord]:
        for i in range(len(self)):
            yield FlowRecord(self.X[i], int(self.y[i]), int(self.entity_id[i]), int(self.source_row[i]))

    def subset(self, index) -> "FlowSet":
        index = np.asarray(index)
        return FlowSet(
            self.X[index],
            self.y[index],
            self.source_row[index],
            self.entity_id[index],
            self.feature_names,
            {k: v[index] for k, v in self.meta.items()},
        )

    def with_entity(self, entity_id: int) -> "FlowSet":
        out = self.subset(np.arange(len(self)))
        out.entity_id[:] = entity_id
        return out

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    @property
    def n_malicious(self) -> int:
        return int(self.y.sum())

    @property
    def n_benign(self) -> int:
        return len(self) - self.n_malicious


@dataclass(frozen=True)
class FlowSchema:
    """Column mapping for a flow CSV export.

    ``feature_columns=None`` means every column that is not the label and not
    listed in ``metadata_columns``.
    """

    feature_columns: tuple[str, ...] | None = DOHLYZER_FEATURES
    label_column: str = "Label"
    metadata_columns: tuple[str, ...] = DOHLYZER_METADATA
    required_metadata: tuple[str, ...] = ("SourceIP", "DestinationIP")

    @classmethod
    def from_dict(cls, d: dict) -> "FlowSchema":
        known = {"feature_columns", "label_column", "metadata_columns", "required_metadata"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        kw = {}
        for key in ("feature_columns", "metadata_columns", "required_metadata"):
            if key in d:
                kw[key] = None if d[key] is None else tuple(d[key])
        if "label_column" in d:
            kw["label_column"] = d["label_column"]
        return cls(**kw)


def load_flow_csv(path, schema: FlowSchema | None = None, entity_id: int = -1) -> FlowSet:
    """Read a flow CSV into a :class:`FlowSet`.

    Raises SchemaError for a missing column, DataError (with the 1-based data
    row index) for a non-numeric feature cell or an unknown label, and
    EmptyFileError when the file has no data rows.
    """
    schema = schema or FlowSchema()
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFileError(f"{path}: file is empty") from None
        col = {name: i for i, name in enumerate(header)}

        if schema.feature_columns is None:
            skip = {schema.label_column, *schema.metadata_columns}
            feature_columns = tuple(h for h in header if h not in skip)
        else:
            feature_columns = schema.feature_columns
        needed = [*feature_columns, schema.label_column, *schema.required_metadata]
        for name in needed:
            if name not in col:
                raise SchemaError(f"{path}: missing column {name!r}")
        meta_columns = [m for m in schema.metadata_columns if m in col]

        f_idx = [col[c] for c in feature_columns]
        l_idx = col[schema.label_column]
        rows, labels, meta = [], [], {m: [] for m in meta_columns}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) < len(header):
                raise DataError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")
            try:
                values = [float(row[i]) for i in f_idx]
            except ValueError:
                bad = next(c for c, i in zip(feature_columns, f_idx) if not _is_float(row[i]))
                raise DataError(f"{path}: row {row_no}: non-numeric value {row[col[bad]]!r} in column {bad!r}") from None
            if not all(map(math.isfinite, values)):
                raise DataError(f"{path}: row {row_no}: non-finite feature value")
            word = row[l_idx].strip().lower()
            if word not in _LABEL_WORDS:
                raise DataError(f"{path}: row {row_no}: unknown label {row[l_idx]!r}")
            rows.append(values)
            labels.append(_LABEL_WORDS[word])
            for m in meta_columns:
                meta[m].append(row[col[m]].strip())

    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    n = len(rows)
    return FlowSet(
        np.array(rows, dtype=np.float64),
        np.array(labels),
        np.arange(n),
        np.full(n, entity_id),
        tuple(feature_columns),
        {m: np.array(v, dtype=object) for m, v in meta.items()},
    )


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_flow_csvs(paths: Iterable, schema: FlowSchema | None = None) -> FlowSet:
    """Load several exports and renumber ``source_row`` so it stays unique."""
    parts = []
    offset = 0
    for p in paths:
        fs = load_flow_csv(p, schema)
        fs.source_row += offset
        offset += len(fs)
        parts.append(fs)
    return FlowSet.concat(parts)


@dataclass(frozen=True)
class PartitionRule:
    entity_id: int
    name: str
    networks: tuple

    @classmethod
    def make(cls, entity_id: int, name: str, addresses: Iterable[str]) -> "PartitionRule":
        try:
            nets = tuple(ipaddress.ip_network(a, strict=False) for a in addresses)
        except ValueError as exc:
            raise ConfigError(f"partition rule {name!r}: {exc}") from None
        return cls(int(entity_id), name, nets)

    def matches(self, address) -> bool:
        return any(address in net for net in self.networks)


@dataclass(frozen=True)
class PartitionSpec:
    rules: tuple[PartitionRule, ...]
    match_columns: tuple[str, ...] = ("DestinationIP", "SourceIP")

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionSpec":
        try:
            rules = tuple(PartitionRule.make(e["id"], e["name"], e["ips"]) for e in d["entities"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed partition spec: {exc!r}") from None
        cols = tuple(d.get("match_columns", ("DestinationIP", "SourceIP")))
        return cls(rules, cols)

    @classmethod
    def load(cls, path) -> "PartitionSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "match_columns": list(self.match_columns),
            "entities": [
                {"id": r.entity_id, "name": r.name, "ips": [str(n) for n in r.networks]}
                for r in self.rules
            ],
        }


@dataclass
class Partition:
    entities: dict[int, FlowSet]
    names: dict[int, str]
    discarded: FlowSet

    def counts(self) -> list[dict]:
        return [
            {
                "entity_id": eid,
                "name": self.names[eid],
                "total": len(fs),
                "malicious": fs.n_malicious,
                "benign": fs.n_benign,
            }
            for eid, fs in sorted(self.entities.items())
        ]


def partition_by_entity(records: FlowSet, spec: PartitionSpec) -> Partition:
    """Assign each flow to the entity whose resolver addresses it touches.

    Unmatched flows go to ``Partition.discarded``; a flow matched by two
    different rules is a configuration error.
    """
    ids = [r.entity_id for r in spec.rules]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"partition rules reuse entity ids: {ids}")
    for c in spec.match_columns:
        if c not in records.meta:
            raise SchemaError(f"partition column {c!r} not present in records")

    cache: dict[str, int | None] = {}

    def lookup(addr: str) -> int | None:
        if addr not in cache:
            try:
                ip = ipaddress.ip_address(addr)
            except ValueError:
                cache[addr] = None
                return None
            hits = [r.entity_id for r in spec.rules if r.matches(ip)]
            if len(hits) > 1:
                raise ConfigError(f"address {addr} matches several partition rules: {hits}")
            cache[addr] = hits[0] if hits else None
        return cache[addr]

    owner = np.full(len(records), -1, dtype=np.int64)
    columns = [records.meta[c] for c in spec.match_columns]
    for i in range(len(records)):
        found = {e for e in (lookup(col[i]) for col in columns) if e is not None}
        if len(found) > 1:
            raise ConfigError(f"row {int(records.source_row[i])} matches several entities: {sorted(found)}")
        if found:
            owner[i] = found.pop()

    entities = {}
    for rule in spec.rules:
        entities[rule.entity_id] = records.subset(np.flatnonzero(owner == rule.entity_id)).with_entity(rule.entity_id)
    return Partition(
        entities,
        {r.entity_id: r.name for r in spec.rules},
        records.subset(np.flatnonzero(owner < 0)),
    )


@dataclass
class EntityShard:
    entity_id: int
    train: FlowSet
    local_validation: FlowSet
    provider_name: str = ""


@dataclass
class DatasetSplit:
    shards: list[EntityShard]
    global_validation: FlowSet
    seed: int

    def shard(self, entity_id: int) -> EntityShard:
        for s in self.shards:
            if s.entity_id == entity_id:
                return s
        raise KeyError(entity_id)

    @property
    def entity_ids(self) -> list[int]:
        return [s.entity_id for s in self.shards]


def split_validation(
    entities: dict[int, FlowSet] | Partition,
    global_fraction: float = 0.10,
    local_fraction: float = 0.10,
    seed: int = 0,
    names: dict[int, str] | None = None,
) -> DatasetSplit:
    """Carve a global validation set from the pooled flows, then a local one per entity.

    The global sample is uniform over the union. If that leaves an entity
    unrepresented (only plausible on tiny inputs), one of its flows is swapped
    in for a flow of the best-represented entity so every entity's traffic
    appears in the global set.
    """
    if isinstance(entities, Partition):
        names = names or entities.names
        entities = entities.entities
    names = names or {}
    for name, frac in (("global_fraction", global_fraction), ("local_fraction", local_fraction)):
        if not 0.0 < frac < 1.0:
            raise ConfigError(f"{name} must lie in (0, 1), got {frac}")
    order = sorted(entities)
    if not order:
        raise DataError("no entities to split")
    pooled = FlowSet.concat([entities[e].with_entity(e) for e in order])
    rng = np.random.default_rng(seed)
    n_global = round_half_up(global_fraction * len(pooled))
    in_global = np.zeros(len(pooled), dtype=bool)
    in_global[rng.permutation(len(pooled))[:n_global]] = True

    if n_global >= len(order):
        for e in order:
            mine = pooled.entity_id == e
            if not (in_global & mine).any() and mine.sum() > 1:
                counts = {o: int((in_global & (pooled.entity_id == o)).sum()) for o in order}
                donor = max(order, key=lambda o: (counts[o], -o))
                out = np.flatnonzero(in_global & (pooled.entity_id == donor))[0]
                take = np.flatnonzero(mine)[0]
                in_global[out] = False
                in_global[take] = True

    shards = []
    for e in order:
        rest = np.flatnonzero(~in_global & (pooled.entity_id == e))
        n_local = round_half_up(local_fraction * len(rest))
        if len(rest) - n_local < 1:
            raise DataError(f"entity {e}: validation fractions leave an empty train set")
        perm = rng.permutation(len(rest))
        local_idx = np.sort(rest[perm[:n_local]])
        train_idx = np.sort(rest[perm[n_local:]])
        shards.append(EntityShard(e, pooled.subset(train_idx), pooled.subset(local_idx), names.get(e, f"entity{e}")))
    return DatasetSplit(shards, pooled.subset(np.flatnonzero(in_global)), seed)


@dataclass
class BatchSchedule:
    entity_id: int
    batches: list[np.ndarray]
    batch_size: int
    rounds: int


def make_batches(shard: EntityShard, batch_size: int, rounds: int, seed) -> BatchSchedule:
    """Stratified, without-replacement batches over ``shard.train``.

    Batch ``r`` holds ``round(p*B*r) - round(p*B*(r-1))`` malicious flows, so
    each batch is within one flow of the shard's malicious proportion ``p``
    and the running total never drifts.
    """
    if batch_size < 1 or rounds < 1:
        raise ConfigError("batch_size and rounds must be positive")
    n = len(shard.train)
    need = batch_size * rounds
    if n < need:
        raise DataError(
            f"entity {shard.entity_id}: {rounds} rounds of {batch_size} need {need} train flows, only {n} available"
        )
    rng = np.random.default_rng(seed)
    mal = np.flatnonzero(shard.train.y == MALICIOUS)
    ben = np.flatnonzero(shard.train.y == BENIGN)
    mal = mal[rng.permutation(len(mal))]
    ben = ben[rng.permutation(len(ben))]
    p = len(mal) / n
    batches = []
    used_m = used_b = 0
    for r in range(1, rounds + 1):
        m = round_half_up(p * batch_size * r) - used_m
        b = batch_size - m
        idx = np.concatenate([mal[used_m:used_m + m], ben[used_b:used_b + b]])
        used_m += m
        used_b += b
        batches.append(idx[rng.permutation(batch_size)])
    return BatchSchedule(shard.entity_id, batches, batch_size, rounds)


@dataclass(frozen=True)
class ClusterSpec:
    mean: tuple[float, ...]
    scale: float
    count: int
    label: int


@dataclass(frozen=True)
class SyntheticSpec:
    dimension: int
    entities: dict[int, tuple[ClusterSpec, ...]]

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        try:
            ents = {
                int(e): tuple(
                    ClusterSpec(tuple(c["mean"]), float(c["scale"]), int(c["count"]), _LABEL_WORDS[str(c["label"]).lower()])
                    for c in clusters
                )
                for e, clusters in d["entities"].items()
            }
            return cls(int(d["dimension"]), ents)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed synthetic spec: {exc!r}") from None

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "entities": {
                str(e): [
                    {"mean": list(c.mean), "scale": c.scale, "count": c.count,
                     "label": "malicious" if c.label == MALICIOUS else "benign"}
                    for c in cl
                ]
                for e, cl in self.entities.items()
            },
        }


def disjoint_attack_spec(
    n_entities: int = 4,
    dimension: int = 4,
    benign_per_entity: int = 700,
    attack_per_entity: int = 700,
    separation: float = 6.0,
    scale: float = 1.0,
) -> SyntheticSpec:
    """Shared benign traffic at the origin; entity ``e`` sees only the attack
    cluster displaced by ``separation`` along axis ``e % dimension``."""
    if dimension < n_entities:
        raise ConfigError("need dimension >= n_entities for disjoint attack axes")
    ents = {}
    for e in range(n_entities):
        centre = np.zeros(dimension)
        centre[e % dimension] = separation
        ents[e] = (
            ClusterSpec(tuple([0.0] * dimension), scale, benign_per_entity, BENIGN),
            ClusterSpec(tuple(centre.tolist()), scale, attack_per_entity, MALICIOUS),
        )
    return SyntheticSpec(dimension, ents)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> dict[int, FlowSet]:
    """Draw each entity's flows from its Gaussian clusters.

    ``source_row`` is unique across all entities.
    """
    d = spec.dimension
    if d < 1:
        raise ConfigError("dimension must be positive")
    for e, clusters in spec.entities.items():
        for c in clusters:
            if len(c.mean) != d:
                raise DataError(f"entity {e}: cluster mean has dimension {len(c.mean)}, expected {d}")
            if c.scale < 0 or c.count < 1:
                raise ConfigError(f"entity {e}: cluster scale must be >= 0 and count positive")
    out = {}
    offset = 0
    ss = np.random.SeedSequence(seed)
    for e, child in zip(sorted(spec.entities), ss.spawn(len(spec.entities))):
        rng = np.random.default_rng(child)
        xs, ys = [], []
        for c in spec.entities[e]:
            xs.append(np.asarray(c.mean) + c.scale * rng.standard_normal((c.count, d)))
            ys.append(np.full(c.count, c.label))
        X = np.concatenate(xs)
        y = np.concatenate(ys)
        perm = rng.permutation(len(y))
        n = len(y)
        out[e] = FlowSet(X[perm], y[perm], np.arange(offset, offset + n), np.full(n, e),
                         tuple(f"f{i}" for i in range(d)))
        offset += n
    return out


def flowset_to_csv(fs: FlowSet) -> str:
    """Prepared-data CSV: provenance, entity, label, then the raw features."""
    import io

    names = fs.feature_names or tuple(f"f{i}" for i in range(fs.dimension))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("source_row", "entity_id", "label", *names))
    for i in range(len(fs)):
        w.writerow((int(fs.source_row[i]), int(fs.entity_id[i]), int(fs.y[i]), *map(repr, fs.X[i].tolist())))
    return buf.getvalue()


def flowset_from_csv(path) -> FlowSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFileError(f"{path}: file is empty") from None
        if header[:3] != ["source_row", "entity_id", "label"]:
            raise SchemaError(f"{path}: not a prepared flow file")
        rows = list(reader)
    names = tuple(header[3:])
    if not rows:
        return FlowSet.empty(len(names), names)
    arr = np.array(rows, dtype=object)
    try:
        return FlowSet(arr[:, 3:].astype(np.float64), arr[:, 2].astype(np.int64),
                       arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), names)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def split_files(split: DatasetSplit) -> dict[str, str]:
    """File name -> content for a prepared split (entity index included)."""
    files = {"global_validation.csv": flowset_to_csv(split.global_validation)}
    index = []
    for s in split.shards:
        files[f"entity_{s.entity_id}_train.csv"] = flowset_to_csv(s.train)
        files[f"entity_{s.entity_id}_local_validation.csv"] = flowset_to_csv(s.local_validation)
        index.append({"entity_id": s.entity_id, "name": s.provider_name,
                      "train": len(s.train), "local_validation": len(s.local_validation)})
    files["entities.json"] = json.dumps({"seed": split.seed, "entities": index}, indent=2) + "\n"
    return files


def load_split(directory) -> DatasetSplit:
    directory = Path(directory)
    try:
        with open(directory / "entities.json") as fh:
            index = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{directory}: no prepared data (entities.json missing)") from None
    shards = [
        EntityShard(
            int(e["entity_id"]),
            flowset_from_csv(directory / f"entity_{e['entity_id']}_train.csv"),
            flowset_from_csv(directory / f"entity_{e['entity_id']}_local_validation.csv"),
            e.get("name", ""),
        )
        for e in index["entities"]
    ]
    return DatasetSplit(shards, flowset_from_csv(directory / "global_validation.csv"), int(index["seed"]))
