"""Round engine for the four federation scenarios.

Each round every node (i) trains on its next batch, (ii) ships its model,
serialized, to whichever peers the scenario dictates, and (iii) folds what
it received into its own model. Every transfer is logged in a
:class:`CommLedger` with the serialized size. Rounds are synchronous:
aggregation only starts once all of the round's transfers are delivered, and
inboxes are processed in sender order so thread count never changes results.

Scenarios
---------
NFL         no sharing
CFL         nodes -> server, server aggregates and broadcasts (2n transfers)
DFL         full mesh, every node sends to every other (n(n-1) transfers)
DFL_GOSSIP  every node pushes to one uniformly chosen peer (n transfers)
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import combinations

import numpy as np

from .aggregation import CandidateSet, aggregate_mean, flatten_and_prune, select_best_tree
from .data import DatasetSplit, make_batches
from .errors import ConfigError, DataError
from .features import Preprocessor
from .metrics import confusion, metrics_record
from .models import (
    ForestModel,
    HoeffdingTree,
    LinearModel,
    SgdHyper,
    TreeConfig,
    dumps_model,
    forest_init,
    linear_init,
    linear_partial_fit,
    loads_model,
    predict_many,
)

log = logging.getLogger(__name__)

SCENARIOS = ("NFL", "CFL", "DFL", "DFL_GOSSIP")
MODEL_KINDS = ("svm", "lr", "dt", "rf")
SERVER = "server"

# Independent random streams derived from the run seed.
_STREAM_BATCHES, _STREAM_GOSSIP, _STREAM_FOREST = 1, 2, 3


@dataclass(frozen=True)
class Topology:
    node_ids: tuple
    edges: frozenset
    kind: str

    def neighbors(self, v) -> list:
        return sorted((b if a == v else a) for a, b in self.edges if v in (a, b))


def build_topology(n: int, scenario: str) -> Topology:
    """Full mesh for DFL/DFL_GOSSIP, a star around ``SERVER`` for CFL, no edges for NFL."""
    _check_scenario(scenario)
    nodes = tuple(range(n))
    if scenario == "NFL":
        if n < 1:
            raise ConfigError("need at least one node")
        return Topology(nodes, frozenset(), "edgeless")
    if n < 2:
        raise ConfigError(f"{scenario} needs at least 2 nodes, got {n}")
    if scenario == "CFL":
        return Topology(nodes + (SERVER,), frozenset((v, SERVER) for v in nodes), "star_with_server")
    return Topology(nodes, frozenset(combinations(nodes, 2)), "full_mesh")


def gossip_pairing(node_ids, rng: np.random.Generator) -> list[tuple]:
    """One push per node to a peer drawn uniformly from the other n-1."""
    nodes = sorted(node_ids)
    if len(nodes) < 2:
        raise ConfigError("gossip needs at least 2 nodes")
    pairs = []
    for v in nodes:
        others = [u for u in nodes if u != v]
        pairs.append((v, others[int(rng.integers(len(others)))]))
    return pairs


def comm_cost_model(scenario: str, n: int, B: int) -> int:
    """Bytes moved per round for ``n`` nodes exchanging models of ``B`` bytes."""
    _check_scenario(scenario)
    return {"NFL": 0, "CFL": 2 * n * B, "DFL": n * (n - 1) * B, "DFL_GOSSIP": n * B}[scenario]


def transfers_per_round(scenario: str, n: int) -> int:
    return comm_cost_model(scenario, n, 1)


def _check_scenario(scenario: str) -> None:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


@dataclass
class ScenarioConfig:
    """Everything that defines a run. Keys double as config-file keys."""

    scenario: str = "DFL_GOSSIP"
    model_kind: str = "dt"
    rounds: int = 20
    batch_size: int = 153
    pca_k: int = 22
    seed: int = 0
    validation_source: str = "global"
    # linear models
    eta0: float = 0.01
    l2: float = 1e-4
    epochs_per_batch: int = 1
    lr_schedule: str = "constant"
    # trees
    delta: float = 1e-7
    grace_period: int = 200
    tie_threshold: float = 0.05
    split_criterion: str = "info_gain"
    n_candidates: int = 10
    max_depth: int | None = None
    # forests
    n_trees: int = 10
    forest_cap: int | None = None

    def __post_init__(self):
        _check_scenario(self.scenario)
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model_kind!r}; expected one of {MODEL_KINDS}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.pca_k < 1:
            raise ConfigError("pca_k must be >= 1")
        if self.validation_source not in ("local", "global"):
            raise ConfigError("validation_source must be 'local' or 'global'")
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        # build eagerly so bad hyperparameters fail at config time
        self.sgd_hyper()
        self.tree_config()

    def sgd_hyper(self) -> SgdHyper:
        return SgdHyper(self.eta0, self.l2, self.epochs_per_batch, self.lr_schedule)

    def tree_config(self) -> TreeConfig:
        return TreeConfig(self.delta, self.grace_period, self.tie_threshold,
                          self.split_criterion, self.n_candidates, self.max_depth)

    @property
    def cap(self) -> int:
        return self.forest_cap or self.n_trees

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        names = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(names[k], v) for k, v in d.items()})


def _coerce(f, value):
    if value is None:
        return None
    t = str(f.type)
    try:
        if t.startswith("int"):
            return int(value)
        if t.startswith("float"):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {f.name!r}: cannot interpret {value!r}") from None
    return value


@dataclass
class Transfer:
    round: int
    sender: object
    receiver: object
    bytes: int


@dataclass
class CommLedger:
    entries: list[Transfer] = field(default_factory=list)

    def log(self, round_index: int, sender, receiver, nbytes: int) -> Transfer:
        t = Transfer(round_index, sender, receiver, nbytes)
        self.entries.append(t)
        return t

    def round_totals(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for t in self.entries:
            out[t.round] = out.get(t.round, 0) + t.bytes
        return out

    def round_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for t in self.entries:
            out[t.round] = out.get(t.round, 0) + 1
        return out

    @property
    def total_bytes(self) -> int:
        return sum(t.bytes for t in self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("round", "sender", "receiver", "bytes"))
        for t in self.entries:
            w.writerow((t.round, t.sender, t.receiver, t.bytes))
        return buf.getvalue()


@dataclass
class NodeState:
    entity_id: int
    model: object
    cursor: int = 0
    steps: int = 0
    inbox: list[tuple[object, str, int]] = field(default_factory=list)


@dataclass
class _Data:
    train_X: np.ndarray
    train_y: np.ndarray
    local_X: np.ndarray
    local_y: np.ndarray


class Simulation:
    """Holds per-node state for one scenario run; call :meth:`run_round` per round."""

    def __init__(self, config: ScenarioConfig, split: DatasetSplit,
                 preprocessor: Preprocessor | None = None, threads: int = 1):
        self.config = config
        self.threads = max(1, int(threads))
        ids = split.entity_ids
        if config.scenario != "NFL" and len(ids) < 2:
            raise ConfigError(f"{config.scenario} needs at least 2 entities")
        self.topology = build_topology(len(ids), config.scenario)

        if preprocessor is not None:
            k = min(config.pca_k, preprocessor.pca.k)
            if k != config.pca_k:
                log.warning("pca_k=%d exceeds the %d available components; using %d", config.pca_k, preprocessor.pca.k, k)
            self.preprocess = preprocessor.with_k(k)
        else:
            self.preprocess = None
        self.effective_k = self._project(split.global_validation.X[:1] if len(split.global_validation) else
                                         split.shards[0].train.X[:1]).shape[1]

        self.global_X = self._project(split.global_validation.X)
        self.global_y = split.global_validation.y
        if len(self.global_y) == 0:
            raise DataError("global validation set is empty")
        self.data: dict[int, _Data] = {}
        self.schedules = {}
        self.states: dict[int, NodeState] = {}
        for shard in split.shards:
            e = shard.entity_id
            if len(shard.local_validation) == 0:
                raise DataError(f"entity {e}: empty local validation set")
            self.data[e] = _Data(self._project(shard.train.X), shard.train.y,
                                 self._project(shard.local_validation.X), shard.local_validation.y)
            seq = np.random.SeedSequence(config.seed, spawn_key=(_STREAM_BATCHES, e))
            self.schedules[e] = make_batches(shard, config.batch_size, config.rounds, seq)
            self.states[e] = NodeState(e, self._init_model(e))
        self.gossip_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_STREAM_GOSSIP,)))
        self.ledger = CommLedger()
        self.metrics: list[dict] = []
        self.server_model = None
        self.round_index = 0

    def _project(self, X) -> np.ndarray:
        return self.preprocess(X) if self.preprocess is not None else np.asarray(X, dtype=np.float64)

    def _init_model(self, entity_id: int):
        cfg, k = self.config, self.effective_k
        if cfg.model_kind in ("svm", "lr"):
            return linear_init(k, "hinge" if cfg.model_kind == "svm" else "log")
        if cfg.model_kind == "dt":
            return HoeffdingTree(k, cfg.tree_config())
        seq = np.random.SeedSequence(cfg.seed, spawn_key=(_STREAM_FOREST, entity_id))
        return forest_init(cfg.n_trees, k, cfg.tree_config(), seq, t_max=cfg.cap)

    # -- phases ------------------------------------------------------------
    def _map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def _train(self, state: NodeState) -> None:
        sched = self.schedules[state.entity_id]
        if state.cursor >= sched.rounds:
            raise DataError(f"entity {state.entity_id}: batch schedule exhausted after {sched.rounds} rounds")
        d = self.data[state.entity_id]
        idx = sched.batches[state.cursor]
        X, y = d.train_X[idx], d.train_y[idx]
        model = state.model
        if isinstance(model, LinearModel):
            state.model = linear_partial_fit(model, X, y, self.config.sgd_hyper(), t0=state.steps)
        else:
            for xi, yi in zip(X, y):
                model.learn_one(xi, int(yi))
        state.steps += len(idx) * (self.config.epochs_per_batch if isinstance(model, LinearModel) else 1)
        state.cursor += 1

    def _validation(self, owner):
        if owner == SERVER or self.config.validation_source == "global":
            return self.global_X, self.global_y
        d = self.data[owner]
        return d.local_X, d.local_y

    def _aggregate(self, owner, own_model, received: list[tuple[object, object]]):
        """Combine ``own_model`` (None for the server) with ``received``, sorted by sender."""
        received = sorted(received, key=lambda p: p[0])
        pool = ([(owner, own_model)] if own_model is not None else []) + received
        models = [m for _, m in pool]
        if isinstance(models[0], LinearModel):
            return aggregate_mean(models)
        validation = self._validation(owner)
        if isinstance(models[0], HoeffdingTree):
            cand = CandidateSet(owner if own_model is not None else None, pool)
            return select_best_tree(cand, validation)
        return flatten_and_prune(models, validation, self.config.cap)

    def run_round(self) -> list[Transfer]:
        """Train, share and aggregate once; returns this round's ledger entries."""
        cfg = self.config
        r = self.round_index + 1
        nodes = sorted(self.states)
        self._map(self._train, [self.states[e] for e in nodes])

        # share: snapshot every post-training model before anyone aggregates
        wire = {e: dumps_model(self.states[e].model) for e in nodes}
        start = len(self.ledger.entries)

        def send(sender, receiver, text):
            self.ledger.log(r, sender, receiver, len(text.encode()))
            if receiver != SERVER:
                self.states[receiver].inbox.append((sender, text, len(text.encode())))

        if cfg.scenario == "CFL":
            for e in nodes:
                self.ledger.log(r, e, SERVER, len(wire[e].encode()))
            server_model = self._aggregate(SERVER, None, [(e, loads_model(wire[e])) for e in nodes])
            text = dumps_model(server_model)
            self.server_model = text
            for e in nodes:
                send(SERVER, e, text)
            for e in nodes:
                st = self.states[e]
                st.model = loads_model(st.inbox[0][1])
                st.inbox.clear()
        elif cfg.scenario in ("DFL", "DFL_GOSSIP"):
            if cfg.scenario == "DFL":
                pairs = [(s, t) for s in nodes for t in nodes if s != t]
            else:
                pairs = gossip_pairing(nodes, self.gossip_rng)
            for s, t in pairs:
                send(s, t, wire[s])

            def fold(e):
                st = self.states[e]
                if st.inbox:
                    received = [(s, loads_model(text)) for s, text, _ in st.inbox]
                    return self._aggregate(e, st.model, received)
                return st.model

            merged = self._map(fold, nodes)
            for e, model in zip(nodes, merged):
                self.states[e].model = model
                self.states[e].inbox.clear()

        self._evaluate(r)
        self.round_index = r
        return self.ledger.entries[start:]

    def _evaluate(self, r: int) -> None:
        cfg = self.config
        for e in sorted(self.states):
            model = self.states[e].model
            d = self.data[e]
            for scope, X, y in (("local", d.local_X, d.local_y), ("global", self.global_X, self.global_y)):
                c = confusion(predict_many(model, X), y)
                self.metrics.append(metrics_record(c, round=r, entity=e, scope=scope,
                                                   scenario=cfg.scenario, model=cfg.model_kind))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    metrics: list[dict]
    ledger: CommLedger
    models: dict[int, str]
    history: list[dict] = field(default_factory=list)

    def final(self, scope: str = "global") -> dict[int, dict]:
        last = max(m["round"] for m in self.metrics)
        return {m["entity"]: m for m in self.metrics if m["round"] == last and m["scope"] == scope}

    def mean_final_accuracy(self, scope: str = "global") -> float:
        return float(np.mean([m["accuracy"] for m in self.final(scope).values()]))


def run_round(sim: Simulation) -> list[Transfer]:
    return sim.run_round()


def run_scenario(config: ScenarioConfig, split: DatasetSplit, preprocessor: Preprocessor | None = None,
                 threads: int = 1, keep_history: bool = False) -> ScenarioResult:
    """Run ``config.rounds`` rounds and collect metrics, ledger and final models.

    With ``keep_history`` the serialized post-aggregation model of every node
    (and of the server under CFL) is kept for every round.
    """
    sim = Simulation(config, split, preprocessor, threads)
    history = []
    for _ in range(config.rounds):
        sim.run_round()
        if keep_history:
            snap = {e: dumps_model(st.model) for e, st in sorted(sim.states.items())}
            if sim.server_model is not None:
                snap[SERVER] = sim.server_model
            history.append(snap)
    models = {e: dumps_model(st.model) for e, st in sorted(sim.states.items())}
    return ScenarioResult(config, sim.metrics, sim.ledger, models, history)


def with_overrides(config: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(config, **changes)
