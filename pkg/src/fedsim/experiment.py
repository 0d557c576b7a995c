"""Config-driven experiment runner.

A single JSON config describes dataset, partition, model, algorithm, and
sampler; `run_experiment` materializes everything with seeded determinism and
writes a self-describing artifact directory (config echo, per-round metrics
CSV, similarity matrix, cluster assignment, cost summary). `compare_runs`
reproduces the rounds-to-target / byte-delta comparison across directories.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    Partition,
    load_csv,
    partition_dirichlet,
    partition_manual,
    partition_quantity,
    synth_blobs,
    synth_public,
)
from .engine import (
    ALGORITHMS,
    ClientState,
    LocalUpdate,
    ServerState,
    TrainConfig,
    local_train,
    make_clients,
    run_round,
)
from .metrics import CostLedger, CostRecord, read_metrics_csv, rounds_to_target, write_metrics_csv
from .mlp import ModelSpec, forward, init_params
from .sampling import (
    ClusterAssignment,
    SamplingPlan,
    build_similarity_matrix,
    default_cluster_count,
    kmeans_cluster,
    save_matrix_csv,
    stratified_sample,
    uniform_sample,
)

logger = logging.getLogger(__name__)

SAMPLERS = ("uniform", "stratified")
PARTITIONS = ("dirichlet", "quantity", "manual")

# Sub-stream salts so every random source is independent of the others.
_TRAIN_SALT, _TEST_SALT, _PUBLIC_SALT, _INIT_SALT, _PARTITION_SALT, _KMEANS_SALT = range(1, 7)


class ConfigError(ValueError):
    """Invalid experiment configuration, with one message per offending field."""


@dataclass
class ExperimentConfig:
    seed: int
    n_clients: int
    rounds: int
    name: str = "run"
    output_dir: str = "runs"
    # dataset (synthetic blobs unless csv_path is given)
    num_classes: int = 10
    dim: int = 16
    per_class: int = 200
    spread: float = 1.0
    test_per_class: int = 50
    csv_path: str | None = None
    test_csv_path: str | None = None
    test_fraction: float = 0.2
    # partition
    partition: str = "dirichlet"
    beta: float = 0.5
    labels_per_client: int = 2
    manual_groups: list | None = None
    # model
    hidden_sizes: list[int] = field(default_factory=lambda: [32])
    # federated training
    algorithm: str = "fedavg"
    sampler: str = "uniform"
    sample_ratio: float = 0.1
    epochs: int = 2
    batch_size: int = 32
    lr: float = 0.01
    decay: float = 0.99
    prox_mu: float = 0.0
    eq1_denominator: str = "sampled_sum"
    round1_participation: str = "all"
    soft_label_reduction: str = "per_sample_mean"
    cluster_k: int | None = None
    public_count: int = 1000
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in ("seed", "n_clients", "rounds") if k not in raw]
        if missing:
            raise ConfigError(
                "; ".join(f"{k}: required field is missing" for k in missing)
            )
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def budget(self) -> int:
        return min(self.n_clients, max(1, int(round(self.sample_ratio * self.n_clients))))

    def model_spec(self) -> ModelSpec:
        return ModelSpec((self.dim, *self.hidden_sizes, self.num_classes))

    def validate(self) -> None:
        errors: list[str] = []
        if not isinstance(self.seed, int):
            errors.append("seed: must be an integer (wall-clock seeding is not allowed)")
        if self.n_clients < 1:
            errors.append("n_clients: must be >= 1")
        if self.rounds < 1:
            errors.append("rounds: must be >= 1")
        if self.num_classes < 2:
            errors.append("num_classes: must be >= 2")
        if self.dim < 1:
            errors.append("dim: must be >= 1")
        if self.per_class < 1:
            errors.append("per_class: must be >= 1")
        if self.test_per_class < 1:
            errors.append("test_per_class: must be >= 1")
        if self.spread < 0:
            errors.append("spread: must be >= 0")
        if self.csv_path is not None and not (0 < self.test_fraction < 1):
            errors.append("test_fraction: must be in (0, 1)")
        if self.partition not in PARTITIONS:
            errors.append(f"partition: must be one of {PARTITIONS}")
        if self.partition == "dirichlet" and self.beta <= 0:
            errors.append("beta: must be > 0")
        if self.partition == "quantity":
            if not 1 <= self.labels_per_client <= self.num_classes:
                errors.append(f"labels_per_client: must be in [1, {self.num_classes}]")
            elif self.n_clients * self.labels_per_client < self.num_classes:
                errors.append(
                    "labels_per_client: infeasible, n_clients*labels_per_client "
                    f"= {self.n_clients * self.labels_per_client} < {self.num_classes} classes"
                )
        if self.partition == "manual" and not self.manual_groups:
            errors.append("manual_groups: required when partition is 'manual'")
        if any(h < 1 for h in self.hidden_sizes):
            errors.append("hidden_sizes: all sizes must be >= 1")
        if self.algorithm not in ALGORITHMS:
            errors.append(f"algorithm: must be one of {ALGORITHMS}")
        if self.sampler not in SAMPLERS:
            errors.append(f"sampler: must be one of {SAMPLERS}")
        if not 0 < self.sample_ratio <= 1:
            errors.append("sample_ratio: must be in (0, 1]")
        elif self.sample_ratio * self.n_clients < 1:
            errors.append("sample_ratio: sample_ratio*n_clients must be >= 1")
        if self.epochs < 1:
            errors.append("epochs: must be >= 1")
        if self.batch_size < 1:
            errors.append("batch_size: must be >= 1")
        if not self.lr > 0:
            errors.append("lr: must be > 0")
        if not 0 < self.decay <= 1:
            errors.append("decay: must be in (0, 1]")
        if self.prox_mu < 0:
            errors.append("prox_mu: must be >= 0")
        if self.eq1_denominator not in ("sampled_sum", "global"):
            errors.append("eq1_denominator: must be 'sampled_sum' or 'global'")
        if self.round1_participation not in ("all", "sampled"):
            errors.append("round1_participation: must be 'all' or 'sampled'")
        if self.soft_label_reduction not in ("per_sample_mean", "mean_distribution"):
            errors.append(
                "soft_label_reduction: must be 'per_sample_mean' or 'mean_distribution'"
            )
        if self.cluster_k is not None and not 1 <= self.cluster_k <= self.n_clients:
            errors.append(f"cluster_k: must be in [1, {self.n_clients}]")
        if self.public_count < 1:
            errors.append("public_count: must be >= 1")
        if self.workers < 1:
            errors.append("workers: must be >= 1")
        if errors:
            raise ConfigError("; ".join(errors))


@dataclass
class PreprocessResult:
    matrix: np.ndarray
    assignment: ClusterAssignment
    updates: list[LocalUpdate]
    cost: CostRecord | None = None


def preprocess(
    clients: list[ClientState],
    dataset: Dataset,
    public,
    server: ServerState,
    cfg: TrainConfig,
    *,
    cluster_k: int | None = None,
    reduction: str = "per_sample_mean",
    workers: int = 1,
    ledger: CostLedger | None = None,
) -> PreprocessResult:
    """One-time clustering pass, run between the first and second rounds.

    Every client trains a copy of the initial global model, predicts soft
    labels on the shared probe set, and "uploads" them; the server builds the
    KL similarity matrix and clusters its rows. Client training here doubles
    as the clients' round-1 local training (same seeds, same schedule).
    """
    if len(public) < 1:
        raise ValueError("public dataset is empty")

    def train(client: ClientState) -> LocalUpdate:
        return local_train(client, dataset, server.global_params, cfg, 1, server.server_control)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            updates = list(pool.map(train, clients))
    else:
        updates = [train(c) for c in clients]

    soft = [forward(u.new_params, public.features)[0] for u in updates]
    matrix = build_similarity_matrix(soft, reduction)
    k = default_cluster_count(len(clients)) if cluster_k is None else cluster_k
    assignment = kmeans_cluster(matrix, k, [cfg.master_seed, _KMEANS_SALT])
    for client, label in zip(clients, assignment.labels):
        client.cluster = int(label)

    cost = None
    if ledger is not None:
        cost = ledger.record_one_time(
            len(clients), len(public), public.dim, dataset.num_classes
        )
    return PreprocessResult(matrix, assignment, updates, cost)


def _split_holdout(ds: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_test = min(len(ds) - 1, max(1, int(round(fraction * len(ds)))))
    test_idx, train_idx = order[:n_test], order[n_test:]
    return (
        Dataset(ds.features[train_idx], ds.labels[train_idx], ds.num_classes),
        Dataset(ds.features[test_idx], ds.labels[test_idx], ds.num_classes),
    )


def _build_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.csv_path is not None:
        full = load_csv(cfg.csv_path)
        if cfg.test_csv_path is not None:
            return full, load_csv(cfg.test_csv_path, num_classes=full.num_classes)
        return _split_holdout(full, cfg.test_fraction, [cfg.seed, _TEST_SALT])
    # One pool per class so train and test share the same class means; the
    # first per_class samples of every class train, the rest are held out.
    pool = synth_blobs(
        cfg.num_classes,
        cfg.dim,
        cfg.per_class + cfg.test_per_class,
        cfg.spread,
        [cfg.seed, _TRAIN_SALT],
    )
    block = cfg.per_class + cfg.test_per_class
    train_idx, test_idx = [], []
    for k in range(cfg.num_classes):
        start = k * block
        train_idx.extend(range(start, start + cfg.per_class))
        test_idx.extend(range(start + cfg.per_class, start + block))
    return (
        Dataset(pool.features[train_idx], pool.labels[train_idx], cfg.num_classes),
        Dataset(pool.features[test_idx], pool.labels[test_idx], cfg.num_classes),
    )


def _build_partition(cfg: ExperimentConfig, train: Dataset) -> Partition:
    seed = [cfg.seed, _PARTITION_SALT]
    if cfg.partition == "dirichlet":
        return partition_dirichlet(train, cfg.n_clients, cfg.beta, seed)
    if cfg.partition == "quantity":
        return partition_quantity(train, cfg.n_clients, cfg.labels_per_client, seed)
    groups = [(int(count), [int(lb) for lb in labels]) for count, labels in cfg.manual_groups]
    part = partition_manual(train, groups)
    if part.num_clients != cfg.n_clients:
        raise ConfigError(
            f"manual_groups: groups define {part.num_clients} clients, expected {cfg.n_clients}"
        )
    return part


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run the configured experiment and return its artifact directory."""
    cfg.validate()
    out = Path(cfg.output_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2))

    train, test = _build_data(cfg)
    public = synth_public(train.dim, cfg.public_count, [cfg.seed, _PUBLIC_SALT])
    spec = ModelSpec((train.dim, *cfg.hidden_sizes, train.num_classes))
    partition = _build_partition(cfg, train)
    clients = make_clients(partition)
    global_params = init_params(spec, [cfg.seed, _INIT_SALT])
    control = np.zeros(spec.num_params) if cfg.algorithm == "scaffold" else None
    server = ServerState(global_params, control, 0, cfg.seed)
    tc = TrainConfig(
        algorithm=cfg.algorithm,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        decay=cfg.decay,
        prox_mu=cfg.prox_mu,
        master_seed=cfg.seed,
        eq1_denominator=cfg.eq1_denominator,
    )

    ledger = CostLedger()
    history = []
    matrix = None
    assignment = None
    for r in range(1, cfg.rounds + 1):
        if cfg.sampler == "stratified" and r == 1:
            pre = preprocess(
                clients,
                train,
                public,
                server,
                tc,
                cluster_k=cfg.cluster_k,
                reduction=cfg.soft_label_reduction,
                workers=cfg.workers,
                ledger=ledger,
            )
            matrix, assignment = pre.matrix, pre.assignment
            if cfg.round1_participation == "all":
                plan = SamplingPlan(1, np.arange(cfg.n_clients))
            else:
                plan = uniform_sample(cfg.n_clients, cfg.budget, 1, cfg.seed)
            server, rm = run_round(
                server, clients, train, plan, tc,
                test_data=test, ledger=ledger, updates=pre.updates,
            )
        else:
            if cfg.sampler == "stratified":
                plan = stratified_sample(assignment, cfg.budget, r, cfg.seed)
            else:
                plan = uniform_sample(cfg.n_clients, cfg.budget, r, cfg.seed)
            server, rm = run_round(
                server, clients, train, plan, tc,
                test_data=test, ledger=ledger, workers=cfg.workers,
            )
        history.append(rm)
        logger.debug("round %d: accuracy=%.4f entropy=%.4f", r, rm.test_accuracy, rm.sample_relative_entropy)

    write_metrics_csv(history, out / "metrics.csv")
    if assignment is not None:
        assignment.save_json(out / "clusters.json")
        save_matrix_csv(matrix, out / "similarity_matrix.csv")

    entropies = [m.sample_relative_entropy for m in history]
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "algorithm": cfg.algorithm,
        "sampler": cfg.sampler,
        "rounds": cfg.rounds,
        "n_clients": cfg.n_clients,
        "budget": cfg.budget,
        "model_params": spec.num_params,
        "model_bytes": spec.num_params * 4,
        "final_accuracy": history[-1].test_accuracy,
        "final_loss": history[-1].test_loss,
        "total_bytes": ledger.total,
        "one_time_bytes": ledger.one_time_total,
        "recurring_bytes": ledger.recurring_total,
        "mean_entropy": float(np.mean(entropies)),
        "mean_entropy_after_round1": float(np.mean(entropies[1:])) if len(entropies) > 1 else None,
        "cluster_count": assignment.k if assignment is not None else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    return out


def compare_runs(run_dirs: list, target_accuracy: float) -> dict:
    """Rounds-to-target and byte deltas of each run against the first one."""
    if len(run_dirs) < 2:
        raise ValueError("need at least two run directories to compare")
    rows = []
    for d in run_dirs:
        d = Path(d)
        metrics_path = d / "metrics.csv"
        summary_path = d / "summary.json"
        if not metrics_path.exists() or not summary_path.exists():
            raise FileNotFoundError(f"{d} is missing metrics.csv or summary.json")
        history = read_metrics_csv(metrics_path)
        summary = json.loads(summary_path.read_text())
        reached = rounds_to_target([m.test_accuracy for m in history], target_accuracy)
        if reached is None:
            bytes_to_target = history[-1].cumulative_bytes
            display = f">{len(history)}"
        else:
            bytes_to_target = history[reached - 1].cumulative_bytes
            display = str(reached)
        one_time = int(summary.get("one_time_bytes", 0))
        rows.append(
            {
                "run": str(d),
                "name": summary.get("name"),
                "algorithm": summary.get("algorithm"),
                "sampler": summary.get("sampler"),
                "reached": reached is not None,
                "rounds_to_target": reached,
                "rounds_to_target_display": display,
                "bytes_to_target": int(bytes_to_target),
                "one_time_bytes": one_time,
                "recurring_bytes_to_target": int(bytes_to_target) - one_time,
            }
        )
    base = rows[0]
    for row in rows:
        row["delta_bytes"] = row["bytes_to_target"] - base["bytes_to_target"]
        row["delta_recurring_bytes"] = (
            row["recurring_bytes_to_target"] - base["recurring_bytes_to_target"]
        )
    return {
        "target_accuracy": target_accuracy,
        "baseline": base["run"],
        "runs": rows,
    }
