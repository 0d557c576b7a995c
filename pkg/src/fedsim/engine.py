"""Federated round orchestration: local training, upload, and aggregation.

Supports plain weighted averaging (fedavg), a proximal local objective
(fedprox), server/client control variates (scaffold), and step-normalized
averaging (fednova). Aggregation always consumes updates in client-id order,
so permuting the update list never changes the result. A client whose update
diverges to non-finite values is dropped from the round and logged; the
simulation keeps going.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import metrics as metrics_mod
from .data import Dataset, Partition
from .mlp import ModelParams, loss_and_grad, sgd_step
from .sampling import SamplingPlan

logger = logging.getLogger(__name__)

ALGORITHMS = ("fedavg", "fedprox", "scaffold", "fednova")


class DivergenceError(RuntimeError):
    """Local training produced non-finite values."""


@dataclass
class ClientState:
    id: int
    data: np.ndarray
    params: ModelParams | None = None
    control: np.ndarray | None = None
    cluster: int | None = None
    local_steps_taken: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.data.size < 1:
            raise ValueError(f"client {self.id} has no data")


@dataclass
class ServerState:
    global_params: ModelParams
    server_control: np.ndarray | None = None
    round: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round must be >= 0")
        if self.server_control is not None:
            self.server_control = np.asarray(self.server_control, dtype=np.float64)
            if self.server_control.shape != self.global_params.values.shape:
                raise ValueError("server control length must match the model")


@dataclass
class LocalUpdate:
    client_id: int
    new_params: ModelParams
    num_samples: int
    local_steps: int
    delta_control: np.ndarray | None = None
    new_control: np.ndarray | None = None


@dataclass
class TrainConfig:
    algorithm: str = "fedavg"
    epochs: int = 1
    batch_size: int = 32
    lr: float = 0.01
    decay: float = 0.99
    prox_mu: float = 0.0
    master_seed: int = 0
    eq1_denominator: str = "sampled_sum"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm: {self.algorithm!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.prox_mu < 0:
            raise ValueError("prox_mu must be >= 0")
        if self.eq1_denominator not in ("sampled_sum", "global"):
            raise ValueError("eq1_denominator must be 'sampled_sum' or 'global'")


def make_clients(partition: Partition) -> list[ClientState]:
    return [ClientState(i, idx) for i, idx in enumerate(partition.assignment)]


def local_train(
    client: ClientState,
    dataset: Dataset,
    global_params: ModelParams,
    cfg: TrainConfig,
    round_idx: int,
    server_control: np.ndarray | None = None,
) -> LocalUpdate:
    """Mini-batch SGD from a copy of the global model, seeded per (seed, round, client).

    The learning rate is multiplied by `decay` after each local epoch. SCAFFOLD
    corrects every gradient by (c - c_i) and reports the control-variate delta
    derived from the parameter displacement over the effective last-epoch rate.
    """
    scaffold = cfg.algorithm == "scaffold"
    if scaffold and server_control is None:
        raise ValueError("scaffold requires the server control variate")
    client_control = None
    correction = None
    if scaffold:
        client_control = (
            np.zeros_like(global_params.values) if client.control is None else client.control
        )
        correction = server_control - client_control
    prox_mu = cfg.prox_mu if cfg.algorithm == "fedprox" else 0.0
    anchor = global_params if prox_mu > 0 else None

    rng = np.random.default_rng([cfg.master_seed, round_idx, client.id])
    idx = client.data
    params = global_params.copy()
    lr = cfg.lr
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(idx.size)
        for start in range(0, idx.size, cfg.batch_size):
            sel = idx[order[start : start + cfg.batch_size]]
            loss, grad = loss_and_grad(
                params, dataset.features[sel], dataset.labels[sel], prox_mu, anchor
            )
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(f"client {client.id} diverged in round {round_idx}")
            if scaffold:
                grad = grad + correction
            params = sgd_step(params, grad, lr)
            steps += 1
        lr *= cfg.decay

    delta_control = None
    new_control = None
    if scaffold:
        lr_effective = cfg.lr * cfg.decay ** (cfg.epochs - 1)
        new_control = client_control - server_control + (
            global_params.values - params.values
        ) / (steps * lr_effective)
        if not np.all(np.isfinite(new_control)):
            raise DivergenceError(f"client {client.id} control variate diverged")
        delta_control = new_control - client_control

    return LocalUpdate(client.id, params, int(idx.size), steps, delta_control, new_control)


def _sorted_weights(updates: list[LocalUpdate], denominator: str, total_size: int | None):
    """Updates in client-id order with exact-integer sample weights."""
    if not updates:
        raise ValueError("no updates to aggregate")
    ups = sorted(updates, key=lambda u: u.client_id)
    sizes = [int(u.num_samples) for u in ups]
    if denominator == "global":
        if total_size is None:
            raise ValueError("global denominator needs the total dataset size")
        denom = int(total_size)
    else:
        denom = sum(sizes)
    return ups, sizes, denom


def aggregate_fedavg(
    updates: list[LocalUpdate],
    denominator: str = "sampled_sum",
    total_size: int | None = None,
) -> ModelParams:
    """Sample-count-weighted mean of the uploaded parameters."""
    ups, sizes, denom = _sorted_weights(updates, denominator, total_size)
    acc = np.zeros_like(ups[0].new_params.values)
    for u, sz in zip(ups, sizes):
        acc += (sz / denom) * u.new_params.values
    return ModelParams(acc, ups[0].new_params.spec)


def aggregate_scaffold(
    server: ServerState,
    updates: list[LocalUpdate],
    total_clients: int,
    denominator: str = "sampled_sum",
    total_size: int | None = None,
) -> tuple[ModelParams, np.ndarray]:
    """FedAvg parameters plus the server control moved by |s|/N times the mean delta."""
    ups = sorted(updates, key=lambda u: u.client_id)
    if any(u.delta_control is None for u in ups):
        raise ValueError("scaffold aggregation needs delta_control on every update")
    params = aggregate_fedavg(ups, denominator, total_size)
    control = (
        np.zeros_like(server.global_params.values)
        if server.server_control is None
        else server.server_control
    )
    mean_delta = np.mean(np.stack([u.delta_control for u in ups]), axis=0)
    new_control = control + (len(ups) / total_clients) * mean_delta
    return params, new_control


def aggregate_fednova(global_params: ModelParams, updates: list[LocalUpdate]) -> ModelParams:
    """Step-normalized averaging: rescale client displacements by their step counts.

    Equivalent to g - tau_eff * sum_i p_i (g - w_i)/tau_i with p_i = |D_i|/sum|D_j|
    and tau_eff = sum_i p_i tau_i. Coefficients are reduced as exact rationals so
    the equal-steps case degenerates to the fedavg weighted mean bit for bit.
    """
    ups, sizes, denom = _sorted_weights(updates, "sampled_sum", None)
    taus = [int(u.local_steps) for u in ups]
    if any(t < 1 for t in taus):
        raise ValueError("every update needs local_steps >= 1")
    weighted_tau = sum(d * t for d, t in zip(sizes, taus))
    acc = np.zeros_like(ups[0].new_params.values)
    coeff_sum = Fraction(0)
    for u, d, t in zip(ups, sizes, taus):
        coeff = Fraction(weighted_tau * d, denom * denom * t)
        coeff_sum += coeff
        acc += float(coeff) * u.new_params.values
    leftover = float(1 - coeff_sum)
    if leftover:
        acc += leftover * global_params.values
    return ModelParams(acc, global_params.spec)


def _train_selected(clients, dataset, snapshot, cfg, round_idx, server_control, plan, workers):
    def one(cid: int) -> LocalUpdate | None:
        try:
            return local_train(clients[cid], dataset, snapshot, cfg, round_idx, server_control)
        except DivergenceError as exc:
            logger.warning("dropping update: %s", exc)
            return None

    ids = [int(c) for c in plan.selected]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, ids))
    return [one(cid) for cid in ids]


def run_round(
    server: ServerState,
    clients: list[ClientState],
    dataset: Dataset,
    plan: SamplingPlan,
    cfg: TrainConfig,
    *,
    test_data: Dataset | None = None,
    ledger: metrics_mod.CostLedger | None = None,
    workers: int = 1,
    updates: list[LocalUpdate] | None = None,
) -> tuple[ServerState, metrics_mod.RoundMetrics]:
    """Train the sampled clients from one global snapshot, aggregate, and score.

    Pre-computed `updates` (e.g. from the clustering pre-pass) skip the training
    step but go through identical aggregation and accounting.
    """
    if plan.budget == 0:
        raise ValueError("empty sampling plan")
    if plan.selected.min() < 0 or plan.selected.max() >= len(clients):
        raise ValueError("plan references unknown client ids")
    round_idx = server.round + 1
    snapshot = server.global_params

    if updates is None:
        results = _train_selected(
            clients, dataset, snapshot, cfg, round_idx, server.server_control, plan, workers
        )
    else:
        by_id = {u.client_id: u for u in updates}
        results = [by_id[int(c)] for c in plan.selected]
    accepted = [u for u in results if u is not None]

    new_control = server.server_control
    if not accepted:
        logger.warning("round %d: every update diverged; global model unchanged", round_idx)
        new_global = snapshot
    elif cfg.algorithm == "scaffold":
        total = sum(len(c.data) for c in clients)
        new_global, new_control = aggregate_scaffold(
            server, accepted, len(clients), cfg.eq1_denominator, total
        )
        for u in accepted:
            clients[u.client_id].control = u.new_control
    elif cfg.algorithm == "fednova":
        new_global = aggregate_fednova(snapshot, accepted)
    else:
        total = sum(len(c.data) for c in clients)
        new_global = aggregate_fedavg(accepted, cfg.eq1_denominator, total)

    for u in accepted:
        clients[u.client_id].params = u.new_params
        clients[u.client_id].local_steps_taken += u.local_steps

    if ledger is not None:
        model_bytes = snapshot.spec.num_params * metrics_mod.BYTES_PER_PARAM
        ledger.record_round(plan, model_bytes, cfg.algorithm)

    entropy = metrics_mod.sample_relative_entropy(
        plan, [c.data for c in clients], dataset.labels, dataset.num_classes
    )
    if test_data is not None:
        accuracy, loss = metrics_mod.evaluate_global(new_global, test_data)
    else:
        accuracy, loss = math.nan, math.nan

    new_server = ServerState(new_global, new_control, round_idx, server.rng_seed)
    rm = metrics_mod.RoundMetrics(
        round=round_idx,
        test_accuracy=accuracy,
        test_loss=loss,
        sample_relative_entropy=entropy,
        cumulative_bytes=ledger.total if ledger is not None else 0,
    )
    return new_server, rm
