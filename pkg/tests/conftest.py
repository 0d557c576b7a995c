"""Shared fixtures: the manually partitioned label-pair scenario.

Five groups of clients hold disjoint label pairs (5+5+5+5+4 clients over ten
classes). After one preprocessing pass the similarity matrix should separate
the groups; several test modules and the acceptance suite reuse the trained
state, so it is built once per seed and cached for the whole session.
"""

import numpy as np
import pytest

from fedsim import (
    ModelSpec,
    ServerState,
    TrainConfig,
    init_params,
    make_clients,
    partition_manual,
    preprocess,
    synth_blobs,
    synth_public,
)

MANUAL_GROUPS = [(5, [0, 1]), (5, [2, 3]), (5, [4, 5]), (5, [6, 7]), (4, [8, 9])]
MANUAL_TRUTH = np.array(sum(([g] * c for g, (c, _) in enumerate(MANUAL_GROUPS)), []))
MANUAL_SEEDS = (11, 22, 33, 44, 55)


class ManualSplitScenario:
    """Trained 24-client manual label-pair setup for one seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self.train = synth_blobs(10, 16, 100, 1.0, [seed, 1])
        self.test = synth_blobs(10, 16, 40, 1.0, [seed, 2])
        self.public = synth_public(16, 1000, [seed, 3])
        self.partition = partition_manual(self.train, MANUAL_GROUPS)
        self.clients = make_clients(self.partition)
        self.spec = ModelSpec((16, 32, 10))
        self.server = ServerState(init_params(self.spec, [seed, 4]), None, 0, seed)
        self.cfg = TrainConfig(
            algorithm="fedavg", epochs=10, batch_size=8, lr=0.1, decay=0.99, master_seed=seed
        )
        self.pre = preprocess(
            self.clients, self.train, self.public, self.server, self.cfg, cluster_k=5
        )

    def recovered_exactly(self) -> bool:
        mapping: dict[int, int] = {}
        for cid, truth in enumerate(MANUAL_TRUTH):
            mapping.setdefault(int(truth), int(self.pre.assignment.labels[cid]))
            if mapping[int(truth)] != int(self.pre.assignment.labels[cid]):
                return False
        return len(set(mapping.values())) == 5


_cache: dict[int, ManualSplitScenario] = {}


def manual_scenario(seed: int) -> ManualSplitScenario:
    if seed not in _cache:
        _cache[seed] = ManualSplitScenario(seed)
    return _cache[seed]


@pytest.fixture(scope="session")
def manual_split():
    return manual_scenario(MANUAL_SEEDS[0])
