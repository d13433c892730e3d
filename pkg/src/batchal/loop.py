"""The labeling loop: train, score the pool, select a batch, reveal labels, retrain.

One repetition starts from a seeded uniform draw of initial labels, then
alternates batch selection and from-scratch retraining for a fixed number of
rounds, logging test accuracy, selection wall time, and batch diversity
diagnostics per round. Every random choice is driven by seeds derived from
(base_seed + repetition, stream, round), so repetitions are independent and
the whole experiment is reproducible from its config.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import compute_batch_diagnostics
from .embeddings import pool_gradient_embeddings
from .mlp import MlpConfig, forward_pool, test_accuracy, train_from_scratch
from .samplers import (
    SelectorKind,
    ffkc_select,
    kdpp_mcmc_sample,
    kmeanspp_seed,
    random_select,
    uncertainty_select,
)

# Seed-derivation streams; see derived_seed.
_STREAM_INIT = 0
_STREAM_SELECT = 1
_STREAM_ARM = 2
_STREAM_TRAIN = 3


def derived_seed(rep_seed, stream, round_index=0):
    """64-bit seed derived from (repetition seed, stream, round)."""
    ss = np.random.SeedSequence([int(rep_seed), int(stream), int(round_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def initial_seed(rep_seed):
    return derived_seed(rep_seed, _STREAM_INIT)


def selection_seed(rep_seed, round_index):
    return derived_seed(rep_seed, _STREAM_SELECT, round_index)


def arm_seed(rep_seed, round_index):
    return derived_seed(rep_seed, _STREAM_ARM, round_index)


def training_seed(rep_seed, round_index):
    return derived_seed(rep_seed, _STREAM_TRAIN, round_index)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell: a selector run R times on one dataset."""

    dataset: str
    selector: SelectorKind
    initial_labels: int
    batch_size: int
    rounds: int
    repetitions: int
    base_seed: int
    model: MlpConfig

    def validate(self):
        self.selector.validate()
        self.model.validate()
        if self.initial_labels < 1 or self.batch_size < 1:
            raise ValueError("initial_labels and batch_size must be >= 1")
        if self.rounds < 0 or self.repetitions < 1:
            raise ValueError("rounds must be >= 0 and repetitions >= 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be nonnegative")
        return self

    @property
    def final_labels(self):
        return self.initial_labels + self.rounds * self.batch_size


@dataclass
class RoundLog:
    """Per-round record; round 0 is the initial model, diagnostics are NaN there.

    meta carries selector-specific extras (the bandit's arm choice and
    reward); it stays in memory and is not part of the persisted schema.
    """

    rep: int
    round: int
    labels: int
    test_accuracy: float
    sel_time_s: float
    log_gram_det: float
    mean_norm: float
    meta: dict = field(default_factory=dict)


@dataclass
class AlblState:
    """Two-arm exponential-weights bandit with an exploration floor.

    Arm probabilities are (1 - gamma) * softmax(eta * cumulative rewards)
    plus gamma split evenly. Rewards are importance-weighted by the
    probability of the arm that earned them, so both arms' cumulative
    rewards stay on a comparable scale no matter how rarely one is played.
    """

    eta: float = 0.3
    gamma: float = 0.1
    arms: tuple = ("coreset", "conf")
    cum_rewards: np.ndarray = field(default_factory=lambda: np.zeros(2))
    history: list = field(default_factory=list)
    pending: tuple | None = None

    def arm_probabilities(self):
        scaled = self.eta * self.cum_rewards
        scaled = scaled - scaled.max()
        soft = np.exp(scaled)
        soft /= soft.sum()
        return (1.0 - self.gamma) * soft + self.gamma / len(self.arms)

    def choose_arm(self, seed):
        probs = self.arm_probabilities()
        u = np.random.default_rng(seed).random()
        arm = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        arm = min(arm, len(self.arms) - 1)
        return arm, float(probs[arm])

    def update(self, arm, prob, reward):
        if not 0.0 < prob <= 1.0:
            raise ValueError("arm probability must lie in (0, 1]")
        self.cum_rewards[arm] += reward / prob
        self.history.append((self.arms[arm], prob, reward))


def _positions_of(candidates, ids):
    # candidates is sorted ascending, ids is a subset of it.
    pos = np.searchsorted(candidates, ids)
    return pos


def _select_batch(config, state, seed_round, candidates, probs, hidden, labeled_hidden_fn):
    """Dispatch one selection; returns (ids array, positions array, seconds, embeddings or None)."""
    name = config.selector.name
    batch = config.batch_size
    t0 = time.perf_counter()
    pool_embeddings = None
    if name == "rand":
        ids = np.array(random_select(candidates, batch, selection_seed(*seed_round)))
        ids.sort()
        pos = _positions_of(candidates, ids)
    elif name in ("conf", "margin", "entropy"):
        pos = np.array(uncertainty_select(probs, name, batch))
        ids = candidates[pos]
    elif name == "coreset":
        pos = np.array(ffkc_select(labeled_hidden_fn(), hidden, batch))
        ids = candidates[pos]
    elif name == "badge":
        pool_embeddings = pool_gradient_embeddings(probs, hidden)
        pos = np.array(kmeanspp_seed(pool_embeddings, batch, selection_seed(*seed_round)))
        ids = candidates[pos]
    elif name == "badge_kdpp":
        pool_embeddings = pool_gradient_embeddings(probs, hidden)
        pos = np.array(kdpp_mcmc_sample(pool_embeddings, batch, selection_seed(*seed_round), config.selector.tau))
        ids = candidates[pos]
    elif name == "albl":
        arm, prob = state.choose_arm(arm_seed(*seed_round))
        if state.arms[arm] == "coreset":
            pos = np.array(ffkc_select(labeled_hidden_fn(), hidden, batch))
        else:
            pos = np.array(uncertainty_select(probs, "conf", batch))
        ids = candidates[pos]
        state.pending = (arm, prob)
    else:
        raise ValueError(f"unknown selector {name!r}")
    seconds = time.perf_counter() - t0
    return ids, pos, seconds, pool_embeddings


def _run_repetition(config, dataset, rep, on_round=None):
    X, y = dataset.features, dataset.labels
    rep_seed = config.base_seed + rep
    pool = np.sort(np.asarray(dataset.train_idx))
    test_X, test_y = X[dataset.test_idx], y[dataset.test_idx]

    init_rng = np.random.default_rng(initial_seed(rep_seed))
    labeled = np.sort(init_rng.choice(pool, size=config.initial_labels, replace=False))

    state = AlblState(eta=config.selector.eta, gamma=config.selector.gamma) if config.selector.name == "albl" else None

    params = train_from_scratch(
        config.model.with_seed(training_seed(rep_seed, 0)), X[labeled], y[labeled]
    ).params
    logs = [
        RoundLog(
            rep=rep,
            round=0,
            labels=int(labeled.size),
            test_accuracy=test_accuracy(params, test_X, test_y),
            sel_time_s=0.0,
            log_gram_det=float("nan"),
            mean_norm=float("nan"),
        )
    ]
    if on_round:
        on_round(logs[-1])

    for t in range(1, config.rounds + 1):
        candidates = np.setdiff1d(pool, labeled)
        assert np.intersect1d(candidates, labeled).size == 0
        probs, hidden = forward_pool(params, X[candidates])

        frozen_params = params

        def labeled_hidden():
            return forward_pool(frozen_params, X[labeled])[1]

        ids, pos, seconds, pool_embeddings = _select_batch(
            config, state, (rep_seed, t), candidates, probs, hidden, labeled_hidden
        )
        if pool_embeddings is not None:
            batch_embeddings = pool_embeddings[pos]
        else:
            batch_embeddings = pool_gradient_embeddings(probs[pos], hidden[pos])
        diag = compute_batch_diagnostics(batch_embeddings)

        labeled = np.sort(np.concatenate([labeled, ids]))
        params = train_from_scratch(
            config.model.with_seed(training_seed(rep_seed, t)), X[labeled], y[labeled]
        ).params
        meta = {}
        if state is not None:
            arm, prob = state.pending
            reward = test_accuracy(params, X[ids], y[ids])
            state.update(arm, prob, reward)
            meta = {"arm": state.arms[arm], "arm_prob": prob, "reward": reward}

        logs.append(
            RoundLog(
                rep=rep,
                round=t,
                labels=int(labeled.size),
                test_accuracy=test_accuracy(params, test_X, test_y),
                sel_time_s=seconds,
                log_gram_det=diag.log_gram_det,
                mean_norm=diag.mean_norm,
                meta=meta,
            )
        )
        if on_round:
            on_round(logs[-1])
    return logs


def run_experiment(config, dataset, on_round=None):
    """Run every repetition of config on dataset; returns per-rep RoundLog lists.

    on_round, when given, is called with each RoundLog as it is produced
    (streaming writers hook in here).
    """
    config.validate()
    dataset.validate()
    if config.model.input_dim != dataset.input_dim:
        raise ValueError(
            f"model input_dim {config.model.input_dim} != dataset dim {dataset.input_dim}"
        )
    if config.model.num_classes != dataset.num_classes:
        raise ValueError(
            f"model num_classes {config.model.num_classes} != dataset classes {dataset.num_classes}"
        )
    if config.final_labels > dataset.train_idx.size:
        raise ValueError(
            f"schedule needs {config.final_labels} labels but the train pool has {dataset.train_idx.size}"
        )
    if dataset.test_idx.size == 0:
        raise ValueError("dataset has an empty test split")
    return [_run_repetition(config, dataset, rep, on_round) for rep in range(config.repetitions)]


def accuracy_table(logs):
    """Arrange RoundLogs (flat or per-rep lists) into (budgets, accuracy matrix).

    Rows of the matrix are repetitions in rep order; columns follow the
    sorted distinct label counts. Every repetition must have logged every
    budget exactly once.
    """
    flat = []
    for item in logs:
        if isinstance(item, list):
            flat.extend(item)
        else:
            flat.append(item)
    if not flat:
        raise ValueError("no round logs given")
    reps = sorted({log.rep for log in flat})
    budgets = sorted({log.labels for log in flat})
    table = np.full((len(reps), len(budgets)), np.nan)
    rep_pos = {r: i for i, r in enumerate(reps)}
    col = {b: j for j, b in enumerate(budgets)}
    for log in flat:
        i, j = rep_pos[log.rep], col[log.labels]
        if not np.isnan(table[i, j]):
            raise ValueError(f"duplicate log for rep {log.rep} at {log.labels} labels")
        table[i, j] = log.test_accuracy
    if np.isnan(table).any():
        raise ValueError("some repetitions are missing budgets")
    return budgets, table


def errors_at_budget(logs, budget):
    """Per-repetition test errors (1 - accuracy) at one logged label count."""
    budgets, table = accuracy_table(logs)
    if budget not in budgets:
        raise ValueError(f"budget {budget} was not logged (have {budgets})")
    return 1.0 - table[:, budgets.index(budget)]
