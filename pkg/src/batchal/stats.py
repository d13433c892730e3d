"""Paired comparison machinery for selector error curves.

Selectors are compared per experiment setting (dataset D, batch size B,
architecture A, labeling budget L) on paired per-repetition test errors with
the two-sided paired t statistic

    t = sqrt(n) * mean(e_i - e_j) / std(e_i - e_j)      (sample std, ddof 1)

Lower error wins: algorithm i beats j when t falls below the negative
critical value. Wins are accumulated into a penalty matrix in which every
(D, B, A) combination contributes total weight one, split evenly over its
logged budgets, and error curves are summarized as CDFs of the error
normalized by a baseline selector at the same setting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Two-sided 5% critical values of Student's t by degrees of freedom. The
# five-repetition protocol uses df = 4, i.e. 2.776.
_T_CRIT_95 = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571,
    6: 2.447, 7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228,
    11: 2.201, 12: 2.179, 13: 2.160, 14: 2.145, 15: 2.131,
    16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093, 20: 2.086,
    21: 2.080, 22: 2.074, 23: 2.069, 24: 2.064, 25: 2.060,
    26: 2.056, 27: 2.052, 28: 2.048, 29: 2.045, 30: 2.042,
}

DEFAULT_CRITICAL = _T_CRIT_95[4]


def critical_value(n_reps):
    """Two-sided 5% t critical value for n_reps paired repetitions."""
    df = n_reps - 1
    if df not in _T_CRIT_95:
        raise ValueError(f"no tabulated critical value for {n_reps} repetitions")
    return _T_CRIT_95[df]


def _paired(errors_i, errors_j):
    a = np.asarray(errors_i, dtype=np.float64)
    b = np.asarray(errors_j, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"error vectors must be 1-d with equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError("paired t statistic needs at least two repetitions")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("error vectors contain non-finite entries")
    return a, b


def t_score(errors_i, errors_j):
    """Paired t statistic of errors_i - errors_j.

    A zero-variance nonzero difference is reported as signed infinity; an
    identically-zero difference is 0.
    """
    a, b = _paired(errors_i, errors_j)
    diffs = a - b
    mu = float(np.mean(diffs))
    sigma = float(np.std(diffs, ddof=1))
    if sigma == 0.0:
        if mu == 0.0:
            return 0.0
        return math.inf if mu > 0 else -math.inf
    return math.sqrt(diffs.size) * mu / sigma


def beats(errors_i, errors_j, critical=None):
    """Outcome of the paired test: "i", "j", or "tie".

    Lower error wins, so "i" means t < -critical. A statistic landing
    exactly on the critical value is a tie. The default critical value is
    the tabulated two-sided 5% value for the repetition count.
    """
    a, _ = _paired(errors_i, errors_j)
    if critical is None:
        critical = critical_value(a.size)
    t = t_score(errors_i, errors_j)
    if t < -critical:
        return "i"
    if t > critical:
        return "j"
    return "tie"


@dataclass(frozen=True)
class SettingKey:
    """One experiment cell: dataset, batch size, architecture, budget."""

    dataset: str
    batch_size: int
    arch: str
    budget: int

    def combo(self):
        return (self.dataset, self.batch_size, self.arch)


@dataclass(frozen=True)
class PenaltyMatrix:
    algorithms: tuple
    matrix: np.ndarray
    n_combos: int

    def entry(self, winner, loser):
        return float(self.matrix[self.algorithms.index(winner), self.algorithms.index(loser)])


def _combo_weights(errors_by_setting):
    counts = {}
    for key in errors_by_setting:
        counts[key.combo()] = counts.get(key.combo(), 0) + 1
    return {combo: 1.0 / n for combo, n in counts.items()}, len(counts)


def penalty_matrix(errors_by_setting, algorithms, critical=None):
    """Accumulate pairwise wins into a penalty matrix.

    errors_by_setting maps SettingKey -> {algorithm: per-repetition errors}.
    Within one (dataset, batch size, arch) combination each logged budget
    carries weight 1/(number of budgets), so a combination contributes at
    most 1 to any entry and entries are bounded by the number of
    combinations. P[i][j] is incremented when i beats j.
    """
    algorithms = tuple(algorithms)
    if len(set(algorithms)) != len(algorithms) or not algorithms:
        raise ValueError("algorithms must be a nonempty list of distinct names")
    weights, n_combos = _combo_weights(errors_by_setting)
    mat = np.zeros((len(algorithms), len(algorithms)))
    for key, per_alg in errors_by_setting.items():
        missing = [a for a in algorithms if a not in per_alg]
        if missing:
            raise ValueError(f"setting {key} lacks errors for {missing}")
        w = weights[key.combo()]
        for i, alg_i in enumerate(algorithms):
            for j, alg_j in enumerate(algorithms):
                if i >= j:
                    continue
                outcome = beats(per_alg[alg_i], per_alg[alg_j], critical=critical)
                if outcome == "i":
                    mat[i, j] += w
                elif outcome == "j":
                    mat[j, i] += w
    return PenaltyMatrix(algorithms=algorithms, matrix=mat, n_combos=n_combos)


def compute_n0(budgets, mean_accuracies):
    """Smallest logged budget whose mean accuracy reaches 99% of the final one."""
    budgets = list(budgets)
    accs = list(mean_accuracies)
    if len(budgets) != len(accs) or not budgets:
        raise ValueError("budgets and mean_accuracies must be nonempty and parallel")
    order = np.argsort(budgets)
    target = 0.99 * accs[order[-1]]
    for pos in order:
        if accs[pos] >= target:
            return int(budgets[pos])
    raise AssertionError("unreachable: the final budget always meets its own target")


def budget_schedule(m_initial, batch_size, n0):
    """Doubling budget grid M + 2^(m-1) B for m = 1 .. floor(log2((n0 - M)/B)).

    Computed in exact integer arithmetic. Empty when n0 - M < B.
    """
    if m_initial < 0 or batch_size < 1:
        raise ValueError("need m_initial >= 0 and batch_size >= 1")
    if n0 <= m_initial:
        raise ValueError(f"n0 ({n0}) must exceed the initial label count ({m_initial})")
    q = (n0 - m_initial) // batch_size
    if q < 1:
        return ()
    m_max = q.bit_length() - 1
    return tuple(m_initial + (1 << (m - 1)) * batch_size for m in range(1, m_max + 1))


@dataclass(frozen=True)
class NormalizedErrorCdf:
    """Per-algorithm step CDFs of error normalized by a baseline selector.

    Each curve is an (m, 2) array of (normalized error, cumulative weight)
    rows sorted by normalized error; the CDF is right-continuous and ends at
    total_weight. Settings where the baseline error is zero are skipped and
    listed in skipped.
    """

    curves: dict
    skipped: tuple
    total_weight: float


def cdf_value(curve, x):
    """Evaluate a right-continuous step curve (m, 2) at x."""
    arr = np.asarray(curve, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    pos = np.searchsorted(arr[:, 0], x, side="right")
    return float(arr[pos - 1, 1]) if pos > 0 else 0.0


def normalized_error_cdf(errors_by_setting, algorithms, baseline="rand"):
    """Aggregate normalized mean errors into one weighted CDF per algorithm.

    For each setting, every algorithm's mean error is divided by the
    baseline's mean error there (the baseline therefore sits at 1), and the
    setting contributes weight 1/(budgets in its combination), so each
    (dataset, batch size, arch) combination has total weight one.
    """
    algorithms = tuple(algorithms)
    if baseline not in algorithms:
        raise ValueError(f"baseline {baseline!r} missing from algorithms")
    weights, _ = _combo_weights(errors_by_setting)
    samples = {alg: [] for alg in algorithms}
    skipped = []
    total = 0.0
    for key, per_alg in errors_by_setting.items():
        missing = [a for a in algorithms if a not in per_alg]
        if missing:
            raise ValueError(f"setting {key} lacks errors for {missing}")
        base = float(np.mean(np.asarray(per_alg[baseline], dtype=np.float64)))
        if base == 0.0:
            skipped.append(key)
            continue
        w = weights[key.combo()]
        total += w
        for alg in algorithms:
            ner = float(np.mean(np.asarray(per_alg[alg], dtype=np.float64))) / base
            samples[alg].append((ner, w))
    curves = {}
    for alg, pairs in samples.items():
        pairs.sort(key=lambda t: t[0])
        xs = np.array([p[0] for p in pairs])
        cum = np.cumsum([p[1] for p in pairs])
        curves[alg] = np.column_stack([xs, cum]) if pairs else np.zeros((0, 2))
    return NormalizedErrorCdf(curves=curves, skipped=tuple(skipped), total_weight=total)
