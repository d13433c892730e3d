"""Batch selection strategies over a candidate pool.

All samplers work on row-matrix inputs (one row per candidate) and return
candidate positions, so callers can map positions back to whatever ids the
pool uses. Seeded entry points are deterministic functions of their inputs
and the seed. Tie rules are pinned everywhere: argmax/argmin style picks
break toward the lowest index.

The two batch-diversity samplers consume gradient embeddings:

* kmeanspp_seed  -- k-means++ seeding; each new center is drawn with
  probability proportional to the squared distance to the nearest center
  already chosen. High-norm points far from previous picks dominate.
* kdpp_mcmc_sample -- Metropolis swap chain over k-subsets whose stationary
  law is proportional to det of the subset Gram matrix under the linear
  kernel L_ij = <g_i, g_j>.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .embeddings import check_probs_matrix

KNOWN_SELECTORS = ("badge", "badge_kdpp", "coreset", "conf", "margin", "entropy", "albl", "rand")

UNCERTAINTY_KINDS = ("conf", "margin", "entropy")

# Uniform resampling attempts before a singular k-DPP start falls back to
# k-means++ seeding.
INIT_RESAMPLES = 100

# n at or below which the k <= 2 swap chain runs on a precomputed Gram table
# with unrolled Cholesky pivots; pure scalar arithmetic keeps the many short
# chains used by the law tests cheap.
_SCALAR_GRAM_LIMIT = 2048


def default_chain_length(k):
    """Default swap-chain length floor(5 k ln k), at least one step."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return max(1, int(math.floor(5.0 * k * math.log(k)))) if k > 1 else 1


@dataclass(frozen=True)
class SelectorKind:
    """A selection strategy name plus the parameters it consumes.

    tau applies to badge_kdpp (chain length override); eta and gamma are the
    bandit learning rate and exploration floor for albl.
    """

    name: str
    tau: int | None = None
    eta: float = 0.3
    gamma: float = 0.1

    def validate(self):
        if self.name not in KNOWN_SELECTORS:
            raise ValueError(f"unknown selector {self.name!r}, expected one of {KNOWN_SELECTORS}")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        return self


@dataclass(frozen=True)
class SelectionRequest:
    """One round's selection task over explicit candidate ids."""

    candidate_ids: np.ndarray
    batch_size: int
    rng_seed: int

    def validate(self):
        ids = np.asarray(self.candidate_ids)
        if ids.ndim != 1:
            raise ValueError("candidate_ids must be 1-d")
        if np.unique(ids).size != ids.size:
            raise ValueError("candidate_ids contains duplicates")
        if not 0 <= self.batch_size <= ids.size:
            raise ValueError(f"batch_size {self.batch_size} out of range for {ids.size} candidates")
        return self


@dataclass
class SelectionResult:
    selected_ids: list
    wall_time_seconds: float = 0.0
    meta: dict = field(default_factory=dict)


def _points_matrix(points, name="points"):
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty (n, dim) matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _resolve_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def kmeanspp_seed(points, k, seed):
    """Select k rows of points by k-means++ seeding; returns positions in pick order.

    The first center is uniform; each later center is drawn with probability
    D_t(x)^2 / sum_x D_t(x)^2 where D_t is the distance to the nearest center
    chosen so far. If every remaining candidate sits exactly on a chosen
    center (all squared distances zero) the next pick is uniform over the
    candidates not yet chosen.
    """
    pts = _points_matrix(points)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = _resolve_rng(seed)

    sq_norms = np.einsum("ij,ij->i", pts, pts)
    chosen = np.empty(k, dtype=np.intp)
    chosen_mask = np.zeros(n, dtype=bool)

    first = int(rng.integers(n))
    chosen[0] = first
    chosen_mask[first] = True
    # ||x - c||^2 via the expansion; clip the tiny negatives it can produce.
    d2 = sq_norms - 2.0 * (pts @ pts[first]) + sq_norms[first]
    np.maximum(d2, 0.0, out=d2)
    d2[first] = 0.0

    for t in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            r = rng.random() * total
            cum = np.cumsum(d2)
            nxt = int(np.searchsorted(cum, r, side="right"))
            if nxt >= n:
                nxt = int(np.nonzero(d2 > 0.0)[0][-1])
        else:
            remaining = np.nonzero(~chosen_mask)[0]
            nxt = int(remaining[rng.integers(remaining.size)])
        chosen[t] = nxt
        chosen_mask[nxt] = True
        nd2 = sq_norms - 2.0 * (pts @ pts[nxt]) + sq_norms[nxt]
        np.maximum(nd2, 0.0, out=nd2)
        np.minimum(d2, nd2, out=d2)
        d2[chosen[: t + 1]] = 0.0
    return [int(i) for i in chosen]


def _gram_logdet(rows_pts):
    # det(X X^T) through a jitter-free Cholesky; a failed factorization
    # (non-positive pivot) means the determinant is treated as zero.
    gram = rows_pts @ rows_pts.T
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return float("-inf")
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def _scalar_logdet_fn(pts, k):
    # Unrolled Cholesky pivots on a precomputed Gram table for k <= 2.
    gram = (pts @ pts.T).tolist()
    if k == 1:

        def logdet(rows):
            a = gram[rows[0]][rows[0]]
            return math.log(a) if a > 0.0 else float("-inf")

    else:

        def logdet(rows):
            i, j = rows
            a = gram[i][i]
            if a <= 0.0:
                return float("-inf")
            p2 = gram[j][j] - gram[i][j] ** 2 / a
            if p2 <= 0.0:
                return float("-inf")
            return math.log(a) + math.log(p2)

    return logdet


def kdpp_mcmc_sample(points, k, seed, tau=None):
    """Draw a k-subset with probability proportional to det of its Gram matrix.

    Runs a Metropolis swap chain for tau steps (default floor(5 k ln k), at
    least one): each step proposes exchanging one in-subset row for one
    out-of-subset row and accepts with min(1, det'/det). Determinants use a
    Cholesky factorization of the subset Gram matrix with no jitter, so
    singular proposals carry weight zero and are always rejected. A singular
    uniform start is redrawn up to 100 times, after which selection falls
    back to k-means++ seeding on the same points.

    Returns sorted positions of the final state.
    """
    pts = _points_matrix(points)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if tau is None:
        tau = default_chain_length(k)
    elif tau < 0:
        raise ValueError("tau must be nonnegative")
    if k == n:
        return list(range(n))
    rng = _resolve_rng(seed)

    if k <= 2 and n <= _SCALAR_GRAM_LIMIT:
        logdet = _scalar_logdet_fn(pts, k)
    else:
        logdet = lambda rows: _gram_logdet(pts[np.asarray(rows, dtype=np.intp)])

    init = None
    for _ in range(INIT_RESAMPLES):
        cand = [int(i) for i in rng.choice(n, size=k, replace=False)]
        if logdet(cand) > float("-inf"):
            init = cand
            break
    if init is None:
        return kmeanspp_seed(pts, k, rng)

    in_rows = init
    inset = set(in_rows)
    out_rows = [i for i in range(n) if i not in inset]
    if tau == 0:
        return sorted(in_rows)
    in_draws = rng.integers(0, k, size=tau).tolist()
    out_draws = rng.integers(0, n - k, size=tau).tolist()
    unifs = rng.random(tau).tolist()

    # Each step evaluates both sides of the acceptance ratio from their
    # definition; states are never annotated with cached determinants.
    neg_inf = float("-inf")
    for ip, op, u in zip(in_draws, out_draws, unifs):
        old = in_rows[ip]
        cur_ld = logdet(in_rows)
        in_rows[ip] = out_rows[op]
        prop_ld = logdet(in_rows)
        if prop_ld == neg_inf:
            accept = False
        elif prop_ld >= cur_ld:
            accept = True
        else:
            accept = u < math.exp(prop_ld - cur_ld)
        if accept:
            out_rows[op] = old
        else:
            in_rows[ip] = old
    return sorted(in_rows)


def _min_sq_dists(pool, refs):
    # Row-wise min_j ||pool_i - refs_j||^2 via the expansion, clipped at zero.
    pool_sq = np.einsum("ij,ij->i", pool, pool)
    refs_sq = np.einsum("ij,ij->i", refs, refs)
    d2 = pool_sq[:, None] - 2.0 * (pool @ refs.T) + refs_sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2.min(axis=1)


def ffkc_select(labeled_points, pool_points, k):
    """Farthest-first traversal of the pool, conditioned on the labeled set.

    Each pick maximizes the distance to the nearest point among labeled rows
    plus picks made so far (ties toward the lowest pool position). With no
    labeled rows the traversal starts from the pool point farthest from the
    pool centroid. Deterministic; returns positions in pick order.
    """
    pool = _points_matrix(pool_points, "pool_points")
    n = pool.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    labeled = np.asarray(labeled_points, dtype=np.float64)
    if labeled.size == 0:
        labeled = labeled.reshape(0, pool.shape[1])
    if labeled.ndim != 2 or labeled.shape[1] != pool.shape[1]:
        raise ValueError(f"labeled_points shape {labeled.shape} incompatible with pool dim {pool.shape[1]}")
    if not np.all(np.isfinite(labeled)):
        raise ValueError("labeled_points contains non-finite entries")

    if labeled.shape[0] == 0:
        centroid = pool.mean(axis=0)
        diff = pool - centroid
        min_d2 = np.einsum("ij,ij->i", diff, diff)
    else:
        min_d2 = _min_sq_dists(pool, labeled)

    chosen = []
    for _ in range(k):
        nxt = int(np.argmax(min_d2))
        chosen.append(nxt)
        diff = pool - pool[nxt]
        d2 = np.einsum("ij,ij->i", diff, diff)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[nxt] = 0.0
    return chosen


def uncertainty_scores(probs_matrix, kind):
    """Per-row uncertainty scores for kind in {conf, margin, entropy}.

    conf is the top probability (low = uncertain), margin the gap between
    the top two (low = uncertain), entropy sum_i p_i ln(1/p_i) with the
    p = 0 terms contributing zero (high = uncertain).
    """
    if kind not in UNCERTAINTY_KINDS:
        raise ValueError(f"unknown uncertainty kind {kind!r}, expected one of {UNCERTAINTY_KINDS}")
    P = check_probs_matrix(probs_matrix)
    if kind == "conf":
        return P.max(axis=1)
    if kind == "margin":
        if P.shape[1] < 2:
            raise ValueError("margin scores need at least two classes")
        top2 = np.partition(P, P.shape[1] - 2, axis=1)[:, -2:]
        return top2[:, 1] - top2[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0.0, -P * np.log(P), 0.0)
    return terms.sum(axis=1)


def uncertainty_select(probs_matrix, kind, batch_size):
    """Positions of the batch_size most uncertain rows, ties toward lowest index."""
    scores = uncertainty_scores(probs_matrix, kind)
    n = scores.size
    if not 0 <= batch_size <= n:
        raise ValueError(f"batch_size {batch_size} out of range for {n} rows")
    key = -scores if kind == "entropy" else scores
    order = np.lexsort((np.arange(n), key))
    return [int(i) for i in order[:batch_size]]


def random_select(candidate_ids, k, seed):
    """Uniform k-subset of candidate_ids without replacement."""
    ids = np.asarray(candidate_ids)
    if ids.ndim != 1:
        raise ValueError("candidate_ids must be 1-d")
    if not 0 <= k <= ids.size:
        raise ValueError(f"k must lie in [0, {ids.size}], got {k}")
    if k == 0:
        return []
    rng = _resolve_rng(seed)
    picked = rng.choice(ids.size, size=k, replace=False)
    return [int(ids[i]) for i in picked]


def benchmark_samplers(n, dim, k, seed=0, tau=None):
    """Time one k-means++ seeding and one k-DPP chain on a shared random pool."""
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, dim))
    tau_used = default_chain_length(k) if tau is None else tau

    t0 = time.perf_counter()
    kmeanspp_seed(pts, k, seed)
    km_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    kdpp_mcmc_sample(pts, k, seed, tau_used)
    dpp_seconds = time.perf_counter() - t0

    return {
        "n": n,
        "dim": dim,
        "k": k,
        "tau": tau_used,
        "kmeanspp_seconds": km_seconds,
        "kdpp_seconds": dpp_seconds,
        "kdpp_over_kmeanspp": dpp_seconds / km_seconds if km_seconds > 0 else float("inf"),
    }
