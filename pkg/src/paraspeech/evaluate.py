"""Objective evaluation: DTW mel alignment and the derived F0/spectral metrics.

Predicted and reference mels are aligned by dynamic time warping; the
spectral distortion, F0 agreement, and voicing metrics are then computed
over the aligned frame pairs, and F0 spread over each system's pooled
voiced frames.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInput


def dtw_align(pred_mel, ref_mel):
    """Minimal-cost monotonic alignment between two mel sequences.

    Returns (path, cost): path is a list of (i, j) pairs from (0, 0) to
    (P-1, R-1) where each step advances i, j, or both by 1; cost is the sum
    of Euclidean frame distances along the path.  Ties prefer the diagonal.
    """
    pred = np.asarray(pred_mel, dtype=np.float64)
    ref = np.asarray(ref_mel, dtype=np.float64)
    if pred.ndim != 2 or ref.ndim != 2 or pred.shape[0] == 0 or ref.shape[0] == 0:
        raise InvalidInput("dtw_align needs two non-empty [frames, bins] arrays")
    if pred.shape[1] != ref.shape[1]:
        raise InvalidInput(f"bin mismatch: {pred.shape[1]} vs {ref.shape[1]}")
    P, R = pred.shape[0], ref.shape[0]
    d = cdist(pred, ref)

    cost = np.full((P, R), np.inf)
    cost[0, 0] = d[0, 0]
    for i in range(P):
        for j in range(R):
            if i == j == 0:
                continue
            best = np.inf
            if i and j:
                best = cost[i - 1, j - 1]
            if i and cost[i - 1, j] < best:
                best = cost[i - 1, j]
            if j and cost[i, j - 1] < best:
                best = cost[i, j - 1]
            cost[i, j] = d[i, j] + best

    path = [(P - 1, R - 1)]
    i, j = P - 1, R - 1
    while (i, j) != (0, 0):
        moves = []
        if i and j:
            moves.append((cost[i - 1, j - 1], (i - 1, j - 1)))  # diagonal first on ties
        if i:
            moves.append((cost[i - 1, j], (i - 1, j)))
        if j:
            moves.append((cost[i, j - 1], (i, j - 1)))
        i, j = min(moves, key=lambda m: m[0])[1]
        path.append((i, j))
    path.reverse()
    return path, float(cost[P - 1, R - 1])


def validate_path(path, n_pred: int, n_ref: int):
    if not path or path[0] != (0, 0) or path[-1] != (n_pred - 1, n_ref - 1):
        raise InvalidInput("path must run from (0,0) to the final frame pair")
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        if not (0 <= i1 - i0 <= 1 and 0 <= j1 - j0 <= 1 and (i1, j1) != (i0, j0)):
            raise InvalidInput(f"non-monotonic path step ({i0},{j0}) -> ({i1},{j1})")
    return path


def msd(pred_mel, ref_mel, path) -> float:
    """Mean Euclidean distance between aligned log-mel frames."""
    pred = np.asarray(pred_mel, dtype=np.float64)
    ref = np.asarray(ref_mel, dtype=np.float64)
    validate_path(path, pred.shape[0], ref.shape[0])
    idx_p, idx_r = (np.array(ix) for ix in zip(*path))
    return float(np.linalg.norm(pred[idx_p] - ref[idx_r], axis=1).mean())


def f0_metrics(pred_f0, ref_f0, path):
    """(rmse_hz, vuv_pct, corr) over aligned frame pairs.

    VUV counts voicing disagreements across all pairs; RMSE and Pearson
    correlation use only the pairs where both frames are voiced.  corr is
    None when fewer than 2 such pairs exist or either side is constant.
    """
    pred = np.asarray(pred_f0, dtype=np.float64)
    ref = np.asarray(ref_f0, dtype=np.float64)
    validate_path(path, len(pred), len(ref))
    idx_p, idx_r = (np.array(ix) for ix in zip(*path))
    p, r = pred[idx_p], ref[idx_r]

    vuv_pct = 100.0 * float(np.mean((p > 0) != (r > 0)))
    both = (p > 0) & (r > 0)
    if not both.any():
        return None, vuv_pct, None
    rmse = float(np.sqrt(np.mean((p[both] - r[both]) ** 2)))
    corr = None
    if both.sum() >= 2 and p[both].std() > 0 and r[both].std() > 0:
        corr = float(np.corrcoef(p[both], r[both])[0, 1])
    return rmse, vuv_pct, corr


def f0_sd(f0_set) -> float:
    """Population standard deviation of all voiced F0 values pooled across
    the set of sequences."""
    pooled = np.concatenate([np.asarray(f0, dtype=np.float64).ravel() for f0 in f0_set])
    voiced = pooled[pooled > 0]
    if voiced.size < 2:
        raise InvalidInput(f"need at least 2 voiced frames, got {voiced.size}")
    return float(voiced.std())


@dataclass
class EvalReport:
    per_utterance: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"aggregate": self.aggregate, "per_utterance": self.per_utterance},
            sort_keys=True,
            indent=2,
        )


def _mean_defined(values):
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def evaluate_utterance(pred, ref) -> dict:
    """Metrics for one (pred, ref) pair of {'mel': ..., 'f0': ...} dicts."""
    path, _ = dtw_align(pred["mel"], ref["mel"])
    rmse, vuv, corr = f0_metrics(pred["f0"], ref["f0"], path)
    return {
        "msd": msd(pred["mel"], ref["mel"], path),
        "f0_rmse_hz": rmse,
        "vuv_pct": vuv,
        "f0_corr": corr,
    }


def evaluate_corpus(pred: dict, ref: dict, workers: int = 1) -> EvalReport:
    """Evaluate matching utterance ids; both maps must cover the same ids.

    Per-utterance work is independent (parallel when workers > 1); the
    report always lists utterances in sorted-id order.
    """
    if set(pred) != set(ref):
        odd = sorted(set(pred) ^ set(ref))
        raise InvalidInput(f"pred and ref utterance ids differ: {odd[:5]}")
    if not pred:
        raise InvalidInput("nothing to evaluate")
    ids = sorted(pred)

    def one(uid):
        return {"utterance_id": uid, **evaluate_utterance(pred[uid], ref[uid])}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, ids))
    else:
        rows = [one(uid) for uid in ids]

    def sd_or_none(seqs):
        try:
            return f0_sd(seqs)
        except InvalidInput:
            return None

    aggregate = {
        key: _mean_defined([row[key] for row in rows])
        for key in ("msd", "f0_rmse_hz", "vuv_pct", "f0_corr")
    }
    aggregate["f0_sd_hz"] = sd_or_none([pred[uid]["f0"] for uid in ids])
    aggregate["f0_sd_ref_hz"] = sd_or_none([ref[uid]["f0"] for uid in ids])
    return EvalReport(per_utterance=rows, aggregate=aggregate)
