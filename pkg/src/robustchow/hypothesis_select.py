"""Pick the best hypothesis from a candidate list on a fresh holdout batch.

Plain empirical-risk minimization: corruption shifts every candidate's
empirical disagreement by at most eps, so the winner's true error is within
an additive O(eps) of the best candidate in the list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adversary import LabeledSampleSet
from .errors import EmptyHoldout


@dataclass
class CandidateSet:
    hypotheses: Sequence            # each exposes evaluate(points) -> ±1
    metadata: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.hypotheses) == 0:
            raise ValueError("candidate set is empty")
        if not self.metadata:
            self.metadata = [None] * len(self.hypotheses)

    def __len__(self):
        return len(self.hypotheses)


def disagreement(hypothesis, s: LabeledSampleSet) -> float:
    pred = np.asarray(hypothesis.evaluate(s.points), dtype=np.float64)
    return float(np.mean(pred != s.labels))


def select(candidates: CandidateSet, holdout: LabeledSampleSet):
    """Winner (lowest empirical disagreement, ties to lowest index) and its
    empirical error."""
    if len(holdout) == 0:
        raise EmptyHoldout("holdout batch is empty")
    best_idx = 0
    best_err = disagreement(candidates.hypotheses[0], holdout)
    for i in range(1, len(candidates)):
        err = disagreement(candidates.hypotheses[i], holdout)
        if err < best_err:
            best_idx, best_err = i, err
    return candidates.hypotheses[best_idx], best_err


def select_intersection_cover(unit_matrix: np.ndarray,
                              thresholds: np.ndarray,
                              k: int,
                              holdout: LabeledSampleSet,
                              block: int = 512):
    """ERM over the full G^k grid of k-fold intersections without
    materializing hypothesis objects or the combo list.

    Grid member g fires on x when unit_matrix[g] . x <= thresholds[g]; the
    candidate with flat index r = sum_j digit_j G^(k-1-j) intersects members
    digit_0..digit_{k-1} and predicts +1 iff all fire. Two constant
    candidates, always-+1 and always--1, compete at flat indices G^k and
    G^k + 1. Returns (winner flat index, empirical error); ties go to the
    lowest index.

    Mismatch counting reduces to linear algebra on the fires matrix F:
      mismatches(r) = #{y=+1} + prod_j F[digit_j] . (1 - 2*inside),
    which is a matvec for k=1 and one Gram product F W F^T for k=2.
    """
    if len(holdout) == 0:
        raise EmptyHoldout("holdout batch is empty")
    if k not in (1, 2, 3):
        raise ValueError(f"k must be 1, 2, or 3, got {k}")
    m = len(holdout)
    g_count = unit_matrix.shape[0]
    inside = (holdout.labels > 0).astype(np.float32)
    y_weight = 1.0 - 2.0 * inside              # +1 on outside points, -1 inside
    base = float(inside.sum())                  # cost of predicting all-outside

    proj = unit_matrix @ holdout.points.T
    fires = (proj <= thresholds[:, None]).astype(np.float32)

    # every partial sum below is an integer count < 2^24, so float32 gemm
    # results are exact and argmin/tie-break comparisons are exact too
    best_idx, best_count = 0, np.inf
    if k == 1:
        counts = base + fires @ y_weight
        j = int(np.argmin(counts))
        best_idx, best_count = j, float(counts[j])
    elif k == 2:
        weighted = fires * y_weight[None, :]
        for start in range(0, g_count, block):
            rows = base + fires[start:start + block] @ weighted.T
            loc = int(np.argmin(rows))
            cand = float(rows.ravel()[loc])
            if cand < best_count:
                best_idx, best_count = start * g_count + loc, cand
    else:
        weighted = fires * y_weight[None, :]
        for i in range(g_count):
            pair = fires[i][None, :] * fires    # (G, m) two-member AND rows
            rows = base + pair @ weighted.T     # (G, G): third member via gemm
            flat_local = int(np.argmin(rows))
            cand = float(rows.ravel()[flat_local])
            if cand < best_count:
                best_idx = i * g_count * g_count + flat_local
                best_count = cand
    n_combos = g_count ** k
    count_plus = float((inside == 0.0).sum())   # predict +1 everywhere
    count_minus = float((inside == 1.0).sum())  # predict -1 everywhere
    if count_plus < best_count:
        best_idx, best_count = n_combos, count_plus
    if count_minus < best_count:
        best_idx, best_count = n_combos + 1, count_minus
    return best_idx, best_count / m
