"""Sliding-window scoring, ROC/AU-ROC, and DeLong's paired z-test.

AUC is computed from integer cumulative counts so the trapezoidal value
equals the Mann-Whitney statistic (pairs scored 1/half/0) exactly, ties
included.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .audio import WindowSpec, extract_windows
from .data import ClipLoader, Label
from .errors import AngerNetError, ConfigError, DataError

EVAL_CHUNK = 16  # windows per forward pass, bounds im2col scratch memory


@dataclass
class ScoredClip:
    source: str
    start_s: float
    p_anger: float
    label: int  # 1 positive, 0 negative


@dataclass
class RocCurve:
    points: list[tuple[float, float]]  # (fpr, tpr), from (0,0) to (1,1)
    auc: float
    n_pos: int
    n_neg: int


@dataclass
class AucComparison:
    auc_a: float
    auc_b: float
    var_diff: float
    z: float
    p: float


def _softmax_positive(logits: np.ndarray) -> np.ndarray:
    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp[:, 1] / exp.sum(axis=1)


def score_windows(net, windows) -> np.ndarray:
    """Eval-mode probabilities for a list of fixed-length segments."""
    probs = np.empty(len(windows), dtype=np.float64)
    for start in range(0, len(windows), EVAL_CHUNK):
        chunk = windows[start : start + EVAL_CHUNK]
        x = np.stack([np.asarray(w, dtype=net.dtype) for w in chunk])[:, None, :]
        logits = net.forward(x, training=False)
        probs[start : start + len(chunk)] = _softmax_positive(logits)
    return probs


def score_dataset(net, entries, *, loader: ClipLoader,
                  window_spec: WindowSpec = WindowSpec()):
    """Sliding-window scores for every labeled utterance.

    Entries with an `ignored` label are skipped. Per-entry read failures are
    recorded and evaluation continues; if every entry fails, raises.
    Returns (scored_clips, failures) where failures is a list of
    (entry, message) pairs.
    """
    scored: list[ScoredClip] = []
    failures = []
    attempted = 0
    for entry in entries:
        label = entry.label
        if label is Label.IGNORED:
            continue
        attempted += 1
        try:
            clip = loader.load(entry.audio_path)
        except (AngerNetError, OSError) as exc:
            failures.append((entry, str(exc)))
            continue
        windows = extract_windows(clip, window_spec)
        if not windows:
            continue
        probs = score_windows(net, [w.samples for w in windows])
        label_int = 1 if label is Label.POSITIVE else 0
        for window, p in zip(windows, probs):
            scored.append(
                ScoredClip(
                    source=entry.audio_path,
                    start_s=window.start / clip.sample_rate,
                    p_anger=float(p),
                    label=label_int,
                )
            )
    if attempted and not scored and len(failures) == attempted:
        raise DataError(f"all {attempted} entries failed to evaluate")
    return scored, failures


def roc_auc(scores, labels) -> RocCurve:
    """ROC by sweeping unique thresholds descending; trapezoidal AUC.

    Ties are grouped per threshold, which makes the trapezoid equal the
    tie-aware Mann-Whitney statistic exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigError(
            f"scores and labels must be matching 1-D arrays, "
            f"got {scores.shape} and {labels.shape}"
        )
    pos_mask = labels == 1
    n_pos = int(pos_mask.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: scores contain only one class")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = pos_mask[order]
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    group_ends = np.append(boundaries, len(scores) - 1)
    tp_cum = np.cumsum(sorted_pos)[group_ends]
    fp_cum = (group_ends + 1) - tp_cum
    points = [(0.0, 0.0)]
    auc_numerator = 0  # integer: sum of dFP * (TP_before + TP_after)
    tp_prev = fp_prev = 0
    for tp, fp in zip(tp_cum.tolist(), fp_cum.tolist()):
        auc_numerator += (fp - fp_prev) * (tp_prev + tp)
        points.append((fp / n_neg, tp / n_pos))
        tp_prev, fp_prev = tp, fp
    return RocCurve(
        points=points,
        auc=auc_numerator / (2.0 * n_pos * n_neg),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    n = len(x)
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j < n and sorted_x[j] == sorted_x[i]:
            j += 1
        ranks[i:j] = 0.5 * (i + j - 1) + 1.0
        i = j
    out = np.empty(n, dtype=np.float64)
    out[order] = ranks
    return out


def _placements(scores: np.ndarray, n_pos: int):
    """AUC plus per-example structural components for one model.

    `scores` must hold the positive examples first.
    """
    m = n_pos
    n = len(scores) - n_pos
    tx = _midranks(scores[:m])
    ty = _midranks(scores[m:])
    tz = _midranks(scores)
    auc = (tz[:m].sum() / m - (m + 1) / 2.0) / n
    v_pos = (tz[:m] - tx) / n
    v_neg = 1.0 - (tz[m:] - ty) / m
    return auc, v_pos, v_neg


def delong_compare(scores_a, scores_b, labels) -> AucComparison:
    """DeLong's z-test for the difference of two correlated AUCs.

    A vanishing variance of the difference (< 1e-12, e.g. identical score
    lists) degenerates to z=0, p=1.
    """
    scores_a = np.asarray(scores_a, dtype=np.float64)
    scores_b = np.asarray(scores_b, dtype=np.float64)
    labels = np.asarray(labels)
    if not (scores_a.shape == scores_b.shape == labels.shape):
        raise ConfigError("score lists and labels must align elementwise")
    pos_mask = labels == 1
    n_pos = int(pos_mask.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("DeLong comparison undefined: only one class present")
    reorder = np.concatenate([np.nonzero(pos_mask)[0], np.nonzero(~pos_mask)[0]])
    auc_a, vpos_a, vneg_a = _placements(scores_a[reorder], n_pos)
    auc_b, vpos_b, vneg_b = _placements(scores_b[reorder], n_pos)
    s_pos = np.cov(np.stack([vpos_a, vpos_b]), ddof=1) if n_pos > 1 else np.zeros((2, 2))
    s_neg = np.cov(np.stack([vneg_a, vneg_b]), ddof=1) if n_neg > 1 else np.zeros((2, 2))
    s = s_pos / n_pos + s_neg / n_neg
    var_diff = float(s[0, 0] + s[1, 1] - 2.0 * s[0, 1])
    if var_diff < 1e-12:
        z, p = 0.0, 1.0
    else:
        z = (auc_a - auc_b) / math.sqrt(var_diff)
        p = math.erfc(abs(z) / math.sqrt(2.0))
    return AucComparison(auc_a=float(auc_a), auc_b=float(auc_b),
                         var_diff=var_diff, z=float(z), p=float(p))


def emit_roc(curve: RocCurve, csv_path, json_path=None) -> None:
    """Write the curve as CSV (fpr,tpr with header) plus a JSON summary.

    Interior points collinear with their neighbors are collapsed in the CSV;
    the trapezoidal integral is unchanged.
    """
    points = _dedupe_collinear(curve.points)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in points:
            writer.writerow([repr(float(fpr)), repr(float(tpr))])
    if json_path is None:
        json_path = str(csv_path).rsplit(".", 1)[0] + ".json"
    with open(json_path, "w") as fh:
        json.dump({"auc": curve.auc, "n_pos": curve.n_pos, "n_neg": curve.n_neg}, fh)
        fh.write("\n")


def _dedupe_collinear(points):
    if len(points) <= 2:
        return list(points)
    kept = [points[0]]
    for i in range(1, len(points) - 1):
        x0, y0 = kept[-1]
        x1, y1 = points[i]
        x2, y2 = points[i + 1]
        if (x1 - x0) * (y2 - y0) == (x2 - x0) * (y1 - y0):
            continue
        kept.append(points[i])
    kept.append(points[-1])
    return kept
