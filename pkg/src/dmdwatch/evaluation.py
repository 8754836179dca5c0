"""Scoring, ROC/AUC and threshold cross-validation.

Detections are compared to labeled events after converting each label to
the window where its spike is expected: an entry at frame f spikes at
window f - T (the frame first appears as the newest column), an exit at
frame g spikes at window g (the last window still holding any trace of the
object).  Scoring matches detections to targets one-to-one within a window
tolerance; the error score weighs missed events much heavier than false
alarms.

Threshold sweeps reuse one precomputed statistic series per video, so the
1000-point grids cost almost nothing beyond the spectra themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection import ZERO_MEAN_EPS, DetectionEvent
from .errors import ParameterError
from .video_io import GroundTruthLabel
from .window_stream import WindowSpectrum


@dataclass(frozen=True)
class EvalConfig:
    """Scoring and sweep parameters.

    ``d_star`` is the matching tolerance (windows) for the error score;
    ``event_tol`` the tighter one used by ROC curves (half a second at the
    default 30 fps).  ``fn_weight`` is the cost of a missed event relative
    to a false alarm.
    """

    d_star: int = 30
    fn_weight: float = 100.0
    event_tol: int = 15
    window_length: int = 80
    cooldown: int = 15
    suppression: bool = True

    def __post_init__(self):
        if self.d_star < 0 or self.event_tol < 0:
            raise ParameterError("tolerances must be nonnegative")
        if self.fn_weight <= 0:
            raise ParameterError("fn_weight must be positive")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


@dataclass(frozen=True)
class ROCPoint:
    threshold: float
    fpr: float
    tpr: float


@dataclass(frozen=True)
class FoldResult:
    fold: int
    threshold: float
    error: float


@dataclass(frozen=True)
class CVResult:
    folds: list[FoldResult]
    best_threshold: float
    shuffle_seed: int


def default_roc_grid(n: int = 1000) -> np.ndarray:
    """Log-spaced thresholds spanning 1e-10 .. 1e10."""
    return np.logspace(-10.0, 10.0, n)


def default_cv_grid(n: int = 1000) -> np.ndarray:
    """Evenly spaced thresholds in (0, 1]."""
    return np.linspace(1.0 / n, 1.0, n)


def target_windows(labels: list[GroundTruthLabel], window_length: int) -> list[int]:
    """Window index where each labeled event should spike."""
    return [
        lab.frame - window_length if lab.kind == "entry" else lab.frame
        for lab in labels
    ]


# ---------------------------------------------------------------------------
# Vectorized detector replay


def statistic_series(spectra: list[WindowSpectrum]) -> np.ndarray:
    """Per-window relative-change statistic; index 0 has no predecessor (0).

    Matches detection.relative_change exactly, including the zero-mean
    cases: both means ~0 gives 0, a jump from ~0 gives inf.
    """
    means = np.array([s.moduli.mean() for s in spectra], dtype=float)
    stats = np.zeros(means.size)
    if means.size < 2:
        return stats
    prev, cur = means[:-1], means[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(cur - prev) / prev
    rel = np.where(prev <= ZERO_MEAN_EPS,
                   np.where(cur <= ZERO_MEAN_EPS, 0.0, np.inf),
                   rel)
    stats[1:] = rel
    return stats


def flagged_windows(
    stats: np.ndarray,
    threshold: float,
    suppression: bool = False,
    cooldown: int = 15,
) -> np.ndarray:
    """Boolean flag per window at a threshold, replaying the detector.

    With suppression on, a raw activation only emits when no raw activation
    occurred in the previous ``cooldown`` windows (same rule as
    detection.detect_step, in vectorized form).
    """
    raw = stats >= threshold
    raw[0] = False  # no predecessor to compare against
    if not suppression or cooldown <= 0:
        return raw
    counts = np.cumsum(raw)
    # raw activations within (k - cooldown, k), exclusive of k
    prior = counts[:-1].copy()
    lo = np.maximum(np.arange(1, raw.size) - cooldown, 0)
    prior -= np.where(lo > 0, counts[lo - 1], 0)
    emitted = raw.copy()
    emitted[1:] &= prior == 0
    # emission does not rewrite history: raw results drive suppression, so
    # the vectorized form above is exact, not an approximation
    return emitted


# ---------------------------------------------------------------------------
# Matching and the error score


def _greedy_match(det_windows: list[int], targets: list[int], tol: int) -> int:
    """One-to-one nearest-first matching; returns the number of pairs."""
    pairs = [
        (abs(d - t), i, j)
        for i, d in enumerate(det_windows)
        for j, t in enumerate(targets)
        if abs(d - t) <= tol
    ]
    pairs.sort()
    used_d: set[int] = set()
    used_t: set[int] = set()
    for _, i, j in pairs:
        if i not in used_d and j not in used_t:
            used_d.add(i)
            used_t.add(j)
    return len(used_t)


def score(
    detections: list[DetectionEvent] | list[int],
    targets: list[int],
    cfg: EvalConfig,
    n_windows: int | None = None,
) -> tuple[ConfusionCounts, float]:
    """Weighted error of a detection list against target windows.

    Unmatched detections count as false positives, unmatched targets as
    false negatives, and E = FP + fn_weight * FN.  ``n_windows`` (when
    known) fills in the true-negative count.
    """
    det_windows = [
        d.window_index if isinstance(d, DetectionEvent) else int(d)
        for d in detections
    ]
    tp = _greedy_match(det_windows, targets, cfg.d_star)
    fp = len(det_windows) - tp
    fn = len(targets) - tp
    tn = 0
    if n_windows is not None:
        tn = max(n_windows - tp - fp - fn, 0)
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn), fp + cfg.fn_weight * fn


def score_video(
    spectra: list[WindowSpectrum],
    labels: list[GroundTruthLabel],
    threshold: float,
    cfg: EvalConfig,
) -> tuple[ConfusionCounts, float]:
    """Run the (replayed) detector at one threshold and score it."""
    stats = statistic_series(spectra)
    flags = flagged_windows(stats, threshold, cfg.suppression, cfg.cooldown)
    first = spectra[0].window_index
    detections = [first + k for k in np.nonzero(flags)[0]]
    targets = target_windows(labels, cfg.window_length)
    return score(detections, targets, cfg, n_windows=len(spectra))


# ---------------------------------------------------------------------------
# ROC


def _roc_counts(
    stats: np.ndarray,
    window_offset: int,
    targets: list[int],
    grid: np.ndarray,
    cfg: EvalConfig,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Per-threshold (TP_events, FP_windows) plus population sizes.

    An event counts as detected when any window within +-event_tol of its
    target is flagged; a flagged window outside every tolerance band is a
    false positive.  Suppression stays off so low thresholds behave
    monotonically.
    """
    n = stats.size
    windows = window_offset + np.arange(n)
    in_band = np.zeros(n, dtype=bool)
    for t in targets:
        in_band |= np.abs(windows - t) <= cfg.event_tol
    negatives = ~in_band
    n_neg = int(negatives.sum())
    tps = np.empty(grid.size, dtype=int)
    fps = np.empty(grid.size, dtype=int)
    for gi, thr in enumerate(grid):
        flags = flagged_windows(stats, thr, suppression=False)
        flagged_idx = windows[flags]
        tps[gi] = sum(
            1 for t in targets if np.any(np.abs(flagged_idx - t) <= cfg.event_tol)
        )
        fps[gi] = int(np.sum(flags & negatives))
    return tps, fps, len(targets), n_neg


def roc_curve(
    spectra: list[WindowSpectrum],
    labels: list[GroundTruthLabel],
    cfg: EvalConfig,
    grid: np.ndarray | None = None,
) -> tuple[list[ROCPoint], float]:
    """ROC points over a threshold grid, plus the area under the curve.

    The curve is anchored at its limits (threshold 0 flags everything;
    threshold infinity flags nothing) and the area computed by the
    trapezoid rule after sorting by FPR.
    """
    if not labels:
        raise ParameterError("ROC needs at least one labeled event")
    if grid is None:
        grid = default_roc_grid()
    grid = np.asarray(grid, dtype=float)
    stats = statistic_series(spectra)
    targets = target_windows(labels, cfg.window_length)
    tps, fps, n_pos, n_neg = _roc_counts(
        stats, spectra[0].window_index, targets, grid, cfg
    )
    points = [
        ROCPoint(threshold=float(thr), fpr=fp / max(n_neg, 1), tpr=tp / n_pos)
        for thr, tp, fp in zip(grid, tps, fps)
    ]
    auc = auc_of(points)
    return points, auc


def auc_of(points: list[ROCPoint]) -> float:
    """Trapezoid area under (FPR, TPR), with (0,0) and (1,1) anchors."""
    fpr = np.array([p.fpr for p in points] + [0.0, 1.0])
    tpr = np.array([p.tpr for p in points] + [0.0, 1.0])
    order = np.lexsort((tpr, fpr))
    return float(np.trapezoid(tpr[order], fpr[order]))


def mean_roc(curves: list[list[ROCPoint]]) -> tuple[list[ROCPoint], float]:
    """Average per-video curves threshold-by-threshold (same grid required)."""
    if not curves:
        raise ParameterError("no curves to average")
    n = len(curves[0])
    if any(len(c) != n for c in curves):
        raise ParameterError("curves must share one threshold grid")
    points = []
    for i in range(n):
        thr = curves[0][i].threshold
        points.append(
            ROCPoint(
                threshold=thr,
                fpr=float(np.mean([c[i].fpr for c in curves])),
                tpr=float(np.mean([c[i].tpr for c in curves])),
            )
        )
    return points, auc_of(points)


# ---------------------------------------------------------------------------
# Error curve and cross-validation


def error_curve(
    corpus: list[tuple[list[WindowSpectrum], list[GroundTruthLabel]]],
    grid: np.ndarray,
    cfg: EvalConfig,
) -> np.ndarray:
    """Mean error score over the corpus for every grid threshold."""
    if not corpus:
        raise ParameterError("empty corpus")
    grid = np.asarray(grid, dtype=float)
    total = np.zeros(grid.size)
    for spectra, labels in corpus:
        stats = statistic_series(spectra)
        targets = target_windows(labels, cfg.window_length)
        first = spectra[0].window_index
        for gi, thr in enumerate(grid):
            flags = flagged_windows(stats, thr, cfg.suppression, cfg.cooldown)
            detections = [first + k for k in np.nonzero(flags)[0]]
            _, e = score(detections, targets, cfg)
            total[gi] += e
    return total / len(corpus)


def kfold_cv(
    corpus: list[tuple[list[WindowSpectrum], list[GroundTruthLabel]]],
    k: int,
    cfg: EvalConfig,
    grid: np.ndarray | None = None,
    shuffle_seed: int = 0,
) -> CVResult:
    """Threshold selection by k-fold cross-validation.

    The corpus is shuffled once (seeded), split into k near-equal folds,
    and for each fold the threshold minimizing the mean training error is
    evaluated on the held-out videos.  The overall threshold is the
    per-fold choice with the smallest validation error; ties resolve to the
    earliest fold so the result is deterministic.
    """
    if k < 2:
        raise ParameterError("need k >= 2")
    if len(corpus) < k:
        raise ParameterError(f"corpus of {len(corpus)} videos cannot fill {k} folds")
    if grid is None:
        grid = default_cv_grid()
    grid = np.asarray(grid, dtype=float)

    order = np.random.default_rng(shuffle_seed).permutation(len(corpus))
    folds = np.array_split(order, k)

    results = []
    for i, val_idx in enumerate(folds):
        train = [corpus[j] for j in order if j not in set(val_idx.tolist())]
        train_errors = error_curve(train, grid, cfg)
        best = int(np.argmin(train_errors))
        threshold = float(grid[best])
        val = [corpus[j] for j in val_idx]
        val_error = float(error_curve(val, np.array([threshold]), cfg)[0])
        results.append(FoldResult(fold=i, threshold=threshold, error=val_error))

    best_fold = min(results, key=lambda fr: (fr.error, fr.fold))
    return CVResult(
        folds=results,
        best_threshold=best_fold.threshold,
        shuffle_seed=shuffle_seed,
    )
