"""Motion flagging from the window-spectrum series.

The detector tracks the mean eigenvalue modulus of consecutive windows and
flags a window when the relative change exceeds a threshold.  State is a
couple of scalars plus a small activation history used to suppress repeated
flags from one motion episode; no frame data is retained.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ParameterError, ShapeError
from .window_stream import WindowSpectrum

# Means at or below this are treated as exactly zero when the relative
# change would divide by them.
ZERO_MEAN_EPS = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    """Threshold and suppression settings.

    ``window_length`` is only used to report the entry-frame hypothesis of
    an event; it does not affect which windows get flagged.
    """

    threshold: float
    cooldown: int = 15
    suppression_enabled: bool = True
    window_length: int = 80

    def __post_init__(self):
        if self.threshold <= 0:
            raise ParameterError("threshold must be positive")
        if self.cooldown < 0:
            raise ParameterError("cooldown must be nonnegative")


@dataclass(frozen=True)
class DetectionEvent:
    """One flagged window.

    A spike can mean an object appeared in the newest frame of the window
    (entry at frame window_index + T) or that the last trace of an object
    left the window (exit around frame window_index).  The detector cannot
    tell the two apart, so both frame hypotheses are reported and scoring
    resolves them against labels.
    """

    window_index: int
    statistic: float
    entry_frame_hypothesis: int
    exit_frame_hypothesis: int
    wall_time: float | None = None


@dataclass
class DetectorState:
    """Scalar fold state: previous mean, raw-test history, last index."""

    previous_mean: float | None = None
    last_index: int | None = None
    windows_seen: int = 0
    recent_tests: deque = field(default_factory=deque)


def mean_modulus(spec: WindowSpectrum) -> float:
    """Average of the r spectrum moduli."""
    return float(spec.moduli.mean())


def relative_change(a_k: float, a_next: float) -> float:
    """|a_next - a_k| / a_k with the zero-denominator cases pinned.

    Both means ~0 is a static stream staying static (change 0); a jump from
    ~0 to anything positive is an infinite relative change and must flag.
    """
    if a_k < 0 or a_next < 0:
        raise ParameterError("means must be nonnegative")
    if a_k <= ZERO_MEAN_EPS:
        return 0.0 if a_next <= ZERO_MEAN_EPS else math.inf
    return abs(a_next - a_k) / a_k


def detect_step(
    state: DetectorState, spec: WindowSpectrum, cfg: DetectorConfig
) -> tuple[DetectorState, DetectionEvent | None]:
    """Advance the detector by one window, possibly emitting an event.

    The raw threshold test result for every window is recorded; an event is
    emitted only when the test fires and no test fired within the previous
    ``cooldown`` windows (when suppression is enabled).  State is updated
    regardless of the outcome.
    """
    if state.last_index is not None and spec.window_index <= state.last_index:
        raise ShapeError(
            f"window {spec.window_index} arrived after {state.last_index}"
        )
    event = None
    a_next = mean_modulus(spec)
    if state.previous_mean is not None:
        stat = relative_change(state.previous_mean, a_next)
        fired = stat >= cfg.threshold
        suppressed = (
            cfg.suppression_enabled
            and cfg.cooldown > 0
            and any(state.recent_tests)
        )
        if fired and not suppressed:
            event = DetectionEvent(
                window_index=spec.window_index,
                statistic=stat,
                entry_frame_hypothesis=spec.window_index + cfg.window_length,
                exit_frame_hypothesis=spec.window_index,
            )
        if cfg.cooldown > 0:
            state.recent_tests.append(fired)
            while len(state.recent_tests) > cfg.cooldown:
                state.recent_tests.popleft()
    state.previous_mean = a_next
    state.last_index = spec.window_index
    state.windows_seen += 1
    return state, event


def run_detector(
    spectra: list[WindowSpectrum], cfg: DetectorConfig
) -> list[DetectionEvent]:
    """Fold ``detect_step`` over an ordered spectrum series."""
    if not spectra:
        raise ParameterError("empty spectrum series")
    state = DetectorState()
    events = []
    for spec in spectra:
        state, event = detect_step(state, spec, cfg)
        if event is not None:
            events.append(event)
    return events
