"""Sliding-window spectra over a frame stream.

Frames are compressed at ingest (one p x M product per frame) and only the
last T+1 compressed columns are retained, so the detection path needs
O(p*T) memory no matter how long the stream runs.  ``spectrum_series`` is
the equivalent batch formulation (compress the whole matrix, slice windows)
used as the reference the streaming path is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import dmd_core
from .dmd_core import CompressionOperator, Snapshot
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class WindowConfig:
    """Window geometry and decomposition ranks."""

    T: int = 80
    r: int = 5
    p: int = 20
    stride: int = 1

    def __post_init__(self):
        if self.T < 2:
            raise ParameterError("window length T must be at least 2")
        if not 1 <= self.r <= self.p:
            raise ParameterError("need 1 <= r <= p")
        if self.stride < 1:
            raise ParameterError("stride must be at least 1")


@dataclass(frozen=True)
class WindowSpectrum:
    """Sorted |log lambda| values for one window position."""

    window_index: int
    moduli: np.ndarray
    degenerate: bool = False


class FrameRing:
    """Fixed-capacity circular store of the last T+1 compressed frames.

    The buffer is allocated exactly once; ``allocations`` exists so tests
    can assert no reallocation happens while streaming.
    """

    def __init__(self, p: int, capacity: int):
        if p < 1 or capacity < 2:
            raise ParameterError("need p >= 1 and capacity >= 2")
        self._buf = np.empty((p, capacity))
        self._head = 0
        self._count = 0
        self.allocations = 1

    @property
    def capacity(self) -> int:
        return self._buf.shape[1]

    @property
    def count(self) -> int:
        return self._count

    @property
    def ready(self) -> bool:
        return self._count == self.capacity

    @property
    def nbytes(self) -> int:
        return self._buf.nbytes

    def push(self, compressed: np.ndarray) -> None:
        if compressed.shape != (self._buf.shape[0],):
            raise ShapeError(
                f"expected a {self._buf.shape[0]}-vector, got {compressed.shape}"
            )
        self._buf[:, self._head] = compressed
        self._head = (self._head + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def window(self) -> np.ndarray:
        """Chronologically ordered copy of the stored columns.

        Copy-on-read keeps spectrum computation consistent even if another
        context pushes frames concurrently.
        """
        if not self.ready:
            raise ParameterError(f"ring holds {self._count}/{self.capacity} frames")
        return np.roll(self._buf, -self._head, axis=1).copy()


def push_frame(frame: Snapshot | np.ndarray, C: CompressionOperator, ring: FrameRing) -> FrameRing:
    """Compress one frame and append it, evicting the oldest when full."""
    values = frame.values if isinstance(frame, Snapshot) else np.asarray(frame, dtype=float)
    if values.shape != (C.m,):
        raise ShapeError(f"frame length {values.shape} does not match operator ({C.m})")
    ring.push(C.entries @ values)
    return ring


def window_spectrum(ring: FrameRing, cfg: WindowConfig, window_index: int = 0) -> WindowSpectrum:
    """Spectrum of the window currently held by the ring."""
    W = ring.window()
    return _spectrum_of(W[:, :-1], W[:, 1:], cfg, window_index)


def _spectrum_of(Xp: np.ndarray, Yp: np.ndarray, cfg: WindowConfig, k: int) -> WindowSpectrum:
    result = dmd_core.reduced_dmd(Xp, Yp, cfg.r)
    spec = dmd_core.continuous_spectrum(result.lambdas, h=1.0)
    return WindowSpectrum(window_index=k, moduli=spec.moduli, degenerate=result.degenerate)


def num_windows(n_frames: int, T: int, stride: int = 1) -> int:
    """How many windows a video of n_frames yields: ceil((n_frames - T) / stride)."""
    if n_frames <= T:
        raise ParameterError(f"need more than T={T} frames, got {n_frames}")
    return -((n_frames - T) // -stride)


def spectrum_series(
    frames: np.ndarray, cfg: WindowConfig, C: CompressionOperator
) -> list[WindowSpectrum]:
    """Batch spectra for every window position of a full snapshot matrix.

    Window k spans columns [k, k+T]; the first data matrix of the pair is
    columns k..k+T-1 and the second is shifted one frame. The whole video is
    compressed with one matrix product up front.
    """
    frames = np.atleast_2d(np.asarray(frames))
    if frames.shape[0] != C.m:
        raise ShapeError(f"frame dimension {frames.shape[0]} does not match operator ({C.m})")
    n_frames = frames.shape[1]
    count = num_windows(n_frames, cfg.T, cfg.stride)
    Wp = C.entries @ frames
    out = []
    for k in range(0, count * cfg.stride, cfg.stride):
        out.append(_spectrum_of(Wp[:, k:k + cfg.T], Wp[:, k + 1:k + cfg.T + 1], cfg, k))
    return out


def stream_spectra(
    frames: Iterable[Snapshot | np.ndarray],
    cfg: WindowConfig,
    C: CompressionOperator,
) -> Iterator[WindowSpectrum]:
    """Streaming spectra: one per window position once T+1 frames arrived.

    No spectra are produced during warm-up (the first T frames), and with a
    stride s only every s-th window position is evaluated.
    """
    ring = FrameRing(cfg.p, cfg.T + 1)
    seen = 0
    for frame in frames:
        push_frame(frame, C, ring)
        seen += 1
        if not ring.ready:
            continue
        k = seen - cfg.T - 1
        if k % cfg.stride == 0:
            yield window_spectrum(ring, cfg, window_index=k)
