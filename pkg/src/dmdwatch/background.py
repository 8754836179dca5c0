"""Background / foreground separation from the mode expansion.

Modes whose continuous-time eigenvalue modulus stays within ``epsilon`` of
zero barely change over a window and reconstruct the background; the rest
carry the motion.  Separation is only worth running on windows where the
detector fired, since it needs the full-dimension mode recovery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dmd_core import ContinuousSpectrum, ModeSet
from .errors import ParameterError, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeparationConfig:
    """Thresholds for the split and reconstruction blending.

    ``epsilon`` is in per-frame units of |log lambda|.  With
    ``use_empirical_L`` the background is |L~| alone, which separates better
    in practice; disabling it moves the negative residual into L so that
    L + S reassembles the frame exactly.
    """

    epsilon: float = 1e-2
    sigma: float = 20.0  # Gaussian blend width, frames (T/4 at defaults)
    use_empirical_L: bool = True

    def __post_init__(self):
        if self.epsilon <= 0 or self.sigma <= 0:
            raise ParameterError("epsilon and sigma must be positive")


@dataclass(frozen=True)
class SeparatedFrame:
    """Background L, nonnegative foreground S and the negative residual R."""

    L: np.ndarray
    S: np.ndarray
    R: np.ndarray


def split_spectrum(
    spec: ContinuousSpectrum, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """Partition mode indices into (background, foreground) by |omega|."""
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    idx = np.arange(spec.moduli.size)
    bg = idx[spec.moduli <= epsilon]
    if bg.size == 0:
        log.warning("no background mode within epsilon=%g", epsilon)
    return bg, idx[spec.moduli > epsilon]


def reconstruct_background(
    modes: ModeSet,
    spec: ContinuousSpectrum,
    bg_idx: np.ndarray,
    t: float,
) -> np.ndarray:
    """Low-rank component at time t: sum of c_k psi_k exp(omega_k t).

    ``t`` is measured in the same units as the spectrum (frames since the
    window start when the spectrum was computed with h = 1).
    """
    bg_idx = np.asarray(bg_idx, dtype=int)
    if bg_idx.size == 0:
        log.warning("empty background index set: returning zeros")
        return np.zeros(modes.Phi.shape[0], dtype=complex)
    coeffs = modes.amplitudes[bg_idx] * np.exp(spec.omegas[bg_idx] * t)
    return modes.Phi[:, bg_idx] @ coeffs


def separate_frame(
    x: np.ndarray, L_tilde: np.ndarray, cfg: SeparationConfig
) -> SeparatedFrame:
    """Split one frame against its reconstructed background.

    S~ = x - |L~| may go negative where the background overshoots; the
    negative part R is moved out of S so the foreground stays nonnegative.
    Canonical mode puts R back into L (then L + S == x exactly); empirical
    mode reports L = |L~| and leaves R as a separate diagnostic.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    mag = np.abs(np.asarray(L_tilde)).reshape(-1)
    if x.shape != mag.shape:
        raise ShapeError(f"frame {x.shape} vs background {mag.shape}")
    S_raw = x - mag
    R = np.minimum(S_raw, 0.0)
    S = S_raw - R
    L = mag if cfg.use_empirical_L else R + mag
    return SeparatedFrame(L=L, S=S, R=R)


def blend_windows(
    window_values: list[np.ndarray],
    midpoints: np.ndarray,
    times: np.ndarray,
    sigma: float,
) -> np.ndarray:
    """Gaussian-weighted average of per-window reconstructions.

    ``window_values[k]`` is window k's reconstruction over the full time
    grid (M x n_t); the weight of window k at time t is
    exp(-(t - midpoint_k)^2 / sigma^2), normalized over windows.  Where
    every weight underflows to zero the nearest window wins outright.
    """
    if sigma <= 0:
        raise ParameterError("sigma must be positive")
    if not window_values:
        raise ParameterError("need at least one window")
    midpoints = np.asarray(midpoints, dtype=float)
    times = np.asarray(times, dtype=float)
    if midpoints.size != len(window_values):
        raise ShapeError("one midpoint per window required")
    stack = np.stack([np.atleast_2d(v) for v in window_values])  # K x M x n_t
    if stack.shape[2] != times.size:
        raise ShapeError("window values must cover the full time grid")
    weights = np.exp(-((times[None, :] - midpoints[:, None]) ** 2) / sigma**2)
    total = weights.sum(axis=0)
    dead = total == 0.0
    if np.any(dead):
        log.warning("zero blend weight at %d time(s): nearest-window fallback", dead.sum())
        nearest = np.argmin(np.abs(times[None, :] - midpoints[:, None]), axis=0)
        weights[:, dead] = 0.0
        weights[nearest[dead], dead] = 1.0
        total = weights.sum(axis=0)
    weights /= total
    return np.einsum("kt,kmt->mt", weights, stack)
