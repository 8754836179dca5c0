"""Frame ingestion, image sequence output and the synthetic-video generator.

Supported inputs, all decoded to vectorized float frames in [0, 1]:

* a directory of binary PGM (P5) or PPM (P6) files, lexicographic order;
* a ``.dmdw`` framed binary stream (file or stdin): per frame a 16-byte
  little-endian header -- magic ``DMDW``, u16 width, u16 height, u32
  reserved, u32 frame index -- followed by width*height intensity bytes;
* PPM color input is converted with BT.601 luma (0.299 R + 0.587 G + 0.114 B).

The generator builds labeled scenarios (static / swaying backgrounds, a
transient pulsing blob, illumination drift, sensor noise) and returns the
ground truth needed by the separation and scoring oracles: entry/exit
labels, the clean background and per-frame blob masks.
"""

from __future__ import annotations

import io
import json
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .dmd_core import Snapshot
from .errors import DecodeError, ParameterError

DMDW_MAGIC = b"DMDW"
DMDW_HEADER = struct.Struct("<4sHHII")

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class VideoMeta:
    width: int
    height: int
    fps: float = 30.0
    frame_count: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError("frame dimensions must be positive")
        if self.fps <= 0:
            raise ParameterError("fps must be positive")

    @property
    def pixels(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class GroundTruthLabel:
    frame: int
    kind: str  # "entry" or "exit"

    def __post_init__(self):
        if self.kind not in ("entry", "exit"):
            raise ParameterError(f"unknown label kind {self.kind!r}")


def vectorize(frame: np.ndarray) -> np.ndarray:
    """Row-major flatten of a height x width frame."""
    return np.asarray(frame).reshape(-1)


def devectorize(values: np.ndarray, meta: VideoMeta) -> np.ndarray:
    return np.asarray(values).reshape(meta.height, meta.width)


# ---------------------------------------------------------------------------
# PGM / PPM


def _read_pnm_token(f: BinaryIO) -> bytes:
    """Next whitespace-delimited header token, skipping # comments."""
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise DecodeError("truncated header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pnm(path: str | Path) -> tuple[VideoMeta, np.ndarray]:
    """Read one binary PGM (P5) or PPM (P6) image as a [0, 1] float frame."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic not in (b"P5", b"P6"):
            raise DecodeError(f"{path}: not a binary PGM/PPM (magic {magic!r})")
        try:
            width = int(_read_pnm_token(f))
            height = int(_read_pnm_token(f))
            maxval = int(_read_pnm_token(f))
        except ValueError as exc:
            raise DecodeError(f"{path}: malformed header") from exc
        if width < 1 or height < 1 or not 0 < maxval < 65536:
            raise DecodeError(f"{path}: bad header values")
        channels = 1 if magic == b"P5" else 3
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height * channels
        raw = f.read(count * dtype.itemsize)
        if len(raw) < count * dtype.itemsize:
            raise DecodeError(f"{path}: truncated pixel data")
        data = np.frombuffer(raw, dtype=dtype).astype(float) / maxval
    if channels == 3:
        data = data.reshape(height, width, 3) @ LUMA
    meta = VideoMeta(width=width, height=height, frame_count=1)
    return meta, data.reshape(height, width)


def write_pgm(path: str | Path, frame: np.ndarray) -> None:
    """Write a [0, 1] float frame as an 8-bit binary PGM."""
    frame = np.asarray(frame)
    quantized = np.round(np.clip(frame, 0.0, 1.0) * 255).astype(np.uint8)
    height, width = quantized.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (width, height))
        f.write(quantized.tobytes())


# ---------------------------------------------------------------------------
# DMDW framed stream


def write_dmdw_frame(f: BinaryIO, frame: np.ndarray, index: int) -> None:
    frame = np.asarray(frame)
    height, width = frame.shape
    quantized = np.round(np.clip(frame, 0.0, 1.0) * 255).astype(np.uint8)
    f.write(DMDW_HEADER.pack(DMDW_MAGIC, width, height, 0, index))
    f.write(quantized.tobytes())


def _read_exact(f: BinaryIO, n: int) -> bytes:
    """Read exactly n bytes, tolerating short reads from pipes."""
    chunks = []
    remaining = n
    while remaining:
        chunk = f.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def iter_dmdw(f: BinaryIO, fps: float = 30.0) -> Iterator[tuple[VideoMeta, Snapshot]]:
    """Yield frames from a DMDW stream until EOF.

    EOF at a frame boundary ends the stream cleanly; EOF inside a frame is a
    decode error.  Frame dimensions must not change mid-stream.
    """
    shape = None
    h = 1.0 / fps
    while True:
        header = _read_exact(f, DMDW_HEADER.size)
        if not header:
            return
        if len(header) < DMDW_HEADER.size:
            raise DecodeError("truncated frame header")
        magic, width, height, _reserved, index = DMDW_HEADER.unpack(header)
        if magic != DMDW_MAGIC:
            raise DecodeError(f"bad frame magic {magic!r}")
        if width < 1 or height < 1:
            raise DecodeError("bad frame dimensions")
        if shape is None:
            shape = (width, height)
        elif shape != (width, height):
            raise DecodeError(f"frame size changed {shape} -> {(width, height)}")
        raw = _read_exact(f, width * height)
        if len(raw) < width * height:
            raise DecodeError("truncated frame payload")
        values = np.frombuffer(raw, dtype=np.uint8).astype(float) / 255.0
        meta = VideoMeta(width=width, height=height, fps=fps)
        yield meta, Snapshot(values=values, index=index, timestep_h=h)


# ---------------------------------------------------------------------------
# Whole-video load / save


def _sequence_paths(directory: Path) -> list[Path]:
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".ppm")
    )
    if not paths:
        raise DecodeError(f"{directory}: no .pgm/.ppm files")
    return paths


def iter_frames(path: str | Path, fps: float = 30.0) -> Iterator[tuple[VideoMeta, Snapshot]]:
    """Stream frames from a directory, a .dmdw file, or '-' (stdin)."""
    h = 1.0 / fps
    if str(path) == "-":
        yield from iter_dmdw(sys.stdin.buffer, fps=fps)
        return
    path = Path(path)
    if path.is_dir():
        expected = None
        for index, p in enumerate(_sequence_paths(path)):
            meta, frame = read_pnm(p)
            meta = VideoMeta(meta.width, meta.height, fps=fps, frame_count=1)
            if expected is None:
                expected = (meta.width, meta.height)
            elif expected != (meta.width, meta.height):
                raise DecodeError(f"{p}: frame size differs from first frame")
            yield meta, Snapshot(values=vectorize(frame), index=index, timestep_h=h)
    elif path.suffix == ".dmdw":
        with open(path, "rb") as f:
            yield from iter_dmdw(f, fps=fps)
    else:
        raise DecodeError(f"{path}: expected a directory, a .dmdw file, or '-'")


def load_frames(path: str | Path, fps: float = 30.0) -> tuple[VideoMeta, np.ndarray]:
    """Load a whole video as an M x n_frames matrix of [0, 1] intensities."""
    metas_frames = list(iter_frames(path, fps=fps))
    if not metas_frames:
        raise DecodeError(f"{path}: no frames")
    meta = metas_frames[0][0]
    frames = np.column_stack([snap.values for _, snap in metas_frames])
    return (
        VideoMeta(meta.width, meta.height, fps=fps, frame_count=frames.shape[1]),
        frames,
    )


def write_frames(frames: np.ndarray, path: str | Path, meta: VideoMeta) -> None:
    """Write an M x n matrix as a PGM sequence (frame_000000.pgm, ...)."""
    frames = np.atleast_2d(np.asarray(frames))
    if frames.shape[0] != meta.pixels:
        raise ParameterError(
            f"{frames.shape[0]} pixels per frame, metadata says {meta.pixels}"
        )
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for n in range(frames.shape[1]):
        write_pgm(path / f"frame_{n:06d}.pgm", devectorize(frames[:, n], meta))


# ---------------------------------------------------------------------------
# Ground-truth labels


def write_labels_csv(labels: list[GroundTruthLabel], path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("frame,kind\n")
        for lab in labels:
            f.write(f"{lab.frame},{lab.kind}\n")


def read_labels_csv(path: str | Path) -> list[GroundTruthLabel]:
    labels = []
    with open(path, encoding="ascii") as f:
        header = f.readline().strip()
        if header != "frame,kind":
            raise DecodeError(f"{path}: expected 'frame,kind' header, got {header!r}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            frame_s, kind = line.split(",")
            labels.append(GroundTruthLabel(frame=int(frame_s), kind=kind))
    return labels


# ---------------------------------------------------------------------------
# Synthetic scenarios


@dataclass(frozen=True)
class BlobSpec:
    """A transient bright or dark object.

    The blob is a Gaussian bump that appears at ``entry``, pulses in
    intensity at ``pulse_hz`` (its stand-in for in-frame movement) and
    vanishes after ``exit``.  ``contrast`` may be negative for a dark
    object; ``pulse_depth`` of 0 gives a constant-intensity object.
    """

    entry: int
    exit: int
    pulse_hz: float = 2.8
    radius: float = 5.0
    contrast: float = 0.45
    pulse_depth: float = 0.75


@dataclass(frozen=True)
class SyntheticScenario:
    width: int = 48
    height: int = 36
    frame_count: int = 480
    fps: float = 30.0
    background: str = "flat"  # flat | textured | swaying
    blob: BlobSpec | None = None
    illumination_drift: float = 0.0  # relative brightness change per frame
    noise_sigma: float = 0.0005
    seed: int = 0
    still_lead: int = 0   # blob must not enter before this frame
    still_tail: int = 0   # ... nor exit after frame_count - still_tail

    def __post_init__(self):
        if self.background not in ("flat", "textured", "swaying"):
            raise ParameterError(f"unknown background {self.background!r}")
        if self.frame_count < 2:
            raise ParameterError("need at least 2 frames")
        if self.blob is not None:
            b = self.blob
            if not 0 <= b.entry < b.exit <= self.frame_count - 1:
                raise ParameterError(
                    f"blob window [{b.entry}, {b.exit}] outside video"
                )
            if b.entry < self.still_lead:
                raise ParameterError("blob enters during the still lead")
            if b.exit > self.frame_count - 1 - self.still_tail:
                raise ParameterError("blob exits during the still tail")
            if b.radius <= 0:
                raise ParameterError("blob radius must be positive")


@dataclass(frozen=True)
class SyntheticVideo:
    """Generator output: frames plus every ground truth an oracle needs."""

    meta: VideoMeta
    frames: np.ndarray             # M x n_frames
    labels: list[GroundTruthLabel]
    clean_background: np.ndarray   # M x n_frames, no blob, no noise
    masks: np.ndarray              # n_frames x M bool, blob support


def _smooth_field(rng: np.random.Generator, h: int, w: int, lo: float, hi: float,
                  cells: int = 5) -> np.ndarray:
    """Bilinearly upsampled coarse random grid: a smooth texture in [lo, hi]."""
    gh = cells
    gw = max(2, int(round(cells * w / h)))
    coarse = rng.random((gh, gw))
    yi = np.linspace(0, gh - 1, h)
    xi = np.linspace(0, gw - 1, w)
    y0 = np.clip(yi.astype(int), 0, gh - 2)
    x0 = np.clip(xi.astype(int), 0, gw - 2)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    f = (1 - fy) * ((1 - fx) * c00 + fx * c01) + fy * ((1 - fx) * c10 + fx * c11)
    span = np.ptp(f)
    f = (f - f.min()) / (span if span > 0 else 1.0)
    return lo + (hi - lo) * f


def generate_synthetic(scn: SyntheticScenario) -> SyntheticVideo:
    """Render a labeled scenario, deterministic in the scenario seed.

    Backgrounds carry two weak traveling-wave flicker components (real
    footage is never perfectly still); the swaying kind replaces the second
    with a slower, much stronger one.  Every oscillation uses a sin and a
    cos spatial pattern so the background dynamics stay exactly low-rank.
    """
    rng = np.random.default_rng(scn.seed)
    h, w, n = scn.height, scn.width, scn.frame_count
    M = h * w

    if scn.background == "flat":
        base = np.full((h, w), 0.45)
    else:
        base = _smooth_field(rng, h, w, 0.3, 0.7)

    def oscillation(amp: float, hz: float):
        pat_sin = _smooth_field(rng, h, w, -1.0, 1.0)
        pat_cos = _smooth_field(rng, h, w, -1.0, 1.0)
        omega = 2.0 * np.pi * hz / scn.fps
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return amp, pat_sin, pat_cos, omega, phase

    oscillations = [oscillation(0.045, 0.8)]
    if scn.background == "swaying":
        oscillations.append(oscillation(0.06, 0.5))
    else:
        oscillations.append(oscillation(0.012, 1.6))

    t = np.arange(n)
    clean = np.empty((n, h, w))
    for i in t:
        frame = base * (1.0 + scn.illumination_drift * i)
        for amp, ps, pc, om, ph in oscillations:
            frame = frame + amp * (
                ps * np.sin(om * i + ph) + pc * np.cos(om * i + ph)
            )
        clean[i] = frame

    frames = clean.copy()
    masks = np.zeros((n, h, w), dtype=bool)
    labels: list[GroundTruthLabel] = []
    if scn.blob is not None:
        b = scn.blob
        # half-max radius == b.radius
        sig = b.radius / np.sqrt(2.0 * np.log(2.0))
        margin = min(2.5 * b.radius, (min(h, w) - 1) / 2.0)
        cx = rng.uniform(margin, w - 1 - margin)
        cy = rng.uniform(margin, h - 1 - margin)
        yy, xx = np.mgrid[0:h, 0:w]
        bump = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sig * sig))
        omega_b = 2.0 * np.pi * b.pulse_hz / scn.fps
        for i in range(b.entry, b.exit + 1):
            # phase-locked so the object appears at full strength
            pulse = 1.0 + b.pulse_depth * np.sin(omega_b * (i - b.entry) + np.pi / 2)
            frames[i] += b.contrast * pulse * bump
            masks[i] = bump >= 0.5
        labels = [
            GroundTruthLabel(frame=b.entry, kind="entry"),
            GroundTruthLabel(frame=b.exit, kind="exit"),
        ]

    if scn.noise_sigma > 0:
        frames += rng.normal(0.0, scn.noise_sigma, frames.shape)

    np.clip(frames, 0.0, 1.0, out=frames)
    np.clip(clean, 0.0, 1.0, out=clean)
    meta = VideoMeta(width=w, height=h, fps=scn.fps, frame_count=n)
    return SyntheticVideo(
        meta=meta,
        frames=frames.reshape(n, M).T.copy(),
        labels=labels,
        clean_background=clean.reshape(n, M).T.copy(),
        masks=masks.reshape(n, M),
    )


# ---------------------------------------------------------------------------
# Scenario (de)serialization for the CLI


def scenario_to_json(scn: SyntheticScenario) -> str:
    d = {k: v for k, v in vars(scn).items() if k != "blob"}
    d["blob"] = None if scn.blob is None else vars(scn.blob).copy()
    return json.dumps(d, indent=2)


def scenario_from_json(text: str) -> SyntheticScenario:
    d = json.loads(text)
    blob = d.pop("blob", None)
    if blob is not None:
        blob = BlobSpec(**blob)
    return SyntheticScenario(blob=blob, **d)
