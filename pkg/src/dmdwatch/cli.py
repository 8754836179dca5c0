"""Command-line surface: detect / separate / roc / cv / synth / bench.

Every run that writes an output directory drops a ``manifest.json`` with
all parameters, inputs and the tool version, sufficient to reproduce the
run bit-for-bit.  Events are emitted as line-delimited JSON records::

    {"window": K, "statistic": S, "entry_frame": K+T, "exit_frame": K, "timestamp": null}

with keys in exactly that order, ``statistic`` rendered by Python's float
repr (``Infinity`` for the unbounded zero-baseline case), and ``timestamp``
null unless ``--timestamps`` was given.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, background, dmd_core, evaluation, video_io
from .detection import DetectionEvent, DetectorConfig, DetectorState, detect_step
from .errors import DmdwatchError
from .evaluation import EvalConfig
from .window_stream import WindowConfig, spectrum_series, stream_spectra


def _window_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--window-size", type=int, default=80, metavar="T",
                        help="frames per window (default 80)")
    parser.add_argument("--rank", type=int, default=5, metavar="R",
                        help="target rank (default 5)")
    parser.add_argument("--sketch", type=int, default=20, metavar="P",
                        help="compression dimension (default 20)")
    parser.add_argument("--stride", type=int, default=1,
                        help="windows step (default 1)")
    parser.add_argument("--seed", type=int, default=0,
                        help="compression-matrix seed (default 0)")
    parser.add_argument("--fps", type=float, default=30.0,
                        help="frames per second (default 30)")


def _manifest(args: argparse.Namespace, command: str, extra: dict | None = None) -> dict:
    manifest = {
        "tool": "dmdwatch",
        "version": __version__,
        "command": command,
    }
    manifest.update({k: v for k, v in sorted(vars(args).items()) if k != "func"})
    if extra:
        manifest.update(extra)
    return manifest


def _write_manifest(outdir: Path, manifest: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w", encoding="ascii") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _event_record(event: DetectionEvent) -> str:
    return json.dumps(
        {
            "window": event.window_index,
            "statistic": event.statistic,
            "entry_frame": event.entry_frame_hypothesis,
            "exit_frame": event.exit_frame_hypothesis,
            "timestamp": event.wall_time,
        }
    )


def _load_corpus(corpus_dir: Path, labels_dir: Path, wcfg: WindowConfig,
                 seed: int, fps: float):
    """Pair every video in the corpus with its label file and spectra."""
    entries = sorted(
        p for p in corpus_dir.iterdir()
        if p.is_dir() or p.suffix == ".dmdw"
    )
    if not entries:
        raise DmdwatchError(f"{corpus_dir}: no videos found")
    corpus = []
    names = []
    C = None
    for p in entries:
        meta, frames = video_io.load_frames(p, fps=fps)
        if C is None:
            C = dmd_core.CompressionOperator.draw(wcfg.p, meta.pixels, seed)
        labels = video_io.read_labels_csv(labels_dir / (p.stem + ".csv"))
        corpus.append((spectrum_series(frames, wcfg, C), labels))
        names.append(p.stem)
    return names, corpus


# ---------------------------------------------------------------------------
# Subcommands


def cmd_detect(args: argparse.Namespace) -> int:
    wcfg = WindowConfig(T=args.window_size, r=args.rank, p=args.sketch,
                        stride=args.stride)
    dcfg = DetectorConfig(
        threshold=args.threshold,
        cooldown=args.cooldown,
        suppression_enabled=not args.no_suppress,
        window_length=args.window_size,
    )
    C = None
    state = DetectorState()
    events = []
    for meta, snap in video_io.iter_frames(args.input, fps=args.fps):
        if C is None:
            C = dmd_core.CompressionOperator.draw(wcfg.p, meta.pixels, args.seed)
            spectra = stream_spectra(_chain(snap, video_io.iter_frames), wcfg, C)
        break
    # restart cleanly: stream_spectra consumes the iterator itself
    frame_iter = (snap for _, snap in video_io.iter_frames(args.input, fps=args.fps))
    first = next(frame_iter, None)
    if first is None:
        print("no frames in input", file=sys.stderr)
        return 2
    C = dmd_core.CompressionOperator.draw(wcfg.p, first.values.size, args.seed)

    def frames():
        yield first
        yield from frame_iter

    for spec in stream_spectra(frames(), wcfg, C):
        state, event = detect_step(state, spec, dcfg)
        if event is not None:
            if args.timestamps:
                event = DetectionEvent(
                    event.window_index, event.statistic,
                    event.entry_frame_hypothesis, event.exit_frame_hypothesis,
                    wall_time=time.time(),
                )
            events.append(event)
            print(_event_record(event), flush=True)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "events.jsonl", "w", encoding="ascii") as f:
            for event in events:
                f.write(_event_record(event) + "\n")
        _write_manifest(outdir, _manifest(args, "detect"))
    return 0


def _chain(first, rest):  # pragma: no cover - replaced inline above
    yield first
    yield from rest


def cmd_separate(args: argparse.Namespace) -> int:
    wcfg = WindowConfig(T=args.window_size, r=args.rank, p=args.sketch)
    meta, frames = video_io.load_frames(args.input, fps=args.fps)
    k = args.window
    if not 0 <= k <= frames.shape[1] - wcfg.T - 1:
        print(
            f"window {k} out of range [0, {frames.shape[1] - wcfg.T - 1}]",
            file=sys.stderr,
        )
        return 2
    scfg = background.SeparationConfig(
        epsilon=args.epsilon,
        sigma=args.sigma if args.sigma else wcfg.T / 4.0,
        use_empirical_L=not args.canonical_L,
    )
    C = dmd_core.CompressionOperator.draw(wcfg.p, meta.pixels, args.seed)
    window = frames[:, k:k + wcfg.T + 1]
    pair = dmd_core.DataMatrixPair.from_snapshots(window)
    cpair = dmd_core.compress(C, pair)
    result = dmd_core.reduced_dmd(cpair.X, cpair.Y, wcfg.r)
    if result.eig is None:
        print("window is fully degenerate; nothing to separate", file=sys.stderr)
        return 2
    modes = dmd_core.recover_modes(pair.Y, result.svd, result.eig, window[:, 0])
    spec = dmd_core.continuous_spectrum(result.eig, h=1.0)
    bg_idx, _fg_idx = background.split_spectrum(spec, scfg.epsilon)

    L_frames = np.empty_like(window)
    S_frames = np.empty_like(window)
    for n in range(window.shape[1]):
        L_tilde = background.reconstruct_background(modes, spec, bg_idx, float(n))
        sep = background.separate_frame(window[:, n], L_tilde, scfg)
        L_frames[:, n] = sep.L
        S_frames[:, n] = sep.S

    outdir = Path(args.out)
    video_io.write_frames(np.clip(L_frames, 0, 1), outdir / "L", meta)
    video_io.write_frames(np.clip(S_frames, 0, 1), outdir / "S", meta)
    _write_manifest(outdir, _manifest(args, "separate", {
        "background_modes": [int(i) for i in bg_idx],
    }))
    print(f"wrote {window.shape[1]} L/S frame pairs to {outdir}")
    return 0


def cmd_roc(args: argparse.Namespace) -> int:
    wcfg = WindowConfig(T=args.window_size, r=args.rank, p=args.sketch)
    ecfg = EvalConfig(
        d_star=args.d_star,
        event_tol=max(1, int(round(args.fps / 2))),
        window_length=args.window_size,
        suppression=False,
    )
    names, corpus = _load_corpus(
        Path(args.corpus), Path(args.labels), wcfg, args.seed, args.fps
    )
    grid = evaluation.default_roc_grid(args.grid_n)
    curves = []
    per_video = {}
    for name, (spectra, labels) in zip(names, corpus):
        points, auc = evaluation.roc_curve(spectra, labels, ecfg, grid)
        curves.append(points)
        per_video[name] = auc
    points, mean_auc = evaluation.mean_roc(curves)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "roc.csv", "w", encoding="ascii") as f:
        f.write("threshold,fpr,tpr\n")
        for pt in points:
            f.write(f"{pt.threshold!r},{pt.fpr!r},{pt.tpr!r}\n")
    report = {"auc_mean_curve": mean_auc, "auc_per_video": per_video}
    with open(outdir / "report.json", "w", encoding="ascii") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(outdir, _manifest(args, "roc"))
    print(f"AUC (mean curve over {len(curves)} videos): {mean_auc:.4f}")
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    wcfg = WindowConfig(T=args.window_size, r=args.rank, p=args.sketch)
    ecfg = EvalConfig(
        d_star=args.d_star,
        window_length=args.window_size,
        suppression=not args.no_suppress,
        cooldown=args.cooldown,
    )
    names, corpus = _load_corpus(
        Path(args.corpus), Path(args.labels), wcfg, args.seed, args.fps
    )
    grid = np.linspace(args.grid_min if args.grid_min > 0 else args.grid_max / args.grid_n,
                       args.grid_max, args.grid_n)
    result = evaluation.kfold_cv(
        corpus, args.k, ecfg, grid=grid, shuffle_seed=args.shuffle_seed
    )
    report = {
        "videos": names,
        "folds": [
            {"fold": fr.fold, "threshold": fr.threshold, "error": fr.error}
            for fr in result.folds
        ],
        "best_threshold": result.best_threshold,
        "shuffle_seed": result.shuffle_seed,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "cv_report.json", "w", encoding="ascii") as f:
            f.write(text + "\n")
        _write_manifest(outdir, _manifest(args, "cv"))
    print(text)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    scn = video_io.scenario_from_json(Path(args.scenario).read_text())
    video = video_io.generate_synthetic(scn)
    outdir = Path(args.out)
    video_io.write_frames(video.frames, outdir / "frames", video.meta)
    video_io.write_labels_csv(video.labels, outdir / "labels.csv")
    if args.masks:
        video_io.write_frames(video.masks.T.astype(float), outdir / "masks", video.meta)
    (outdir / "scenario.json").write_text(video_io.scenario_to_json(scn) + "\n")
    _write_manifest(outdir, _manifest(args, "synth"))
    print(f"wrote {video.meta.frame_count} frames to {outdir}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    wcfg = WindowConfig(T=args.window_size, r=args.rank, p=args.sketch)
    dcfg = DetectorConfig(threshold=0.5, window_length=args.window_size)
    M = args.width * args.height
    rng = np.random.default_rng(args.seed)
    # small cycled frame pool: content does not affect per-window cost
    pool = [rng.random(M) for _ in range(40)]
    C = dmd_core.CompressionOperator.draw(wcfg.p, M, args.seed)

    def frames():
        for i in range(args.windows + wcfg.T + 1):
            yield pool[i % len(pool)]

    state = DetectorState()
    produced = 0
    t0 = time.perf_counter()
    for spec in stream_spectra(frames(), wcfg, C):
        state, _event = detect_step(state, spec, dcfg)
        produced += 1
    elapsed = time.perf_counter() - t0
    report = {
        "width": args.width,
        "height": args.height,
        "windows": produced,
        "seconds": elapsed,
        "windows_per_second": produced / elapsed,
        "ms_per_window": 1000.0 * elapsed / produced,
    }
    print(json.dumps(report, indent=2))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmdwatch",
        description="Motion detection for grayscale video via sliding-window "
                    "compressed dynamic mode decomposition.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("detect", help="stream frames and emit motion events")
    p.add_argument("--input", required=True,
                   help="PGM/PPM directory, .dmdw file, or '-' for stdin")
    p.add_argument("--threshold", type=float, required=True,
                   help="relative-change threshold (tune with 'cv' first)")
    p.add_argument("--cooldown", type=int, default=15,
                   help="windows of suppressed re-activation (default 15)")
    p.add_argument("--no-suppress", action="store_true",
                   help="disable consecutive-activation suppression")
    p.add_argument("--out", help="directory for events.jsonl + manifest")
    p.add_argument("--timestamps", action="store_true",
                   help="stamp events with wall time (breaks determinism)")
    _window_args(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("separate", help="background/foreground split of one window")
    p.add_argument("--input", required=True)
    p.add_argument("--window", type=int, required=True,
                   help="window index to separate")
    p.add_argument("--epsilon", type=float, default=1e-2,
                   help="|log lambda| cutoff for background modes")
    p.add_argument("--sigma", type=float, default=0.0,
                   help="blend width in frames (default window/4)")
    p.add_argument("--canonical-L", action="store_true",
                   help="fold the negative residual into L (L + S == frame)")
    p.add_argument("--out", required=True)
    _window_args(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("roc", help="ROC curves and AUC over a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-n", type=int, default=1000)
    p.add_argument("--d-star", type=int, default=30)
    _window_args(p)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("cv", help="k-fold cross-validation of the threshold")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--grid-min", type=float, default=0.0)
    p.add_argument("--grid-max", type=float, default=1.0)
    p.add_argument("--grid-n", type=int, default=1000)
    p.add_argument("--d-star", type=int, default=30)
    p.add_argument("--cooldown", type=int, default=15)
    p.add_argument("--no-suppress", action="store_true")
    p.add_argument("--shuffle-seed", type=int, default=0)
    p.add_argument("--out")
    _window_args(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("synth", help="render a synthetic labeled scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--masks", action="store_true",
                   help="also write per-frame blob masks")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="measure sustained window throughput")
    p.add_argument("--width", type=int, default=426)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--windows", type=int, default=200)
    _window_args(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DmdwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
