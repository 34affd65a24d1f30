"""Command-line front end: gen, repr, segment, train-seg, predict, eval, render.

Exit codes: 0 success, 2 usage or content error, 3 I/O error. Human-readable
progress goes to stderr; ``--json`` prints a machine-readable summary on stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .dataset import (
    MANIFEST,
    MANIFEST_VERSION,
    config_from_json,
    config_json,
    dump_json,
    frame_file,
    grid_json,
    load_json,
    make_dir,
    read_dataset,
    read_manifest,
    write_dataset,
)
from .errors import EvigridError, FormatError, IoError
from .evaluation import evaluate, pooled_iou, probability_classes
from .grid import DynamicMask, Eogm, GridConfig, Rgm, Sgm, classify_arrays
from .io import (
    KIND_BINARY,
    KIND_CLASS,
    KIND_MASS,
    KIND_PROB,
    read_grid,
    read_grid_file,
    read_model,
    write_bytes,
    write_grid,
    write_model,
)
from .pipeline import Segmenter, parallel_map, predict_split, represent_dataset, segment_sequence, split_sequence
from .prediction import PredictorConfig, SequenceSpec
from .representation import RepresentationConfig, SequenceRepr
from .segmentation import HeuristicParams, SegTrainConfig, train
from .sim import Dataset, SUITE_FRAMES, simulate, spec_digest, spec_from_json, standard_suite

log = logging.getLogger("evigrid")

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class UsageError(EvigridError):
    """Bad command-line input; maps to exit status 2."""


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def _emit_json(args, doc: Dict) -> None:
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# configuration from flags


def _grid_override(args, base: GridConfig) -> GridConfig:
    size = args.grid_size if args.grid_size is not None else None
    res = args.resolution if args.resolution is not None else base.resolution
    w = size if size is not None else base.width
    h = size if size is not None else base.height
    if (w, h, res) == (base.width, base.height, base.resolution):
        return base
    try:
        return GridConfig(w, h, res)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _with_grid(cfg: RepresentationConfig, grid: GridConfig) -> RepresentationConfig:
    return RepresentationConfig(grid, cfg.rgm_offset, cfg.frame_dt, cfg.ground_z_threshold,
                                cfg.measurement, cfg.prior_discount)


def _predictor(args, frame_dt: float) -> PredictorConfig:
    try:
        return PredictorConfig(sequence=SequenceSpec(args.past_frames, args.horizon, frame_dt),
                               gate_radius=args.gate_radius, gamma=args.gamma, track_offset=args.track_offset,
                               velocity_mode=args.velocity_mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _out_dir(path, inputs: Sequence[Path] = ()) -> Path:
    out = Path(path).resolve()
    for src in inputs:
        src = Path(src).resolve()
        if out == src:
            raise UsageError(f"output directory {path} must differ from the input {src}")
    return make_dir(out)


# ---------------------------------------------------------------------------
# gen


def _load_spec(path):
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise UsageError(f"spec file {path} does not exist") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return spec_from_json(doc)


def cmd_gen(args) -> int:
    if args.standard_suite == bool(args.spec):
        raise UsageError("gen needs exactly one of --spec or --standard-suite")
    grid = _grid_override(args, GridConfig())
    cfg = _with_grid(RepresentationConfig(), grid)
    if args.standard_suite:
        seed = args.seed if args.seed is not None else 0
        ds = standard_suite(seed, cfg)
    else:
        spec = _load_spec(args.spec)
        if args.seed is not None:
            spec = spec_from_json({**spec.to_json(), "seed": args.seed})
        frames = args.frames if args.frames is not None else SUITE_FRAMES
        if frames < 1:
            raise UsageError("--frames must be >= 1")
        ds = Dataset([simulate(spec, frames, cfg.frame_dt, cfg)], cfg, spec.seed, spec_digest([spec]),
                     [Path(args.spec).stem])
    write_dataset(ds, _out_dir(args.out))
    n_frames = sum(len(s) for s in ds.sequences)
    _say(args, f"wrote {len(ds.sequences)} sequences, {n_frames} frames to {args.out}")
    _emit_json(args, {"sequences": len(ds.sequences), "frames": n_frames, "seed": ds.seed,
                      "spec_hash": ds.spec_hash})
    return EXIT_OK


# ---------------------------------------------------------------------------
# repr


def cmd_repr(args) -> int:
    ds = read_dataset(args.dataset)
    cfg = _with_grid(ds.config, _grid_override(args, ds.config.grid))
    if cfg.grid != ds.config.grid:
        raise UsageError("the representation grid must match the dataset labels; regenerate with gen instead")
    reps = represent_dataset(ds, cfg, args.threads)
    out = _out_dir(args.out, [args.dataset])
    seqs = []
    for name, frames, rep in zip(ds.names, ds.sequences, reps):
        make_dir(out / name)
        flags = rep.flagged(cfg.rgm_offset)
        entries = []
        for i, f in enumerate(frames):
            e = {"sgm": f"{name}/sgm_{i:03d}.egrd", "rgm": f"{name}/rgm_{i:03d}.egrd",
                 "eogm": f"{name}/eogm_{i:03d}.egrd", "gt_mask": f"{name}/gt_{i:03d}.egrd",
                 "rgm_past": rep.rgm_past[i], "rgm_flagged": flags[i]}
            write_grid(out / e["sgm"], rep.sgms[i])
            write_grid(out / e["rgm"], rep.rgms[i])
            write_grid(out / e["eogm"], rep.eogms[i])
            write_grid(out / e["gt_mask"], f.gt_mask)
            if f.seen_mask is not None:
                e["seen_mask"] = f"{name}/seen_{i:03d}.egrd"
                write_grid(out / e["seen_mask"], f.seen_mask)
            entries.append(e)
        seqs.append({"name": name, "frames": entries})
    dump_json(out / MANIFEST, {"kind": "repr", "version": MANIFEST_VERSION, "seed": ds.seed,
                               "spec_hash": ds.spec_hash, "grid": grid_json(cfg.grid),
                               "frame_dt": cfg.frame_dt, "representation": config_json(cfg),
                               "sequences": seqs})
    n = sum(len(s["frames"]) for s in seqs)
    _say(args, f"wrote {n} SGMs, {n} RGMs and {n} eOGMs for {len(seqs)} sequences to {args.out}")
    _emit_json(args, {"sequences": len(seqs), "frames": n})
    return EXIT_OK


class ReprDir:
    """Lazy reader over a directory written by ``repr``."""

    def __init__(self, path):
        self.root = Path(path)
        self.doc = read_manifest(self.root, "repr")
        self.mpath = self.root / MANIFEST
        self.config = config_from_json(self.doc.get("representation", {}), self.mpath)
        self.names = [str(s.get("name")) for s in self.doc["sequences"]]

    def frames(self, s: int) -> List[Dict]:
        return self.doc["sequences"][s]["frames"]

    def _grids(self, s: int, key: str, cls, optional: bool = False):
        out = []
        for e in self.frames(s):
            if optional and key not in e:
                return None
            p = frame_file(self.root, e, key, self.mpath)
            g = read_grid(p, binary_as=cls)
            if not isinstance(g, cls) or g.config != self.config.grid:
                raise FormatError(f"expected a {cls.__name__} on the manifest grid", path=p)
            out.append(g)
        return out

    def sgms(self, s):
        return self._grids(s, "sgm", Sgm)

    def rgms(self, s):
        return self._grids(s, "rgm", Rgm)

    def eogms(self, s):
        return self._grids(s, "eogm", Eogm)

    def labels(self, s, which: str = "footprint"):
        key = "seen_mask" if which == "seen" else "gt_mask"
        return self._grids(s, key, DynamicMask, optional=True)

    def sequence(self, s) -> SequenceRepr:
        frames = self.frames(s)
        return SequenceRepr(self.sgms(s), self.rgms(s), self.eogms(s), [int(e.get("rgm_past", 0)) for e in frames])


class MaskDir:
    def __init__(self, path):
        self.root = Path(path)
        self.doc = read_manifest(self.root, "masks")
        self.mpath = self.root / MANIFEST
        self.names = [str(s.get("name")) for s in self.doc["sequences"]]

    def masks(self, s: int, grid: GridConfig) -> List[DynamicMask]:
        out = []
        for rel in self.doc["sequences"][s]["frames"]:
            p = frame_file(self.root, {"mask": rel}, "mask", self.mpath)
            m = read_grid(p)
            if not isinstance(m, DynamicMask) or m.config != grid:
                raise FormatError("expected a dynamic mask on the representation grid", path=p)
            out.append(m)
        return out


# ---------------------------------------------------------------------------
# segment / train-seg


def _iou_table(rows: List[tuple]) -> str:
    lines = [f"{'sequence':<16}  {'static':>8}  {'dynamic':>8}  {'mean':>8}"]
    for name, (s, d, m) in rows:
        lines.append(f"{name:<16}  {s:>8.4f}  {d:>8.4f}  {m:>8.4f}")
    if rows:
        avg = [float(np.mean([r[1][k] for r in rows])) for k in range(3)]
        lines.append(f"{'average':<16}  {avg[0]:>8.4f}  {avg[1]:>8.4f}  {avg[2]:>8.4f}")
    return "\n".join(lines)


def cmd_segment(args) -> int:
    if args.mode == "learned" and not args.model:
        raise UsageError("--mode learned requires --model")
    model = read_model(args.model) if args.mode == "learned" else None
    try:
        seg = Segmenter(HeuristicParams(args.dilation_radius, args.min_component_size, args.connectivity),
                        model, args.threshold)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rd = ReprDir(args.repr)
    out = _out_dir(args.out, [args.repr])

    def work(s):
        rep = rd.sequence(s)
        return segment_sequence(rep, seg), rd.labels(s, args.labels)

    results = parallel_map(work, list(range(len(rd.names))), args.threads)
    seqs, ious = [], []
    for name, (masks, truth) in zip(rd.names, results):
        make_dir(out / name)
        files = []
        for i, m in enumerate(masks):
            rel = f"{name}/mask_{i:03d}.egrd"
            write_grid(out / rel, m)
            files.append(rel)
        seqs.append({"name": name, "frames": files})
        if truth is not None:
            ious.append((name, pooled_iou(masks, truth)))
    dump_json(out / MANIFEST, {"kind": "masks", "version": MANIFEST_VERSION, "mode": args.mode,
                               "sequences": seqs})
    _say(args, f"wrote masks for {len(seqs)} sequences to {args.out}")
    if ious:
        _say(args, f"IoU against {args.labels} labels\n" + _iou_table(ious))
    _emit_json(args, {"sequences": len(seqs), "labels": args.labels if ious else None,
                      "iou": {n: {"static": v[0], "dynamic": v[1], "mean": v[2]} for n, v in ious}})
    return EXIT_OK


def cmd_train_seg(args) -> int:
    rd = ReprDir(args.repr)
    data = []
    for s in range(len(rd.names)):
        labels = rd.labels(s, args.labels)
        if labels is None:
            raise UsageError(f"sequence {rd.names[s]} has no {args.labels} labels")
        data.extend(zip(rd.sgms(s), rd.rgms(s), labels))
    try:
        cfg = SegTrainConfig(learning_rate=args.lr, epochs=args.epochs, positive_class_weight=args.pos_weight,
                             k=args.k, batch_size=args.batch_size, holdout=args.holdout,
                             seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    history = []

    def on_epoch(epoch, fit_loss, held):
        history.append({"epoch": epoch, "train_loss": fit_loss, "heldout_loss": held})
        _say(args, f"epoch {epoch:3d}  train {fit_loss:.6f}  held-out {held:.6f}")

    model = train(data, cfg, on_epoch)
    out = Path(args.out)
    if out.parent != Path(""):
        make_dir(out.parent)
    write_model(out, model)
    _say(args, f"wrote model (k={model.k}, {len(model.weights)} weights) to {args.out}")
    _emit_json(args, {"k": model.k, "epochs": history})
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict / eval


def cmd_predict(args) -> int:
    rd = ReprDir(args.repr)
    pcfg = _predictor(args, rd.config.frame_dt)
    md = None
    if not args.baseline:
        if not args.masks and not args.gt_masks:
            raise UsageError("predict needs --masks, --gt-masks or --baseline persistence")
        if args.masks:
            md = MaskDir(args.masks)
            if md.names != rd.names:
                raise FormatError("mask and representation sequences do not align", path=md.mpath)
    out = _out_dir(args.out, [args.repr] + ([args.masks] if args.masks else []))

    def work(s):
        eogms = rd.eogms(s)
        if args.baseline:
            masks = [DynamicMask.zeros(rd.config.grid)] * len(eogms)
        elif md is not None:
            masks = md.masks(s, rd.config.grid)
        else:
            masks = rd.labels(s, "footprint")
            if masks is None:
                raise UsageError(f"sequence {rd.names[s]} has no ground-truth masks")
        if len(masks) != len(eogms):
            raise FormatError(f"sequence {rd.names[s]}: {len(masks)} masks for {len(eogms)} frames")
        split = split_sequence(eogms, masks, pcfg)
        t0 = time.perf_counter()
        pred = predict_split(split, pcfg, baseline=args.baseline is not None)
        return pred, time.perf_counter() - t0

    results = parallel_map(work, list(range(len(rd.names))), args.threads)
    seqs, lat = [], []
    for name, (pred, dt) in zip(rd.names, results):
        make_dir(out / name)
        steps = []
        for i, g in enumerate(pred):
            rel = f"{name}/pred_{i + 1:03d}.egrd"
            write_grid(out / rel, g)
            steps.append({"file": rel, "timestamp": g.timestamp, "pose": list(g.pose.as_tuple())})
        seqs.append({"name": name, "steps": steps})
        lat.append(dt)
    mode = "persistence" if args.baseline else ("gt-masks" if md is None else "masks")
    dump_json(out / MANIFEST, {"kind": "predictions", "version": MANIFEST_VERSION, "mode": mode,
                               "past_frames": pcfg.sequence.past_frames, "horizon": pcfg.sequence.horizon,
                               "frame_dt": pcfg.sequence.frame_dt, "sequences": seqs})
    n = sum(len(s["steps"]) for s in seqs)
    mean_ms = 1000.0 * float(np.mean(lat)) if lat else 0.0
    max_ms = 1000.0 * float(np.max(lat)) if lat else 0.0
    _say(args, f"wrote {n} predicted grids for {len(seqs)} sequences to {args.out}")
    _say(args, f"latency: {mean_ms:.3f} ms mean, {max_ms:.3f} ms max per frame "
               f"({pcfg.sequence.horizon}-step forecast)")
    _emit_json(args, {"sequences": len(seqs), "grids": n, "latency_ms_mean": mean_ms, "latency_ms_max": max_ms})
    return EXIT_OK


def _read_predictions(path):
    root = Path(path)
    doc = read_manifest(root, "predictions")
    mpath = root / MANIFEST
    names, preds = [], []
    for s in doc["sequences"]:
        steps = s.get("steps") if isinstance(s, dict) else None
        if not isinstance(steps, list):
            raise FormatError("malformed prediction sequence entry", path=mpath)
        seq = []
        for e in steps:
            p = frame_file(root, e, "file", mpath)
            gf = read_grid_file(p)
            if gf.kind != KIND_PROB:
                raise FormatError(f"expected payload kind {KIND_PROB}, found {gf.kind}", path=p)
            seq.append(read_grid(p))
        names.append(str(s.get("name")))
        preds.append(seq)
    return doc, names, preds


def _truth(args, names: List[str]):
    """Every frame's eOGM and ground-truth mask, from a repr directory or a raw dataset."""
    doc = load_json(Path(args.truth) / MANIFEST)
    if isinstance(doc, dict) and doc.get("kind") == "repr":
        rd = ReprDir(args.truth)
        tnames = rd.names
        eogms = [rd.eogms(s) for s in range(len(tnames))]
        gts = [rd.labels(s, "footprint") for s in range(len(tnames))]
    else:
        ds = read_dataset(args.truth)
        tnames = ds.names
        eogms = [r.eogms for r in represent_dataset(ds, threads=args.threads)]
        gts = [[f.gt_mask for f in seq] for seq in ds.sequences]
    if tnames != names:
        raise FormatError("prediction and ground-truth sequences do not align", path=args.truth)
    for name, e, g in zip(names, eogms, gts):
        if g is None or len(g) != len(e):
            raise FormatError(f"sequence {name} lacks ground-truth masks", path=args.truth)
    return eogms, gts


def cmd_eval(args) -> int:
    doc, names, preds = _read_predictions(args.pred)
    past, horizon = int(doc.get("past_frames", 5)), int(doc.get("horizon", 15))
    eogms, gts = _truth(args, names)
    for name, e in zip(names, eogms):
        if len(e) < past + horizon:
            raise FormatError(f"sequence {name} has {len(e)} frames, needs {past + horizon}", path=args.truth)
    targets = [e[past:past + horizon] for e in eogms]
    target_masks = [g[past:past + horizon] for g in gts]
    pred_masks = truth_masks = None
    if args.masks:
        md = MaskDir(args.masks)
        if md.names != names:
            raise FormatError("mask sequences do not align with the predictions", path=md.mpath)
        pred_masks = [md.masks(s, eogms[s][0].config) for s in range(len(names))]
        truth_masks = gts
    report = evaluate(preds, targets, target_masks, pred_masks, truth_masks)
    out = _out_dir(args.out, [args.pred, args.truth])
    write_bytes(out / "report.json", report.to_json().encode())
    write_bytes(out / "report.txt", report.to_table().encode())
    _say(args, report.to_table().rstrip("\n"))
    _emit_json(args, report.to_dict())
    return EXIT_OK


# ---------------------------------------------------------------------------
# render

PALETTES = {
    # Occupied, Free, Occluded by CellClass code order: Free=0, Occupied=1, Occluded=2
    "sgm": np.array([[255, 255, 0], [0, 255, 255], [0, 0, 255]], np.uint8),
    "ogm": np.array([[0, 0, 255], [255, 0, 0], [0, 255, 0]], np.uint8),
    "mask": np.array([[255, 255, 0], [255, 0, 0]], np.uint8),
    "rgm": np.array([[0, 0, 0], [255, 255, 255]], np.uint8),
}
EGO_COLOR = np.array([139, 0, 0], np.uint8)
DEFAULT_PALETTE = {KIND_CLASS: "sgm", KIND_BINARY: "mask", KIND_MASS: "ogm", KIND_PROB: "ogm"}
ALLOWED = {"sgm": {KIND_CLASS}, "ogm": {KIND_CLASS, KIND_MASS, KIND_PROB},
           "mask": {KIND_BINARY}, "rgm": {KIND_BINARY}}


def render_image(kind: int, data: np.ndarray, palette: str) -> np.ndarray:
    """(H, W, 3) RGB image with +y up: grid row 0 becomes the bottom image row."""
    if kind not in ALLOWED.get(palette, ()):
        raise UsageError(f"palette {palette!r} cannot draw payload kind {kind}")
    if kind == KIND_MASS:
        codes = classify_arrays(data.astype(np.float64))
    elif kind == KIND_PROB:
        codes = probability_classes(data.astype(np.float64))
    else:
        codes = data
    img = PALETTES[palette][codes]
    if palette == "sgm":
        h, w = codes.shape
        img[h // 2, w // 2] = EGO_COLOR
    return img[::-1]


def encode_ppm(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img, np.uint8).tobytes()


def cmd_render(args) -> int:
    out = make_dir(args.out)
    stems = [Path(f).stem for f in args.grids]
    written = []
    for f, stem in zip(args.grids, stems):
        gf = read_grid_file(f)
        palette = args.palette if args.palette != "auto" else DEFAULT_PALETTE[gf.kind]
        img = render_image(gf.kind, gf.data, palette)
        if stems.count(stem) > 1:
            # same file name from several sequence directories: keep the images apart
            stem = f"{Path(f).resolve().parent.name}_{stem}"
        target = out / (stem + ".ppm")
        write_bytes(target, encode_ppm(img))
        written.append(str(target))
    _say(args, f"rendered {len(written)} grids to {args.out}")
    _emit_json(args, {"images": written})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _threads_default() -> int:
    env = os.environ.get("EVIGRID_THREADS")
    if env is None or env == "":
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"EVIGRID_THREADS must be a positive integer, got {env!r}")
    if n < 1:
        raise UsageError("EVIGRID_THREADS must be >= 1")
    return n


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _seed(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return n


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=_seed, default=d, help="random seed (u64)")
    p.add_argument("--threads", type=_positive_int, default=d,
                   help="worker threads (default: EVIGRID_THREADS or 1)")
    p.add_argument("--grid-size", type=_positive_int, default=d, help="grid width and height in cells")
    p.add_argument("--resolution", type=float, default=d, help="meters per cell")
    p.add_argument("--quiet", action="store_true", default=d if suppress else False,
                   help="no progress output on stderr")
    p.add_argument("--json", action="store_true", default=d if suppress else False,
                   help="print a JSON summary on stdout")


def _predictor_flags(p: argparse.ArgumentParser) -> None:
    d = PredictorConfig()
    p.add_argument("--past-frames", type=int, default=d.sequence.past_frames)
    p.add_argument("--horizon", type=int, default=d.sequence.horizon)
    p.add_argument("--gate-radius", type=float, default=d.gate_radius)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--track-offset", type=int, default=d.track_offset)
    p.add_argument("--velocity-mode", choices=("template", "centroid"), default=d.velocity_mode)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    parser = argparse.ArgumentParser(prog="evigrid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evigrid {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--spec", help="world spec JSON file")
    p.add_argument("--standard-suite", action="store_true", help="the 30-sequence standard suite")
    p.add_argument("--frames", type=int, help="frames to simulate for --spec (default 20)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("repr", parents=[common], help="build SGM, RGM and eOGM files")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_repr)

    h = HeuristicParams()
    p = sub.add_parser("segment", parents=[common], help="write dynamic masks")
    p.add_argument("repr")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("heuristic", "learned"), default="heuristic")
    p.add_argument("--model", help="ESEG model file for --mode learned")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--dilation-radius", type=int, default=h.dilation_radius)
    p.add_argument("--min-component-size", type=int, default=h.min_component_size)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=h.connectivity)
    p.add_argument("--labels", choices=("footprint", "seen"), default="footprint",
                   help="ground truth for the IoU table")
    p.set_defaults(func=cmd_segment)

    t = SegTrainConfig()
    p = sub.add_parser("train-seg", parents=[common], help="train the per-cell classifier")
    p.add_argument("repr")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--lr", type=float, default=t.learning_rate)
    p.add_argument("--epochs", type=int, default=t.epochs)
    p.add_argument("--pos-weight", type=float, default=None)
    p.add_argument("--k", type=int, default=t.k)
    p.add_argument("--batch-size", type=int, default=t.batch_size)
    p.add_argument("--holdout", type=float, default=t.holdout)
    p.add_argument("--labels", choices=("footprint", "seen"), default="seen",
                   help="training labels: agent footprints or cells holding moving returns")
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("predict", parents=[common], help="forecast the next frames")
    p.add_argument("repr")
    p.add_argument("--masks", help="mask directory written by segment")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", choices=("persistence",), help="run a baseline instead")
    p.add_argument("--gt-masks", action="store_true", help="use the ground-truth masks")
    _predictor_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="score predictions")
    p.add_argument("pred")
    p.add_argument("truth", help="dataset or repr directory")
    p.add_argument("--out", required=True, help="directory for report.json and report.txt")
    p.add_argument("--masks", help="predicted masks for the IoU columns")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", parents=[common], help="draw EGRD grids as PPM images")
    p.add_argument("grids", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--palette", choices=("auto", "sgm", "ogm", "mask", "rgm"), default="auto")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads is None:
            args.threads = _threads_default()
        return args.func(args)
    except (IoError, OSError) as exc:
        print(f"evigrid {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EvigridError, ValueError) as exc:
        print(f"evigrid {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
