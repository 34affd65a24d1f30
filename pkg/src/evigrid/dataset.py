"""Dataset directories: manifest.json plus one EPCD cloud and EGRD labels per frame.

Layout::

    manifest.json
    <sequence>/cloud_000.epcd   point cloud, ego pose and timestamp
    <sequence>/mask_000.egrd    footprint dynamic mask (payload kind 2)
    <sequence>/seen_000.egrd    observed dynamic cells (payload kind 2, optional)
    <sequence>/sgm_000.egrd     noise-free sensor grid (payload kind 1)
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List

from .errors import FormatError, IoError
from .grid import DynamicMask, GridConfig, Sgm
from .io import read_cloud, read_grid, write_bytes, write_cloud, write_grid
from .representation import MeasurementModel, RepresentationConfig
from .sim import Dataset, Frame

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1


def dump_json(path, doc: Any) -> None:
    """Write ``doc`` as stable, sorted JSON."""
    write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


def load_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise FormatError("missing file", path=path) from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          offset=exc.pos, path=path) from exc


def make_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path}: {exc.strerror or exc}") from exc
    return path


def grid_json(g: GridConfig) -> Dict:
    return {"width": g.width, "height": g.height, "resolution": g.resolution}


def grid_from_json(d: Dict, path=None) -> GridConfig:
    try:
        return GridConfig(int(d["width"]), int(d["height"]), float(d["resolution"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad grid description: {exc}", path=path) from exc


def config_json(c: RepresentationConfig) -> Dict:
    return {
        "grid": grid_json(c.grid),
        "rgm_offset": c.rgm_offset,
        "frame_dt": c.frame_dt,
        "ground_z_threshold": c.ground_z_threshold,
        "alpha_occ": c.measurement.alpha_occ,
        "alpha_free": c.measurement.alpha_free,
        "prior_discount": c.prior_discount,
    }


def config_from_json(d: Dict, path=None) -> RepresentationConfig:
    try:
        return RepresentationConfig(
            grid=grid_from_json(d["grid"], path),
            rgm_offset=int(d["rgm_offset"]),
            frame_dt=float(d["frame_dt"]),
            ground_z_threshold=float(d["ground_z_threshold"]),
            measurement=MeasurementModel(float(d["alpha_occ"]), float(d["alpha_free"])),
            prior_discount=float(d["prior_discount"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad representation config: {exc}", path=path) from exc


def write_dataset(dataset: Dataset, path) -> None:
    root = make_dir(path)
    seqs = []
    for name, frames in zip(dataset.names, dataset.sequences):
        make_dir(root / name)
        entries = []
        for i, f in enumerate(frames):
            e = {"cloud": f"{name}/cloud_{i:03d}.epcd", "gt_mask": f"{name}/mask_{i:03d}.egrd",
                 "gt_sgm": f"{name}/sgm_{i:03d}.egrd"}
            write_cloud(root / e["cloud"], f.cloud)
            write_grid(root / e["gt_mask"], f.gt_mask)
            write_grid(root / e["gt_sgm"], f.gt_sgm)
            if f.seen_mask is not None:
                e["seen_mask"] = f"{name}/seen_{i:03d}.egrd"
                write_grid(root / e["seen_mask"], f.seen_mask)
            entries.append(e)
        seqs.append({"name": name, "frames": entries})
    dump_json(root / MANIFEST, {
        "kind": "dataset",
        "version": MANIFEST_VERSION,
        "seed": dataset.seed,
        "spec_hash": dataset.spec_hash,
        "grid": grid_json(dataset.config.grid),
        "frame_dt": dataset.config.frame_dt,
        "representation": config_json(dataset.config),
        "sequences": seqs,
    })


def check_manifest(doc: Any, kind: str, path) -> Dict:
    if not isinstance(doc, dict):
        raise FormatError("manifest must be a JSON object", path=path)
    if doc.get("kind", kind) != kind:
        raise FormatError(f"expected a {kind} manifest, found {doc.get('kind')!r}", path=path)
    if doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {doc.get('version')!r}", path=path)
    if not isinstance(doc.get("sequences"), list):
        raise FormatError("manifest lacks a sequence list", path=path)
    return doc


def read_manifest(path, kind: str) -> Dict:
    mpath = Path(path) / MANIFEST
    return check_manifest(load_json(mpath), kind, mpath)


def frame_file(root: Path, entry: Dict, key: str, mpath) -> Path:
    try:
        rel = entry[key]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"frame entry lacks {key!r}", path=mpath) from exc
    p = root / rel
    if not p.is_file():
        raise FormatError(f"manifest references missing file {rel}", path=p)
    return p


def _checked(grid, cls, config: GridConfig, p):
    if not isinstance(grid, cls):
        raise FormatError(f"expected a {cls.__name__} grid", path=p)
    if grid.config != config:
        raise FormatError(f"grid geometry {grid.config} differs from the manifest", path=p)
    return grid


def read_dataset(path) -> Dataset:
    root = Path(path)
    doc = read_manifest(root, "dataset")
    mpath = root / MANIFEST
    config = config_from_json(doc.get("representation", {}), mpath)
    sequences: List[List[Frame]] = []
    names = []
    for s in doc["sequences"]:
        if not isinstance(s, dict) or not isinstance(s.get("frames"), list):
            raise FormatError("malformed sequence entry", path=mpath)
        frames = []
        for e in s["frames"]:
            cp = frame_file(root, e, "cloud", mpath)
            cloud = read_cloud(cp)
            mp = frame_file(root, e, "gt_mask", mpath)
            mask = _checked(read_grid(mp), DynamicMask, config.grid, mp)
            sp = frame_file(root, e, "gt_sgm", mpath)
            sgm = _checked(read_grid(sp), Sgm, config.grid, sp)
            seen = None
            if "seen_mask" in e:
                qp = frame_file(root, e, "seen_mask", mpath)
                seen = _checked(read_grid(qp), DynamicMask, config.grid, qp)
            frames.append(Frame(cloud, cloud.ego_pose, mask, sgm, cloud.timestamp, seen))
        sequences.append(frames)
        names.append(str(s.get("name", f"seq_{len(names):03d}")))
    return Dataset(sequences, config, int(doc.get("seed", 0)), str(doc.get("spec_hash", "")), names)
