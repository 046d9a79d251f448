"""Snapshot directories, series CSV and graymap rendering for the command line."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from PIL import Image

from .coefficients import ModelParams
from .dynamics import SERIES_COLUMNS, RunSummary
from .errors import ConfigError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CAPTION_NAME = "captions.txt"
SNAPSHOT_FIELDS = ("I", "Vi", "Vs", "P")


def params_hash(params: ModelParams) -> str:
    payload = json.dumps(params.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def write_series_csv(run: RunSummary, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    run.series[SERIES_COLUMNS].to_csv(path, index=False, float_format="%.12g")
    return path


def write_snapshots(run: RunSummary, directory: Union[str, Path]) -> Path:
    """
    Write every snapshot of a run as flat CSV grids plus a manifest

    Row i of a grid file holds cells (i, 0..ny-1).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = run.scenario.fields.grid
    entries = []
    for index, snap in enumerate(run.snapshots):
        files = {}
        values = {"I": snap.I, "Vi": snap.Vi, "Vs": snap.Vs, "P": snap.P}
        for name in SNAPSHOT_FIELDS:
            filename = f"snap_{index:04d}_{name}.csv"
            np.savetxt(directory / filename, values[name], delimiter=",", fmt="%.17g")
            files[name] = filename
        entries.append({"index": index, "t": snap.t, "files": files})
    manifest = {
        "nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly,
        "params_hash": params_hash(run.scenario.params),
        "params": run.scenario.params.to_dict(),
        "fields": list(SNAPSHOT_FIELDS),
        "snapshots": entries,
    }
    with open(directory / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=2)
    logger.info("Wrote %d snapshots to %s", len(entries), directory)
    return directory


def read_manifest(directory: Union[str, Path]) -> Dict[str, Any]:
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not directory.is_dir():
        raise ConfigError(f"Snapshot directory not found: {directory}")
    if not path.exists():
        raise ConfigError(f"Snapshot directory {directory} has no {MANIFEST_NAME}")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Corrupt manifest {path}: {e}") from e
    for key in ("nx", "ny", "snapshots"):
        if key not in manifest:
            raise ConfigError(f"Corrupt manifest {path}: missing {key!r}")
    if not manifest["snapshots"]:
        raise ConfigError(f"Manifest {path} lists no snapshots")
    return manifest


def load_snapshot_field(directory: Union[str, Path], manifest: Dict[str, Any],
                        index: int, name: str) -> np.ndarray:
    entry = manifest["snapshots"][index]
    path = Path(directory) / entry["files"][name]
    if not path.exists():
        raise ConfigError(f"Snapshot file missing: {path}")
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    if values.shape != (manifest["nx"], manifest["ny"]):
        raise ConfigError(f"Snapshot file {path} has shape {values.shape}, "
                          f"manifest says {(manifest['nx'], manifest['ny'])}")
    return values


def graymap(values: np.ndarray) -> Tuple[Image.Image, float, float]:
    """
    Linear grayscale image of a cell field with y pointing up

    Returns:
        (image, min, max); a constant field renders mid-gray
    """
    values = np.asarray(values, dtype=float)
    vmin, vmax = float(values.min()), float(values.max())
    if vmax > vmin:
        pixels = np.rint(255.0 * (values - vmin) / (vmax - vmin))
    else:
        pixels = np.full(values.shape, 128.0)
    image = Image.fromarray(np.ascontiguousarray(pixels.T[::-1, :]).astype(np.uint8))
    return image, vmin, vmax


def render_snapshots(directory: Union[str, Path],
                     out_dir: Optional[Union[str, Path]] = None) -> List[Path]:
    """Render one PGM image per field per snapshot and a caption file with the value ranges"""
    directory = Path(directory)
    manifest = read_manifest(directory)
    out_dir = Path(out_dir) if out_dir else directory / "frames"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    captions = ["# image t min max"]
    for index, entry in enumerate(manifest["snapshots"]):
        for name in entry["files"]:
            values = load_snapshot_field(directory, manifest, index, name)
            image, vmin, vmax = graymap(values)
            path = out_dir / f"snap_{index:04d}_{name}.pgm"
            image.save(path)
            written.append(path)
            captions.append(f"{path.name} {entry['t']:.10g} {vmin:.10g} {vmax:.10g}")
    (out_dir / CAPTION_NAME).write_text("\n".join(captions) + "\n")
    logger.info("Rendered %d frames into %s", len(written), out_dir)
    return written


def read_captions(out_dir: Union[str, Path]) -> pd.DataFrame:
    path = Path(out_dir) / CAPTION_NAME
    return pd.read_csv(path, sep=" ", comment="#", header=None,
                       names=["image", "t", "min", "max"])
