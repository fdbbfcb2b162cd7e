"""Result bundles: CSV tables, JSON summaries, SVG plots and a manifest."""
import hashlib
import json
import logging
import math
import os
from typing import Dict, Iterable, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from vml_lab import __version__  # noqa: E402
from vml_lab.errors import OutputError  # noqa: E402
from vml_lab.experiment import ExperimentResult, PlotSpec  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"
SVG_SALT = "vml-lab"
MANIFEST = "manifest.json"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(payload) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: Dict[str, object]) -> str:
    return hashlib.sha256(json.dumps(_jsonable(config), sort_keys=True).encode("utf-8")).hexdigest()


def _write_text(path: str, text: str):
    try:
        with open(path, "w", newline="\n") as f:
            f.write(text)
    except OSError as err:
        msg = f"cannot write {path}: {err.strerror}"
        logger.error(msg)
        raise OutputError(msg) from err


def write_csv(frame, path: str):
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as err:
        msg = f"cannot write {path}: {err.strerror}"
        logger.error(msg)
        raise OutputError(msg) from err


def plot_svg(plot: PlotSpec, path: str):
    """Line plot of a PlotSpec; log-log axes and a fitted power law when given."""
    plt.rcParams["svg.hashsalt"] = SVG_SALT
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    frame = plot.frame
    groups = [(None, frame)] if plot.group is None else list(frame.groupby(plot.group, sort=True))
    for key, sub in groups:
        for column in plot.ys:
            label = column if key is None else f"{column} ({plot.group}={key})"
            ax.plot(sub[plot.x], sub[column], marker="o", markersize=3, label=label)
    if plot.fit is not None:
        xs = np.sort(frame[plot.x].to_numpy(dtype=float))
        ax.plot(xs, math.exp(plot.fit.intercept) * xs**plot.fit.exponent, "k--", label=f"fit: exponent {plot.fit.exponent:.3f}, R2 {plot.fit.r2:.3f}")
    if plot.loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(plot.x)
    ax.set_title(plot.title or plot.name)
    ax.legend(fontsize="small")
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as err:
        msg = f"cannot write {path}: {err.strerror}"
        logger.error(msg)
        raise OutputError(msg) from err
    finally:
        plt.close(fig)


def manifest(result: ExperimentResult, files: List[Dict[str, str]]) -> dict:
    config = result.spec.as_flat()
    chash = config_hash(config)
    bundle = hashlib.sha256(chash.encode("utf-8"))
    for entry in files:
        bundle.update(f"{entry['path']}:{entry['sha256']}".encode("utf-8"))
    return {
        "name": result.spec.name,
        "mode": result.spec.mode,
        "config": config,
        "config_sha256": chash,
        "code_version": __version__,
        "wall_time": result.wall_time,
        "verdicts": [v.as_dict() for v in result.verdicts],
        "passed": result.passed,
        "error": result.error,
        "files": files,
        "bundle_sha256": bundle.hexdigest(),
    }


def emit_outputs(result: ExperimentResult, formats: Iterable[str], out_dir: str) -> List[str]:
    """Write the bundle for ``result`` into ``out_dir``; returns the written paths.

    The manifest is always written, last. With no formats it is the only file.
    """
    formats = set(formats)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        msg = f"cannot create {out_dir}: {err.strerror}"
        logger.error(msg)
        raise OutputError(msg) from err

    written = []
    if "csv" in formats:
        for name, frame in sorted(result.tables.items()):
            path = os.path.join(out_dir, f"{name}.csv")
            write_csv(frame, path)
            written.append(path)
        if result.verdicts:
            path = os.path.join(out_dir, "verdicts.csv")
            write_csv(pd.DataFrame([v.as_dict() for v in result.verdicts], columns=["check", "value", "threshold", "passed", "detail"]), path)
            written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "summary.json")
        _write_text(path, dumps({"summary": result.summary, "verdicts": [v.as_dict() for v in result.verdicts], "error": result.error}))
        written.append(path)
    if "svg" in formats:
        for plot in result.plots:
            path = os.path.join(out_dir, f"{plot.name}.svg")
            plot_svg(plot, path)
            written.append(path)

    files = [{"path": os.path.relpath(p, out_dir), "sha256": sha256_file(p)} for p in written]
    path = os.path.join(out_dir, MANIFEST)
    _write_text(path, dumps(manifest(result, files)))
    logger.info(f"Wrote {len(written) + 1} files to {out_dir}")
    return written + [path]
