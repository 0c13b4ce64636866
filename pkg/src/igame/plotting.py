"""Plot data: two-column CSV files with a matching PNG figure each.

Figures are rendered with the non-interactive Agg backend and saved without
the software tag, so reruns produce identical bytes.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import write_columns  # noqa: E402

PNG_METADATA = {"Software": None}


class Series(NamedTuple):
    name: str
    x_name: str
    y_name: str
    x: np.ndarray
    y: np.ndarray
    title: str = ""


def _figure(series, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=100)
    ax.plot(series.x, series.y, lw=1.2)
    ax.set_xlabel(series.x_name)
    ax.set_ylabel(series.y_name)
    if series.title:
        ax.set_title(series.title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    plt.close(fig)


def emit_plot_data(report, series, out_dir, figures=True, subdir="plots"):
    """Write ``<name>.csv`` (and ``<name>.png``) per series under ``out_dir/subdir``.

    Paths relative to ``out_dir`` are appended to ``report["artifacts"]`` and
    returned.  An empty request writes nothing.
    """
    series = list(series)
    if not series:
        return []
    target = os.path.join(out_dir, subdir)
    os.makedirs(target, exist_ok=True)
    written = []
    for s in series:
        x = np.asarray(s.x, dtype=float).ravel()
        y = np.asarray(s.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"series {s.name!r}: x and y lengths differ")
        csv_path = os.path.join(target, f"{s.name}.csv")
        write_columns(csv_path, s.x_name, s.y_name, x, y)
        written.append(os.path.join(subdir, f"{s.name}.csv"))
        if figures:
            _figure(s, os.path.join(target, f"{s.name}.png"))
            written.append(os.path.join(subdir, f"{s.name}.png"))
    report.setdefault("artifacts", []).extend(written)
    return written
