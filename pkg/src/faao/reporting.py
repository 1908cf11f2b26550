"""Run manifests, delimited output, and the rendered figures that accompany
every report directory.

Every data file a command writes is listed in the directory's
``manifest.json`` and carries a leading ``# manifest: manifest.json`` comment
(CSV) or a ``"manifest"`` key (JSON) pointing back at it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .assembly import SolutionField
from .problems import build_grid

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    command: str
    parameters: dict
    timestamp: str
    version: str
    seed_irrelevant: bool = True  # default paths have no randomized component
    outputs: list = field(default_factory=list)

    def add(self, path) -> None:
        name = Path(path).name
        if name not in self.outputs:
            self.outputs.append(name)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def new_manifest(command: str, parameters: dict) -> RunManifest:
    return RunManifest(
        command=command,
        parameters=dict(sorted(parameters.items())),
        timestamp=datetime.now(timezone.utc).isoformat(),
        version=__version__,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows, manifest: RunManifest | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest: {MANIFEST_NAME}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    if manifest is not None:
        manifest.add(path)


def read_csv(path):
    """Read back a CSV written by write_csv; returns (header, rows)."""
    with open(path, newline="") as fh:
        content = [line for line in fh if not line.startswith("#")]
    rows = list(csv.reader(io.StringIO("".join(content))))
    return rows[0], rows[1:]


def write_json(path, obj: dict, manifest: RunManifest | None = None) -> None:
    payload = dict(obj)
    payload["manifest"] = MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if manifest is not None:
        manifest.add(path)


def spectrum_figure(values: np.ndarray, title: str, path,
                    manifest: RunManifest | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(np.real(values), np.imag(values), s=12, alpha=0.7,
               edgecolors="none")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    if manifest is not None:
        manifest.add(path)


def convergence_figure(rows, mode: str, path,
                       manifest: RunManifest | None = None) -> None:
    """Log-log error decay along a refinement ladder.

    ``rows`` are (M, N, err_inf, order_inf, err_2, order_2) tuples; the
    abscissa is M for a time ladder and N for a space ladder.
    """
    rows = list(rows)
    x = [r[0] if mode == "time" else r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(x, [r[2] for r in rows], "o-", label="max norm")
    ax.loglog(x, [r[4] for r in rows], "s--", label="L2 norm")
    ax.set_xlabel("M" if mode == "time" else "N")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    if manifest is not None:
        manifest.add(path)


def solution_figure(field: SolutionField, path,
                    manifest: RunManifest | None = None) -> None:
    """Final-time comparison of the numerical and exact solutions."""
    from .analysis import exact_field

    spec = field.spec
    grid = build_grid(spec)
    exact = exact_field(spec, grid)
    if spec.dims == 1:
        fig, ax = plt.subplots(figsize=(5.5, 4))
        picks = sorted({0, spec.M // 2, spec.M})
        for j in picks:
            ax.plot(grid.nodes_x, field.values[j], label=f"t={grid.nodes_t[j]:.3g}")
            ax.plot(grid.nodes_x, exact[j], "k:", lw=1)
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.set_title("numerical (solid) vs exact (dotted)")
        ax.legend()
        ax.grid(alpha=0.3)
    else:
        fig, axes = plt.subplots(1, 2, figsize=(9, 4))
        for ax, data, name in (
            (axes[0], exact[-1], "exact"),
            (axes[1], field.values[-1], "numerical"),
        ):
            im = ax.pcolormesh(grid.nodes_x, grid.nodes_x, data.T, shading="auto")
            ax.set_title(f"{name}, t={spec.t_final:g}")
            ax.set_xlabel("x")
            ax.set_ylabel("y")
            fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    if manifest is not None:
        manifest.add(path)
