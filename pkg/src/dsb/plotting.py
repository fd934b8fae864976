"""Figure rendering for the gap matrix (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .gap import ROWS, GapMatrix  # noqa: E402

_SUPPORTED = "#4c8c4a"
_NA = "#d9d9d9"


def render_gap_matrix(matrix: GapMatrix, path: str | Path) -> Path:
    path = Path(path)
    columns = matrix.columns
    grid = [[0 if matrix.value(row, p, s) == "NA" else 1 for p, s in columns] for row in ROWS]
    fig, ax = plt.subplots(figsize=(2.4 * len(columns) + 2, 0.6 * len(ROWS) + 1.5))
    ax.imshow(grid, cmap=ListedColormap([_NA, _SUPPORTED]), vmin=0, vmax=1, aspect="auto")
    for i, row in enumerate(ROWS):
        for j, (p, s) in enumerate(columns):
            value = matrix.value(row, p, s)
            label = "N/A" if value == "NA" else value[len("Supported("):-1]
            ax.text(j, i, label, ha="center", va="center", fontsize=7, color="black" if value == "NA" else "white")
    ax.set_xticks(range(len(columns)), [f"{p}\n{s}" for p, s in columns], fontsize=8)
    ax.set_yticks(range(len(ROWS)), ROWS, fontsize=8)
    ax.set_xticks([x - 0.5 for x in range(1, len(columns))], minor=True)
    ax.set_yticks([y - 0.5 for y in range(1, len(ROWS))], minor=True)
    ax.grid(which="minor", color="white", linewidth=2)
    ax.tick_params(which="minor", length=0)
    ax.set_title("Verification mechanisms per object and space")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the PNG byte-stable across runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
