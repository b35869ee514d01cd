"""Dependency-free SVG heatmaps for rescue matrices.

Diverging blue-white-red scale symmetric about zero, clipped at +-clip.
Output is a pure function of the input values, so bytes are reproducible.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

_BLUE = (59, 76, 192)
_WHITE = (255, 255, 255)
_RED = (180, 4, 38)

DEFAULT_CLIP = 3.0
CELL = 12
FONT = 10


def color_for(value: float, clip: float = DEFAULT_CLIP) -> str:
    """Hex color for a value on the diverging scale, clipped at +-clip."""
    t = max(-1.0, min(1.0, float(value) / clip))
    anchor = _BLUE if t < 0 else _RED
    frac = abs(t)
    rgb = tuple(round(w + (a - w) * frac) for w, a in zip(_WHITE, anchor))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _labelled(index: int) -> bool:
    # 1-based axis labels on the first cell and every tenth.
    return index == 1 or index % 10 == 0


def render_heatmap(
    matrix: np.ndarray,
    out_path: Optional[Union[str, Path]] = None,
    row_labels: Optional[Sequence[str]] = None,
    clip: float = DEFAULT_CLIP,
) -> str:
    """Render a V x L matrix as SVG text, optionally writing it to a file.

    Row labels are printed verbatim when given, else numeric indices every
    ten rows; columns always get numeric indices every ten cells.
    """
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {arr.shape}")
    if clip <= 0:
        raise ValueError(f"clip must be > 0, got {clip}")
    n_rows, n_cols = arr.shape
    if row_labels is not None and len(row_labels) != n_rows:
        raise ValueError(f"{len(row_labels)} row labels for {n_rows} rows")
    left = 8 + (max(len(l) for l in row_labels) * 7 if row_labels else 30)
    top = 8
    bottom = 22
    right = 8
    width = left + n_cols * CELL + right
    height = top + n_rows * CELL + bottom
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i in range(n_rows):
        y = top + i * CELL
        for j in range(n_cols):
            x = left + j * CELL
            lines.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{color_for(arr[i, j], clip)}"/>'
            )
    text_attrs = f'font-family="monospace" font-size="{FONT}" fill="#1a1a1a"'
    for i in range(n_rows):
        y = top + i * CELL + CELL - 2
        if row_labels is not None:
            label = row_labels[i]
        elif _labelled(i + 1):
            label = str(i + 1)
        else:
            continue
        lines.append(f'<text x="4" y="{y}" {text_attrs}>{_escape(label)}</text>')
    for j in range(n_cols):
        if not _labelled(j + 1):
            continue
        x = left + j * CELL + 2
        y = top + n_rows * CELL + FONT + 4
        lines.append(f'<text x="{x}" y="{y}" {text_attrs}>{j + 1}</text>')
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if out_path is not None:
        Path(out_path).write_text(text)
    return text


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
    )
