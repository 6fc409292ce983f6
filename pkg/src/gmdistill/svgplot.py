"""Minimal deterministic SVG rendering: heatmap cells plus trajectory polylines.

No plotting library: the density raster becomes a grid of <rect> elements and
trajectories become <polyline> paths, so identical inputs yield identical
bytes.
"""

from __future__ import annotations

import numpy as np

__all__ = ["render_density_svg", "TRAJECTORY_COLORS"]

TRAJECTORY_COLORS = {
    "mode_seeking": "#d62728",
    "mode_disengaging": "#1f77b4",
    "ssd": "#2ca02c",
    "trap_escape": "#9467bd",
}
_FALLBACK_COLORS = ("#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

# five-stop dark-to-bright colormap
_STOPS = np.array(
    [
        (68, 1, 84),
        (59, 82, 139),
        (33, 145, 140),
        (94, 201, 98),
        (253, 231, 37),
    ],
    dtype=float,
)


def _color(u: float) -> str:
    u = min(max(u, 0.0), 1.0)
    pos = u * (len(_STOPS) - 1)
    i = min(int(pos), len(_STOPS) - 2)
    frac = pos - i
    rgb = (1 - frac) * _STOPS[i] + frac * _STOPS[i + 1]
    return "#{:02x}{:02x}{:02x}".format(*(int(round(v)) for v in rgb))


class _Frame:
    """Maps data coordinates into the pixel viewport (y axis flipped)."""

    def __init__(self, region, width, height, margin):
        (self.xlo, self.xhi), (self.ylo, self.yhi) = region
        self.width = width
        self.height = height
        self.margin = margin
        self.sx = (width - 2 * margin) / (self.xhi - self.xlo)
        self.sy = (height - 2 * margin) / (self.yhi - self.ylo)

    def px(self, x: float) -> float:
        return self.margin + (x - self.xlo) * self.sx

    def py(self, y: float) -> float:
        return self.height - self.margin - (y - self.ylo) * self.sy


def render_density_svg(
    dmap,
    trajectories=(),
    markers=(),
    width: int = 720,
    dynamic_range: float = 12.0,
    title: str | None = None,
) -> str:
    """Render a DensityMap with optional trajectory overlays to an SVG string.

    Args:
        dmap: DensityMap to draw as the heatmap background.
        trajectories: Iterable of (label, points) pairs; points (n, 2).
        markers: Iterable of (x, y, color) dots drawn on top.
        width: Pixel width; height follows the region aspect ratio.
        dynamic_range: Log-density span mapped onto the colormap, measured
            down from the maximum.
        title: Optional caption in the top margin.
    """
    region = dmap.region
    aspect = (region[1][1] - region[1][0]) / (region[0][1] - region[0][0])
    margin = 34
    height = int(round((width - 2 * margin) * aspect)) + 2 * margin
    frame = _Frame(region, width, height, margin)

    vmax = float(dmap.values.max())
    vmin = vmax - dynamic_range
    ny, nx = dmap.values.shape
    # cell corners (values sit at centers)
    cell_w = dmap.dx * frame.sx
    cell_h = dmap.dy * frame.sy

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" version="1.1">'
    )
    out.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')
    for i in range(ny):
        y_top = frame.py(dmap.y0 + i * dmap.dy + dmap.dy / 2)
        for j in range(nx):
            u = (float(dmap.values[i, j]) - vmin) / (vmax - vmin)
            x_left = frame.px(dmap.x0 + j * dmap.dx - dmap.dx / 2)
            out.append(
                f'<rect x="{x_left:.2f}" y="{y_top:.2f}" '
                f'width="{cell_w + 0.5:.2f}" height="{cell_h + 0.5:.2f}" '
                f'fill="{_color(u)}"/>'
            )
    fallback = 0
    legend_y = margin + 4
    for label, points in trajectories:
        color = TRAJECTORY_COLORS.get(label)
        if color is None:
            color = _FALLBACK_COLORS[fallback % len(_FALLBACK_COLORS)]
            fallback += 1
        pts = " ".join(
            f"{frame.px(float(p[0])):.2f},{frame.py(float(p[1])):.2f}" for p in points
        )
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.6" stroke-opacity="0.9"/>'
        )
        start = points[0]
        out.append(
            f'<circle cx="{frame.px(float(start[0])):.2f}" cy="{frame.py(float(start[1])):.2f}" '
            f'r="3.5" fill="{color}" stroke="#ffffff" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{width - margin - 150}" y="{legend_y}" font-family="monospace" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
        legend_y += 13
    for x, y, color in markers:
        out.append(
            f'<circle cx="{frame.px(float(x)):.2f}" cy="{frame.py(float(y)):.2f}" '
            f'r="4" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
    out.append(
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="#333333" stroke-width="1"/>'
    )
    if title:
        out.append(
            f'<text x="{margin}" y="{margin - 10}" font-family="monospace" '
            f'font-size="12" fill="#333333">{title}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
