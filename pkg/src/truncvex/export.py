"""File emitters: PGM masks, SVG level curves and collision overlays, canonical JSON."""

from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np
from skimage import measure

from .hess_region import RegionMask


def sanitize(obj):
    """Plain JSON types; non-finite floats become null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip float repr."""
    return json.dumps(sanitize(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def write_pgm(mask: RegionMask, path) -> Path:
    """Binary PGM (255 = true), top row = largest y, plus a ``.json`` sidecar with the window."""
    path = Path(path)
    img = np.where(mask.cells[::-1], 255, 0).astype(np.uint8)
    header = f"P5\n{mask.grid.nx} {mask.grid.ny}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())
    side = path.with_suffix(path.suffix + ".json")
    write_json({"grid": mask.grid.to_dict(), "property_tag": mask.property_tag, "count": mask.count,
                "meta": mask.meta}, side)
    return side


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    nx, ny = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(ny, nx)[::-1] > 0


def _svg_open(grid, width=600):
    w = grid.x_max - grid.x_min
    h = grid.y_max - grid.y_min
    height = int(round(width * h / w))
    # flip y so that larger y is drawn higher
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="{grid.x_min!r} {-grid.y_max!r} {w!r} {h!r}">\n'
            f'<g transform="scale(1,-1)" fill="none" stroke-width="{grid.cell_diagonal!r}">\n')


def _path_d(pl, closed) -> str:
    pts = " L ".join(f"{x:.9g} {y:.9g}" for x, y in pl)
    return f"M {pts}" + (" Z" if closed else "")


def level_curves_svg(curves, grid) -> str:
    out = [_svg_open(grid)]
    for curve in curves:
        for pl, closed in zip(curve.polylines, curve.closed):
            out.append(f'<path data-level={quoteattr(repr(curve.level))} stroke="black" '
                       f'd="{_path_d(pl, closed)}"/>\n')
    out.append("</g>\n</svg>\n")
    return "".join(out)


def write_level_svg(curves, grid, path) -> None:
    Path(path).write_text(level_curves_svg(curves, grid))


def level_curves_json(curves) -> list:
    return [c.to_json() for c in curves]


def collisions_svg(report, mask: RegionMask) -> str:
    """Outline of the mask plus one segment per collision pair."""
    g = mask.grid
    out = [_svg_open(g)]
    for rc in measure.find_contours(mask.cells.astype(float), 0.5):
        pl = np.stack([g.x_min + (rc[:, 1] + 0.5) * g.dx, g.y_min + (rc[:, 0] + 0.5) * g.dy], axis=1)
        out.append(f'<path stroke="gray" d="{_path_d(pl, False)}"/>\n')
    for c in report.collisions:
        out.append(f'<line stroke="red" x1="{c.p1.x:.9g}" y1="{c.p1.y:.9g}" '
                   f'x2="{c.p2.x:.9g}" y2="{c.p2.y:.9g}"/>\n')
    out.append("</g>\n</svg>\n")
    return "".join(out)


def write_collisions_svg(report, mask: RegionMask, path) -> None:
    Path(path).write_text(collisions_svg(report, mask))
