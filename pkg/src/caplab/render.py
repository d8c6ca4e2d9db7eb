"""SVG drawings of planar domains, optionally with a potential heat map."""
from __future__ import annotations

import numpy as np

from .capacity import PotentialField
from .geometry import DomainSpec, GeometryError

WIDTH = 640.0
PAD = 8.0


def _fmt(x: float) -> str:
    s = f"{x:.4f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def render_svg(spec: DomainSpec, field: PotentialField | None = None) -> str:
    """Box outlines, shaded tagged sets, and a grayscale field (0 black, 1 white).

    The output depends only on the inputs; element order follows the box and
    tag order of ``spec`` and the C order of the field cells.
    """
    if spec.n != 2:
        raise GeometryError("only planar domains can be rendered")
    bb = spec.bounding_box()
    unit = 2.0**spec.m
    x0, y0 = bb.lo[0] / unit, bb.lo[1] / unit
    ext = max(bb.hi[0] - bb.lo[0], bb.hi[1] - bb.lo[1]) / unit
    k = (WIDTH - 2 * PAD) / ext
    W = (bb.hi[0] - bb.lo[0]) / unit * k + 2 * PAD
    H = (bb.hi[1] - bb.lo[1]) / unit * k + 2 * PAD

    def rect(lo, hi, attrs: str) -> str:
        # y is flipped so the picture has the usual orientation
        x = PAD + (lo[0] - x0) * k
        y = H - PAD - (hi[1] - y0) * k
        return (
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt((hi[0] - lo[0]) * k)}" '
            f'height="{_fmt((hi[1] - lo[1]) * k)}" {attrs}/>'
        )

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(W)}" height="{_fmt(H)}" '
        f'viewBox="0 0 {_fmt(W)} {_fmt(H)}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
    ]
    if field is not None:
        g = field.grid
        if g.n != 2:
            raise GeometryError("field grid is not planar")
        out.append('<g class="field" shape-rendering="crispEdges">')
        u = field.u
        for i, j in np.argwhere(np.isfinite(u)):
            v = int(round(255 * min(max(float(u[i, j]), 0.0), 1.0)))
            lo = (g.origin[0] + i * g.h, g.origin[1] + j * g.h)
            hi = (lo[0] + g.h, lo[1] + g.h)
            out.append(rect(lo, hi, f'class="cell" fill="#{v:02x}{v:02x}{v:02x}"'))
        out.append("</g>")
    if spec.tags and field is None:
        out.append('<g class="tags">')
        for name in sorted(spec.tags):
            shade = "#b0b0b0" if name.startswith("E_") else "#dddddd"
            for b in spec.tags[name]:
                lo, hi = spec.to_float(b)
                out.append(rect(lo, hi, f'class="tag" data-tag="{name}" fill="{shade}"'))
        out.append("</g>")
    out.append('<g class="boxes" fill="none" stroke="#000000" stroke-width="0.75">')
    for b in spec.boxes:
        lo, hi = spec.to_float(b)
        out.append(rect(lo, hi, 'class="box"'))
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
