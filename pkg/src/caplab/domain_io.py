"""Plain-text serialization of :class:`DomainSpec`.

Grammar (one record per line, integers separated by single spaces)::

    caplab-domain 1
    dimension <n>
    scale <m>                      # coordinates are integers / 2**m
    center <c_1> ... <c_n>
    boxes <count>
    <lo_1> ... <lo_n> <hi_1> ... <hi_n>     (count lines)
    tag <name> <count>             # zero or more tag blocks
    <lo_1> ... <lo_n> <hi_1> ... <hi_n>     (count lines)
    end

Blank lines and ``#`` comments are ignored on input.  ``emit`` writes the
canonical form above, so ``emit(parse(emit(spec))) == emit(spec)`` and
``parse(emit(spec)) == spec``.
"""
from __future__ import annotations

from .geometry import Box, DomainSpec, GeometryError

MAGIC = "caplab-domain 1"


class FormatError(GeometryError):
    pass


def _box_line(b: Box) -> str:
    return " ".join(str(c) for c in (*b.lo, *b.hi))


def emit(spec: DomainSpec) -> str:
    lines = [
        MAGIC,
        f"dimension {spec.n}",
        f"scale {spec.m}",
        "center " + " ".join(str(c) for c in spec.center),
        f"boxes {len(spec.boxes)}",
    ]
    lines += [_box_line(b) for b in spec.boxes]
    for name, boxes in spec.tags.items():
        lines.append(f"tag {name} {len(boxes)}")
        lines += [_box_line(b) for b in boxes]
    lines.append("end")
    return "\n".join(lines) + "\n"


def parse(text: str) -> DomainSpec:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    it = iter(rows)

    def take(expect=None):
        try:
            lineno, line = next(it)
        except StopIteration:
            raise FormatError("unexpected end of document") from None
        parts = line.split()
        if expect and parts[0] != expect:
            raise FormatError(f"line {lineno}: expected '{expect}', got '{parts[0]}'")
        return lineno, parts

    def ints(lineno, parts, count):
        if len(parts) != count:
            raise FormatError(f"line {lineno}: expected {count} integers, got {len(parts)}")
        try:
            return [int(p) for p in parts]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer value") from None

    lineno, parts = take()
    if " ".join(parts) != MAGIC:
        raise FormatError(f"line {lineno}: missing header '{MAGIC}'")
    lineno, parts = take("dimension")
    (n,) = ints(lineno, parts[1:], 1)
    lineno, parts = take("scale")
    (m,) = ints(lineno, parts[1:], 1)
    lineno, parts = take("center")
    center = tuple(ints(lineno, parts[1:], n))

    def box_block(count):
        out = []
        for _ in range(count):
            ln, ps = take()
            v = ints(ln, ps, 2 * n)
            try:
                out.append(Box(tuple(v[:n]), tuple(v[n:])))
            except GeometryError as exc:
                raise FormatError(f"line {ln}: {exc}") from None
        return tuple(out)

    lineno, parts = take("boxes")
    (count,) = ints(lineno, parts[1:], 1)
    boxes = box_block(count)
    tags = {}
    while True:
        lineno, parts = take()
        if parts[0] == "end":
            break
        if parts[0] != "tag" or len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 'tag <name> <count>' or 'end'")
        name = parts[1]
        if name in tags:
            raise FormatError(f"line {lineno}: duplicate tag {name}")
        (count,) = ints(lineno, parts[2:], 1)
        tags[name] = box_block(count)
    return DomainSpec(n=n, m=m, boxes=boxes, center=center, tags=tags)


def load(path) -> DomainSpec:
    with open(path) as fh:
        return parse(fh.read())


def save(spec: DomainSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(emit(spec))
