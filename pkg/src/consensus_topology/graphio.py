"""Reading and writing graphs as edge lists or Pajek ``.net`` files.

Node ids are 1-based on disk and 0-based in :class:`Graph`.

Edge-list layout::

    n 4
    # comment
    1 2 1.0
    2 3        # weight defaults to 1.0

Pajek subset: ``*Vertices n`` (optionally followed by vertex label lines),
then ``*Edges`` and/or ``*Arcs`` sections of ``i j [w]`` lines.  Arcs are
treated as unweighted and symmetrized: an edge exists with weight 1 if
either direction is listed.
"""

from __future__ import annotations

import os

from .errors import ParseError
from .graph import Graph
from .util import atomic_write_text

FORMATS = ("edge-list", "pajek-net")


def _format_for(path, fmt):
    if fmt is not None:
        if fmt not in FORMATS:
            raise ValueError(f"unknown graph format {fmt!r}; expected one of {FORMATS}")
        return fmt
    return "pajek-net" if str(path).lower().endswith(".net") else "edge-list"


def _int_token(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{what} {tok!r} is not an integer", lineno) from None


def _float_token(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"weight {tok!r} is not a number", lineno) from None


def _node(tok, n, lineno):
    k = _int_token(tok, lineno, "node id")
    if not 1 <= k <= n:
        raise IndexError(f"line {lineno}: node id {k} outside 1..{n}")
    return k - 1


def parse_edge_list(text):
    n = None
    edges = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if n is None:
            if len(toks) != 2 or toks[0] != "n":
                raise ParseError("expected header 'n <count>'", lineno)
            n = _int_token(toks[1], lineno, "node count")
            if n < 2:
                raise ParseError(f"node count must be at least 2, got {n}", lineno)
            continue
        if len(toks) not in (2, 3):
            raise ParseError(f"expected 'i j [w]', got {len(toks)} fields", lineno)
        i, j = _node(toks[0], n, lineno), _node(toks[1], n, lineno)
        w = _float_token(toks[2], lineno) if len(toks) == 3 else 1.0
        if i == j:
            raise ParseError(f"self-loop at node {i + 1}", lineno)
        if w < 0:
            raise ParseError(f"negative weight {w}", lineno)
        key = (min(i, j), max(i, j))
        if key in edges:
            raise ParseError(f"duplicate edge ({key[0] + 1}, {key[1] + 1})", lineno)
        edges[key] = w
    if n is None:
        raise ParseError("missing header 'n <count>'", 1)
    return Graph(n, tuple((i, j, w) for (i, j), w in edges.items()))


def parse_pajek(text):
    n = None
    section = None
    edges = {}
    arcs = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if line.startswith("*"):
            toks = line.split()
            head = toks[0].lower()
            if head == "*vertices":
                if n is not None or len(toks) < 2:
                    raise ParseError("malformed or repeated *Vertices line", lineno)
                n = _int_token(toks[1], lineno, "vertex count")
                if n < 2:
                    raise ParseError(f"vertex count must be at least 2, got {n}", lineno)
                section = "vertices"
            elif head in ("*edges", "*arcs"):
                if n is None:
                    raise ParseError(f"{toks[0]} before *Vertices", lineno)
                section = head[1:]
            else:
                raise ParseError(f"unsupported section {toks[0]}", lineno)
            continue
        if section is None:
            raise ParseError("data before *Vertices", lineno)
        if section == "vertices":
            continue
        toks = line.split()
        if len(toks) < 2:
            raise ParseError("expected 'i j [w]'", lineno)
        i, j = _node(toks[0], n, lineno), _node(toks[1], n, lineno)
        if i == j:
            raise ParseError(f"self-loop at node {i + 1}", lineno)
        key = (min(i, j), max(i, j))
        if section == "arcs":
            arcs.add(key)
            continue
        w = _float_token(toks[2], lineno) if len(toks) >= 3 else 1.0
        if w < 0:
            raise ParseError(f"negative weight {w}", lineno)
        if key in edges:
            raise ParseError(f"duplicate edge ({key[0] + 1}, {key[1] + 1})", lineno)
        edges[key] = w
    if n is None:
        raise ParseError("missing *Vertices line", 1)
    for key in arcs:
        edges.setdefault(key, 1.0)
    return Graph(n, tuple((i, j, w) for (i, j), w in edges.items()))


def format_edge_list(g):
    lines = [f"n {g.n}"]
    lines += [f"{i + 1} {j + 1} {w!r}" for i, j, w in g.edges]
    return "\n".join(lines) + "\n"


def format_pajek(g):
    lines = [f"*Vertices {g.n}", "*Edges"]
    lines += [f"{i + 1} {j + 1} {w!r}" for i, j, w in g.edges]
    return "\n".join(lines) + "\n"


def read_graph(path, format=None) -> Graph:
    """Read a graph; ``format`` defaults to ``pajek-net`` for ``.net`` files, else ``edge-list``."""
    fmt = _format_for(path, format)
    with open(os.fspath(path), encoding="utf-8") as fh:
        text = fh.read()
    return parse_pajek(text) if fmt == "pajek-net" else parse_edge_list(text)


def write_graph(g, path, format=None):
    fmt = _format_for(path, format)
    text = format_pajek(g) if fmt == "pajek-net" else format_edge_list(g)
    atomic_write_text(path, text)
