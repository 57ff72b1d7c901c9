"""Independent DOT reader used to verify exported graphs.

Deliberately shares no code with the serializer: a fresh parse of the
restricted digraph subset (integer node ids, label attributes, w=<n> edge
labels).
"""

from __future__ import annotations

import re

_EDGE_RE = re.compile(r"^(\d+)\s*->\s*(\d+)\s*\[label=\"w=(\d+)\"\];$")
_NODE_RE = re.compile(r"^(\d+)\s*\[label=\"(.*)\"\];$")


def parse_dot(text: str) -> tuple[dict[int, str], dict[tuple[int, int], int]]:
    if not text.startswith("digraph"):
        raise ValueError("not a digraph")
    nodes: dict[int, str] = {}
    edges: dict[tuple[int, int], int] = {}
    for line in text.splitlines():
        line = line.strip()
        edge = _EDGE_RE.match(line)
        if edge:
            edges[(int(edge.group(1)), int(edge.group(2)))] = int(edge.group(3))
            continue
        node = _NODE_RE.match(line)
        if node:
            nodes[int(node.group(1))] = node.group(2)
    return nodes, edges
