"""The weighted knowledge graph: typed nodes, co-occurrence counted edges,
prior computation, retrieval, induced subgraphs, DOT export and JSON
snapshots.

Edge weights are raw co-occurrence counts, never normalized in storage.
Priors are Laplace-smoothed products computed exactly over rationals so
selection evidence can be re-derived bit-for-bit from any snapshot.

All mutation goes through a single internal lock; concurrent extraction
workers funnel their commits through it, so weight increments never race.
Reads are safe at any time.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import (
    EmptyCandidates,
    IncompatibleSnapshot,
    InvalidParameter,
    NotCanonical,
    UnknownNode,
)
from .functions import FunctionSpec
from .knowledge import BehaviorTuple, KnowledgeUnit, is_canonical

SNAPSHOT_VERSION = 1

KIND_STATIC = "static"
KIND_BEHAVIOR = "behavior"
KIND_FUNCTION = "function"


@dataclass(frozen=True, slots=True)
class StaticNode:
    node_id: int
    attr_kind: str
    value: str

    def label(self) -> str:
        return f"{self.attr_kind}={self.value}"


@dataclass(frozen=True, slots=True)
class BehaviorNode:
    node_id: int
    tokens: BehaviorTuple

    def label(self) -> str:
        return f"behavior: {self.tokens.describe()}"


@dataclass(slots=True)
class FunctionNode:
    node_id: int
    spec: FunctionSpec
    description: str

    def label(self) -> str:
        return f"function: {self.spec.family}"


@dataclass(slots=True)
class KgFragment:
    """An induced subgraph; node ids are the originals, never renumbered."""

    nodes: dict[int, object]
    edges: list[tuple[int, int, int, str]]  # (src, dst, weight, kind)


def _spec_key(spec: FunctionSpec) -> tuple:
    return (spec.lat_expr, spec.lon_expr, spec.params)


class SdKg:
    """Static, behavior and function nodes joined by counted edges."""

    def __init__(self):
        # Re-entrant: iterating readers lock around their scan so the single
        # writer can never mutate a dict mid-iteration.
        self._lock = threading.RLock()
        self._nodes: dict[int, object] = {}
        self._static_ids: dict[tuple[str, str], int] = {}
        self._behavior_ids: dict[BehaviorTuple, int] = {}
        self._function_ids: dict[tuple, int] = {}
        self._sb: dict[int, dict[int, int]] = {}  # static -> behavior -> count
        self._bf: dict[int, dict[int, int]] = {}  # behavior -> function -> count
        self._next_id = 0
        self.revision = 0

    # -- introspection -------------------------------------------------------

    def node(self, node_id: int):
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node with id {node_id}") from None

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def node_count(self) -> int:
        return len(self._nodes)

    def edge_count(self) -> int:
        with self._lock:
            return sum(len(d) for d in self._sb.values()) + sum(
                len(d) for d in self._bf.values()
            )

    def static_node_id(self, attr_kind: str, value: str) -> int | None:
        return self._static_ids.get((attr_kind, value))

    def behavior_node_id(self, tokens: BehaviorTuple) -> int | None:
        return self._behavior_ids.get(tokens)

    def function_node_id(self, spec: FunctionSpec) -> int | None:
        return self._function_ids.get(_spec_key(spec))

    def behavior_nodes(self) -> list[BehaviorNode]:
        with self._lock:
            return [n for n in self._nodes.values() if isinstance(n, BehaviorNode)]

    def function_nodes(self) -> list[FunctionNode]:
        with self._lock:
            return [n for n in self._nodes.values() if isinstance(n, FunctionNode)]

    def static_nodes(self) -> list[StaticNode]:
        with self._lock:
            return [n for n in self._nodes.values() if isinstance(n, StaticNode)]

    def sb_weight(self, static_id: int, behavior_id: int) -> int:
        return self._sb.get(static_id, {}).get(behavior_id, 0)

    def bf_weight(self, behavior_id: int, function_id: int) -> int:
        return self._bf.get(behavior_id, {}).get(function_id, 0)

    # -- mutation ------------------------------------------------------------

    def _get_or_create_static(self, attr_kind: str, value: str) -> int:
        key = (attr_kind, value)
        node_id = self._static_ids.get(key)
        if node_id is None:
            node_id = self._next_id
            self._next_id += 1
            self._nodes[node_id] = StaticNode(node_id, attr_kind, value)
            self._static_ids[key] = node_id
        return node_id

    def _get_or_create_behavior(self, tokens: BehaviorTuple) -> int:
        node_id = self._behavior_ids.get(tokens)
        if node_id is None:
            node_id = self._next_id
            self._next_id += 1
            self._nodes[node_id] = BehaviorNode(node_id, tokens)
            self._behavior_ids[tokens] = node_id
        return node_id

    def _get_or_create_function(self, spec: FunctionSpec, description: str) -> int:
        key = _spec_key(spec)
        node_id = self._function_ids.get(key)
        if node_id is None:
            node_id = self._next_id
            self._next_id += 1
            self._nodes[node_id] = FunctionNode(node_id, spec, description)
            self._function_ids[key] = node_id
        else:
            node = self._nodes[node_id]
            if not node.description and description:
                node.description = description
        return node_id

    def upsert_unit(self, unit: KnowledgeUnit) -> int:
        """Insert a unit's nodes and bump each asserted edge by one.

        Returns the graph revision after the commit.
        """
        for token in unit.behavior.tokens():
            if not is_canonical(token):
                raise NotCanonical(f"behavior token {token!r} is not canonical")
        if unit.func is None:
            raise InvalidParameter("unit has no imputation method; cannot commit")
        with self._lock:
            behavior_id = self._get_or_create_behavior(unit.behavior)
            function_id = self._get_or_create_function(
                unit.func.spec, unit.func.description
            )
            for attr_kind, value in unit.static.members():
                static_id = self._get_or_create_static(attr_kind, value)
                row = self._sb.setdefault(static_id, {})
                row[behavior_id] = row.get(behavior_id, 0) + 1
            row = self._bf.setdefault(behavior_id, {})
            row[function_id] = row.get(function_id, 0) + 1
            self.revision += 1
            return self.revision

    def merge_behavior_nodes(self, keep_id: int, drop_id: int) -> None:
        """Redirect every edge of ``drop_id`` onto ``keep_id`` and delete it."""
        with self._lock:
            keep = self.node(keep_id)
            drop = self.node(drop_id)
            if not isinstance(keep, BehaviorNode) or not isinstance(drop, BehaviorNode):
                raise UnknownNode("merge endpoints must both be behavior nodes")
            for static_id, row in self._sb.items():
                if drop_id in row:
                    row[keep_id] = row.get(keep_id, 0) + row.pop(drop_id)
            drop_row = self._bf.pop(drop_id, {})
            keep_row = self._bf.setdefault(keep_id, {})
            for function_id, weight in drop_row.items():
                keep_row[function_id] = keep_row.get(function_id, 0) + weight
            del self._nodes[drop_id]
            del self._behavior_ids[drop.tokens]
            self.revision += 1

    def merge_function_nodes(self, keep_id: int, drop_id: int) -> None:
        with self._lock:
            keep = self.node(keep_id)
            drop = self.node(drop_id)
            if not isinstance(keep, FunctionNode) or not isinstance(drop, FunctionNode):
                raise UnknownNode("merge endpoints must both be function nodes")
            for behavior_id, row in self._bf.items():
                if drop_id in row:
                    row[keep_id] = row.get(keep_id, 0) + row.pop(drop_id)
            if not keep.description and drop.description:
                keep.description = drop.description
            del self._nodes[drop_id]
            del self._function_ids[_spec_key(drop.spec)]
            self.revision += 1

    def rename_behavior_node(self, node_id: int, tokens: BehaviorTuple) -> None:
        """Rewrite a behavior node's tokens in place (vocabulary merges)."""
        with self._lock:
            node = self.node(node_id)
            if not isinstance(node, BehaviorNode):
                raise UnknownNode(f"node {node_id} is not a behavior node")
            if tokens in self._behavior_ids and self._behavior_ids[tokens] != node_id:
                raise NotCanonical("target tokens already name another node")
            del self._behavior_ids[node.tokens]
            self._nodes[node_id] = BehaviorNode(node_id, tokens)
            self._behavior_ids[tokens] = node_id
            self.revision += 1

    # -- retrieval -----------------------------------------------------------

    def candidate_behaviors(self, static_node_ids) -> set[int]:
        """Behavior nodes reachable from at least one query static node."""
        ids = list(static_node_ids)
        if not ids:
            raise EmptyCandidates("query static node set is empty")
        for node_id in ids:
            node = self.node(node_id)
            if not isinstance(node, StaticNode):
                raise UnknownNode(f"node {node_id} is not a static node")
        found: set[int] = set()
        with self._lock:
            for node_id in ids:
                found.update(self._sb.get(node_id, {}).keys())
        return found

    def behavior_prior(self, static_node_ids, candidates) -> dict[int, Fraction]:
        """Normalized multiplicative support with +1 smoothing, exact rationals."""
        ids = list(static_node_ids)
        cands = sorted(candidates)
        if not cands:
            raise EmptyCandidates("no behavior candidates to score")
        products: dict[int, int] = {}
        with self._lock:
            for behavior_id in cands:
                product = 1
                for static_id in ids:
                    product *= self.sb_weight(static_id, behavior_id) + 1
                products[behavior_id] = product
        total = sum(products.values())
        return {bid: Fraction(product, total) for bid, product in products.items()}

    def candidate_functions(self, behavior_id: int) -> set[int]:
        node = self.node(behavior_id)
        if not isinstance(node, BehaviorNode):
            raise UnknownNode(f"node {behavior_id} is not a behavior node")
        with self._lock:
            return set(self._bf.get(behavior_id, {}).keys())

    def function_prior(self, behavior_id: int, candidates) -> dict[int, Fraction]:
        cands = sorted(candidates)
        if not cands:
            raise EmptyCandidates("no function candidates to score")
        with self._lock:
            products = {
                fid: self.bf_weight(behavior_id, fid) + 1 for fid in cands
            }
        total = sum(products.values())
        return {fid: Fraction(product, total) for fid, product in products.items()}

    def induced_subgraph(self, node_ids) -> KgFragment:
        ids = set(node_ids)
        with self._lock:
            nodes = {node_id: self.node(node_id) for node_id in sorted(ids)}
            edges: list[tuple[int, int, int, str]] = []
            for src, row in self._sb.items():
                if src not in ids:
                    continue
                for dst, weight in row.items():
                    if dst in ids:
                        edges.append((src, dst, weight, "static-behavior"))
            for src, row in self._bf.items():
                if src not in ids:
                    continue
                for dst, weight in row.items():
                    if dst in ids:
                        edges.append((src, dst, weight, "behavior-function"))
        edges.sort(key=lambda e: (e[0], e[1]))
        return KgFragment(nodes=nodes, edges=edges)

    # -- snapshots -----------------------------------------------------------

    def structural_fingerprint(self) -> tuple:
        """Content-keyed view of the graph, independent of node-id history."""
        with self._lock:
            return self._fingerprint_locked()

    def _fingerprint_locked(self) -> tuple:
        def key(node_id: int):
            node = self._nodes[node_id]
            if isinstance(node, StaticNode):
                return ("s", node.attr_kind, node.value)
            if isinstance(node, BehaviorNode):
                return ("b", *node.tokens.tokens(), node.tokens.duration_lower)
            return ("f", *node.spec.sort_key())

        nodes = tuple(sorted(key(node_id) for node_id in self._nodes))
        sb = tuple(
            sorted(
                (key(src), key(dst), weight)
                for src, row in self._sb.items()
                for dst, weight in row.items()
            )
        )
        bf = tuple(
            sorted(
                (key(src), key(dst), weight)
                for src, row in self._bf.items()
                for dst, weight in row.items()
            )
        )
        return (nodes, sb, bf)

    def to_snapshot(self) -> dict:
        with self._lock:
            return self._snapshot_locked()

    def _snapshot_locked(self) -> dict:
        statics = []
        behaviors = []
        funcs = []
        for node_id in sorted(self._nodes):
            node = self._nodes[node_id]
            if isinstance(node, StaticNode):
                statics.append(
                    {"id": node.node_id, "kind": node.attr_kind, "value": node.value}
                )
            elif isinstance(node, BehaviorNode):
                behaviors.append({"id": node.node_id, **node.tokens.to_json_dict()})
            else:
                funcs.append(
                    {
                        "id": node.node_id,
                        "spec": node.spec.to_json_dict(),
                        "description": node.description,
                    }
                )
        sb = sorted(
            [src, dst, weight]
            for src, row in self._sb.items()
            for dst, weight in row.items()
        )
        bf = sorted(
            [src, dst, weight]
            for src, row in self._bf.items()
            for dst, weight in row.items()
        )
        return {
            "schema_version": SNAPSHOT_VERSION,
            "next_node_id": self._next_id,
            "revision": self.revision,
            "nodes": {"static": statics, "behavior": behaviors, "function": funcs},
            "edges": {"static_behavior": sb, "behavior_function": bf},
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_snapshot(), indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def from_snapshot(cls, data: dict) -> "SdKg":
        version = data.get("schema_version")
        if version != SNAPSHOT_VERSION:
            raise IncompatibleSnapshot(
                f"snapshot schema {version!r}, expected {SNAPSHOT_VERSION}"
            )
        kg = cls()
        for entry in data["nodes"]["static"]:
            node = StaticNode(entry["id"], entry["kind"], entry["value"])
            kg._nodes[node.node_id] = node
            kg._static_ids[(node.attr_kind, node.value)] = node.node_id
        for entry in data["nodes"]["behavior"]:
            tokens = BehaviorTuple.from_json_dict(entry)
            node = BehaviorNode(entry["id"], tokens)
            kg._nodes[node.node_id] = node
            kg._behavior_ids[tokens] = node.node_id
        for entry in data["nodes"]["function"]:
            spec = FunctionSpec.from_json_dict(entry["spec"])
            node = FunctionNode(entry["id"], spec, entry.get("description", ""))
            kg._nodes[node.node_id] = node
            kg._function_ids[_spec_key(spec)] = node.node_id
        for src, dst, weight in data["edges"]["static_behavior"]:
            kg._sb.setdefault(src, {})[dst] = weight
        for src, dst, weight in data["edges"]["behavior_function"]:
            kg._bf.setdefault(src, {})[dst] = weight
        kg._next_id = data.get("next_node_id", (max(kg._nodes) + 1) if kg._nodes else 0)
        kg.revision = data.get("revision", 0)
        return kg

    @classmethod
    def load(cls, path: str | Path) -> "SdKg":
        return cls.from_snapshot(json.loads(Path(path).read_text()))


def top_k(prior_map: dict[int, Fraction], k: int) -> list[tuple[int, Fraction]]:
    """Highest-prior candidates; ties broken by ascending node id."""
    if k < 1:
        raise EmptyCandidates(f"shortlist size must be >= 1, got {k}")
    ranked = sorted(prior_map.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(fragment: KgFragment) -> str:
    """Serialize a fragment as a byte-stable DOT digraph."""
    if not fragment.nodes and not fragment.edges:
        return "digraph sdkg { }\n"
    lines = ["digraph sdkg {"]
    for node_id in sorted(fragment.nodes):
        label = _dot_escape(fragment.nodes[node_id].label())
        lines.append(f'  {node_id} [label="{label}"];')
    for src, dst, weight, _kind in fragment.edges:
        lines.append(f'  {src} -> {dst} [label="w={weight}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
