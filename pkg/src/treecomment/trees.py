"""Token-type trees: each node carries a grammar type and a token sequence.

A tree is a rooted ordered tree whose node ids are topological (every parent
precedes its children), so bottom-up evaluation can simply walk ids in
reverse. Trees are immutable after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

TREE_FORMAT_VERSION = 1


class TreeError(ValueError):
    """Structural or schema violation in a token-type tree."""


@dataclass(frozen=True)
class Node:
    id: int
    type: str
    tokens: tuple[str, ...]
    children: tuple[int, ...]


@dataclass(frozen=True)
class Grammar:
    """A dataset's type set, the subset the decoder may copy, and max arity."""
    name: str
    types: frozenset[str]
    available_types: frozenset[str]
    max_arity: int

    def __post_init__(self):
        if not self.available_types <= self.types:
            raise ValueError(f"grammar {self.name!r}: available types not a subset")
        if self.max_arity < 1:
            raise ValueError(f"grammar {self.name!r}: max arity must be positive")


_GRAMMARS = {
    "wikisql": Grammar(
        name="wikisql",
        types=frozenset({"stmt", "agg_op", "column_name", "cond_expr", "cmp_op", "string"}),
        available_types=frozenset({"column_name", "string"}),
        max_arity=4,
    ),
    "atis": Grammar(
        name="atis",
        types=frozenset({"expr", "var", "var_type", "ent", "num", "pred", "cmp_op"}),
        available_types=frozenset({"var", "ent", "num", "var_type", "pred"}),
        max_arity=15,
    ),
}


def get_grammar(name: str) -> Grammar:
    try:
        return _GRAMMARS[name]
    except KeyError:
        raise KeyError(f"unknown grammar {name!r}; known: {sorted(_GRAMMARS)}") from None


@dataclass(frozen=True)
class TokenTypeTree:
    nodes: tuple[Node, ...]
    root: int = 0
    grammar: str = ""

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if not self.nodes:
            raise TreeError("tree has no nodes")
        if ids != list(range(len(self.nodes))):
            raise TreeError("node ids must be 0..n-1 in order; use from_nodes to re-index")
        if self.root != 0:
            raise TreeError("canonical trees are rooted at id 0")
        seen_child = set()
        for n in self.nodes:
            for c in n.children:
                if not 0 <= c < len(self.nodes):
                    raise TreeError(f"node {n.id}: child {c} out of range")
                if c <= n.id:
                    raise TreeError(f"node {n.id}: child {c} does not follow its parent")
                if c in seen_child:
                    raise TreeError(f"node {c} has two parents")
                seen_child.add(c)
        orphans = set(range(1, len(self.nodes))) - seen_child
        if orphans:
            raise TreeError(f"nodes {sorted(orphans)} unreachable from the root")

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def depth(self) -> int:
        """Depth with the single-node convention: a lone root has depth 1."""
        depths = [1] * len(self.nodes)
        for n in self.nodes:
            for c in n.children:
                depths[c] = depths[n.id] + 1
        return max(depths)

    def max_child_count(self) -> int:
        return max(len(n.children) for n in self.nodes)

    def validate_against(self, grammar: Grammar) -> None:
        for n in self.nodes:
            if n.type not in grammar.types:
                raise TreeError(f"node {n.id}: type {n.type!r} not in grammar {grammar.name!r}")
            if len(n.children) > grammar.max_arity:
                raise TreeError(f"node {n.id}: {len(n.children)} children exceeds "
                                f"arity {grammar.max_arity} of {grammar.name!r}")


def from_nodes(entries: Sequence[dict], root_id: int, grammar: str = "") -> TokenTypeTree:
    """Build a canonical tree from arbitrary node ids, re-indexing to a
    parent-before-child order while preserving structure, types, tokens and
    child order."""
    by_id: dict[int, dict] = {}
    for e in entries:
        nid = e["id"]
        if nid in by_id:
            raise TreeError(f"node {nid}: duplicate id")
        by_id[nid] = e
    if root_id not in by_id:
        raise TreeError(f"root {root_id} not among node ids")
    order: list[int] = []
    stack = [root_id]
    seen: set[int] = set()
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise TreeError(f"node {nid}: reachable twice (cycle or shared child)")
        seen.add(nid)
        order.append(nid)
        entry = by_id.get(nid)
        if entry is None:
            raise TreeError(f"node {nid}: referenced but not defined")
        # reversed push keeps child order stable in the DFS preorder
        for c in reversed(entry["children"]):
            stack.append(c)
    if len(seen) != len(by_id):
        extra = sorted(set(by_id) - seen)
        raise TreeError(f"nodes {extra} unreachable from the root")
    remap = {old: new for new, old in enumerate(order)}
    nodes = tuple(
        Node(
            id=remap[old],
            type=by_id[old]["type"],
            tokens=tuple(by_id[old]["tokens"]),
            children=tuple(remap[c] for c in by_id[old]["children"]),
        )
        for old in order
    )
    return TokenTypeTree(nodes=nodes, root=0, grammar=grammar)


@dataclass
class TreeStats:
    max_depth: int
    avg_node_count: float
    max_child_count: int
    tree_count: int


def tree_stats(trees: Iterable[TokenTypeTree]) -> TreeStats:
    trees = list(trees)
    if not trees:
        raise ValueError("tree_stats: empty collection")
    return TreeStats(
        max_depth=max(t.depth() for t in trees),
        avg_node_count=sum(len(t) for t in trees) / len(trees),
        max_child_count=max(t.max_child_count() for t in trees),
        tree_count=len(trees),
    )


def tree_to_json(tree: TokenTypeTree) -> str:
    doc = {
        "format_version": TREE_FORMAT_VERSION,
        "grammar": tree.grammar,
        "root": tree.root,
        "nodes": [
            {"id": n.id, "type": n.type, "tokens": list(n.tokens), "children": list(n.children)}
            for n in tree.nodes
        ],
    }
    return json.dumps(doc, ensure_ascii=False)


def tree_from_json(text: str) -> TokenTypeTree:
    """Parse the tree document schema; ids in any order are re-indexed to the
    canonical topological labelling."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "nodes" not in doc or "root" not in doc:
        raise TreeError("document must have 'root' and 'nodes'")
    grammar_name = doc.get("grammar", "")
    entries = []
    for raw in doc["nodes"]:
        nid = raw.get("id")
        if not isinstance(nid, int):
            raise TreeError(f"node {nid!r}: id must be an integer")
        if not isinstance(raw.get("type"), str):
            raise TreeError(f"node {nid}: missing or non-string type")
        tokens = raw.get("tokens")
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise TreeError(f"node {nid}: tokens must be a list of strings")
        children = raw.get("children")
        if not isinstance(children, list) or not all(isinstance(c, int) for c in children):
            raise TreeError(f"node {nid}: children must be a list of ids")
        entries.append({"id": nid, "type": raw["type"], "tokens": tokens, "children": children})
    tree = from_nodes(entries, doc["root"], grammar=grammar_name)
    if grammar_name:
        grammar = _GRAMMARS.get(grammar_name)
        if grammar is not None:
            for n in tree.nodes:
                if n.type not in grammar.types:
                    raise TreeError(f"node {n.id}: type {n.type!r} not in grammar {grammar_name!r}")
    return tree
