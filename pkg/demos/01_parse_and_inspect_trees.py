#!/usr/bin/env python3
# Parse code into token-type trees, look at their structure, round-trip them
# through JSON, and compute corpus statistics.

from treecomment import parse_lambda, parse_sql, tree_from_json, tree_stats, tree_to_json
from treecomment.trees import get_grammar

sql = "SELECT MAX(Capacity) FROM table WHERE Stadium = 'Otkrytie Arena'"
tree = parse_sql(sql)

print("SQL:", sql)
for node in tree.nodes:
    print(f"  node {node.id}: type={node.type:<12} tokens={list(node.tokens)} "
          f"children={list(node.children)}")

# every node's type comes from the grammar registry; only a subset of types
# may be copied by the decoder
g = get_grammar("wikisql")
print("grammar types:", sorted(g.types))
print("decoder-copyable types:", sorted(g.available_types))

# multi-word literals stay one node so the copy mechanism can emit whole
# entities in a single action
literal = [n for n in tree.nodes if n.type == "string"][0]
print("literal node tokens:", literal.tokens)

# lambda-calculus front-end: application heads become typed internal nodes
lam = "( lambda $0 e ( and ( flight $0 ) ( from $0 ap0 ) ( to $0 ci0 ) ) )"
ltree = parse_lambda(lam)
print("\nlambda:", lam)
print("root:", ltree.node(0).type, ltree.node(0).tokens)
print("types:", [n.type for n in ltree.nodes])

# trees serialize to a small JSON document and come back identical
doc = tree_to_json(tree)
assert tree_from_json(doc) == tree
print("\nJSON round-trip ok,", len(doc), "bytes")

stats = tree_stats([tree, ltree])
print(f"stats over 2 trees: max depth {stats.max_depth}, "
      f"avg nodes {stats.avg_node_count:.2f}, max children {stats.max_child_count}")
