"""Parsers that turn source snippets into token-type trees.

Two front-ends are provided:

* a single-table SQL subset::

      SELECT [AGG(]column[)] FROM table [WHERE col OP value [AND ...]]

  where AGG is one of MAX/MIN/COUNT/SUM/AVG, OP one of = != < > <= >=, and
  values are quoted strings or bare numbers. Quoted multi-word literals stay
  one node whose token list preserves the source text verbatim.

* parenthesized lambda-calculus s-expressions; application heads become
  typed internal nodes via a head-to-type table that is plain data, so new
  predicates need no code change.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .trees import Node, TokenTypeTree

AGG_OPS = ("MAX", "MIN", "COUNT", "SUM", "AVG")
CMP_OPS = ("=", "!=", "<>", "<=", ">=", "<", ">")

# Heads that are not predicates; everything else defaults to "pred".
DEFAULT_HEAD_TYPES: dict[str, str] = {
    "lambda": "expr", "and": "expr", "or": "expr", "not": "expr",
    "exists": "expr", "the": "expr", "argmax": "expr", "argmin": "expr",
    "count": "expr", "sum": "expr", "max": "expr", "min": "expr",
    "=": "cmp_op", "<": "cmp_op", ">": "cmp_op", "<=": "cmp_op",
    ">=": "cmp_op", "equals": "cmp_op",
}

# Bare atoms naming a semantic class (the binder's type annotation).
TYPE_ATOMS = frozenset({"e", "i", "t"})

_NUMBER_RE = re.compile(r"^\d+(\.\d+)?$")
_VARIABLE_RE = re.compile(r"^\$\d+$")


class ParseError(ValueError):
    """Syntax error with the byte offset of the offending text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass
class _Token:
    text: str
    offset: int
    kind: str  # word | op | lparen | rparen | string


def _tokenize_sql(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "'\"":
            end = text.find(ch, i + 1)
            if end < 0:
                raise ParseError("unterminated quote", i)
            tokens.append(_Token(text[i + 1:end], i, "string"))
            i = end + 1
            continue
        if ch == "(":
            tokens.append(_Token("(", i, "lparen"))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token(")", i, "rparen"))
            i += 1
            continue
        m = re.match(r"(!=|<>|<=|>=|=|<|>)", text[i:])
        if m:
            tokens.append(_Token(m.group(0), i, "op"))
            i += len(m.group(0))
            continue
        m = re.match(r"[^\s()'\"=<>!]+", text[i:])
        if m:
            tokens.append(_Token(m.group(0), i, "word"))
            i += len(m.group(0))
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    return tokens


class _SqlCursor:
    def __init__(self, tokens: list[_Token], text_len: int):
        self.tokens = tokens
        self.pos = 0
        self.text_len = text_len

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def offset(self) -> int:
        tok = self.peek()
        return tok.offset if tok is not None else self.text_len

    def expect_keyword(self, word: str) -> _Token:
        tok = self.next()
        if tok is None or tok.kind != "word" or tok.text.upper() != word:
            raise ParseError(f"expected {word}", tok.offset if tok else self.text_len)
        return tok


def _column_tokens(cur: _SqlCursor, stop_words: frozenset[str]) -> list[str]:
    # A column is one or more bare words up to a keyword, operator or paren.
    words: list[str] = []
    while True:
        tok = cur.peek()
        if tok is None or tok.kind != "word" or tok.text.upper() in stop_words:
            break
        words.append(tok.text)
        cur.next()
    if not words:
        raise ParseError("expected column name", cur.offset())
    return words


def parse_sql(text: str) -> TokenTypeTree:
    """Parse one subset-grammar query into a wikisql-typed tree.

    The root is a ``stmt`` node; an aggregation adds an ``agg_op`` node
    wrapping the selected column; each WHERE condition becomes a
    ``cond_expr`` node with column_name / cmp_op / string children. The
    table name is consumed but not represented (single-table queries).
    """
    cur = _SqlCursor(_tokenize_sql(text), len(text))
    cur.expect_keyword("SELECT")

    select_child: dict
    tok = cur.peek()
    if tok is None:
        raise ParseError("expected column or aggregation after SELECT", cur.offset())
    if tok.kind == "word" and tok.text.upper() in AGG_OPS:
        agg_tok = cur.next()
        open_paren = cur.next()
        if open_paren is None or open_paren.kind != "lparen":
            raise ParseError("expected ( after aggregation", cur.offset())
        col = _column_tokens(cur, frozenset({"FROM"}))
        close = cur.next()
        if close is None or close.kind != "rparen":
            raise ParseError("expected ) after aggregated column", cur.offset())
        select_child = {"type": "agg_op", "tokens": [agg_tok.text],
                        "children": [{"type": "column_name", "tokens": col, "children": []}]}
    else:
        col = _column_tokens(cur, frozenset({"FROM", "WHERE"}))
        select_child = {"type": "column_name", "tokens": col, "children": []}

    cur.expect_keyword("FROM")
    table = cur.next()
    if table is None or table.kind != "word":
        raise ParseError("expected table name after FROM", cur.offset())

    conditions: list[dict] = []
    tok = cur.peek()
    if tok is not None:
        if tok.kind != "word" or tok.text.upper() != "WHERE":
            raise ParseError("expected WHERE or end of query", tok.offset)
        cur.next()
        while True:
            col = _column_tokens(cur, frozenset({"AND"}))
            op = cur.next()
            if op is None or op.kind != "op":
                raise ParseError("unknown operator in condition",
                                 op.offset if op else cur.text_len)
            val = cur.next()
            if val is None:
                raise ParseError("expected condition value", cur.text_len)
            if val.kind == "string":
                value_tokens = val.text.split()
                if not value_tokens:
                    raise ParseError("empty string literal", val.offset)
            elif val.kind == "word" and _NUMBER_RE.match(val.text):
                value_tokens = [val.text]
            else:
                raise ParseError("condition value must be quoted or numeric", val.offset)
            conditions.append({
                "type": "cond_expr", "tokens": [],
                "children": [
                    {"type": "column_name", "tokens": col, "children": []},
                    {"type": "cmp_op", "tokens": [op.text], "children": []},
                    {"type": "string", "tokens": value_tokens, "children": []},
                ],
            })
            nxt = cur.peek()
            if nxt is None:
                break
            if nxt.kind == "word" and nxt.text.upper() == "AND":
                cur.next()
                continue
            raise ParseError("expected AND or end of query", nxt.offset)

    spec = {"type": "stmt", "tokens": ["SELECT"],
            "children": [select_child] + conditions}
    return _build_tree(spec, grammar="wikisql")


def _build_tree(spec: dict, grammar: str) -> TokenTypeTree:
    nodes: list[Node] = []

    def walk(entry: dict) -> int:
        nid = len(nodes)
        nodes.append(None)  # placeholder, children get higher ids
        child_ids = [walk(c) for c in entry["children"]]
        nodes[nid] = Node(id=nid, type=entry["type"],
                          tokens=tuple(entry["tokens"]), children=tuple(child_ids))
        return nid

    walk(spec)
    return TokenTypeTree(nodes=tuple(nodes), root=0, grammar=grammar)


def _atom_type(text: str) -> str:
    if _VARIABLE_RE.match(text):
        return "var"
    if _NUMBER_RE.match(text):
        return "num"
    if text in TYPE_ATOMS:
        return "var_type"
    return "ent"


def parse_lambda(text: str, head_types: dict[str, str] | None = None) -> TokenTypeTree:
    """Parse a balanced s-expression into an atis-typed tree.

    Atoms classify as: ``$k`` variables, numerals, known type atoms, and
    entities (the ground-term catch-all, covering placeholder codes such as
    ci0/ap0 and colon-tagged constants).
    """
    heads = DEFAULT_HEAD_TYPES if head_types is None else head_types
    tokens: list[_Token] = []
    for m in re.finditer(r"\(|\)|[^\s()]+", text):
        kind = "lparen" if m.group(0) == "(" else "rparen" if m.group(0) == ")" else "word"
        tokens.append(_Token(m.group(0), m.start(), kind))
    if not tokens:
        raise ParseError("empty expression", 0)

    pos = 0

    def parse_expr() -> dict:
        nonlocal pos
        tok = tokens[pos]
        if tok.kind == "rparen":
            raise ParseError("unexpected )", tok.offset)
        if tok.kind == "word":
            pos += 1
            return {"type": _atom_type(tok.text), "tokens": [tok.text], "children": []}
        # application: ( head arg* )
        open_offset = tok.offset
        pos += 1
        if pos >= len(tokens):
            raise ParseError("unbalanced parenthesis", open_offset)
        head = tokens[pos]
        if head.kind != "word":
            raise ParseError("expected atom head after (", head.offset)
        pos += 1
        children = []
        while True:
            if pos >= len(tokens):
                raise ParseError("unbalanced parenthesis", open_offset)
            if tokens[pos].kind == "rparen":
                pos += 1
                break
            children.append(parse_expr())
        node_type = heads.get(head.text, "pred")
        return {"type": node_type, "tokens": [head.text], "children": children}

    spec = parse_expr()
    if pos != len(tokens):
        raise ParseError("trailing content after expression", tokens[pos].offset)
    return _build_tree(spec, grammar="atis")
