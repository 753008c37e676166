"""Recursive-descent parser for the C subset.

Grammar (one function definition per input):

    function   := type IDENT '(' [param {',' param}] ')' block
    param      := type IDENT
    block      := '{' {statement} '}'
    statement  := decl | assign ';' | call ';' | if | while | for | return
    decl       := type IDENT ['=' expr] ';'
    assign     := IDENT '=' expr
    if         := 'if' '(' expr ')' block ['else' block]
    while      := 'while' '(' expr ')' block
    for        := 'for' '(' (decl-no-semi | assign) ';' expr ';' assign ')' block
    return     := 'return' [expr] ';'
    expr       := or-chain of && / || / relational / additive / multiplicative
    unary      := ('-' | '!') unary | primary
    primary    := INT | IDENT ['(' [expr {',' expr}] ')'] | '(' expr ')'
    type       := 'int' | 'short'

Operator tokens become Operator leaf nodes so that every non-structural token
is owned by exactly one leaf; keywords and punctuation are recorded as
structural tokens on the construct that consumed them. Entry/Exit are inserted
as synthetic children of Function for the control-flow relation.
"""

from __future__ import annotations

from ..errors import ParseError, UnsupportedConstruct
from .astnodes import AstNode, FunctionAst, NodeType
from .lexer import Token

TYPE_KEYWORDS = ("int", "short")

_CMP_OPS = ("<", ">", "<=", ">=", "==", "!=")
_ADD_OPS = ("+", "-")
_MUL_OPS = ("*", "/", "%")
_LOGIC_OR = ("||",)
_LOGIC_AND = ("&&",)


class _Node:
    """Mutable tree node used during parsing; frozen into AstNode afterwards."""

    __slots__ = ("node_type", "children", "code", "token_index", "structural")

    def __init__(self, node_type, code="", token_index=None):
        self.node_type = node_type
        self.children: list[_Node] = []
        self.code = code
        self.token_index = token_index
        self.structural: list[int] = []


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers -------------------------------------------------

    def _peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def _at(self, text: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.text == text

    def _at_kind(self, kind: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.kind == kind

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _expect(self, expected: str, *, kind: str | None = None) -> tuple[Token, int]:
        tok = self._peek()
        if tok is None:
            raise ParseError("EOF", expected)
        if kind is not None:
            if tok.kind != kind:
                raise ParseError(repr(tok.text), expected, tok.start)
        elif tok.text != expected:
            raise ParseError(repr(tok.text), repr(expected), tok.start)
        idx = self.pos
        self._advance()
        return tok, idx

    def _text(self, start: int, end: int) -> str:
        return " ".join(t.text for t in self.tokens[start:end])

    # -- leaf constructors ---------------------------------------------

    def _leaf(self, node_type: NodeType, tok: Token, idx: int) -> _Node:
        return _Node(node_type, code=tok.text, token_index=idx)

    def _ident_leaf(self) -> _Node:
        tok = self._peek()
        if tok is None or tok.kind != "identifier":
            raise ParseError(
                "EOF" if tok is None else repr(tok.text),
                "identifier",
                None if tok is None else tok.start,
            )
        idx = self.pos
        self._advance()
        return self._leaf(NodeType.IDENTIFIER, tok, idx)

    def _op_leaf(self) -> _Node:
        tok = self._advance()
        return self._leaf(NodeType.OPERATOR, tok, self.pos - 1)

    # -- grammar -------------------------------------------------------

    def parse_function(self) -> _Node:
        start = self.pos
        ret_tok, ret_idx = self._expect("type keyword", kind="keyword")
        if ret_tok.text not in TYPE_KEYWORDS:
            raise ParseError(repr(ret_tok.text), "'int' or 'short'", ret_tok.start)
        if self._at("*"):
            raise UnsupportedConstruct("pointer types are outside the subset")
        name = self._ident_leaf()

        fn = _Node(NodeType.FUNCTION, code=f"{ret_tok.text} {name.code}")
        fn.structural.append(ret_idx)
        fn.children.append(name)

        params = _Node(NodeType.PARAM_LIST)
        _, lp = self._expect("(")
        params.structural.append(lp)
        while not self._at(")"):
            if params.children:
                _, comma = self._expect(",")
                params.structural.append(comma)
            params.children.append(self._parse_param())
        _, rp = self._expect(")")
        params.structural.append(rp)
        fn.children.append(params)

        body = self._parse_block()
        fn.children.append(_Node(NodeType.ENTRY, code="ENTRY"))
        fn.children.append(body)
        fn.children.append(_Node(NodeType.EXIT, code="EXIT"))

        if self.pos != len(self.tokens):
            extra = self._peek()
            raise ParseError(repr(extra.text), "end of function", extra.start)
        self._check_scope(fn)
        return fn

    def _parse_param(self) -> _Node:
        tok = self._peek()
        if tok is None or tok.text not in TYPE_KEYWORDS:
            raise ParseError(
                "EOF" if tok is None else repr(tok.text),
                "parameter type",
                None if tok is None else tok.start,
            )
        _, type_idx = self._expect(tok.text)
        if self._at("*"):
            raise UnsupportedConstruct("pointer parameters are outside the subset")
        param = _Node(NodeType.PARAM, code=tok.text)
        param.structural.append(type_idx)
        param.children.append(self._ident_leaf())
        return param

    def _parse_block(self) -> _Node:
        block = _Node(NodeType.BLOCK)
        _, lb = self._expect("{")
        block.structural.append(lb)
        while not self._at("}"):
            if self._peek() is None:
                raise ParseError("EOF", "'}'")
            block.children.append(self._parse_statement())
        _, rb = self._expect("}")
        block.structural.append(rb)
        return block

    def _parse_statement(self) -> _Node:
        tok = self._peek()
        if tok.kind == "keyword":
            if tok.text in TYPE_KEYWORDS:
                return self._parse_decl()
            if tok.text == "if":
                return self._parse_if()
            if tok.text == "while":
                return self._parse_while()
            if tok.text == "for":
                return self._parse_for()
            if tok.text == "return":
                return self._parse_return()
            raise ParseError(repr(tok.text), "a statement", tok.start)
        if tok.kind == "identifier":
            nxt = self._peek(1)
            if nxt is not None and nxt.text == "(":
                call = self._parse_call()
                _, semi = self._expect(";")
                call.structural.append(semi)
                return call
            assign = self._parse_assign()
            _, semi = self._expect(";")
            assign.structural.append(semi)
            return assign
        raise ParseError(repr(tok.text), "a statement", tok.start)

    def _parse_decl(self, *, expect_semi: bool = True) -> _Node:
        start = self.pos
        type_tok, type_idx = self._expect("type keyword", kind="keyword")
        if self._at("*"):
            raise UnsupportedConstruct("pointer declarations are outside the subset")
        decl = _Node(NodeType.DECL)
        decl.structural.append(type_idx)
        name = self._ident_leaf()
        if self._at("="):
            assign = _Node(NodeType.ASSIGN)
            assign_start = self.pos - 1
            assign.children.append(name)
            assign.children.append(self._op_leaf())
            assign.children.append(self._parse_expr())
            assign.code = self._text(assign_start, self.pos)
            decl.children.append(assign)
        else:
            decl.children.append(name)
        if expect_semi:
            _, semi = self._expect(";")
            decl.structural.append(semi)
            decl.code = self._text(start, self.pos - 1)
        else:
            decl.code = self._text(start, self.pos)
        return decl

    def _parse_assign(self) -> _Node:
        start = self.pos
        assign = _Node(NodeType.ASSIGN)
        assign.children.append(self._ident_leaf())
        if not self._at("="):
            tok = self._peek()
            raise ParseError(
                "EOF" if tok is None else repr(tok.text),
                "'='",
                None if tok is None else tok.start,
            )
        assign.children.append(self._op_leaf())
        assign.children.append(self._parse_expr())
        assign.code = self._text(start, self.pos)
        return assign

    def _parse_call(self) -> _Node:
        start = self.pos
        call = _Node(NodeType.CALL)
        call.children.append(self._ident_leaf())
        _, lp = self._expect("(")
        call.structural.append(lp)
        while not self._at(")"):
            if len(call.children) > 1:
                _, comma = self._expect(",")
                call.structural.append(comma)
            call.children.append(self._parse_expr())
        _, rp = self._expect(")")
        call.structural.append(rp)
        call.code = self._text(start, self.pos)
        return call

    def _parse_condition(self, owner: _Node) -> _Node:
        _, lp = self._expect("(")
        owner.structural.append(lp)
        start = self.pos
        cond = _Node(NodeType.CONDITION)
        cond.children.append(self._parse_expr())
        cond.code = self._text(start, self.pos)
        _, rp = self._expect(")")
        owner.structural.append(rp)
        return cond

    def _parse_if(self) -> _Node:
        node = _Node(NodeType.IF)
        kw_start = self.pos
        _, kw = self._expect("if")
        node.structural.append(kw)
        node.children.append(self._parse_condition(node))
        node.code = self._text(kw_start, self.pos)
        node.children.append(self._parse_block())
        if self._at("else"):
            _, els = self._expect("else")
            node.structural.append(els)
            node.children.append(self._parse_block())
        return node

    def _parse_while(self) -> _Node:
        node = _Node(NodeType.WHILE)
        kw_start = self.pos
        _, kw = self._expect("while")
        node.structural.append(kw)
        node.children.append(self._parse_condition(node))
        node.code = self._text(kw_start, self.pos)
        body = self._parse_block()
        if not body.children:
            raise UnsupportedConstruct("empty loop bodies are outside the subset")
        node.children.append(body)
        return node

    def _parse_for(self) -> _Node:
        node = _Node(NodeType.FOR)
        kw_start = self.pos
        _, kw = self._expect("for")
        node.structural.append(kw)
        _, lp = self._expect("(")
        node.structural.append(lp)
        tok = self._peek()
        if tok is not None and tok.text in TYPE_KEYWORDS:
            init = self._parse_decl(expect_semi=False)
        else:
            init = self._parse_assign()
        _, s1 = self._expect(";")
        node.structural.append(s1)
        start = self.pos
        cond = _Node(NodeType.CONDITION)
        cond.children.append(self._parse_expr())
        cond.code = self._text(start, self.pos)
        _, s2 = self._expect(";")
        node.structural.append(s2)
        update = self._parse_assign()
        _, rp = self._expect(")")
        node.structural.append(rp)
        node.code = self._text(kw_start, self.pos)
        node.children.extend([init, cond, update])
        body = self._parse_block()
        if not body.children:
            raise UnsupportedConstruct("empty loop bodies are outside the subset")
        node.children.append(body)
        return node

    def _parse_return(self) -> _Node:
        start = self.pos
        node = _Node(NodeType.RETURN)
        _, kw = self._expect("return")
        node.structural.append(kw)
        if not self._at(";"):
            node.children.append(self._parse_expr())
        _, semi = self._expect(";")
        node.structural.append(semi)
        node.code = self._text(start, self.pos - 1)
        return node

    # expressions, lowest to highest precedence

    def _parse_expr(self) -> _Node:
        return self._binary_chain(_LOGIC_OR, lambda: self._binary_chain(_LOGIC_AND, self._parse_comparison))

    def _parse_comparison(self) -> _Node:
        return self._binary_chain(_CMP_OPS, self._parse_additive)

    def _parse_additive(self) -> _Node:
        return self._binary_chain(_ADD_OPS, self._parse_term)

    def _parse_term(self) -> _Node:
        return self._binary_chain(_MUL_OPS, self._parse_unary)

    def _binary_chain(self, ops: tuple[str, ...], sub) -> _Node:
        start = self.pos
        node = sub()
        while self._at_kind("operator") and self._peek().text in ops:
            parent = _Node(NodeType.BINARY_EXPR)
            parent.children.append(node)
            parent.children.append(self._op_leaf())
            parent.children.append(sub())
            parent.code = self._text(start, self.pos)
            node = parent
        return node

    def _parse_unary(self) -> _Node:
        if self._at_kind("operator") and self._peek().text in ("-", "!"):
            start = self.pos
            node = _Node(NodeType.UNARY_EXPR)
            node.children.append(self._op_leaf())
            node.children.append(self._parse_unary())
            node.code = self._text(start, self.pos)
            return node
        return self._parse_primary()

    def _parse_primary(self) -> _Node:
        tok = self._peek()
        if tok is None:
            raise ParseError("EOF", "an expression")
        if tok.kind == "int-literal":
            idx = self.pos
            self._advance()
            return self._leaf(NodeType.LITERAL, tok, idx)
        if tok.kind == "identifier":
            nxt = self._peek(1)
            if nxt is not None and nxt.text == "(":
                return self._parse_call()
            return self._ident_leaf()
        if tok.text == "(":
            _, lp = self._expect("(")
            inner = self._parse_expr()
            _, rp = self._expect(")")
            inner.structural.extend([lp, rp])
            return inner
        raise ParseError(repr(tok.text), "an expression", tok.start)

    # -- post checks ---------------------------------------------------

    def _check_scope(self, fn: _Node) -> None:
        """One flat scope per function; redeclaration is out of subset."""
        declared: set[str] = set()

        def declared_name(node: _Node) -> str:
            child = node.children[0]
            if child.node_type == NodeType.ASSIGN:
                child = child.children[0]
            return child.code

        def walk(node: _Node) -> None:
            if node.node_type in (NodeType.PARAM, NodeType.DECL):
                name = declared_name(node)
                if name in declared:
                    raise UnsupportedConstruct(
                        f"redeclaration of {name!r} (shadowing is outside the subset)"
                    )
                declared.add(name)
            for child in node.children:
                walk(child)

        walk(fn)


def _flatten(root: _Node, tokens: list[Token]) -> FunctionAst:
    nodes: list[AstNode] = []
    structural: dict[int, int] = {}

    def visit(node: _Node, parent: int | None) -> int:
        node_id = len(nodes)
        nodes.append(None)  # reserve pre-order slot
        child_ids = []
        for tok_idx in node.structural:
            structural[tok_idx] = node_id
        for child in node.children:
            child_ids.append(visit(child, node_id))
        nodes[node_id] = AstNode(
            id=node_id,
            node_type=node.node_type,
            code=node.code,
            children=tuple(child_ids),
            parent=parent,
            token_index=node.token_index,
        )
        return node_id

    visit(root, None)
    return FunctionAst(nodes=tuple(nodes), tokens=tuple(tokens), structural_owner=structural)


def parse_function(tokens: list[Token]) -> FunctionAst:
    """Parse exactly one function definition into a pre-order indexed AST."""
    parser = _Parser(tokens)
    root = parser.parse_function()
    ast = _flatten(root, tokens)
    owned = {n.token_index for n in ast.nodes if n.token_index is not None}
    assert owned.isdisjoint(ast.structural_owner.keys())
    assert len(owned) + len(ast.structural_owner) == len(tokens)
    return ast
