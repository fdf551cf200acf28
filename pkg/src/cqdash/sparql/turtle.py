"""Minimal Turtle reader for the bundled fixture graphs.

Supports @prefix/PREFIX, `a`, prefixed names, absolute IRIs, typed and
language-tagged literals, numbers, booleans, and predicate/object lists
with ';' and ','. That covers hand-authored fixtures; it is not a general
Turtle parser.
"""

from __future__ import annotations

from ..errors import ParseError
from .parser import Token, tokenize
from .terms import BNode, Iri, Literal, Term, RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER

Triple = tuple[Term, Term, Term]


class _TurtleParser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of Turtle document", offset=len(self.text))
        self.i += 1
        return tok

    def at_op(self, op: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "OP" and tok.text == op

    def expect_op(self, op: str):
        tok = self.next()
        if tok.kind != "OP" or tok.text != op:
            raise ParseError(f"expected {op!r}, found {tok.text!r}", offset=tok.pos)

    def parse(self) -> list[Triple]:
        triples: list[Triple] = []
        while self.peek() is not None:
            tok = self.peek()
            if (tok.kind == "LANGTAG" and tok.text.lower() == "@prefix") or (
                tok.kind == "NAME" and tok.text.upper() == "PREFIX"
            ):
                self.next()
                self.parse_prefix(directive_dot=tok.kind == "LANGTAG")
            else:
                triples.extend(self.parse_statement())
        return triples

    def parse_prefix(self, directive_dot: bool):
        name_tok = self.next()
        if name_tok.kind == "COLONNAME":
            prefix = name_tok.text[:-1]
        elif name_tok.kind == "NAME":
            prefix = name_tok.text
            self.expect_op(":")
        elif name_tok.kind == "OP" and name_tok.text == ":":
            prefix = ""
        else:
            raise ParseError("expected prefix name", offset=name_tok.pos)
        iri_tok = self.next()
        if iri_tok.kind != "IRI":
            raise ParseError("expected namespace IRI", offset=iri_tok.pos)
        self.prefixes[prefix] = iri_tok.text[1:-1]
        if directive_dot:
            self.expect_op(".")

    def term(self, tok: Token) -> Term:
        if tok.kind == "IRI":
            return Iri(tok.text[1:-1])
        if tok.kind == "PNAME":
            prefix, _, local = tok.text.partition(":")
            if prefix == "_":
                return BNode(local)
            ns = self.prefixes.get(prefix)
            if ns is None:
                raise ParseError(f"undeclared prefix {prefix!r}", offset=tok.pos)
            return Iri(ns + local)
        if tok.kind == "STRING":
            body = tok.text[1:-1]
            body = body.replace('\\"', '"').replace("\\n", "\n").replace("\\t", "\t").replace("\\\\", "\\")
            nxt = self.peek()
            if nxt is not None and nxt.kind == "LANGTAG":
                self.next()
                return Literal(body, language=nxt.text[1:])
            if nxt is not None and nxt.kind == "OP" and nxt.text == "^^":
                self.next()
                dt = self.term(self.next())
                if not isinstance(dt, Iri):
                    raise ParseError("datatype must be an IRI", offset=tok.pos)
                return Literal(body, datatype=dt.value)
            return Literal(body)
        if tok.kind == "NUMBER":
            text = tok.text
            if text.lstrip("+-").isdigit():
                return Literal(str(int(text)), datatype=XSD_INTEGER)
            if "e" in text.lower():
                return Literal(text, datatype=XSD_DOUBLE)
            return Literal(text, datatype=XSD_DECIMAL)
        if tok.kind == "NAME" and tok.text in ("true", "false"):
            return Literal(tok.text, datatype=XSD_BOOLEAN)
        raise ParseError(f"unexpected token {tok.text!r}", offset=tok.pos)

    def parse_statement(self) -> list[Triple]:
        triples: list[Triple] = []
        subject = self.term(self.next())
        while True:
            pred_tok = self.next()
            if pred_tok.kind == "NAME" and pred_tok.text == "a":
                predicate: Term = Iri(RDF_TYPE)
            else:
                predicate = self.term(pred_tok)
            while True:
                obj = self.term(self.next())
                triples.append((subject, predicate, obj))
                if self.at_op(","):
                    self.next()
                    continue
                break
            if self.at_op(";"):
                self.next()
                if self.at_op("."):
                    break
                continue
            break
        self.expect_op(".")
        return triples


def parse_turtle(text: str) -> list[Triple]:
    return _TurtleParser(text).parse()
