"""Syntax of experiment specs.

::

    spec   := block*
    block  := IDENT "{" (entry ";")* "}"
    entry  := IDENT "=" value
    value  := NUMBER | STRING | "true" | "false" | IDENT | IDENT "(" [value ("," value)*] ")"

``#`` starts a comment running to the end of the line.
"""

import dataclasses

from catharm.specdsl.lexer import EOF, IDENT, NUMBER, PUNCT, STRING, ParseError, tokenize

MAX_DEPTH = 8


@dataclasses.dataclass(frozen=True)
class Ident:
    name: str

    def __str__(self):
        return self.name


@dataclasses.dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()
    line: int = 0
    column: int = 0


@dataclasses.dataclass(frozen=True)
class Entry:
    key: str
    value: object
    line: int
    column: int


@dataclasses.dataclass(frozen=True)
class Block:
    name: str
    entries: tuple
    line: int
    column: int


class _Abort(Exception):
    pass


class _Parser:
    def __init__(self, tokens, errors):
        self.tokens = tokens
        self.errors = errors
        self.position = 0

    @property
    def token(self):
        return self.tokens[self.position]

    def advance(self):
        token = self.token
        if token.kind != EOF:
            self.position += 1
        return token

    def fail(self, message, token=None):
        token = token or self.token
        self.errors.append(ParseError(token.line, token.column, message, token.text))
        raise _Abort

    def is_punct(self, char):
        return self.token.kind == PUNCT and self.token.text == char

    def expect(self, char):
        if not self.is_punct(char):
            self.fail(f"expected {char!r}")
        return self.advance()

    def skip_to(self, *chars):
        while self.token.kind != EOF:
            if self.token.kind == PUNCT and self.token.text in chars:
                break
            self.advance()

    def value(self, depth=0):
        token = self.token
        if token.kind in (NUMBER, STRING):
            return self.advance().value
        if token.kind != IDENT:
            self.fail("expected a value")
        self.advance()
        if token.text in ("true", "false"):
            return token.text == "true"
        if not self.is_punct("("):
            return Ident(token.text)
        if depth >= MAX_DEPTH:
            self.fail("values nested too deeply", token)
        self.advance()
        args = []
        if not self.is_punct(")"):
            args.append(self.value(depth + 1))
            while self.is_punct(","):
                self.advance()
                args.append(self.value(depth + 1))
        self.expect(")")
        return Call(token.text, tuple(args), token.line, token.column)

    def entry(self):
        key = self.token
        if key.kind != IDENT:
            self.fail("expected a key")
        self.advance()
        self.expect("=")
        value = self.value()
        self.expect(";")
        return Entry(key.text, value, key.line, key.column)

    def block(self):
        name = self.token
        if name.kind != IDENT:
            self.fail("expected a block name")
        self.advance()
        self.expect("{")
        entries = []
        while not self.is_punct("}"):
            if self.token.kind == EOF:
                self.fail(f"unterminated block {name.text!r}", name)
            try:
                entries.append(self.entry())
            except _Abort:
                self.skip_to(";", "}")
                if self.is_punct(";"):
                    self.advance()
        self.advance()
        return Block(name.text, tuple(entries), name.line, name.column)

    def spec(self):
        blocks = []
        while self.token.kind != EOF:
            start = self.position
            try:
                blocks.append(self.block())
            except _Abort:
                self.skip_to("}")
                self.advance()
                if self.position == start:
                    self.advance()
        return blocks


def parse_blocks(text):
    """Blocks of a spec text, with every syntax error found.

    :param text: Spec source.
    :type text: :class:`str`
    :return: The blocks parsed and the errors.
    :rtype: :class:`tuple`
    """
    tokens, errors = tokenize(text)
    blocks = _Parser(tokens, errors).spec()
    return blocks, errors
