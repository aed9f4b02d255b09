import dataclasses
import re

IDENT, NUMBER, STRING, PUNCT, EOF = "ident", "number", "string", "punct", "eof"
PUNCTUATION = "{}()=;,"
ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}

_TOKEN = re.compile(
    r"""
    (?P<space>[ \t\r]+)
    |(?P<newline>\n)
    |(?P<comment>\#[^\n]*)
    |(?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
    |(?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<string>"(?:[^"\\\n]|\\.)*")
    |(?P<punct>[{}()=;,])
    """,
    re.VERBOSE,
)


@dataclasses.dataclass(frozen=True)
class ParseError:
    """A problem of a spec text, located by 1-based line and column."""

    line: int
    column: int
    message: str
    token: str = ""

    def __str__(self):
        near = f" (near {self.token!r})" if self.token else ""
        return f"{self.line}:{self.column}: {self.message}{near}"


@dataclasses.dataclass(frozen=True)
class Token:
    kind: str
    text: str
    value: object
    line: int
    column: int


def _unescape(text):
    out, chars = [], iter(text[1:-1])
    for char in chars:
        if char == "\\":
            escaped = next(chars)
            out.append(ESCAPES.get(escaped, escaped))
        else:
            out.append(char)
    return "".join(out)


def _number(text):
    if re.fullmatch(r"[+-]?\d+", text):
        return int(text)
    return float(text)


def tokenize(text):
    """Tokens of `text` ending with an ``eof`` token, and the lexical errors met.

    Unknown characters and unterminated strings are reported and skipped.
    """
    tokens, errors = [], []
    line, line_start, position = 1, 0, 0
    while position < len(text):
        match = _TOKEN.match(text, position)
        column = position - line_start + 1
        if match is None:
            if text[position] == '"':
                end = text.find("\n", position)
                end = len(text) if end < 0 else end
                errors.append(ParseError(line, column, "unterminated string", text[position:end]))
                position = end
            else:
                errors.append(ParseError(line, column, "unexpected character", text[position]))
                position += 1
            continue
        kind, chunk = match.lastgroup, match.group()
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind == "number":
            value = _number(chunk)
            tokens.append(Token(NUMBER, chunk, value, line, column))
        elif kind == "ident":
            tokens.append(Token(IDENT, chunk, chunk, line, column))
        elif kind == "string":
            tokens.append(Token(STRING, chunk, _unescape(chunk), line, column))
        elif kind == "punct":
            tokens.append(Token(PUNCT, chunk, chunk, line, column))
        position = match.end()
    tokens.append(Token(EOF, "", None, line, position - line_start + 1))
    return tokens, errors
