"""Lightweight lexing and declaration detection for indexed source files.

Two language profiles ship by default: ``python`` (indentation-based
declarations) and ``cstyle`` (brace-based declarations, covering C-like
syntax: C, Java, JavaScript/TypeScript, Swift, ...). The lexer is
deliberately shallow: tokens, comments, strings, and top-level declaration
boundaries. No type checking, no full AST.
"""

from __future__ import annotations

import keyword
from dataclasses import dataclass

# Lexical token classes. These are also the "kind" component of embedding
# features, so the same token text yields the same feature anywhere it occurs.
IDENT = "ident"
KEYWORD = "keyword"
NUMBER = "number"
STRING = "string"
COMMENT = "comment"
PUNCT = "punct"

# Token classes that become indexed symbols (punctuation is structure only).
SYMBOL_CLASSES = frozenset({IDENT, KEYWORD, NUMBER, STRING, COMMENT})


@dataclass(frozen=True)
class Token:
    text: str
    cls: str
    line: int       # 0-based
    col: int        # 0-based
    end_line: int
    end_col: int    # exclusive


@dataclass(frozen=True)
class Declaration:
    """One top-level declaration found in a token stream.

    ``start``/``end`` are token indices (end exclusive) of the segment the
    declaration owns, including attached decorators and trailing comments.
    """

    kind: str            # "function" | "type" | "preamble" | "file"
    name: str | None
    start: int
    end: int


class LanguageProfile:
    name = "generic"
    keywords: frozenset[str] = frozenset()
    line_comment = "#"
    block_comment: tuple[str, str] | None = None
    triple_strings = False
    function_keywords: frozenset[str] = frozenset()
    type_keywords: frozenset[str] = frozenset()
    import_keywords: frozenset[str] = frozenset()
    control_keywords: frozenset[str] = frozenset()

    def tokenize(self, text: str) -> list[Token]:
        return _scan(text, self)

    def declarations(self, tokens: list[Token]) -> list[Declaration]:
        raise NotImplementedError


class PythonProfile(LanguageProfile):
    name = "python"
    keywords = frozenset(keyword.kwlist)
    line_comment = "#"
    block_comment = None
    triple_strings = True
    function_keywords = frozenset({"def"})
    type_keywords = frozenset({"class"})
    import_keywords = frozenset({"import", "from"})

    def declarations(self, tokens: list[Token]) -> list[Declaration]:
        if not tokens:
            return []
        first_on_line: dict[int, int] = {}
        for idx, tok in enumerate(tokens):
            first_on_line.setdefault(tok.line, idx)

        starts: list[tuple[int, str, str | None]] = []
        for i, tok in enumerate(tokens):
            if tok.col != 0 or tok.cls != KEYWORD:
                continue
            if tok.text in ("def", "class"):
                kind = "type" if tok.text == "class" else "function"
                name_at = i + 1
            elif tok.text == "async" and i + 1 < len(tokens) and tokens[i + 1].text == "def":
                kind = "function"
                name_at = i + 2
            else:
                continue
            name = _next_ident(tokens, name_at)
            starts.append((_with_decorators(tokens, first_on_line, i), kind, name))
        return _segments_from_starts(tokens, starts)


class CStyleProfile(LanguageProfile):
    name = "cstyle"
    keywords = frozenset(
        """
        abstract bool boolean break case catch char class const constexpr
        continue default delete do double else enum export extends extern
        false final finally float fn for func function goto if implements
        import in include inline instanceof int interface let long namespace
        new null nullptr of operator override package private protected public
        return short signed sizeof static struct super switch template this
        throw throws trait true try typedef typename typeof union unsigned
        using var virtual void volatile while yield
        """.split()
    )
    line_comment = "//"
    block_comment = ("/*", "*/")
    triple_strings = False
    function_keywords = frozenset({"function", "func", "fn"})
    type_keywords = frozenset({"class", "struct", "interface", "enum", "trait", "union"})
    import_keywords = frozenset({"import", "using", "include", "package"})
    control_keywords = frozenset(
        {"if", "else", "for", "while", "switch", "do", "try", "catch", "finally", "return"}
    )

    def declarations(self, tokens: list[Token]) -> list[Declaration]:
        if not tokens:
            return []
        starts: list[tuple[int, str, str | None]] = []
        depth = 0
        stmt_start = 0
        for i, tok in enumerate(tokens):
            if tok.cls != PUNCT:
                continue
            if tok.text == "{":
                if depth == 0:
                    decl = self._classify_statement(tokens, stmt_start, i)
                    if decl is not None:
                        starts.append((stmt_start, decl[0], decl[1]))
                depth += 1
            elif tok.text == "}":
                depth = max(0, depth - 1)
                if depth == 0:
                    stmt_start = i + 1
            elif tok.text == ";" and depth == 0:
                stmt_start = i + 1
        return _segments_from_starts(tokens, starts)

    def _classify_statement(
        self, tokens: list[Token], start: int, brace: int
    ) -> tuple[str, str | None] | None:
        """Decide whether the statement in tokens[start:brace] opens a declaration."""
        window = [t for t in tokens[start:brace] if t.cls in (IDENT, KEYWORD, PUNCT)]
        for j, tok in enumerate(window):
            if tok.cls != KEYWORD:
                continue
            if tok.text in self.type_keywords:
                return "type", _next_ident(window, j + 1)
            if tok.text in self.function_keywords:
                return "function", _next_ident(window, j + 1)
        # `name ( ... ) {` with no control keyword in front -> function.
        last_ident: str | None = None
        for tok in window:
            if tok.cls == KEYWORD:
                if tok.text in self.control_keywords:
                    return None
                continue  # modifiers and builtin type names
            if tok.cls == IDENT:
                last_ident = tok.text
            elif tok.text == "(" and last_ident is not None:
                return "function", last_ident
        return None


PROFILES: dict[str, LanguageProfile] = {
    "python": PythonProfile(),
    "cstyle": CStyleProfile(),
}

DEFAULT_EXTENSION_PROFILES = {
    ".py": "python",
    ".c": "cstyle",
    ".h": "cstyle",
    ".java": "cstyle",
    ".js": "cstyle",
    ".ts": "cstyle",
    ".swift": "cstyle",
}


def _next_ident(tokens: list[Token], start: int) -> str | None:
    for tok in tokens[start:]:
        if tok.cls == IDENT:
            return tok.text
        if tok.cls in (COMMENT, KEYWORD):
            continue
        return None
    return None


def _with_decorators(
    tokens: list[Token], first_on_line: dict[int, int], decl_idx: int
) -> int:
    """Extend a declaration start upward over contiguous `@...` lines."""
    start = decl_idx
    line = tokens[decl_idx].line
    while line - 1 in first_on_line:
        fi = first_on_line[line - 1]
        ft = tokens[fi]
        if ft.cls == PUNCT and ft.text == "@" and ft.col == 0:
            start = fi
            line -= 1
        else:
            break
    return start


def _segments_from_starts(
    tokens: list[Token], starts: list[tuple[int, str, str | None]]
) -> list[Declaration]:
    """Partition the token stream at declaration start indices.

    Everything before the first declaration is a preamble unit; trailing
    non-declaration tokens (comments included) attach to the declaration
    they follow. A file with no declarations is one whole-file unit.
    """
    if not starts:
        return [Declaration("file", None, 0, len(tokens))]
    starts = sorted(set(starts), key=lambda s: s[0])
    decls: list[Declaration] = []
    if starts[0][0] > 0:
        decls.append(Declaration("preamble", None, 0, starts[0][0]))
    for n, (idx, kind, name) in enumerate(starts):
        end = starts[n + 1][0] if n + 1 < len(starts) else len(tokens)
        decls.append(Declaration(kind, name, idx, end))
    return decls


def _scan(text: str, profile: LanguageProfile) -> list[Token]:
    tokens: list[Token] = []
    line = 0
    col = 0
    i = 0
    n = len(text)

    def advance(span: str) -> tuple[int, int]:
        nonlocal line, col
        newlines = span.count("\n")
        if newlines:
            line += newlines
            col = len(span) - span.rfind("\n") - 1
        else:
            col += len(span)
        return line, col

    while i < n:
        ch = text[i]
        start_line, start_col = line, col

        if ch in " \t\r\n":
            j = i
            while j < n and text[j] in " \t\r\n":
                j += 1
            advance(text[i:j])
            i = j
            continue

        # comments
        if text.startswith(profile.line_comment, i):
            j = text.find("\n", i)
            j = n if j < 0 else j
            span = text[i:j]
            el, ec = advance(span)
            tokens.append(Token(span, COMMENT, start_line, start_col, el, ec))
            i = j
            continue
        if profile.block_comment and text.startswith(profile.block_comment[0], i):
            close = profile.block_comment[1]
            j = text.find(close, i + len(profile.block_comment[0]))
            j = n if j < 0 else j + len(close)
            span = text[i:j]
            el, ec = advance(span)
            tokens.append(Token(span, COMMENT, start_line, start_col, el, ec))
            i = j
            continue

        # strings; unterminated ones run to end of line (or file)
        if ch in "\"'`":
            if profile.triple_strings and text.startswith(ch * 3, i):
                quote = ch * 3
                j = text.find(quote, i + 3)
                j = n if j < 0 else j + 3
            else:
                j = i + 1
                while j < n:
                    if text[j] == "\\":
                        j += 2
                    elif text[j] == ch:
                        j += 1
                        break
                    elif text[j] == "\n" and ch != "`":
                        break
                    else:
                        j += 1
                j = min(j, n)
            span = text[i:j]
            el, ec = advance(span)
            tokens.append(Token(span, STRING, start_line, start_col, el, ec))
            i = j
            continue

        # identifiers / keywords
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            span = text[i:j]
            cls = KEYWORD if span in profile.keywords else IDENT
            el, ec = advance(span)
            tokens.append(Token(span, cls, start_line, start_col, el, ec))
            i = j
            continue

        # numbers
        if ch.isdigit():
            j = i
            while j < n and (text[j].isalnum() or text[j] in "._"):
                j += 1
            span = text[i:j]
            el, ec = advance(span)
            tokens.append(Token(span, NUMBER, start_line, start_col, el, ec))
            i = j
            continue

        # single-character punctuation / operators
        el, ec = advance(ch)
        tokens.append(Token(ch, PUNCT, start_line, start_col, el, ec))
        i += 1

    return tokens
