"""Dynamic code symbol index over a local repository.

The index captures every code token as a :class:`SymbolRecord` with its
position, neighbor adjacency, and name-resolution dependency edges, groups
top-level declarations into retrievable doc units, and attaches a
feature-hashed embedding to each unit. Snapshots are immutable: edits
produce a new snapshot whose content hash equals a from-scratch rebuild of
the edited tree.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import embedding, lexer
from .embedding import EmbeddingVector, FeatureBag
from .errors import EditRejectedError, ConfigError, IndexingError

KIND_FUNCTION = "function"
KIND_TYPE = "type"
KIND_VARIABLE = "variable"
KIND_IMPORT = "import"
KIND_COMMENT = "comment"
KIND_OTHER = "other"

_KIND_CODES = {
    KIND_FUNCTION: 1, KIND_TYPE: 2, KIND_VARIABLE: 3,
    KIND_IMPORT: 4, KIND_COMMENT: 5, KIND_OTHER: 6,
}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_LEX_CODES = {lexer.IDENT: 1, lexer.KEYWORD: 2, lexer.NUMBER: 3, lexer.STRING: 4, lexer.COMMENT: 5}
_LEX_NAMES = {v: k for k, v in _LEX_CODES.items()}
_UNIT_KIND_CODES = {"function": 1, "type": 2, "preamble": 3, "file": 4}
_UNIT_KIND_NAMES = {v: k for k, v in _UNIT_KIND_CODES.items()}

_MAGIC = b"CAMPIDX1"
_CACHE_VERSION = 1

SKIP_DIRS = frozenset({".git", ".hg", "__pycache__", "node_modules", ".camp", ".venv", "venv"})


@dataclass(frozen=True)
class IndexConfig:
    extensions: tuple[str, ...] = tuple(sorted(lexer.DEFAULT_EXTENSION_PROFILES))
    profiles: tuple[tuple[str, str], ...] = tuple(sorted(lexer.DEFAULT_EXTENSION_PROFILES.items()))
    d_emb: int = embedding.DEFAULT_DIM
    query_profile: str = "python"

    def profile_for(self, path: str) -> lexer.LanguageProfile:
        ext = Path(path).suffix
        name = dict(self.profiles).get(ext, self.query_profile)
        try:
            return lexer.PROFILES[name]
        except KeyError:
            raise ConfigError(f"unknown language profile {name!r} for {path!r}") from None


@dataclass(frozen=True)
class SymbolRecord:
    symbol_id: str
    name: str
    kind: str                      # function|type|variable|import|comment|other
    file: str
    span: tuple[int, int, int, int]  # start_line, start_col, end_line, end_col (0-based)
    neighbors: tuple[str, ...]
    dependencies: tuple[str, ...]
    lex_class: str                 # lexical class used for embedding features


@dataclass(frozen=True)
class DocUnit:
    unit_id: str
    file: str
    kind: str                      # function|type|preamble|file
    name: str | None
    span: tuple[int, int, int, int]
    symbol_ids: tuple[str, ...]
    text: str
    embedding: EmbeddingVector


@dataclass
class IndexSnapshot:
    """Immutable view of one indexed revision. Treat all fields as read-only."""

    config: IndexConfig
    records: dict[str, SymbolRecord]
    doc_units: list[DocUnit]
    file_texts: dict[str, str]
    revision: int
    content_hash: str
    diagnostics: tuple[str, ...] = ()
    repo_root: str | None = None
    _tokens: dict[str, list[lexer.Token]] = field(default_factory=dict, repr=False)

    def unit(self, unit_id: str) -> DocUnit:
        for u in self.doc_units:
            if u.unit_id == unit_id:
                return u
        raise KeyError(unit_id)

    def units_in_file(self, file: str) -> list[DocUnit]:
        return [u for u in self.doc_units if u.file == file]


@dataclass(frozen=True)
class FileEdit:
    """Replace ``text[start:end]`` of a tracked file (character offsets), or
    create a new file (start == end == 0 on an untracked path), or delete a
    tracked file entirely."""

    file: str
    start: int = 0
    end: int = 0
    text: str = ""
    delete_file: bool = False


def build_index(repo_root: str | Path, config: IndexConfig | None = None) -> IndexSnapshot:
    config = config or IndexConfig()
    root = Path(repo_root)
    if not root.is_dir():
        raise IndexingError(f"unreadable repository root: {root}")
    file_texts: dict[str, str] = {}
    diagnostics: list[str] = []
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root)
        if any(part in SKIP_DIRS for part in rel.parts):
            continue
        if path.suffix not in config.extensions:
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except (UnicodeDecodeError, OSError) as exc:
            diagnostics.append(f"skipped {rel.as_posix()}: {exc}")
            continue
        file_texts[rel.as_posix()] = text
    if not file_texts:
        raise IndexingError("no indexable files")
    return _derive(config, file_texts, {}, 1, tuple(diagnostics), str(root))


def build_index_from_texts(
    file_texts: dict[str, str], config: IndexConfig | None = None
) -> IndexSnapshot:
    """Build a snapshot directly from in-memory sources (tests, generators)."""
    config = config or IndexConfig()
    if not file_texts:
        raise IndexingError("no indexable files")
    return _derive(config, dict(file_texts), {}, 1, (), None)


def apply_edit(snapshot: IndexSnapshot, edit: FileEdit) -> IndexSnapshot:
    texts = dict(snapshot.file_texts)
    tracked = edit.file in texts

    if edit.delete_file:
        if not tracked:
            raise EditRejectedError(f"cannot delete untracked file {edit.file!r}")
        del texts[edit.file]
    else:
        if Path(edit.file).suffix not in snapshot.config.extensions:
            raise EditRejectedError(f"{edit.file!r} does not match indexed extensions")
        current = texts.get(edit.file, "")
        if not tracked and (edit.start, edit.end) != (0, 0):
            raise EditRejectedError(f"new file {edit.file!r} requires start == end == 0")
        if not (0 <= edit.start <= edit.end <= len(current)):
            raise EditRejectedError(
                f"edit range [{edit.start}, {edit.end}) out of bounds for {edit.file!r} "
                f"(length {len(current)})"
            )
        texts[edit.file] = current[: edit.start] + edit.text + current[edit.end :]

    cache = {p: toks for p, toks in snapshot._tokens.items() if p != edit.file and p in texts}
    return _derive(
        snapshot.config, texts, cache, snapshot.revision + 1,
        snapshot.diagnostics, snapshot.repo_root,
    )


def embed(snapshot: IndexSnapshot, fragment: str | DocUnit) -> EmbeddingVector:
    """Embed a raw code fragment, or return a doc unit's stored embedding."""
    if isinstance(fragment, DocUnit):
        return fragment.embedding
    profile = lexer.PROFILES[snapshot.config.query_profile]
    return embedding.embed_text(str(fragment), snapshot.config.d_emb, profile)


def unit_containing(snapshot: IndexSnapshot, file: str, line: int, col: int) -> DocUnit | None:
    """The doc unit enclosing a cursor position, or the nearest one above it."""
    best: DocUnit | None = None
    for u in snapshot.units_in_file(file):
        if (u.span[0], u.span[1]) <= (line, col):
            best = u
        elif best is None:
            best = u
            break
    return best


def dangling_edges(snapshot: IndexSnapshot) -> list[str]:
    """Full-scan check: every neighbor/dependency edge targets a live record."""
    problems = []
    for rec in snapshot.records.values():
        for other in (*rec.neighbors, *rec.dependencies):
            if other not in snapshot.records:
                problems.append(f"{rec.symbol_id} -> {other}")
    for u in snapshot.doc_units:
        for sid in u.symbol_ids:
            if sid not in snapshot.records:
                problems.append(f"{u.unit_id} -> {sid}")
    return problems


# ---------------------------------------------------------------------------
# derivation pipeline


def _derive(
    config: IndexConfig,
    file_texts: dict[str, str],
    token_cache: dict[str, list[lexer.Token]],
    revision: int,
    diagnostics: tuple[str, ...],
    repo_root: str | None,
) -> IndexSnapshot:
    records: dict[str, SymbolRecord] = {}
    tokens_by_file: dict[str, list[lexer.Token]] = {}
    sym_ids_by_file: dict[str, list[str]] = {}
    unit_specs: list[tuple[str, lexer.Declaration, list[str]]] = []

    for path in sorted(file_texts):
        profile = config.profile_for(path)
        tokens = token_cache.get(path)
        if tokens is None:
            tokens = profile.tokenize(file_texts[path])
        tokens_by_file[path] = tokens

        import_lines = _import_lines(tokens, profile)
        sym_indices = [i for i, t in enumerate(tokens) if t.cls in lexer.SYMBOL_CLASSES]
        ids = [f"{path}:{ordinal:06d}" for ordinal in range(len(sym_indices))]
        sym_ids_by_file[path] = ids

        for ordinal, tok_idx in enumerate(sym_indices):
            tok = tokens[tok_idx]
            kind = _record_kind(tokens, tok_idx, profile, import_lines)
            neighbors = tuple(
                ids[j] for j in (ordinal - 1, ordinal + 1) if 0 <= j < len(ids)
            )
            records[ids[ordinal]] = SymbolRecord(
                symbol_id=ids[ordinal],
                name=tok.text,
                kind=kind,
                file=path,
                span=(tok.line, tok.col, tok.end_line, tok.end_col),
                neighbors=neighbors,
                dependencies=(),
                lex_class=tok.cls,
            )

        pos_of = {tok_idx: ordinal for ordinal, tok_idx in enumerate(sym_indices)}
        for decl in profile.declarations(tokens):
            unit_ids = [
                ids[pos_of[i]] for i in range(decl.start, decl.end) if i in pos_of
            ]
            if unit_ids:
                unit_specs.append((path, decl, unit_ids))

    _resolve_dependencies(records)

    doc_units: list[DocUnit] = []
    per_file_ordinal: dict[str, int] = {}
    for path, decl, unit_ids in unit_specs:
        ordinal = per_file_ordinal.get(path, 0)
        per_file_ordinal[path] = ordinal + 1
        first = records[unit_ids[0]]
        last = records[unit_ids[-1]]
        span = (first.span[0], first.span[1], last.span[2], last.span[3])
        lines = file_texts[path].split("\n")
        text = "\n".join(lines[span[0] : span[2] + 1])
        doc_units.append(
            DocUnit(
                unit_id=f"{path}#u{ordinal:04d}",
                file=path,
                kind=decl.kind,
                name=decl.name,
                span=span,
                symbol_ids=tuple(unit_ids),
                text=text,
                embedding=_unit_embedding(unit_ids, records, config.d_emb),
            )
        )

    body = _canonical_body(config, file_texts, records, doc_units)
    return IndexSnapshot(
        config=config,
        records=records,
        doc_units=doc_units,
        file_texts=file_texts,
        revision=revision,
        content_hash=hashlib.sha256(body).hexdigest(),
        diagnostics=diagnostics,
        repo_root=repo_root,
        _tokens=tokens_by_file,
    )


def _import_lines(tokens: list[lexer.Token], profile: lexer.LanguageProfile) -> set[int]:
    lines: set[int] = set()
    first_on_line: dict[int, int] = {}
    for i, tok in enumerate(tokens):
        first_on_line.setdefault(tok.line, i)
    for line, i in first_on_line.items():
        tok = tokens[i]
        if tok.cls == lexer.KEYWORD and tok.text in profile.import_keywords:
            lines.add(line)
        elif (
            tok.text == "#"
            and i + 1 < len(tokens)
            and tokens[i + 1].text in profile.import_keywords
        ):
            lines.add(line)
    return lines


def _record_kind(
    tokens: list[lexer.Token],
    idx: int,
    profile: lexer.LanguageProfile,
    import_lines: set[int],
) -> str:
    tok = tokens[idx]
    if tok.cls == lexer.COMMENT:
        return KIND_COMMENT
    if tok.cls in (lexer.STRING, lexer.NUMBER, lexer.KEYWORD):
        return KIND_OTHER
    # identifiers
    if tok.line in import_lines:
        return KIND_IMPORT
    j = idx - 1
    while j >= 0 and tokens[j].cls == lexer.COMMENT:
        j -= 1
    if j >= 0 and tokens[j].cls == lexer.KEYWORD:
        if tokens[j].text in profile.function_keywords:
            return KIND_FUNCTION
        if tokens[j].text in profile.type_keywords:
            return KIND_TYPE
    return KIND_VARIABLE


def _resolve_dependencies(records: dict[str, SymbolRecord]) -> None:
    """Two-pass global name resolution: references point at definitions."""
    definitions: dict[str, list[str]] = {}
    for rec in records.values():
        if rec.kind in (KIND_FUNCTION, KIND_TYPE):
            definitions.setdefault(rec.name, []).append(rec.symbol_id)
    for sid, rec in records.items():
        if rec.kind in (KIND_VARIABLE, KIND_IMPORT) and rec.name in definitions:
            records[sid] = replace(rec, dependencies=tuple(sorted(definitions[rec.name])))


def _unit_embedding(
    unit_ids: list[str], records: dict[str, SymbolRecord], d_emb: int
) -> EmbeddingVector:
    bag = FeatureBag()
    for sid in unit_ids:
        rec = records[sid]
        targets = tuple(records[dep].name for dep in rec.dependencies)
        bag.add_token(rec.name, rec.lex_class, targets)
    return embedding.embed_features(bag.features, d_emb)


# ---------------------------------------------------------------------------
# canonical serialization & cache file


def _pack_str(out: bytearray, s: str) -> None:
    b = s.encode("utf-8")
    out += struct.pack("<I", len(b))
    out += b


def _pack_str_list(out: bytearray, items) -> None:
    out += struct.pack("<I", len(items))
    for s in items:
        _pack_str(out, s)


def _canonical_body(
    config: IndexConfig,
    file_texts: dict[str, str],
    records: dict[str, SymbolRecord],
    doc_units: list[DocUnit],
) -> bytes:
    out = bytearray()
    out += struct.pack("<I", config.d_emb)
    _pack_str(out, config.query_profile)
    pairs = sorted(config.profiles)
    out += struct.pack("<I", len(pairs))
    for ext, prof in pairs:
        _pack_str(out, ext)
        _pack_str(out, prof)
    _pack_str_list(out, sorted(config.extensions))

    out += struct.pack("<I", len(file_texts))
    for path in sorted(file_texts):
        _pack_str(out, path)
        _pack_str(out, file_texts[path])

    out += struct.pack("<I", len(records))
    for sid in records:  # insertion order: sorted files, token order
        rec = records[sid]
        _pack_str(out, rec.symbol_id)
        _pack_str(out, rec.name)
        out += struct.pack("<BB", _KIND_CODES[rec.kind], _LEX_CODES[rec.lex_class])
        _pack_str(out, rec.file)
        out += struct.pack("<IIII", *rec.span)
        _pack_str_list(out, rec.neighbors)
        _pack_str_list(out, rec.dependencies)

    out += struct.pack("<I", len(doc_units))
    for u in doc_units:
        _pack_str(out, u.unit_id)
        _pack_str(out, u.file)
        out += struct.pack("<B", _UNIT_KIND_CODES[u.kind])
        _pack_str(out, u.name or "")
        out += struct.pack("<B", 1 if u.name is not None else 0)
        out += struct.pack("<IIII", *u.span)
        _pack_str_list(out, u.symbol_ids)
        _pack_str(out, u.text)
        out += u.embedding.values.astype("<f8").tobytes()
    return bytes(out)


def serialize_snapshot(snapshot: IndexSnapshot) -> bytes:
    body = _canonical_body(
        snapshot.config, snapshot.file_texts, snapshot.records, snapshot.doc_units
    )
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<I", _CACHE_VERSION)
    out += struct.pack("<Q", snapshot.revision)
    _pack_str(out, snapshot.repo_root or "")
    _pack_str_list(out, snapshot.diagnostics)
    out += hashlib.sha256(body).digest()
    out += body
    return bytes(out)


class _Reader:
    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.off = offset

    def take(self, n: int) -> bytes:
        chunk = self.blob[self.off : self.off + n]
        if len(chunk) != n:
            raise IndexingError("truncated index cache")
        self.off += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def str_list(self) -> tuple[str, ...]:
        return tuple(self.string() for _ in range(self.u32()))


def deserialize_snapshot(blob: bytes) -> IndexSnapshot:
    r = _Reader(blob)
    if r.take(8) != _MAGIC:
        raise IndexingError("not an index cache file")
    version = r.u32()
    if version != _CACHE_VERSION:
        raise IndexingError(f"unsupported index cache version {version}")
    revision = r.u64()
    repo_root = r.string() or None
    diagnostics = r.str_list()
    stored_hash = r.take(32)
    body = blob[r.off :]
    if hashlib.sha256(body).digest() != stored_hash:
        raise IndexingError("index cache is corrupt (hash mismatch)")

    r = _Reader(body)
    d_emb = r.u32()
    query_profile = r.string()
    profiles = tuple((r.string(), r.string()) for _ in range(r.u32()))
    extensions = r.str_list()
    config = IndexConfig(
        extensions=extensions, profiles=profiles, d_emb=d_emb, query_profile=query_profile
    )

    file_texts = {}
    for _ in range(r.u32()):
        path = r.string()
        file_texts[path] = r.string()

    records: dict[str, SymbolRecord] = {}
    for _ in range(r.u32()):
        sid = r.string()
        name = r.string()
        kind = _KIND_NAMES[r.u8()]
        lex_class = _LEX_NAMES[r.u8()]
        file = r.string()
        span = struct.unpack("<IIII", r.take(16))
        neighbors = r.str_list()
        dependencies = r.str_list()
        records[sid] = SymbolRecord(sid, name, kind, file, span, neighbors, dependencies, lex_class)

    doc_units = []
    for _ in range(r.u32()):
        uid = r.string()
        file = r.string()
        kind = _UNIT_KIND_NAMES[r.u8()]
        name_str = r.string()
        has_name = r.u8() == 1
        span = struct.unpack("<IIII", r.take(16))
        symbol_ids = r.str_list()
        text = r.string()
        vec = np.frombuffer(r.take(8 * d_emb), dtype="<f8").astype(np.float64)
        doc_units.append(
            DocUnit(uid, file, kind, name_str if has_name else None, span,
                    symbol_ids, text, EmbeddingVector(vec))
        )

    return IndexSnapshot(
        config=config,
        records=records,
        doc_units=doc_units,
        file_texts=file_texts,
        revision=revision,
        content_hash=hashlib.sha256(body).hexdigest(),
        diagnostics=diagnostics,
        repo_root=repo_root,
    )


def save_cache(snapshot: IndexSnapshot, path: str | Path) -> None:
    """Atomically write the cache file; one writer at a time per cache."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = serialize_snapshot(snapshot)
    with FileLock(str(path) + ".lock"):
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, path)


def load_cache(path: str | Path) -> IndexSnapshot:
    path = Path(path)
    if not path.is_file():
        raise IndexingError(f"index cache not found: {path}")
    return deserialize_snapshot(path.read_bytes())
