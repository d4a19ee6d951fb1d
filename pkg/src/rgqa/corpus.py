"""Multi-source snippet store.

Layout of a store directory::

    manifest.json        declared source labels
    snippets.jsonl       append-only, one stored snippet per line
    rejects/<source>.jsonl

The id -> byte offset map is rebuilt by scanning ``snippets.jsonl`` on open.
A trailing partial line (an interrupted append) is ignored and truncated on the
next write.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .text import normalize_ws, tokenize


class CorpusError(Exception):
    pass


class DuplicateDocIdError(CorpusError):
    def __init__(self, doc_id: str, first: str, second: str):
        super().__init__(f"duplicate doc_id {doc_id!r}: {first} and {second}")
        self.doc_id = doc_id
        self.first = first
        self.second = second


class SnippetNotFound(CorpusError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "snippet not found"


@dataclass(frozen=True)
class Snippet:
    doc_id: str
    source: str
    title: str
    text: str

    def passage(self) -> str:
        """Text handed to rerankers and prompts: ``"title. text"`` when a title exists."""
        return f"{self.title}. {self.text}" if self.title else self.text


@dataclass
class CorpusStats:
    counts: dict[str, int]
    total_tokens: int
    vocab_size: int
    rejects: list[dict] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return asdict(self)


def parse_corpus_line(raw: str, source: str, line_no: int) -> Snippet:
    """Validate one corpus-file line. Raises ``ValueError`` with a short reason."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid json: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ValueError("record is not a json object")
    text = obj.get("text")
    if not isinstance(text, str):
        raise ValueError("missing or non-string 'text'")
    text = normalize_ws(text)
    if not text:
        raise ValueError("empty 'text'")
    title = obj.get("title") or ""
    if not isinstance(title, str):
        raise ValueError("non-string 'title'")
    doc_id = obj.get("id")
    if doc_id is None:
        doc_id = f"{source}:{line_no}"
    elif isinstance(doc_id, (str, int)) and not isinstance(doc_id, bool):
        doc_id = str(doc_id).strip()
        if not doc_id:
            raise ValueError("empty 'id'")
    else:
        raise ValueError("'id' must be a string")
    return Snippet(doc_id=doc_id, source=source, title=normalize_ws(title), text=text)


class CorpusStore:
    """Append-only snippet store over a directory.

    ``sources`` declares the allowed source labels. When omitted, labels are
    declared implicitly on first ingestion and remembered in the manifest.
    Ingestion is single-writer; once ingestion is done the store may be shared
    by concurrent readers (each ``get_snippet`` opens its own file handle).
    """

    def __init__(self, root: str | os.PathLike, sources: Iterable[str] | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._data = self.root / "snippets.jsonl"
        self._manifest = self.root / "manifest.json"
        manifest = json.loads(self._manifest.read_text()) if self._manifest.exists() else {}
        stored = list(manifest.get("sources", []))
        self._strict = sources is not None or bool(manifest.get("strict"))
        self.sources: list[str] = list(dict.fromkeys(stored + list(sources or [])))
        self._offsets: dict[str, tuple[int, str]] = {}
        self._valid_end = 0
        self._scan()
        self._write_manifest()

    def _write_manifest(self) -> None:
        payload = {"sources": self.sources, "strict": self._strict}
        tmp = self._manifest.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=2))
        os.replace(tmp, self._manifest)

    def _scan(self) -> None:
        self._offsets.clear()
        self._valid_end = 0
        if not self._data.exists():
            return
        with self._data.open("rb") as fh:
            offset = 0
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError:
                    break
                self._offsets[rec["doc_id"]] = (offset, rec["source"])
                offset += len(raw)
            self._valid_end = offset

    def __len__(self) -> int:
        return len(self._offsets)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._offsets

    def ingest_corpus(self, path: str | os.PathLike, source: str) -> CorpusStats:
        """Validate every line of ``path`` and append the good ones under ``source``.

        Malformed lines go to ``rejects/<source>.jsonl``; a duplicate id aborts
        the whole file before anything is written.
        """
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(path)
        if source not in self.sources:
            if self._strict:
                raise CorpusError(f"source {source!r} not declared (declared: {self.sources})")
            self.sources.append(source)

        accepted: list[Snippet] = []
        rejects: list[dict] = []
        seen: dict[str, int] = {}
        with path.open(encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                if not raw.strip():
                    rejects.append({"line": line_no, "reason": "blank line"})
                    continue
                try:
                    snip = parse_corpus_line(raw, source, line_no)
                except ValueError as exc:
                    rejects.append({"line": line_no, "reason": str(exc)})
                    continue
                if snip.doc_id in seen:
                    raise DuplicateDocIdError(
                        snip.doc_id, f"{path.name} line {seen[snip.doc_id]}", f"{path.name} line {line_no}"
                    )
                if snip.doc_id in self._offsets:
                    prev_source = self._offsets[snip.doc_id][1]
                    raise DuplicateDocIdError(
                        snip.doc_id, f"stored snippet (source {prev_source!r})", f"{path.name} line {line_no}"
                    )
                seen[snip.doc_id] = line_no
                accepted.append(snip)

        self._append(accepted)
        self._write_manifest()
        rej_dir = self.root / "rejects"
        rej_dir.mkdir(exist_ok=True)
        with (rej_dir / f"{source}.jsonl").open("a", encoding="utf-8") as fh:
            for r in rejects:
                fh.write(json.dumps({"file": str(path), **r}) + "\n")
        stats = self.stats()
        stats.rejects = rejects
        return stats

    def _append(self, snippets: list[Snippet]) -> None:
        if not snippets:
            return
        mode = "r+b" if self._data.exists() else "wb"
        with self._data.open(mode) as fh:
            fh.truncate(self._valid_end)
            fh.seek(self._valid_end)
            offset = self._valid_end
            for s in snippets:
                raw = (json.dumps(asdict(s), ensure_ascii=False) + "\n").encode("utf-8")
                fh.write(raw)
                self._offsets[s.doc_id] = (offset, s.source)
                offset += len(raw)
            fh.flush()
            os.fsync(fh.fileno())
        self._valid_end = offset

    def get_snippet(self, doc_id: str, source: str | None = None) -> Snippet:
        entry = self._offsets.get(doc_id)
        if entry is None or (source is not None and entry[1] != source):
            where = f" in source {source!r}" if source else ""
            raise SnippetNotFound(f"unknown doc_id {doc_id!r}{where}")
        with self._data.open("rb") as fh:
            fh.seek(entry[0])
            return Snippet(**json.loads(fh.readline()))

    def iter_snippets(self, source: str | None = None) -> Iterator[Snippet]:
        if not self._data.exists():
            return
        with self._data.open("rb") as fh:
            fh.seek(0)
            remaining = self._valid_end
            for raw in fh:
                if remaining <= 0:
                    break
                remaining -= len(raw)
                rec = json.loads(raw)
                if source is None or rec["source"] == source:
                    yield Snippet(**rec)

    def by_source(self) -> dict[str, list[Snippet]]:
        groups: dict[str, list[Snippet]] = {s: [] for s in self.sources}
        for snip in self.iter_snippets():
            groups.setdefault(snip.source, []).append(snip)
        return groups

    def stats(self) -> CorpusStats:
        counts = {s: 0 for s in self.sources}
        vocab: Counter[str] = Counter()
        total_tokens = 0
        for snip in self.iter_snippets():
            counts[snip.source] = counts.get(snip.source, 0) + 1
            toks = tokenize(snip.text)
            total_tokens += len(toks)
            vocab.update(set(toks))
        return CorpusStats(counts=counts, total_tokens=total_tokens, vocab_size=len(vocab))
