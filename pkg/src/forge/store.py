"""Deterministic on-disk store for theory exports.

Layout (normative):

    <out>/sessions/<session>/theories/<theory>.markup.json
    <out>/sessions/<session>/theories/<theory>.omdoc.xml
    <out>/rdf/corpus.nt

Per-theory files are written atomically (temp file + rename). The triple
file is one block of N-Triples lines per committed theory; fresh commits
append, re-commits after an edit replace the theory's block and rewrite
the file so the result is byte-identical to a from-scratch build.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from .errors import StoreError
from .export import ExportPayload, markup_json, nt_line


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise StoreError(f"cannot write export ({exc.strerror})", str(path)) from exc


class Store:
    """One writer per output directory; safe for concurrent commits of
    different theories (the triple file is guarded by a single lock)."""

    def __init__(self, out_dir: str | Path, truncate: bool = True):
        self.root = Path(out_dir)
        self._lock = threading.Lock()
        self._blocks: dict[str, list[str]] = {}
        self._order: list[str] = []
        self._file_list: list[str] = []
        try:
            (self.root / "sessions").mkdir(parents=True, exist_ok=True)
            (self.root / "rdf").mkdir(parents=True, exist_ok=True)
            if truncate or not self.corpus_nt_path.exists():
                self.corpus_nt_path.write_bytes(b"")
        except OSError as exc:
            raise StoreError(f"cannot prepare store ({exc.strerror})", str(self.root)) from exc

    @property
    def corpus_nt_path(self) -> Path:
        return self.root / "rdf" / "corpus.nt"

    def theory_dir(self, session: str) -> Path:
        return self.root / "sessions" / session / "theories"

    def set_order(self, order: list[str]) -> None:
        """Canonical block order for corpus.nt; commits released in this
        order append cheaply, anything else rewrites."""
        with self._lock:
            self._order = list(order)

    def write(self, session: str, theory: str, payload: ExportPayload) -> None:
        directory = self.theory_dir(session)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"cannot create session directory ({exc.strerror})",
                             str(directory)) from exc
        _atomic_write(directory / f"{theory}.markup.json",
                      markup_json(theory, payload.markup))
        _atomic_write(directory / f"{theory}.omdoc.xml", payload.omdoc)
        lines = [nt_line(t) for t in payload.triples]
        with self._lock:
            self._blocks[theory] = lines
            if theory not in self._order:
                self._order.append(theory)
            desired = [t for t in self._order if t in self._blocks]
            if desired == self._file_list + [theory]:
                self._append_block(lines)
                self._file_list.append(theory)
            else:
                self._rewrite(desired)

    def _append_block(self, lines: list[str]) -> None:
        data = "".join(line + "\n" for line in lines).encode()
        try:
            with open(self.corpus_nt_path, "ab") as fh:
                fh.write(data)
                fh.flush()
        except OSError as exc:
            raise StoreError(f"cannot append triples ({exc.strerror})",
                             str(self.corpus_nt_path)) from exc

    def _rewrite(self, file_list: list[str]) -> None:
        data = "".join(
            line + "\n" for theory in file_list for line in self._blocks[theory]
        ).encode()
        _atomic_write(self.corpus_nt_path, data)
        self._file_list = list(file_list)

    def read_corpus_nt(self) -> bytes:
        try:
            return self.corpus_nt_path.read_bytes()
        except OSError as exc:
            raise StoreError(f"cannot read triples ({exc.strerror})",
                             str(self.corpus_nt_path)) from exc


def write_store(out_dir: str | Path, session: str, theory: str,
                payload: ExportPayload) -> None:
    """One-shot write: the two per-theory files plus an append of this
    theory's triples to corpus.nt."""
    Store(out_dir, truncate=False).write(session, theory, payload)
