"""Content-addressed response cache on the filesystem.

Each entry lives at ``<root>/<hh>/<hash>.json`` where ``hash`` is the sha256 of
the canonical JSON of the request identity. The file stores the payload plus a
checksum of its canonical encoding; an entry whose checksum does not verify is
reported as a miss and overwritten on the next ``put``.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Any


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


class ResponseCache:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self.corrupt = 0
        self._lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Any | None:
        path = self.path_for(key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            payload = entry["payload"]
            ok = entry["checksum"] == content_hash(payload) and entry["key"] == key
        except FileNotFoundError:
            ok, payload = False, None
        except (ValueError, KeyError, TypeError):
            ok, payload = False, None
            with self._lock:
                self.corrupt += 1
        else:
            if not ok:
                with self._lock:
                    self.corrupt += 1
        with self._lock:
            if ok:
                self.hits += 1
            else:
                self.misses += 1
        return payload if ok else None

    def put(self, key: str, payload: Any) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"key": key, "checksum": content_hash(payload), "payload": payload}
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(canonical_json(entry))
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
