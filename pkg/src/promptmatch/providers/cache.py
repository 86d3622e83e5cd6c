from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path


class ResponseCache:
    """One JSON file per key; writes go through a temp file and ``os.replace``."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str):
        try:
            with open(self._path(key), encoding="utf-8") as fh:
                return json.load(fh)["response"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            # half-written files cannot exist (atomic publish), so this is foreign junk
            return None

    def put(self, key: str, response) -> None:
        path = self._path(key)
        blob = json.dumps({"key": key, "response": response}, sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(blob)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*/*.json"))
