"""Run manifests and atomic report output."""

from __future__ import annotations

import json
import os
import platform
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def host_descriptor() -> str:
    return (
        f"{platform.node()} {platform.system()} {platform.release()} {platform.machine()} "
        f"cpus={os.cpu_count()} python={platform.python_version()}"
    )


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class RunManifest:
    """Describes one CLI invocation; every JSON report embeds one."""

    def __init__(self, subcommand: str, config: dict):
        self.subcommand = subcommand
        self.config = config
        self.started = now_iso()
        self.finished: str | None = None

    def finish(self) -> RunManifest:
        self.finished = now_iso()
        return self

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "tool": "flopforge",
            "version": __version__,
            "started": self.started,
            "finished": self.finished or now_iso(),
            "host": host_descriptor(),
        }


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file + rename; ``-`` means stdout."""
    if str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_json(path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, allow_nan=False) + "\n")
