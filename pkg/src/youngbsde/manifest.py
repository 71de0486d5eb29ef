"""Run manifests: config echo, version, timestamps, output checksums, and
per-phase wall-clock.  Emitted exactly once per run as run_manifest.json."""

from __future__ import annotations

import json
import time
from datetime import datetime, timezone
from pathlib import Path

from .csvio import sha256_of_file

__all__ = ["PhaseTimer", "write_manifest", "MANIFEST_NAME"]

MANIFEST_NAME = "run_manifest.json"


class PhaseTimer:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.phases: dict[str, float] = {}
        self._start: float | None = None
        self._name: str | None = None

    def start(self, name: str) -> None:
        self.stop()
        self._name = name
        self._start = time.perf_counter()

    def stop(self) -> None:
        if self._name is not None:
            elapsed = time.perf_counter() - self._start
            self.phases[self._name] = self.phases.get(self._name, 0.0) + elapsed
            self._name = None


def write_manifest(out_dir, config_echo: dict, files: list,
                   timer: PhaseTimer, started_at: str) -> Path:
    from . import __version__

    timer.stop()
    manifest = {
        "config": config_echo,
        "library_version": __version__,
        "started_at": started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "wall_clock_seconds": {k: round(v, 6) for k, v in timer.phases.items()},
        "outputs": {Path(f).name: sha256_of_file(f) for f in files},
    }
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()
