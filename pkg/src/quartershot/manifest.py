"""Run manifests: a JSON snapshot (command, config, input hashes, seed,
version) written beside every CLI output so runs can be reproduced exactly."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__


def hash_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    seed: int = 0
    version: str = __version__

    def add_input(self, path) -> None:
        self.inputs[str(path)] = hash_file(path)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(Path(path), "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(**data)
