"""Content-addressed artifact store with manifests and advisory locks.

Every pipeline stage writes into ``<root>/<kind>/<digest prefix>/`` and
finalizes by writing a manifest recording its configuration, parent
digests, and the sha256 of every emitted file.  A directory without a
manifest is an incomplete run and is ignored (or resumed).  Concurrent
identical runs serialize on a per-digest file lock.
"""

from __future__ import annotations

import datetime
import fcntl
import json
import os
from contextlib import contextmanager
from pathlib import Path

from .. import __version__
from ..dataset_io import file_digest

MANIFEST_NAME = "manifest.json"
DIGEST_PREFIX = 16

KINDS = ("datasets", "codecs", "runs", "evals", "scale", "reports")


class ArtifactError(RuntimeError):
    """Missing, mismatched, or tampered artifact."""


def default_root() -> Path:
    env = os.environ.get("OTIB_ARTIFACT_ROOT")
    return Path(env) if env else Path.cwd() / "artifacts"


class ArtifactStore:
    def __init__(self, root: Path | str | None = None) -> None:
        self.root = Path(root) if root is not None else default_root()

    def dir_for(self, kind: str, digest: str) -> Path:
        if kind not in KINDS:
            raise ValueError(f"unknown artifact kind {kind!r}")
        return self.root / kind / digest[:DIGEST_PREFIX]

    def manifest_path(self, kind: str, digest: str) -> Path:
        return self.dir_for(kind, digest) / MANIFEST_NAME

    def is_complete(self, kind: str, digest: str) -> bool:
        return self.manifest_path(kind, digest).exists()

    def read_manifest(self, kind: str, digest: str) -> dict:
        path = self.manifest_path(kind, digest)
        if not path.exists():
            raise ArtifactError(f"no {kind} artifact for digest {digest[:DIGEST_PREFIX]}")
        manifest = json.loads(path.read_text())
        if manifest.get("digest") != digest:
            raise ArtifactError(
                f"digest mismatch in {path}: manifest says {manifest.get('digest', '')[:12]}, "
                f"requested {digest[:12]}"
            )
        return manifest

    def finalize(
        self,
        kind: str,
        digest: str,
        config: dict,
        parents: dict,
        files: list[str | Path],
        extra: dict | None = None,
    ) -> dict:
        """Record the manifest for a completed artifact directory."""
        directory = self.dir_for(kind, digest)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "kind": kind,
            "digest": digest,
            "config": config,
            "parents": parents,
            "files": {
                Path(f).name: file_digest(directory / Path(f).name) for f in files
            },
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "code_version": __version__,
        }
        if extra:
            manifest.update(extra)
        path = directory / MANIFEST_NAME
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return manifest

    def verify(self, kind: str, digest: str) -> None:
        """Check every recorded file hash; raises on tampering."""
        manifest = self.read_manifest(kind, digest)
        directory = self.dir_for(kind, digest)
        for name, recorded in manifest["files"].items():
            path = directory / name
            if not path.exists():
                raise ArtifactError(f"{kind}/{digest[:12]}: missing file {name}")
            actual = file_digest(path)
            if actual != recorded:
                raise ArtifactError(
                    f"{kind}/{digest[:12]}: file {name} was modified "
                    f"(recorded {recorded[:12]}, found {actual[:12]})"
                )

    def verify_chain(self, kind: str, digest: str) -> list[str]:
        """Verify an artifact and every ancestor; returns the visited chain."""
        visited: list[str] = []
        stack = [(kind, digest)]
        while stack:
            k, d = stack.pop()
            self.verify(k, d)
            visited.append(f"{k}:{d[:DIGEST_PREFIX]}")
            manifest = self.read_manifest(k, d)
            for parent_kind, parent_digest in manifest.get("parents", {}).items():
                stack.append((parent_kind, parent_digest))
        return visited

    @contextmanager
    def lock(self, digest: str):
        lock_dir = self.root / ".locks"
        lock_dir.mkdir(parents=True, exist_ok=True)
        lock_path = lock_dir / f"{digest[:DIGEST_PREFIX]}.lock"
        with open(lock_path, "w") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
