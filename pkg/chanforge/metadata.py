"""RunManifest and helper functions for run provenance
"""
import hashlib
import json
import os
from collections import namedtuple
from datetime import datetime, timezone
from typing import Dict, Sequence

from .abspath import AbsPath

ENV_FIXED_UTC_NOW = "CHANFORGE_FIXED_UTC_NOW"

RunManifest = namedtuple(
    "RunManifest",
    ("tool_version", "command_line", "scene_hash", "input_hashes", "timestamp"),
)


def md5_of_text(s: str) -> str:
    return hashlib.md5(s.encode("utf-8")).hexdigest()


def canonical_json(d) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def scene_hash(scene_dict: Dict) -> str:
    """md5 of the canonical (sorted-key, compact) scene JSON."""
    return md5_of_text(canonical_json(scene_dict))


def now_utc_iso() -> str:
    """Current UTC time, or the value pinned in CHANFORGE_FIXED_UTC_NOW."""
    fixed = os.environ.get(ENV_FIXED_UTC_NOW)
    if fixed:
        return fixed
    return datetime.now(timezone.utc).isoformat()


def make_manifest(
    tool_version: str,
    command_line: Sequence[str],
    scene_dict: Dict = None,
    inputs: Sequence[str] = (),
) -> RunManifest:
    return RunManifest(
        tool_version=tool_version,
        command_line=list(command_line),
        scene_hash=None if scene_dict is None else scene_hash(scene_dict),
        input_hashes={str(AbsPath(p)): AbsPath(p).md5 for p in sorted(inputs)},
        timestamp=now_utc_iso(),
    )


def manifest_to_json(m: RunManifest) -> str:
    return json.dumps(m._asdict(), indent=4, sort_keys=True) + "\n"


def same_run(a: RunManifest, b: RunManifest) -> bool:
    """Manifests describe the same inputs (timestamps are ignored)."""
    return a._replace(timestamp=None) == b._replace(timestamp=None)
