"""Line-delimited trace logs: one JSON object per vehicle per control cycle."""
from __future__ import annotations

import json
from pathlib import Path

TRACE_FIELDS = ("t", "id", "x", "y", "psi", "v", "a", "leader", "coop")


def write_trace(path, records, meta: dict | None = None) -> None:
    """Write ``records`` (dicts with ``TRACE_FIELDS``) to ``path``.

    An optional ``meta`` object becomes the first line under the key ``meta``.
    """
    with open(Path(path), "w") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps({k: rec[k] for k in TRACE_FIELDS}) + "\n")


def read_trace(path) -> tuple[dict | None, list[dict]]:
    meta = None
    rows = []
    with open(Path(path)) as fh:
        for line in fh:
            obj = json.loads(line)
            if "meta" in obj:
                meta = obj["meta"]
            else:
                rows.append(obj)
    return meta, rows
