#!/usr/bin/env python3
"""Regenerate the bulk observation streams bundled under scenarios/.

Small hand-curated streams (demo-salmon, eviction-refetch) are edited in
place and not touched here. Run from the repository root:

    python3 tools/gen_streams.py
"""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
HEADER = '{"format":"stream","version":1}'


def overcast_stream() -> str:
    # Twelve frames a day for fourteen 96-slot days, one every eight slots.
    lines = [HEADER]
    for i in range(168):
        rec = {
            "obs_id": f"ov{i:04d}",
            "slot": 4 + 8 * i,
            "site": "ridge",
            "feature_tokens": ["silver_body"],
            "payload_bytes": 2000000,
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def main() -> None:
    out = ROOT / "scenarios" / "overcast-lolp" / "stream.jsonl"
    out.write_text(overcast_stream())
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
