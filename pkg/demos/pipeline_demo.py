"""Run the cached pipeline twice into a temporary workspace."""

import json
import tempfile
from pathlib import Path

from hkframe import workspace as wsio
from hkframe.generate import generate

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    src = tmp / "cycle64.json"
    wsio.write_json(src, generate("cycle", 64))
    first = wsio.pipeline(src, {"battery_size": 20}, tmp / "ws")
    second = wsio.pipeline(src, {"battery_size": 20}, tmp / "ws")
    print("first run executed:", first.executed)
    print("second run executed:", second.executed)
    manifest = json.loads((tmp / "ws" / "manifest.json").read_text())
    for stage, entry in manifest["stages"].items():
        print(f"  {stage:>6}: key {entry['key'][:12]}  outputs {len(entry['outputs'])}")
    print((tmp / "ws" / "reports" / "verify" / "summary.csv").read_text())
