#!/usr/bin/env python3
"""Broadening walkthrough: add two reviewer-written broader profile views
to six narrow extracted ones and re-prune.

    python3 scripts/run_broaden.py [RUNDIR]
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

from polex.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run(rundir: Path) -> int:
    rundir.mkdir(parents=True, exist_ok=True)
    shutil.copy(ROOT / "corpus" / "broaden" / "schema.txt", rundir / "schema.txt")
    code = main(["constraints-gen", str(rundir / "schema.txt"), "-o", str(rundir / "constraints.txt")])
    if code != 0:
        return code
    policies = rundir / "policies"
    policies.mkdir(exist_ok=True)
    shutil.copy(ROOT / "corpus" / "broaden" / "narrow.sql", policies / "narrow.sql")
    code = main([
        "broaden", str(rundir),
        str(policies / "narrow.sql"),
        str(ROOT / "corpus" / "broaden" / "broader.sql"),
        "-o", str(policies / "broadened.sql"),
    ])
    if code != 0:
        return code
    print("\n=== broadened policy ===")
    print((policies / "broadened.sql").read_text())
    return 0


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="polex-broaden-"))
    print(f"run directory: {target}")
    sys.exit(run(target))
