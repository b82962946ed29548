"""Run every experiment suite on the catalog groups and the configs in ./configs.

Usage: python3 scripts/run_suites.py [output_dir]
Each suite writes into its own subdirectory; a summary table goes to stdout.
"""

import sys
import time
from pathlib import Path

from carnot.cli import main

HERE = Path(__file__).resolve().parent
GROUPS = ["heisenberg(1)", "heisenberg(2)", "engel", "free_nilpotent(2,3)"]


def jobs():
    for g in GROUPS:
        yield f"law/{g}", ["law", g]
        yield f"metric/{g}", ["metric", "check", g]
        yield f"lift/{g}", ["lift", g]
        yield f"ray-error/{g}", ["ray-error", g]
        yield f"constants/{g}", ["constants", g]
    for cfg in sorted((HERE / "configs").glob("*.json")):
        yield f"config/{cfg.stem}", ["run", "--config", str(cfg)]


def run(out: Path) -> int:
    failures = 0
    for label, argv in jobs():
        target = out / label.replace("(", "_").replace(")", "").replace(",", "_")
        start = time.perf_counter()
        code = main([*argv, "--out", str(target)])
        failures += code != 0
        print(f"{label:<40} exit {code}  {time.perf_counter() - start:6.1f}s", flush=True)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1] if len(sys.argv) > 1 else "carnot-runs")))
