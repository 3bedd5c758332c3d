#!/usr/bin/env python3
"""Train the default configuration end to end.

Writes the exact config used to <out>/config.txt first, then delegates
to the CLI so the run leaves the same artifacts a user-driven run
would: metrics.csv, metrics.jsonl, checkpoint/, manifest.json. Pass a
directory to override the default runs/default.
"""

import sys
from pathlib import Path

from vicreg.cli import main
from vicreg.config import default_experiment_config, serialize_config


def run(out: str) -> int:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = out_dir / "config.txt"
    cfg_path.write_text(serialize_config(default_experiment_config()),
                        encoding="utf-8")
    return main(["train", "--config", str(cfg_path),
                 "--out-dir", str(out_dir)])


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "runs/default"))
