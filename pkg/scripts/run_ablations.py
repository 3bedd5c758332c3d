#!/usr/bin/env python3
"""Run the ablation preset families and check their declared outcomes.

With no arguments runs both families (coefficients, then mechanisms);
pass family names to restrict. Each preset writes metrics, checkpoints,
and a manifest under runs/ablations/<family>/<preset>/, and the exit
code is nonzero if any preset with a declared verdict misses it.
"""

import sys

from vicreg.cli import main


def run(families) -> int:
    for family in families:
        code = main(["ablate", family,
                     "--out-dir", f"runs/ablations/{family}"])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:] or ["coefficients", "mechanisms"]))
