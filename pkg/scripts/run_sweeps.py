#!/usr/bin/env python3
"""Drive the CLI over the standard impairment trios and write sweep CSVs.

Produces the outage-floor comparison (envelope limiter at 4 and 8 dB
back-off, image leakage -15 dB, sweep to 60 dB) and the ideal-versus-
impaired capacity overlay, one output directory per case.
"""

import argparse
import json
import os
import sys
import tempfile

from mmfso import cli

CASES = {
    "outage_sel_ibo4": {
        "command": "outage",
        "config": {
            "hpa": {"kind": "sel", "ibo_db": 4.0},
            "iq": {"ilr_db": -15.0},
            "sweep": {"start_db": -10.0, "stop_db": 60.0, "step_db": 5.0},
        },
    },
    "outage_sel_ibo8": {
        "command": "outage",
        "config": {
            "hpa": {"kind": "sel", "ibo_db": 8.0},
            "iq": {"ilr_db": -15.0},
            "sweep": {"start_db": -10.0, "stop_db": 60.0, "step_db": 5.0},
        },
    },
    "capacity_ideal": {
        "command": "capacity",
        "config": {
            "sweep": {"start_db": -10.0, "stop_db": 40.0, "step_db": 5.0},
        },
    },
    "capacity_impaired": {
        "command": "capacity",
        "config": {
            "hpa": {"kind": "twta", "ibo_db": 4.0},
            "iq": {"ilr_db": -10.0},
            "sweep": {"start_db": -10.0, "stop_db": 40.0, "step_db": 5.0},
        },
    },
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/sweeps")
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=20260814)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--preset", default="clear_air",
                    choices=sorted(cli.PRESETS))
    args = ap.parse_args()

    for name, case in CASES.items():
        cfg = dict(case["config"])
        cfg["preset"] = args.preset
        out_dir = os.path.join(args.out, name)
        with tempfile.NamedTemporaryFile("w", suffix=".json",
                                         delete=False) as fh:
            json.dump(cfg, fh)
            cfg_path = fh.name
        code = cli.main([
            case["command"], "--config", cfg_path, "--out", out_dir,
            "--seed", str(args.seed), "--trials", str(args.trials),
            "--workers", str(args.workers),
        ])
        os.unlink(cfg_path)
        if code != 0:
            print("case %s failed with exit %d" % (name, code),
                  file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
