#!/usr/bin/env python3
"""Emit the turbulence-density truncation diagnostics for plotting.

Uses the direct-coefficient parameter set of the diagnostic figures
(alpha=2.1, beta=2, g=0.001, omega_prime=2.4524) and writes the
error-versus-order and exact-versus-truncated overlay curves.
"""

import argparse
import json
import os
import sys
import tempfile

from mmfso import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/truncation")
    ap.add_argument("--seed", type=int, default=20260814)
    ap.add_argument("--orders", type=int, nargs="+",
                    default=[2, 4, 8, 16, 32])
    args = ap.parse_args()

    cfg = {
        "fso": {"turbulence": {"g": 0.001, "omega_prime": 2.4524}},
        "pdf": {"truncation_grid": args.orders, "points": 100,
                "span_mean_multiples": 2.4},
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(cfg, fh)
        cfg_path = fh.name
    code = cli.main(["pdf", "--config", cfg_path, "--out", args.out,
                     "--seed", str(args.seed)])
    os.unlink(cfg_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
