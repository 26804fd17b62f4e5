#!/usr/bin/env python3
"""Run the full single-threaded throughput benchmark and print the report.

BLAS thread pools are pinned to one thread before numpy loads so the
per-method timings reflect single-core cost, not scheduler luck.
"""

import argparse
import os
import subprocess
import sys

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ[var] = "1"

ALL_METHODS = "reinhard,macenko,hm,fda,sca,jitter,randstainna"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--report", default="bench_report.csv")
    ap.add_argument("--methods", default=ALL_METHODS)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--warmup", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cmd = [
        sys.executable, "-m", "stainkit.cli", "bench",
        "--report", args.report,
        "--methods", args.methods,
        "--count", str(args.count),
        "--size", str(args.size),
        "--warmup", str(args.warmup),
        "--seed", str(args.seed),
    ]
    proc = subprocess.run(cmd)
    if proc.returncode != 0:
        return proc.returncode
    with open(args.report) as fh:
        print(fh.read(), end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
