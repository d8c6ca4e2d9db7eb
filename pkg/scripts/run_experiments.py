#!/usr/bin/env python3
"""Run every config under configs/ (or the ones named) and print one line per run."""
import argparse
import sys
import time
import warnings
from pathlib import Path

from caplab.harness import ConfigError, load_config, run, write_outputs

warnings.filterwarnings("ignore", message=".*TBB.*")
ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("-v", "--verbose", action="store_true", help="print the full summaries")
    args = ap.parse_args()
    paths = args.configs or sorted((ROOT / "configs").glob("*.yaml"))
    failed = 0
    for path in paths:
        t0 = time.perf_counter()
        try:
            cfg = load_config(path)
            for key in ("csv", "summary", "svg"):
                if getattr(cfg, key):
                    Path(getattr(cfg, key)).parent.mkdir(parents=True, exist_ok=True)
            report = run(cfg)
        except ConfigError as exc:
            print(f"{path.name:28s} CONFIG ERROR {exc}")
            failed += 1
            continue
        write_outputs(report)
        status = "PASS" if report.passed else "FAIL"
        failed += not report.passed
        fits = "; ".join(f"{k} {f.slope:.3f}" for k, f in report.fits.items())
        print(f"{path.name:28s} {status}  {time.perf_counter() - t0:7.1f} s  {fits}")
        if args.verbose:
            sys.stdout.write(report.summary_text())
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
