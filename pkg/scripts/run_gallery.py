"""Run every gallery scenario and write one JSON report per scenario.

usage: python scripts/run_gallery.py [--out-dir reports] [--jobs 4] [names ...]
"""
import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from anisotv.gallery import CATALOG, run


def one(name):
    t0 = time.perf_counter()
    rep = run(name)
    return name, rep.passed, rep.to_json(), time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="scenario names (default: all)")
    ap.add_argument("--out-dir", default="reports")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    names = args.names or list(CATALOG)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(one, names))
    else:
        results = [one(n) for n in names]
    for name, ok, text, secs in results:
        (out / f"{name}.json").write_text(text + "\n")
        failed = [c["description"] for c in json.loads(text)["checks"] if not c["passed"]]
        print(f"{name:22s} {'pass' if ok else 'FAIL'}  {secs:6.1f} s")
        for d in failed:
            print(f"    failed: {d}")
    return 0 if all(ok for _, ok, _, _ in results) else 1


if __name__ == "__main__":
    sys.exit(main())
