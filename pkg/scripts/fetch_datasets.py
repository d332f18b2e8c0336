"""Fetch and clean the adult and nursery tables into the local data cache.

    python scripts/fetch_datasets.py                 # download from UCI
    python scripts/fetch_datasets.py --from DIR      # copy raw files from DIR

The cache directory is $SYNTHAUDIT_DATA (default ~/.cache/synthaudit).
"""
import argparse
import logging
import sys
from pathlib import Path

from synthaudit.public_data import data_dir, prepare_adult, prepare_nursery


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--from", dest="source", type=Path, help="directory holding adult.data, adult.test, nursery.data")
    ap.add_argument("--root", type=Path, default=None, help="cache directory")
    ap.add_argument("--only", choices=("adult", "nursery"), default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    root = args.root or data_dir()
    status = 0
    for name, prep in (("adult", prepare_adult), ("nursery", prepare_nursery)):
        if args.only and args.only != name:
            continue
        try:
            out = prep(root, args.source)
            print(f"{name}: {out if isinstance(out, Path) else out[0]}")
        except (OSError, ValueError) as e:
            print(f"{name}: failed ({e})", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
