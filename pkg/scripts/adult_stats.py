"""Print row counts and the age / education_num conditional summaries of adult.csv."""
import argparse
import json
import time
from pathlib import Path

from synthaudit.dataset import column_statistics, load_csv, load_schema
from synthaudit.public_data import adult_queries, data_dir


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default=None)
    args = ap.parse_args(argv)
    root = data_dir() if args.root is None else Path(args.root)
    t0 = time.perf_counter()
    d = load_csv(root / "adult.csv", load_schema(root / "adult.schema.json"), provenance="real")
    rep = column_statistics(d, adult_queries())
    out = {"rows": d.n, "columns": d.p, "seconds": round(time.perf_counter() - t0, 2)}
    out.update({c["label"]: c["value"] for c in rep.conditionals})
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
