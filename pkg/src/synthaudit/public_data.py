"""Download, verify and clean the public benchmark tables (adult, nursery).

Raw files are cached under ``$SYNTHAUDIT_DATA`` (default
``~/.cache/synthaudit``). Cleaned CSVs and their schema files are written next
to them, so later runs only read local files.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import os
import shutil
import urllib.request
from pathlib import Path

from .dataset import CATEGORICAL, NUMERIC, ColumnSchema, ConditionalQuery, Condition, save_schema

logger = logging.getLogger(__name__)

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
SOURCES = {
    "adult.data": (f"{UCI}/adult/adult.data", "5b00264637dbfec36bdeaab5676b0b309ff9eb788d63554ca0a249491c86603d"),
    "adult.test": (f"{UCI}/adult/adult.test", "a2a9044bc167a35b2361efbabec64e89d69ce82d9790d2980119aac5fd7e9c05"),
    "nursery.data": (f"{UCI}/nursery/nursery.data", None),
}

ADULT_COLUMNS = ("age", "workclass", "fnlwgt", "education", "education_num", "marital_status", "occupation",
                 "relationship", "race", "sex", "capital_gain", "capital_loss", "hours_per_week", "native_country",
                 "income")
ADULT_NUMERIC = ("age", "fnlwgt", "education_num", "capital_gain", "capital_loss", "hours_per_week")
NURSERY_COLUMNS = ("parents", "has_nurs", "form", "children", "housing", "finance", "social", "health", "class")


def data_dir() -> Path:
    return Path(os.environ.get("SYNTHAUDIT_DATA", Path.home() / ".cache" / "synthaudit"))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch(name: str, root: Path | None = None, source_dir: Path | None = None, timeout: float = 60.0) -> Path:
    """Return the verified raw file ``name``, downloading or copying it if needed.

    Files without a pinned hash are trusted on first use; their hash is stored
    in ``<name>.sha256`` and checked on every later call.
    """
    root = root or data_dir()
    root.mkdir(parents=True, exist_ok=True)
    url, expected = SOURCES[name]
    path = root / name
    if not path.exists():
        if source_dir is not None and (Path(source_dir) / name).exists():
            shutil.copyfile(Path(source_dir) / name, path)
        else:
            logger.info("downloading %s", url)
            tmp = path.with_suffix(path.suffix + ".part")
            with urllib.request.urlopen(url, timeout=timeout) as r, open(tmp, "wb") as fh:
                shutil.copyfileobj(r, fh)
            tmp.replace(path)
    digest = sha256_file(path)
    pin = root / (name + ".sha256")
    if expected is None and pin.exists():
        expected = pin.read_text().strip()
    if expected is None:
        pin.write_text(digest + "\n")
        logger.warning("%s has no pinned hash; recorded %s", name, digest)
    elif digest != expected:
        raise ValueError(f"{path}: sha256 {digest} does not match {expected}")
    return path


def _read_adult(path: Path) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            cells[-1] = cells[-1].rstrip(".")
            rows.append(cells)
    return rows


def prepare_adult(root: Path | None = None, source_dir: Path | None = None) -> tuple[Path, Path]:
    """Merge train and test, drop rows with a missing cell, drop ``education``."""
    root = root or data_dir()
    rows = _read_adult(fetch("adult.data", root, source_dir)) + _read_adult(fetch("adult.test", root, source_dir))
    keep = [j for j, c in enumerate(ADULT_COLUMNS) if c != "education"]
    names = [ADULT_COLUMNS[j] for j in keep]
    clean = [[r[j] for j in keep] for r in rows if "?" not in r]
    out = root / "adult.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        w.writerows(clean)
    schema = []
    for j, name in enumerate(names):
        if name in ADULT_NUMERIC:
            schema.append(ColumnSchema(name, NUMERIC))
        else:
            schema.append(ColumnSchema(name, CATEGORICAL, tuple(sorted({r[j] for r in clean}))))
    schema_path = root / "adult.schema.json"
    save_schema(schema, schema_path)
    return out, schema_path


def prepare_nursery(root: Path | None = None, source_dir: Path | None = None) -> Path:
    """Nursery table with a header row; the two-row ``recommend`` class is removed."""
    root = root or data_dir()
    raw = fetch("nursery.data", root, source_dir)
    with open(raw, encoding="utf-8") as fh:
        rows = [line.strip().split(",") for line in fh if line.strip()]
    rows = [r for r in rows if r[-1] != "recommend"]
    out = root / "nursery.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NURSERY_COLUMNS)
        w.writerows(rows)
    return out


def adult_queries() -> list[ConditionalQuery]:
    """The conditional summaries used to diagnose the age / education_num pair."""
    return [
        ConditionalQuery("education_num", (Condition("age", "==", 17),), "mean", label="mean(education_num | age=17)"),
        ConditionalQuery("age", (Condition("education_num", "==", 4),), "mean", label="mean(age | education_num=4)"),
        ConditionalQuery("education_num", (Condition("age", "==", 17),), "fraction", value=4,
                         label="P(education_num=4 | age=17)"),
        ConditionalQuery("age", (), "corr", other="education_num", label="corr(age, education_num)"),
        ConditionalQuery("age", (Condition("age", "<=", 20),), "corr", other="education_num",
                         label="corr(age, education_num | age<=20)"),
    ]
