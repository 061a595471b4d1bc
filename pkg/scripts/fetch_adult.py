#!/usr/bin/env python3
"""Download the UCI ADULT dataset and write data/adult.csv.

Pulls adult.data and adult.test from the UCI repository, keeps the 13
attributes used by the experiment schema (dropping fnlwgt and the redundant
education label), strips the trailing period from test-file income labels,
and writes a single headered CSV. "?" entries are kept verbatim; the schema
treats them as their own category.

Usage:
    python scripts/fetch_adult.py [--out data/adult.csv]
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

BASE_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult"
FILES = ("adult.data", "adult.test")

RAW_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income>50K",
]
KEEP = [
    "sex", "income>50K", "race", "relationship", "marital-status", "workclass",
    "occupation", "education-num", "native-country", "capital-gain",
    "capital-loss", "hours-per-week", "age",
]


def fetch(name: str) -> str:
    url = f"{BASE_URL}/{name}"
    print(f"fetching {url} ...", file=sys.stderr)
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("utf-8", errors="replace")


def parse(text: str) -> list[dict]:
    rows = []
    reader = csv.reader(io.StringIO(text), skipinitialspace=True)
    for record in reader:
        if len(record) != len(RAW_COLUMNS):  # blank lines, the test-file banner
            continue
        row = {col: cell.strip().rstrip(".") for col, cell in zip(RAW_COLUMNS, record)}
        rows.append(row)
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/adult.csv")
    args = parser.parse_args()

    rows: list[dict] = []
    for name in FILES:
        rows.extend(parse(fetch(name)))
    if not rows:
        print("no rows downloaded", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(KEEP)
        for row in rows:
            writer.writerow([row[col] for col in KEEP])
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
