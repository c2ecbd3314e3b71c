#!/usr/bin/env python3
"""Materialize the benchmark CSV files under data/.

Each subcommand converts a raw source file into the column layout the
package's built-in schemas expect.  Sources and how to obtain them:

  autompg     cars.json from the npm package `vega-datasets` (the classic
              Auto-MPG records, 406 rows; 14 rows have missing mpg or
              horsepower and are written with the '?' token so the loader
              drops them, leaving the canonical 392).
  sp500       a daily OHLC CSV with 'date' and 'close' columns (for example
              sp500-2000.csv from `vega-datasets`, 2000-2020).  Emits the full
              series (sp500_daily.csv, the stand-in for the long chronological
              stock protocol) plus google_standin.csv: the first 1,534 closes
              from 2004-08-19 onward, matching the size and start date of the
              original tracking benchmark's price series so the protocol's
              base learning rate remains appropriate.
  abalone     abalone.data from the UCI repository (4,177 rows, sex coded
              M/F/I in the first column; written as 1/-1/0).
  california  cal_housing.data from StatLib (20,640 rows, 8 attributes plus
              median house value).

Run `python scripts/prepare_data.py all --cars-json ... --sp500 ...` or one
subcommand at a time.  Files for sources you do not have are simply skipped.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "data"


def write_autompg(cars_json: Path, out: Path) -> None:
    records = json.loads(cars_json.read_text())
    rows = []
    for rec in records:
        year = rec.get("Year") or ""
        model_year = int(year[2:4]) if len(year) >= 4 else None

        def cell(value):
            return "?" if value is None else value

        rows.append([
            cell(rec.get("Miles_per_Gallon")),
            cell(rec.get("Cylinders")),
            cell(rec.get("Displacement")),
            cell(rec.get("Horsepower")),
            cell(rec.get("Weight_in_lbs")),
            cell(rec.get("Acceleration")),
            cell(model_year),
        ])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["mpg", "cylinders", "displacement", "horsepower",
                         "weight", "acceleration", "model_year"])
        writer.writerows(rows)
    complete = sum(1 for r in rows if "?" not in r)
    print(f"wrote {out}: {len(rows)} rows ({complete} complete)")


GOOGLE_STANDIN_START = "2004-08-19"
GOOGLE_STANDIN_DAYS = 1534


def write_sp500(raw: Path, out: Path, standin: Path) -> None:
    with open(raw, newline="") as handle:
        reader = csv.reader(handle)
        header = [h.strip().lower() for h in next(reader)]
        date_idx = header.index("date")
        close_idx = header.index("close")
        rows = [[rec[date_idx], rec[close_idx]] for rec in reader if rec]
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "close"])
        writer.writerows(rows)
    print(f"wrote {out}: {len(rows)} rows")

    sliced = [r for r in rows if r[0] >= GOOGLE_STANDIN_START][:GOOGLE_STANDIN_DAYS]
    with open(standin, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "close"])
        writer.writerows(sliced)
    print(f"wrote {standin}: {len(sliced)} rows")


SEX_CODE = {"M": "1", "F": "-1", "I": "0"}


def write_abalone(raw: Path, out: Path) -> None:
    rows = []
    with open(raw, newline="") as handle:
        for rec in csv.reader(handle):
            if not rec:
                continue
            rows.append([SEX_CODE[rec[0].strip()]] + [c.strip() for c in rec[1:]])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sex", "length", "diameter", "height", "whole_weight",
                         "shucked_weight", "viscera_weight", "shell_weight", "rings"])
        writer.writerows(rows)
    print(f"wrote {out}: {len(rows)} rows")


def write_california(raw: Path, out: Path) -> None:
    # StatLib order: longitude, latitude, age, rooms, bedrooms, population,
    # households, income, value.  Rewritten as income-first with per-household
    # averages, value in units of $100k, matching the common benchmark form.
    rows = []
    with open(raw, newline="") as handle:
        for rec in csv.reader(handle):
            if not rec:
                continue
            lon, lat, age, rooms, beds, pop, hh, inc, val = (float(c) for c in rec)
            rows.append([inc, age, rooms / hh, beds / hh, pop, pop / hh,
                         lat, lon, val / 100000.0])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["median_income", "house_age", "avg_rooms", "avg_bedrooms",
                         "population", "avg_occupancy", "latitude", "longitude",
                         "median_value"])
        writer.writerows(rows)
    print(f"wrote {out}: {len(rows)} rows")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("task", choices=["autompg", "sp500", "abalone", "california", "all"])
    parser.add_argument("--cars-json", type=Path, help="vega-datasets cars.json")
    parser.add_argument("--sp500", type=Path, help="daily OHLC CSV with date/close columns")
    parser.add_argument("--abalone", type=Path, help="UCI abalone.data")
    parser.add_argument("--california", type=Path, help="StatLib cal_housing.data")
    args = parser.parse_args(argv)

    ran = False
    if args.task in ("autompg", "all") and args.cars_json:
        write_autompg(args.cars_json, DATA / "autompg.csv")
        ran = True
    if args.task in ("sp500", "all") and args.sp500:
        write_sp500(args.sp500, DATA / "sp500_daily.csv", DATA / "google_standin.csv")
        ran = True
    if args.task in ("abalone", "all") and args.abalone:
        write_abalone(args.abalone, DATA / "abalone.csv")
        ran = True
    if args.task in ("california", "all") and args.california:
        write_california(args.california, DATA / "california.csv")
        ran = True
    if not ran:
        print("nothing to do: pass the source file for the chosen task", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
