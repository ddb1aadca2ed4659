#!/usr/bin/env python3
"""Convert the KEEL copies of the UCI benchmark sets into numeric CSVs.

Usage: prepare_keel_data.py <keel_ds wheel> <output dir>

The wheel is the `keel_ds` package from PyPI (`pip download --no-deps keel-ds`).
Nominal attributes are replaced by the index of the value in the sorted list of
distinct values of that column. The last column of every output file is
`label`, with 1 for the positive class and 0 otherwise.
"""
import csv
import sys
import zipfile

SETS = {
    # id: (member, feature names, positive label, kept labels or None)
    "haber": ("imbalanced/raw/haberman.dat", ["age", "op_year", "nodes"], "positive", None),
    "credit": ("balanced/raw/crx.dat", [f"A{i}" for i in range(1, 16)], "positive", None),
    "acredit": ("balanced/raw/australian.dat", [f"A{i}" for i in range(1, 15)], "1", None),
    "diabts": (
        "balanced/raw/pima.dat",
        ["preg", "plas", "pres", "skin", "insu", "mass", "pedi", "age"],
        "tested_positive",
        None,
    ),
    "mammo": ("balanced/raw/mammographic.dat", ["birads", "age", "shape", "margin", "density"], "1", None),
    "cmc": (
        "balanced/raw/contraceptive.dat",
        ["w_age", "w_edu", "h_edu", "children", "religion", "working", "h_occ", "sol", "media"],
        "2",
        {"1", "2"},
    ),
}


def is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def main():
    wheel, out_dir = sys.argv[1], sys.argv[2]
    z = zipfile.ZipFile(wheel)
    for sid, (member, names, positive, kept) in SETS.items():
        text = z.read("keel_ds/data/" + member).decode()
        rows = [[c.strip() for c in line.split(",")] for line in text.splitlines() if line.strip()]
        if kept is not None:
            rows = [r for r in rows if r[-1] in kept]
        d = len(names)
        assert all(len(r) == d + 1 for r in rows), sid
        codes = []
        for j in range(d):
            col = [r[j] for r in rows]
            if all(is_number(v) for v in col):
                codes.append(None)
            else:
                codes.append({v: i for i, v in enumerate(sorted(set(col)))})
        with open(f"{out_dir}/{sid}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["label"])
            for r in rows:
                feats = [r[j] if codes[j] is None else str(codes[j][r[j]]) for j in range(d)]
                w.writerow(feats + ["1" if r[-1] == positive else "0"])
        print(sid, len(rows), d)


if __name__ == "__main__":
    main()
