#!/usr/bin/env python3
"""Convert public outlier-detection datasets into the CSV layout read by `addm`.

Output layout: header row, numeric feature columns, then a `label` column
with 1 = anomaly and 0 = normal.

Two source formats are handled:

  * ODDS `.mat` files (keys `X` and `y`), e.g. `wine.mat`, `wbc.mat`:
        python3 scripts/to_csv.py odds wine.mat data/wine.csv

  * Orange `.tab` files (three header rows: names, types, flags). The UCI
    copies shipped in the Orange3 3.10 source distribution are used to
    rebuild the ODDS variants when the `.mat` files are not at hand:
        python3 scripts/to_csv.py orange <Orange/datasets dir> data/

The Orange route applies the ODDS construction rules:
  breastw     683 x 9   malignant (class 4) is the outlier class
  ionosphere  351 x 33  'b' is the outlier class; constant column a2 dropped
  glass       214 x 9   class 6 (tableware) is the outlier class
  wine        129 x 13  classes 2,3 normal; 10 sampled rows of class 1 outliers
  wbc         378 x 30  benign normal; 21 sampled malignant rows outliers
"""
import csv
import random
import sys
from pathlib import Path


def read_tab(path):
    lines = Path(path).read_text().splitlines()
    names = lines[0].split("\t")
    flags = lines[2].split("\t") + [""] * len(names)
    rows = [l.split("\t") for l in lines[3:] if l.strip()]
    return names, flags[: len(names)], rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    n_out = sum(int(r[-1]) for r in rows)
    print(f"{path}: {len(rows)} x {len(header) - 1}, outliers {n_out} ({n_out / len(rows):.4f})")


def split_cols(names, flags, rows, drop=()):
    cls = flags.index("class")
    keep = [i for i, f in enumerate(flags) if f not in ("class", "i", "ignore", "meta") and names[i] not in drop]
    return [names[i] for i in keep], [([r[i] for i in keep], r[cls]) for r in rows]


def orange(src, out):
    src, out = Path(src), Path(out)
    rng = random.Random(42)

    names, flags, rows = read_tab(src / "breast-cancer-wisconsin.tab")
    cols, recs = split_cols(names, flags, rows)
    write_csv(out / "breastw.csv", cols + ["label"], [x + [int(c == "4")] for x, c in recs])

    names, flags, rows = read_tab(src / "ionosphere.tab")
    flags = ["" if n == "a1" else f for n, f in zip(names, flags)]
    cols, recs = split_cols(names, flags, rows, drop=("a2",))
    write_csv(out / "ionosphere.csv", cols + ["label"], [x + [int(c == "b")] for x, c in recs])

    names, flags, rows = read_tab(src / "glass.tab")
    cols, recs = split_cols(names, flags, rows)
    write_csv(out / "glass.csv", cols + ["label"], [x + [int(c == "6")] for x, c in recs])

    # wine.tab carries the class in the first column with flag row "class"
    lines = (src / "wine.tab").read_text().splitlines()
    names = lines[0].split("\t")
    wrows = [l.split("\t") for l in lines[3:] if l.strip()]
    normals = [r[1:] + [0] for r in wrows if r[0] in ("2", "3")]
    outliers = [r[1:] + [1] for r in wrows if r[0] == "1"]
    rows = normals + sorted(rng.sample(outliers, 10), key=outliers.index)
    write_csv(out / "wine.csv", names[1:] + ["label"], rows)

    names, flags, rows = read_tab(src / "wdbc.tab")
    diag = names.index("diagnosis")
    keep = [i for i in range(len(names)) if i not in (0, diag)]
    benign = [[r[i] for i in keep] + [0] for r in rows if r[diag] == "B"]
    malign = [[r[i] for i in keep] + [1] for r in rows if r[diag] == "M"]
    rows = benign + sorted(rng.sample(malign, 21), key=malign.index)
    write_csv(out / "wbc.csv", [names[i] for i in keep] + ["label"], rows)


def odds(src, dst):
    from scipy.io import loadmat

    m = loadmat(src)
    x, y = m["X"], m["y"].ravel()
    header = [f"x{i}" for i in range(x.shape[1])] + ["label"]
    write_csv(dst, header, [[repr(float(v)) for v in row] + [int(t)] for row, t in zip(x, y)])


if __name__ == "__main__":
    if len(sys.argv) != 4 or sys.argv[1] not in ("odds", "orange"):
        sys.exit(__doc__)
    {"odds": odds, "orange": orange}[sys.argv[1]](sys.argv[2], sys.argv[3])
