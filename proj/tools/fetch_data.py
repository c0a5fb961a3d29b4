"""Write data/auto-mpg.csv and data/ames.csv from redistributions on PyPI.

Auto MPG comes from vega_datasets (cars.json, the UCI auto-mpg.data-original
rows); the 8 rows without mpg are dropped, which leaves the 398-row UCI file.
Ames comes from rdatasets (openintro/ames, De Cock's full 2930-row release),
renamed to the Kaggle column spelling; the few rows with missing basement or
garage areas are dropped.
"""

import argparse
import json
import lzma
import pickle
import re
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd


def wheel(package, version, workdir, cache=None):
    for d in filter(None, [cache]):
        found = list(Path(d).glob(f"{package}-{version}-*.whl"))
        if found:
            return zipfile.ZipFile(found[0])
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
         f"{package}=={version}", "-d", str(workdir)],
        check=True, stdout=subprocess.DEVNULL)
    return zipfile.ZipFile(next(Path(workdir).glob(f"{package}-{version}-*.whl")))


def auto_mpg(whl):
    cars = json.loads(whl.read("vega_datasets/_data/cars.json"))
    origin = {"USA": 1, "Europe": 2, "Japan": 3}
    rows = []
    for r in cars:
        if r["Miles_per_Gallon"] is None:
            continue
        hp = r["Horsepower"]
        rows.append({
            "mpg": r["Miles_per_Gallon"],
            "cylinders": r["Cylinders"],
            "displacement": r["Displacement"],
            "horsepower": "?" if hp is None else hp,
            "weight": r["Weight_in_lbs"],
            "acceleration": r["Acceleration"],
            "model year": int(r["Year"][2:4]),
            "origin": origin[r["Origin"]],
            "car name": r["Name"],
        })
    return pd.DataFrame(rows)


def kaggle_name(name):
    name = name.replace(".", "")
    return re.sub(r"^X(?=\d)", "", name)


def ames(whl):
    raw = lzma.decompress(whl.read("rdatasets/_data/openintro/ames.pkl.compress"))
    df = pickle.loads(raw)
    df = df.drop(columns=["rownames", "PID"]).rename(columns={"Order": "Id", "area": "GrLivArea", "price": "SalePrice"})
    df.columns = [kaggle_name(c) for c in df.columns]
    # These are never NA in Kaggle's train.csv; rows where they are belong
    # to its test split.
    complete = ["BsmtFinSF1", "BsmtFinSF2", "BsmtUnfSF", "TotalBsmtSF", "BsmtFullBath", "BsmtHalfBath",
                "GarageCars", "GarageArea"]
    df = df.dropna(subset=complete)
    # Kaggle's column order: GrLivArea after LowQualFinSF, SalePrice last.
    cols = [c for c in df.columns if c not in ("GrLivArea", "SalePrice")]
    cols.insert(cols.index("LowQualFinSF") + 1, "GrLivArea")
    df = df[cols + ["SalePrice"]]
    # Whole-number floats (pandas' NaN-capable columns) go back to integers.
    for col in df.columns:
        if df[col].dtype.kind == "f" and (df[col].dropna() % 1 == 0).all():
            df[col] = df[col].astype("Int64")
    return df


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parent.parent / "data", type=Path)
    ap.add_argument("--wheels", type=Path, help="directory with already downloaded wheels")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        auto = auto_mpg(wheel("vega_datasets", "0.9.0", tmp, args.wheels))
        auto.to_csv(args.out / "auto-mpg.csv", index=False)
        houses = ames(wheel("rdatasets", "0.2.10", tmp, args.wheels))
        houses.to_csv(args.out / "ames.csv", index=False, na_rep="NA")
    print(f"auto-mpg.csv: {len(auto)} rows; ames.csv: {len(houses)} rows, {houses.shape[1]} columns")


if __name__ == "__main__":
    main()
