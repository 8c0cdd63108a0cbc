#!/usr/bin/env python3
"""Fetch the evaluation datasets through the package mirrors and write CSVs.

letter.csv  UCI Letter Recognition (20,000 x 16, 26 classes), taken from the
            KEEL copy bundled in the `keel_ds` wheel.
mnist.csv.gz  MNIST digits (10,000 x 784, 10 classes), taken from the JSON
            shards bundled in the `mnist` npm package. The shards store
            round(pixel / 255, 3); pixels are written back as 0..255 integers.

Both files put the label in the last column and carry a header row.
"""
import argparse
import glob
import gzip
import json
import os
import subprocess
import tarfile
import tempfile
import zipfile


def fetch_letter(out_dir, tmp):
    subprocess.run(["pip", "download", "--no-deps", "-q", "-d", tmp, "keel_ds==0.2.5"], check=True)
    wheel = glob.glob(os.path.join(tmp, "keel_ds-*.whl"))[0]
    raw = zipfile.ZipFile(wheel).read("keel_ds/data/balanced/raw/letter.dat").decode()
    rows = [line.strip() for line in raw.splitlines() if line.strip() and not line.startswith("@")]
    path = os.path.join(out_dir, "letter.csv")
    with open(path, "w") as f:
        f.write(",".join([f"f{i}" for i in range(16)] + ["label"]) + "\n")
        for row in rows:
            f.write(row.replace(" ", "") + "\n")
    print(f"wrote {path} ({len(rows)} rows)")


def fetch_mnist(out_dir, tmp):
    subprocess.run(["npm", "pack", "--silent", "mnist@1.1.0"], check=True, cwd=tmp,
                   stdout=subprocess.DEVNULL)
    tgz = glob.glob(os.path.join(tmp, "mnist-*.tgz"))[0]
    path = os.path.join(out_dir, "mnist.csv.gz")
    count = 0
    with tarfile.open(tgz) as tar, gzip.open(path, "wt", compresslevel=9) as f:
        f.write(",".join([f"p{i}" for i in range(784)] + ["label"]) + "\n")
        for digit in range(10):
            data = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
            for start in range(0, len(data), 784):
                pixels = data[start:start + 784]
                f.write(",".join(str(round(v * 255)) for v in pixels) + f",{digit}\n")
                count += 1
    print(f"wrote {path} ({count} rows)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    parser.add_argument("--only", choices=["letter", "mnist"])
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        if args.only in (None, "letter"):
            fetch_letter(args.out, tmp)
        if args.only in (None, "mnist"):
            fetch_mnist(args.out, tmp)


if __name__ == "__main__":
    main()
