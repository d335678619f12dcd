"""Extract the small benchmark datasets from PyPI packages that bundle them.

The UCI repository is often unreachable from build machines, so this pulls
copies out of wheels/sdists fetched with

    pip download --no-deps pydataset==0.2.0 orange3==3.39.0 keel_ds==0.2.5 -d <dir>

and writes plain CSV files (header row, label column last) into ``data/``.
Only the raw numbers are copied; all preprocessing happens in the loader.
"""

import argparse
import csv
import glob
import io
import os
import tarfile
import zipfile

PYDATASET_MEMBER = "resources/rdata/csv/MASS/{}.csv"


def _find(source, pattern):
    hits = sorted(glob.glob(os.path.join(source, pattern)))
    if not hits:
        raise SystemExit(f"no file matching {pattern!r} in {source}; see the module docstring")
    return hits[0]


def _pydataset_resources(source):
    sdist = _find(source, "pydataset-*.tar.gz")
    with tarfile.open(sdist) as outer:
        member = next(m for m in outer.getmembers() if m.name.endswith("pydataset/resources.tar.gz"))
        blob = outer.extractfile(member).read()
    return tarfile.open(fileobj=io.BytesIO(blob))


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def glass(source, out):
    with _pydataset_resources(source) as res:
        text = res.extractfile(PYDATASET_MEMBER.format("fgl")).read().decode()
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0][1:]
    _write(os.path.join(out, "glass.csv"), header, [r[1:] for r in rows[1:]])


def breastcancer(source, out):
    with _pydataset_resources(source) as res:
        text = res.extractfile(PYDATASET_MEMBER.format("biopsy")).read().decode()
    rows = list(csv.reader(io.StringIO(text)))
    # keep the sample ID; the dataset spec discards it
    header = rows[0][1:]
    _write(os.path.join(out, "breastcancer.csv"), header, [r[1:] for r in rows[1:]])


def ionosphere(source, out):
    with zipfile.ZipFile(_find(source, "orange3-*.whl")) as z:
        text = z.read("Orange/tests/datasets/ionosphere.tab").decode()
    lines = [ln.split("\t") for ln in text.splitlines() if ln.strip()]
    header = lines[0][:-1] + ["class"]
    _write(os.path.join(out, "ionosphere.csv"), header, lines[3:])


def ecoli(source, out):
    with zipfile.ZipFile(_find(source, "keel_ds-*.whl")) as z:
        text = z.read("keel_ds/data/imbalanced/raw/ecoli1.dat").decode()
    rows = [[c.strip() for c in ln.split(",")] for ln in text.splitlines() if ln.strip() and not ln.startswith("@")]
    header = ["mcg", "gvh", "lip", "chg", "aac", "alm1", "alm2", "class"]
    _write(os.path.join(out, "ecoli.csv"), header, rows)


PREPARERS = {"glass": glass, "breastcancer": breastcancer, "ionosphere": ionosphere, "ecoli": ecoli}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="directory holding the downloaded wheels/sdists")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--only", nargs="*", choices=sorted(PREPARERS))
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    for name in args.only or sorted(PREPARERS):
        PREPARERS[name](args.source, args.out)


if __name__ == "__main__":
    main()
