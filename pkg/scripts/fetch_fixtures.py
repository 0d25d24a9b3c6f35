"""Fetch the two trial datasets used by the fixture tests.

The source files are not bundled. Point this script at a copy of each arm,
either a local path or a URL, and it writes ``time,event`` CSVs into
``tests/fixtures`` plus a SHA-256 manifest:

    python scripts/fetch_fixtures.py \\
        --break3 path/or/url/to/dabrafenib_arm.csv \\
        --combid path/or/url/to/dabrafenib_trametinib_arm.csv

Source columns are matched case-insensitively; use ``--time-col`` and
``--event-col`` when they are named differently. ``--check`` verifies
existing files against the manifest without fetching anything.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import sys
import urllib.request
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
NAMES = {"break3": "break3_dabrafenib.csv", "combid": "combid_dabrafenib_trametinib.csv"}
MANIFEST = "SHA256SUMS"


def read_source(src: str) -> str:
    if "://" in src:
        with urllib.request.urlopen(src, timeout=60) as resp:
            return resp.read().decode("utf-8-sig")
    return Path(src).read_text(encoding="utf-8-sig")


def convert(text: str, time_col: str, event_col: str) -> str:
    dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t ")
    reader = csv.DictReader(io.StringIO(text), dialect=dialect)
    fields = {f.strip().lower(): f for f in reader.fieldnames or []}
    try:
        tcol, ecol = fields[time_col.lower()], fields[event_col.lower()]
    except KeyError:
        sys.exit(f"columns {time_col!r}/{event_col!r} not found; have {list(fields)}")
    out = io.StringIO()
    out.write("time,event\n")
    for row in reader:
        t, e = row[tcol].strip(), row[ecol].strip()
        if not t:
            continue
        out.write(f"{float(t)!r},{int(float(e))}\n")
    return out.getvalue()


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def check() -> int:
    manifest = FIXTURES / MANIFEST
    if not manifest.exists():
        print(f"no manifest at {manifest}")
        return 1
    status = 0
    for line in manifest.read_text().splitlines():
        digest, name = line.split(maxsplit=1)
        path = FIXTURES / name
        ok = path.exists() and sha256(path) == digest
        print(f"{'ok' if ok else 'MISMATCH'}  {name}")
        status |= not ok
    return status


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--break3", help="source for the dabrafenib arm")
    p.add_argument("--combid", help="source for the dabrafenib + trametinib arm")
    p.add_argument("--time-col", default="time")
    p.add_argument("--event-col", default="event")
    p.add_argument("--check", action="store_true", help="verify files against the manifest")
    args = p.parse_args(argv)
    if args.check:
        return check()
    sources = {k: v for k, v in (("break3", args.break3), ("combid", args.combid)) if v}
    if not sources:
        p.error("give --break3 and/or --combid, or --check")
    FIXTURES.mkdir(parents=True, exist_ok=True)
    for key, src in sources.items():
        path = FIXTURES / NAMES[key]
        path.write_text(convert(read_source(src), args.time_col, args.event_col))
        print(f"wrote {path}")
    lines = [f"{sha256(FIXTURES / n)}  {n}" for n in sorted(NAMES.values()) if (FIXTURES / n).exists()]
    (FIXTURES / MANIFEST).write_text("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
