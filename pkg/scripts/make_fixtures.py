"""Regenerate the bundled layout fixtures under data/fixtures/."""

import argparse
import os

from lenmatch.fixtures import write_bundled

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=os.path.join(ROOT, "data", "fixtures"))
    args = ap.parse_args()
    for path in write_bundled(args.out):
        print(path)


if __name__ == "__main__":
    main()
