#!/usr/bin/env python3
"""Generate the synthetic daily fixture CSV.

Usage: python scripts/make_fixture.py [--out PATH] [--seed N]
"""

import argparse

from autocopula.fixture import write_fixture_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixture.csv")
    parser.add_argument("--seed", type=int, default=20240211)
    args = parser.parse_args()
    path = write_fixture_csv(args.out, seed=args.seed)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
