"""Regenerate data/demo.csv, the shipped example dataset.

One confounded setting-1 draw with the truth columns stripped, so the file
has the shape of a real observational extract: outcome y, surrogate s,
treatment a, covariates x1..x3.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from dataclasses import replace

from surropte.data import write_csv
from surropte.simulation import generate_setting1

DEMO_SEED = 7
DEMO_N = 600


def main() -> None:
    data = generate_setting1(DEMO_N, seed=DEMO_SEED)
    out = os.path.join(os.path.dirname(__file__), "..", "data", "demo.csv")
    write_csv(replace(data, truth=None), os.path.normpath(out))
    print(f"wrote {os.path.normpath(out)} (n={data.n})")


if __name__ == "__main__":
    main()
