#!/usr/bin/env python3
"""Write the shipped example systems as JSON spec files for the CLI.

Usage:
  python scripts/make_example_specs.py [--out specs/]
"""

import argparse
import json
import os

from ratecost.instances import (
    bernoulli_source,
    drive_to_zero,
    noisy_actuator,
    sticky_tracking,
)
from ratecost.specio import spec_document


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="specs")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    examples = {
        "drive_to_zero_n2.json": spec_document(drive_to_zero(2), "drive-to-zero"),
        "noisy_actuator_n3.json": spec_document(noisy_actuator(3), "noisy-actuator"),
        "sticky_tracking_n4.json": spec_document(sticky_tracking(4), "sticky-tracking"),
        "bernoulli_source_n2.json": spec_document(bernoulli_source(2, 0.2),
                                                  "bernoulli-0.2"),
    }
    for name, doc in examples.items():
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
