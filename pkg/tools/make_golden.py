"""Regenerate tests/data/golden_oracle.json from the quadrature oracles.

Usage: python tools/make_golden.py [output]
"""

import json
import sys
from pathlib import Path

from wienerchannel.oracle import golden_records

CONFIG = {
    "generator": "wienerchannel.oracle.golden_records",
    "gauss_hermite_start_order": 64,
    "doubling_tol": 1e-6,
    "max_order": 256,
    "seed": None,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0]) if argv else Path(__file__).resolve().parents[1] / "tests/data/golden_oracle.json"
    payload = {"config": CONFIG, "records": golden_records()}
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(payload['records'])} records to {out}")


if __name__ == "__main__":
    main()
