"""Command-line front end: render every figure a sweep directory supports.

Reads IN_DIR/sweep.csv, writes per-B penalty figures (always) and the
capacity figure (when the sweep spans several targets) to OUT_DIR, plus a
manifest recording inputs, outputs and renderer versions.  Exit codes:
0 ok, 1 schema/input failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import matplotlib

from . import __version__
from .frame import SchemaError, SweepFrame
from .render import FORMATS, plot_volume_vs_capacity, plot_volume_vs_penalty


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feelab-plots", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory containing sweep.csv")
    p.add_argument("--out", required=True, help="output directory for figures")
    p.add_argument("--format", choices=["png", "svg", "both"], default="both")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    formats = FORMATS if args.format == "both" else (args.format,)
    sweep_path = os.path.join(args.in_dir, "sweep.csv")
    try:
        frame = SweepFrame.from_csv(sweep_path)
    except (OSError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    written = []
    for B in frame.b_values():
        written += plot_volume_vs_penalty(frame, B, args.out, formats)
    if len(frame.b_values()) > 1:
        written += plot_volume_vs_capacity(frame, args.out, formats)
    manifest = {
        "input": os.path.abspath(sweep_path),
        "outputs": sorted(os.path.basename(p) for p in written),
        "format": args.format,
        "renderer": {
            "feelab-plots": __version__,
            "matplotlib": matplotlib.__version__,
        },
    }
    with open(os.path.join(args.out, "figures_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
