#!/usr/bin/env python3
"""Render the 4-panel diagnostic dashboard for each component of a fit.

Panels: scalp topography (top-left), activation time series (top-right),
epoch-stacked image (bottom-left), power spectrum (bottom-right), composed
onto a 512x512 canvas. Rendering is deterministic byte for byte.
"""

import tempfile
from pathlib import Path

from ictriage.dashboard import render_all, write_dashboards
from ictriage.ica import fit_fastica
from ictriage.synth import SourceSpec, generate_dataset

out = Path(tempfile.mkdtemp(prefix="ictriage_dash_"))

specs = [
    SourceSpec("alpha_brain", 20.0),
    SourceSpec("blink_eye", 80.0),
    SourceSpec("ecg_heart", 15.0),
]
rec, truth = generate_dataset(specs, seed=11, duration=60.0, dataset_id="sub01")
model = fit_fastica(rec, n_components=3, seed=0)

dashboards = render_all(model, rec)
manifest = write_dashboards(dashboards, out)

print(f"wrote {len(dashboards)} dashboards to {out}\n")
for dash in dashboards:
    print(f"  {dash.filename}  sha256={manifest[dash.filename][:16]}...")
    for panel, box in dash.panel_boxes.items():
        print(f"    {panel:<11s} box {box}")

again = render_all(model, rec)
identical = all(a.png_bytes() == b.png_bytes() for a, b in zip(dashboards, again))
print(f"\nre-render byte-identical: {identical}")
