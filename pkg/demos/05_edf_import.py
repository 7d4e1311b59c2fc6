#!/usr/bin/env python3
"""EDF import: write a small EDF file, read it back, and show the digital to
physical calibration at work alongside the native container round trip."""

import tempfile
from pathlib import Path

import numpy as np

from ictriage.container import load_container, save_container
from ictriage.edf import load_edf, write_edf

work = Path(tempfile.mkdtemp(prefix="ictriage_edf_"))

sfreq = 128.0
t = np.arange(int(10 * sfreq)) / sfreq
data = np.vstack([
    40.0 * np.sin(2 * np.pi * 10.0 * t),
    15.0 * np.sin(2 * np.pi * 4.0 * t),
])
edf_path = work / "two_channel.edf"
write_edf(edf_path, data, sfreq, ["EEG O1-REF", "EEG Fp1-REF"],
          physical_range=(-100.0, 100.0), digital_range=(-32768, 32767))

rec = load_edf(edf_path)
print(f"loaded {edf_path.name}: {rec.n_channels} ch x {rec.n_samples} samples "
      f"at {rec.sfreq:g} Hz")
print(f"channel names cleaned from EDF labels: {rec.channel_names}")

lsb = 200.0 / 65535.0
err = np.max(np.abs(rec.data - data))
print(f"\n16-bit quantization step: {lsb:.5f} uV")
print(f"max round-trip error:     {err:.5f} uV (within one step: {err <= lsb})")

# Native container keeps everything, byte-for-byte reproducibly.
cont = work / "two_channel.icvrec"
save_container(rec, cont)
back = load_container(cont)
save_container(back, work / "again.icvrec")
identical = (work / "again.icvrec").read_bytes() == cont.read_bytes()
print(f"\nnative container round trip byte-identical: {identical}")
