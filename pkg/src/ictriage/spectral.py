"""Welch power spectral density estimation.

Hann-windowed averaged periodograms with density scaling, one-sided. The dB
conversion floors the linear density at 1e-12 so silent signals land at a
finite -120 dB instead of -inf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

DB_FLOOR = 1e-12


@dataclass
class SpectrumEstimate:
    freqs: np.ndarray        # Hz, strictly increasing, within [0, sfreq/2]
    psd: np.ndarray          # linear density, power / Hz
    psd_db: np.ndarray       # 10*log10(max(psd, DB_FLOOR))
    seg_len: int
    overlap: float
    window: str = "hann"
    params: dict = field(default_factory=dict)

    def band_power(self, lo: float, hi: float) -> float:
        """Integrated linear power over [lo, hi] Hz (inclusive bins)."""
        mask = (self.freqs >= lo) & (self.freqs <= hi)
        if not np.any(mask):
            return 0.0
        df = self.freqs[1] - self.freqs[0] if self.freqs.size > 1 else 1.0
        return float(np.sum(self.psd[mask]) * df)


def welch_psd(
    x: np.ndarray,
    sfreq: float,
    seg_len: int | None = None,
    overlap: float = 0.5,
) -> SpectrumEstimate:
    """Averaged Hann-windowed periodogram of a 1-D signal.

    seg_len is in samples and defaults to min(2 * sfreq, len(x)). Each segment
    is mean-detrended before windowing.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ParameterError("signal too short for a spectrum")
    if seg_len is None:
        seg_len = int(min(2 * sfreq, x.size))
    seg_len = int(seg_len)
    if seg_len < 2:
        raise ParameterError(f"seg_len must be >= 2 samples, got {seg_len}")
    if seg_len > x.size:
        raise ParameterError(f"seg_len {seg_len} exceeds signal length {x.size}")
    if not (0 <= overlap < 1):
        raise ParameterError(f"overlap must be in [0, 1), got {overlap}")

    step = max(1, int(round(seg_len * (1 - overlap))))
    starts = range(0, x.size - seg_len + 1, step)
    window = np.hanning(seg_len)
    win_power = float(np.sum(window**2))

    n_freqs = seg_len // 2 + 1
    acc = np.zeros(n_freqs)
    n_segs = 0
    for s in starts:
        seg = x[s : s + seg_len]
        seg = seg - seg.mean()
        spec = np.fft.rfft(seg * window)
        p = (np.abs(spec) ** 2) / (sfreq * win_power)
        # One-sided density: double everything except DC and (for even
        # seg_len) the Nyquist bin.
        p[1:] *= 2.0
        if seg_len % 2 == 0:
            p[-1] /= 2.0
        acc += p
        n_segs += 1

    psd = acc / n_segs
    freqs = np.fft.rfftfreq(seg_len, d=1.0 / sfreq)
    psd_db = 10.0 * np.log10(np.maximum(psd, DB_FLOOR))
    return SpectrumEstimate(
        freqs=freqs,
        psd=psd,
        psd_db=psd_db,
        seg_len=seg_len,
        overlap=overlap,
        params={"sfreq": sfreq, "n_segments": n_segs, "detrend": "mean"},
    )


def windowed_variance(x: np.ndarray, seg_len: int, overlap: float = 0.5) -> float:
    """Hann-weighted variance averaged over the same segmentation as welch_psd.

    By Parseval's identity this equals the integral of the linear density, so
    it serves as an independent check on the estimator's scaling.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    seg_len = int(seg_len)
    step = max(1, int(round(seg_len * (1 - overlap))))
    window = np.hanning(seg_len)
    win_power = float(np.sum(window**2))
    vals = []
    for s in range(0, x.size - seg_len + 1, step):
        seg = x[s : s + seg_len]
        seg = seg - seg.mean()
        vals.append(float(np.sum((window * seg) ** 2) / win_power))
    return float(np.mean(vals))
