"""Per-component diagnostic dashboards.

Each component renders to one 512x512 composite: scalp topography top-left,
activation time series top-right, epoch-stacked image bottom-left, power
spectrum bottom-right, with a title band naming the dataset and component.
Rendering is a pure function of its inputs, so repeated renders are
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .errors import CompositionError, ParameterError
from .filters import epoch_vector
from .ica import IcaModel, activations
from .recording import Montage, Recording
from .spectral import welch_psd
from .topomap import HEAD_RADIUS, project_positions, spherical_spline_field
from .util import sha256_hex

CANVAS = 512
TITLE_H = 20
PANEL_W = CANVAS // 2
PANEL_H = (CANVAS - TITLE_H) // 2

PANEL_BOXES = {
    "topo": (0, TITLE_H, PANEL_W, TITLE_H + PANEL_H),
    "timeseries": (PANEL_W, TITLE_H, CANVAS, TITLE_H + PANEL_H),
    "erp": (0, TITLE_H + PANEL_H, PANEL_W, CANVAS),
    "psd": (PANEL_W, TITLE_H + PANEL_H, CANVAS, CANVAS),
}


@dataclass
class RenderParams:
    timeseries_window_s: float = 2.5
    timeseries_sd_scale: float = 4.0
    erp_epoch_s: float = 1.0
    erp_smoothing: int = 3
    erp_sd_scale: float = 3.0
    psd_fmin: float = 1.0
    psd_fmax: float = 80.0
    psd_seg_s: float = 2.0
    psd_overlap: float = 0.5

    def snapshot(self) -> dict:
        return {
            "timeseries_window_s": self.timeseries_window_s,
            "timeseries_sd_scale": self.timeseries_sd_scale,
            "erp_epoch_s": self.erp_epoch_s,
            "erp_smoothing": self.erp_smoothing,
            "erp_sd_scale": self.erp_sd_scale,
            "psd_fmin": self.psd_fmin,
            "psd_fmax": self.psd_fmax,
            "psd_seg_s": self.psd_seg_s,
            "psd_overlap": self.psd_overlap,
        }


@dataclass
class Dashboard:
    image: np.ndarray  # (512, 512, 3) uint8
    dataset_id: str
    component_index: int
    panel_boxes: dict = field(default_factory=dict)
    render_params: dict = field(default_factory=dict)

    @property
    def filename(self) -> str:
        return dashboard_filename(self.dataset_id, self.component_index)

    def png_bytes(self) -> bytes:
        return raster.png_bytes(self.image)

    def save(self, out_dir) -> str:
        import os

        path = os.path.join(str(out_dir), self.filename)
        with open(path, "wb") as f:
            f.write(self.png_bytes())
        return path


def dashboard_filename(dataset_id: str, component_index: int) -> str:
    return f"{dataset_id}_comp_{component_index:03d}.png"


def validate_panel_boxes(boxes: dict) -> None:
    """The four panels must tile the canvas below the title band exactly."""
    names = sorted(boxes)
    if names != sorted(PANEL_BOXES):
        raise CompositionError(f"expected panels {sorted(PANEL_BOXES)}, got {names}")
    area = 0
    rects = list(boxes.values())
    for x0, y0, x1, y1 in rects:
        if not (0 <= x0 < x1 <= CANVAS and TITLE_H <= y0 < y1 <= CANVAS):
            raise CompositionError(f"panel box {(x0, y0, x1, y1)} out of bounds")
        area += (x1 - x0) * (y1 - y0)
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            ax0, ay0, ax1, ay1 = rects[i]
            bx0, by0, bx1, by1 = rects[j]
            if ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1:
                raise CompositionError(f"panel boxes {rects[i]} and {rects[j]} overlap")
    if area != CANVAS * (CANVAS - TITLE_H):
        raise CompositionError(
            f"panel boxes cover {area} px, expected {CANVAS * (CANVAS - TITLE_H)}"
        )


def render_topo_panel(
    weights: np.ndarray,
    montage: Montage,
    width: int = PANEL_W,
    height: int = PANEL_H,
) -> np.ndarray:
    """Scalp map of one mixing column, interpolated with spherical splines."""
    img = raster.blank(height, width)
    raster.draw_rect(img, 0, 0, width, height, raster.GRAY_BORDER)
    raster.draw_text(img, 4, 3, "TOPOGRAPHY", raster.GRAY_TEXT)

    radius = min(width, height) // 2 - 28
    cx = width // 2 - 14
    cy = height // 2 + 6
    grid = 2 * radius
    # Evaluate the smooth field at half resolution, then pixel-double.
    fieldvals, mask = spherical_spline_field(montage.positions, weights, grid=radius)
    fieldvals = np.repeat(np.repeat(fieldvals, 2, axis=0), 2, axis=1)
    mask = np.repeat(np.repeat(mask, 2, axis=0), 2, axis=1)
    vmax = float(np.max(np.abs(fieldvals[mask]))) if np.any(mask) else 0.0
    colors = raster.colorize(fieldvals, vmax)
    y0, x0 = cy - radius, cx - radius
    region = img[y0 : y0 + grid, x0 : x0 + grid]
    region[mask] = colors[mask]

    raster.draw_circle(img, cx, cy, radius, raster.GRAY_DARK)
    # Nose marker.
    raster.draw_line(img, cx - 6, cy - radius + 1, cx, cy - radius - 7, raster.GRAY_DARK)
    raster.draw_line(img, cx + 6, cy - radius + 1, cx, cy - radius - 7, raster.GRAY_DARK)
    # Electrodes.
    proj = project_positions(montage.positions) / HEAD_RADIUS
    for px, py in proj:
        ex = cx + int(round(px * (radius - 2)))
        ey = cy - int(round(py * (radius - 2)))
        raster.fill_rect(img, ex - 1, ey - 1, ex + 1, ey + 1, raster.GRAY_DARK)

    # Colorbar with the value range in arbitrary units.
    bar_x = width - 26
    bar_y0, bar_y1 = cy - radius, cy + radius
    steps = np.linspace(1.0, -1.0, bar_y1 - bar_y0)
    img[bar_y0:bar_y1, bar_x : bar_x + 10] = raster.colorize(steps, 1.0)[:, None, :]
    raster.draw_rect(img, bar_x, bar_y0, bar_x + 10, bar_y1, raster.GRAY_DARK)
    raster.draw_text(img, bar_x - 2, bar_y1 + 4, "A.U.", raster.GRAY_TEXT)
    raster.draw_text(img, bar_x + 12, bar_y0, "+", raster.GRAY_TEXT)
    raster.draw_text(img, bar_x + 12, bar_y1 - 7, "-", raster.GRAY_TEXT)
    return img


def render_timeseries_panel(
    activation: np.ndarray,
    sfreq: float,
    width: int = PANEL_W,
    height: int = PANEL_H,
    window_s: float = 2.5,
    sd_scale: float = 4.0,
) -> np.ndarray:
    """First seconds of one activation trace, y-clamped at +-sd_scale SD of
    the full activation, tick marks every 0.5 s."""
    x = np.asarray(activation, dtype=np.float64).ravel()
    img = raster.blank(height, width)
    raster.draw_rect(img, 0, 0, width, height, raster.GRAY_BORDER)
    raster.draw_text(img, 4, 3, "TIME SERIES", raster.GRAY_TEXT)

    n_window = int(round(window_s * sfreq))
    short = n_window > x.size
    if short:
        n_window = x.size
        raster.draw_text(img, width - 110, 3, "FULL LENGTH", raster.GRAY_TEXT)
    seg = x[:n_window]

    px0, py0, px1, py1 = 14, 18, width - 8, height - 22
    raster.draw_rect(img, px0, py0, px1, py1, raster.GRAY_BORDER)
    mid_y = (py0 + py1) // 2
    # Vertical ticks every 0.5 s.
    duration = n_window / sfreq
    n_ticks = int(np.floor(duration / 0.5))
    for k in range(n_ticks + 1):
        fx = px0 + 1 + (k * 0.5 / duration) * (px1 - px0 - 3) if duration > 0 else px0 + 1
        raster.draw_vline(img, int(round(fx)), py0 + 1, py1 - 1, raster.GRAY_GRID)
        if k % 2 == 0:
            raster.draw_text(
                img, int(round(fx)) - 2, py1 + 4, f"{k // 2}", raster.GRAY_TEXT
            )
    raster.draw_text(img, px1 - 8, py1 + 4, "S", raster.GRAY_TEXT)
    raster.draw_hline(img, mid_y, px0 + 1, px1 - 1, raster.GRAY_GRID)

    sd = float(x.std())
    span = sd_scale * sd
    half = (py1 - py0) // 2 - 2
    xs = px0 + 1 + np.round(
        np.arange(n_window) / max(n_window - 1, 1) * (px1 - px0 - 3)
    ).astype(int)
    if span > 0:
        ys = mid_y - np.round(np.clip(seg / span, -1.0, 1.0) * half).astype(int)
    else:
        ys = np.full(n_window, mid_y)
    raster.draw_polyline(img, xs, ys, raster.TRACE)
    return img


def render_erp_image(
    epochs: np.ndarray,
    width: int = PANEL_W,
    height: int = PANEL_H,
    smoothing: int = 3,
    sd_scale: float = 3.0,
) -> np.ndarray:
    """Epochs stacked vertically (first epoch at the top) with boxcar
    smoothing across adjacent epochs and a symmetric diverging color scale."""
    epochs = np.asarray(epochs, dtype=np.float64)
    if epochs.ndim != 2:
        raise ParameterError(f"epoched activations must be 2-D, got {epochs.shape}")
    n_ep, n_s = epochs.shape
    img = raster.blank(height, width)
    raster.draw_rect(img, 0, 0, width, height, raster.GRAY_BORDER)
    raster.draw_text(img, 4, 3, "ERP IMAGE", raster.GRAY_TEXT)
    if n_ep < 2:
        raster.draw_text(img, width - 92, 3, "1 EPOCH", raster.GRAY_TEXT)

    if smoothing > 1 and n_ep > 1:
        half = smoothing // 2
        smoothed = np.empty_like(epochs)
        for i in range(n_ep):
            lo = max(0, i - half)
            hi = min(n_ep, i + half + 1)
            smoothed[i] = epochs[lo:hi].mean(axis=0)
    else:
        smoothed = epochs

    px0, py0, px1, py1 = 14, 18, width - 8, height - 22
    plot_w = px1 - px0 - 2
    plot_h = py1 - py0 - 2
    row_src = np.floor(np.arange(plot_h) * n_ep / plot_h).astype(int)
    col_src = np.floor(np.arange(plot_w) * n_s / plot_w).astype(int)
    cell = smoothed[np.ix_(row_src, col_src)]
    vmax = sd_scale * float(smoothed.std())
    img[py0 + 1 : py1 - 1, px0 + 1 : px1 - 1] = raster.colorize(cell, vmax)
    raster.draw_rect(img, px0, py0, px1, py1, raster.GRAY_BORDER)
    raster.draw_text(img, 2, py0 + 2, "1", raster.GRAY_TEXT)
    raster.draw_text(img, 2, py1 - 9, str(n_ep), raster.GRAY_TEXT)
    raster.draw_text(img, px0, py1 + 4, "EPOCHS TOP-DOWN", raster.GRAY_TEXT)
    return img


def render_psd_panel(
    activation: np.ndarray,
    sfreq: float,
    width: int = PANEL_W,
    height: int = PANEL_H,
    fmin: float = 1.0,
    fmax: float = 80.0,
    seg_s: float = 2.0,
    overlap: float = 0.5,
) -> np.ndarray:
    """Welch spectrum of one activation, dB scale, restricted to fmin..fmax."""
    x = np.asarray(activation, dtype=np.float64).ravel()
    img = raster.blank(height, width)
    raster.draw_rect(img, 0, 0, width, height, raster.GRAY_BORDER)
    raster.draw_text(img, 4, 3, "PSD DB", raster.GRAY_TEXT)

    seg_len = int(min(seg_s * sfreq, x.size))
    est = welch_psd(x, sfreq, seg_len=seg_len, overlap=overlap)
    fmax = min(fmax, sfreq / 2)
    sel = (est.freqs >= fmin) & (est.freqs <= fmax)
    freqs = est.freqs[sel]
    vals = est.psd_db[sel]
    if freqs.size < 2:
        raster.draw_text(img, 60, 3, "TOO SHORT", raster.GRAY_TEXT)
        return img

    px0, py0, px1, py1 = 26, 18, width - 8, height - 22
    raster.draw_rect(img, px0, py0, px1, py1, raster.GRAY_BORDER)
    lo = float(np.floor(vals.min() / 10.0) * 10.0 - 5.0)
    hi = float(np.ceil(vals.max() / 10.0) * 10.0 + 5.0)
    for f in range(0, int(fmax) + 1, 10):
        if f < fmin:
            continue
        fx = px0 + 1 + int(round((f - fmin) / (fmax - fmin) * (px1 - px0 - 3)))
        raster.draw_vline(img, fx, py0 + 1, py1 - 1, raster.GRAY_GRID)
        raster.draw_text(img, fx - 5, py1 + 4, str(f), raster.GRAY_TEXT)
    raster.draw_text(img, px1 - 12, py1 + 12, "HZ", raster.GRAY_TEXT)

    xs = px0 + 1 + np.round((freqs - fmin) / (fmax - fmin) * (px1 - px0 - 3)).astype(int)
    ys = py1 - 2 - np.round((vals - lo) / (hi - lo) * (py1 - py0 - 4)).astype(int)
    raster.draw_polyline(img, xs, ys, raster.TRACE)
    raster.draw_text(img, 2, py0, f"{int(hi)}", raster.GRAY_TEXT)
    raster.draw_text(img, 2, py1 - 7, f"{int(lo)}", raster.GRAY_TEXT)
    return img


def compose_dashboard(
    panels: dict,
    dataset_id: str,
    component_index: int,
    params: RenderParams | None = None,
) -> Dashboard:
    """Assemble the four panels into the 512x512 composite."""
    missing = [name for name in PANEL_BOXES if name not in panels]
    if missing:
        raise CompositionError(f"missing panels: {missing}")
    params = params or RenderParams()
    validate_panel_boxes(PANEL_BOXES)

    img = raster.blank(CANVAS, CANVAS)
    raster.fill_rect(img, 0, 0, CANVAS, TITLE_H, raster.TITLE_BG)
    raster.draw_text(
        img, 6, 3, f"{dataset_id} COMP {component_index:03d}", raster.BLACK, scale=2
    )
    for name, (x0, y0, x1, y1) in PANEL_BOXES.items():
        panel = panels[name]
        if panel.shape != (y1 - y0, x1 - x0, 3):
            raise CompositionError(
                f"panel {name} has shape {panel.shape}, expected {(y1 - y0, x1 - x0, 3)}"
            )
        img[y0:y1, x0:x1] = panel
    return Dashboard(
        image=img,
        dataset_id=dataset_id,
        component_index=component_index,
        panel_boxes=dict(PANEL_BOXES),
        render_params=params.snapshot(),
    )


def render_component(
    model: IcaModel,
    rec: Recording,
    acts: np.ndarray,
    component_index: int,
    params: RenderParams | None = None,
) -> Dashboard:
    """Render one component from a fitted model and its activation matrix."""
    params = params or RenderParams()
    row = acts[component_index]
    epoched = epoch_vector(row, rec.sfreq, params.erp_epoch_s)
    panels = {
        "topo": render_topo_panel(model.mixing[:, component_index], rec.montage),
        "timeseries": render_timeseries_panel(
            row, rec.sfreq,
            window_s=params.timeseries_window_s,
            sd_scale=params.timeseries_sd_scale,
        ),
        "erp": render_erp_image(
            epoched, smoothing=params.erp_smoothing, sd_scale=params.erp_sd_scale
        ),
        "psd": render_psd_panel(
            row, rec.sfreq,
            fmin=params.psd_fmin, fmax=params.psd_fmax,
            seg_s=params.psd_seg_s, overlap=params.psd_overlap,
        ),
    }
    dataset_id = rec.meta.get("dataset_id", "dataset")
    return compose_dashboard(panels, dataset_id, component_index, params)


def render_all(
    model: IcaModel, rec: Recording, params: RenderParams | None = None
) -> list[Dashboard]:
    acts = activations(model, rec).data
    return [
        render_component(model, rec, acts, i, params) for i in range(model.n_components)
    ]


def write_dashboards(dashboards: list[Dashboard], out_dir) -> dict:
    """Write PNGs plus a manifest of content hashes; returns the manifest."""
    import os

    os.makedirs(str(out_dir), exist_ok=True)
    manifest = {}
    for dash in dashboards:
        payload = dash.png_bytes()
        with open(os.path.join(str(out_dir), dash.filename), "wb") as f:
            f.write(payload)
        manifest[dash.filename] = sha256_hex(payload)
    with open(os.path.join(str(out_dir), "manifest.json"), "w", encoding="ascii") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest
