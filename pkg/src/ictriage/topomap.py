"""Scalp field interpolation with spherical splines.

The interpolator solves the classic smoothing-spline system on the unit
sphere (order m = 4, Legendre series truncated at 50 terms, ridge term
lambda = 1e-5) and evaluates the field on a 2-D azimuthal-equidistant
projection of the upper hemisphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .errors import GeometryError

SPLINE_ORDER = 4
SERIES_TERMS = 50
REGULARIZATION = 1e-5
HEAD_RADIUS = np.pi / 2  # equator electrodes project onto the head rim


def _series_coeffs(m: int, n_terms: int) -> np.ndarray:
    n = np.arange(1, n_terms + 1, dtype=np.float64)
    coeffs = np.zeros(n_terms + 1)
    coeffs[1:] = (2 * n + 1) / (n**m * (n + 1) ** m)
    # Normalize so g(1) == 1: the Gram matrix then has a unit diagonal and the
    # ridge term acts as a relative regularizer independent of the series sum.
    return coeffs / coeffs.sum()


_G_COEFFS = _series_coeffs(SPLINE_ORDER, SERIES_TERMS)


def _g(cosang: np.ndarray) -> np.ndarray:
    """Spline kernel g(cos angle) as a truncated Legendre series."""
    return legendre.legval(np.clip(cosang, -1.0, 1.0), _G_COEFFS)


@dataclass
class SphericalSpline:
    """Fitted interpolator: field(p) = offset + sum_i coef_i * g(p . x_i)."""

    positions: np.ndarray  # (n, 3) unit vectors
    coefs: np.ndarray      # (n,)
    offset: float

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Field values at unit vectors of shape (..., 3)."""
        points = np.asarray(points, dtype=np.float64)
        flat = points.reshape(-1, 3)
        cosang = flat @ self.positions.T
        values = _g(cosang) @ self.coefs + self.offset
        return values.reshape(points.shape[:-1])


def fit_spline(
    positions: np.ndarray, values: np.ndarray, reg: float = REGULARIZATION
) -> SphericalSpline:
    """Solve the spline system for per-electrode values.

    Needs at least 4 electrodes spanning three dimensions; fewer or coplanar
    layouts raise GeometryError.
    """
    positions = np.asarray(positions, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).ravel()
    n = positions.shape[0]
    if n < 4:
        raise GeometryError(f"need at least 4 electrodes, got {n}")
    if positions.shape != (n, 3):
        raise GeometryError(f"positions must be (n, 3), got {positions.shape}")
    if values.shape != (n,):
        raise GeometryError(f"{n} electrodes but {values.shape[0]} values")
    if not np.all(np.isfinite(values)):
        raise GeometryError("electrode values must be finite")
    centered = positions - positions.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-8) < 3:
        raise GeometryError("electrode positions are coplanar")

    norms = np.linalg.norm(positions, axis=1)
    unit = positions / norms[:, None]

    gram = _g(unit @ unit.T)
    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = gram + reg * np.eye(n)
    system[:n, n] = 1.0
    system[n, :n] = 1.0
    rhs = np.concatenate([values, [0.0]])
    solution = np.linalg.solve(system, rhs)
    return SphericalSpline(positions=unit, coefs=solution[:n], offset=float(solution[n]))


def project_positions(positions: np.ndarray) -> np.ndarray:
    """Azimuthal-equidistant projection of unit vectors to the 2-D head disc.

    Radius equals the polar angle from the vertex, so the equator lands on a
    circle of radius pi/2.
    """
    positions = np.asarray(positions, dtype=np.float64)
    unit = positions / np.linalg.norm(positions, axis=-1, keepdims=True)
    polar = np.arccos(np.clip(unit[..., 2], -1.0, 1.0))
    planar = unit[..., :2]
    planar_norm = np.linalg.norm(planar, axis=-1, keepdims=True)
    direction = np.divide(planar, planar_norm, out=np.zeros_like(planar), where=planar_norm > 0)
    return direction * polar[..., None]


def unproject_grid(grid_2d: np.ndarray) -> np.ndarray:
    """Inverse projection: 2-D points (..., 2) back to unit vectors (..., 3)."""
    grid_2d = np.asarray(grid_2d, dtype=np.float64)
    r = np.linalg.norm(grid_2d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.divide(grid_2d, r[..., None], out=np.zeros_like(grid_2d), where=r[..., None] > 0)
    sin_r = np.sin(r)
    return np.stack(
        [direction[..., 0] * sin_r, direction[..., 1] * sin_r, np.cos(r)], axis=-1
    )


def spherical_spline_field(
    positions: np.ndarray,
    values: np.ndarray,
    grid: int = 64,
    reg: float = REGULARIZATION,
) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated field on a grid x grid raster over the head disc.

    Returns (field, mask): field is row-major with the nose (+y) toward row 0,
    mask is True inside the head circle. Field values outside the mask are 0.
    """
    spline = fit_spline(positions, values, reg=reg)
    coords = np.linspace(-HEAD_RADIUS, HEAD_RADIUS, grid)
    xs, ys = np.meshgrid(coords, -coords)  # row 0 = front of the head
    pts = np.stack([xs, ys], axis=-1)
    mask = np.linalg.norm(pts, axis=-1) <= HEAD_RADIUS + 1e-12
    field = np.zeros((grid, grid))
    field[mask] = spline.evaluate(unproject_grid(pts[mask]))
    return field, mask
